mod commands;
mod grid;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use chronogaze::data::SplitGranularity;
use chronogaze::LabelFamily;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Bad arguments that clap itself cannot catch; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "chronogaze",
    version,
    about = "Classify perceived passage of time from eye-tracking recordings"
)]
pub struct Cli {
    /// Worker threads; defaults to one per core. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic recordings with a planted class signal.
    Synth(SynthArgs),
    /// Slice trials into windows and compute baseline-subtracted features.
    Extract(ExtractArgs),
    /// Attach questionnaire-derived class labels to feature tables.
    Label(LabelArgs),
    /// Split analysis/test data, search pipelines and fit the best one.
    Automl(AutomlArgs),
    /// Holdout and per-condition evaluation of the searched pipelines.
    Eval(EvalArgs),
    /// Compare training with and without each user's first 30 seconds.
    Finetune(FinetuneArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct InputArgs {
    #[arg(long)]
    pub gaze: PathBuf,
    #[arg(long)]
    pub fixations: PathBuf,
    #[arg(long)]
    pub trials: PathBuf,
    #[arg(long)]
    pub questionnaire: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct GridArgs {
    /// Window sizes in seconds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub tw: Vec<f64>,
    /// Label families: duration, ppot.
    #[arg(long, value_delimiter = ',', default_value = "duration")]
    pub family: Vec<LabelFamily>,
    /// Class counts: 2, 3.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub classes: Vec<u8>,
    /// `full` for the complete sweep, or a TOML file with `tw`, `families` and
    /// `classes` arrays. Replaces the three flags above.
    #[arg(long, conflicts_with = "tw")]
    pub settings: Option<String>,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Generator configuration (TOML); defaults apply to omitted keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Samples below this confidence are ignored by pupil features.
    #[arg(long, default_value_t = 0.6)]
    pub min_confidence: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct LabelArgs {
    #[arg(long)]
    pub questionnaire: PathBuf,
    /// Run directory holding the feature tables.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct AutomlArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1024)]
    pub max_hpo_steps: usize,
    /// Consecutive non-improving steps before stopping; defaults to
    /// min(100, max-hpo-steps).
    #[arg(long)]
    pub patience: Option<usize>,
    /// Validation splits per candidate pipeline.
    #[arg(long, default_value_t = 5)]
    pub splits: usize,
    /// Training share of each validation split.
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Unit of the 80/20 analysis/test partition: slice or trial.
    #[arg(long, default_value = "slice")]
    pub split_granularity: SplitGranularity,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
}

fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    let Some(n) = threads else {
        return Ok(());
    };
    if n == 0 {
        return Err(UsageError("--threads must be at least 1".into()).into());
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    #[cfg(not(feature = "parallel"))]
    log::warn!("built without the parallel feature; --threads {n} has no effect");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = init_threads(cli.threads).and_then(|()| commands::run(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
