use std::collections::BTreeSet;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chronogaze::automl::{finalize, search_data, write_ledger_csv, SearchConfig};
use chronogaze::data::{
    load_dataset, read_questionnaire, split_analysis_test, write_table, DataPaths, ScreeningPolicy, SplitGranularity,
    Table,
};
use chronogaze::features::{extract_all, read_features_csv, write_features_csv, ExtractOptions};
use chronogaze::labels::{label_features, read_labels_csv, write_labels_csv};
use chronogaze::protocols::{
    condition_plot_svg, condition_split_eval, finetune_eval, holdout_eval, ConditionKey, FinetuneReport, ProtocolError,
    ReportBook, SETUP_WINDOW_S,
};
use chronogaze::synth::{generate_dataset, SynthConfig};
use chronogaze::{seed, FittedPipeline, LabelSpec, LabeledSet, TrialKey};
use serde::{Deserialize, Serialize};

use crate::grid::{features_file, labels_file, setting_stem, Grid};
use crate::output::{digest_file, FileDigest, Manifest, Staged};
use crate::{
    AutomlArgs, Cli, Command, EvalArgs, ExtractArgs, FinetuneArgs, GridArgs, LabelArgs, SynthArgs, UsageError,
};

/// Share of labeled slices held out as unseen test data.
const TEST_FRACTION: f64 = 0.2;

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let manifest = match &cli.command {
        Command::Synth(a) => synth(a)?,
        Command::Extract(a) => extract(a)?,
        Command::Label(a) => label(a)?,
        Command::Automl(a) => automl(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Finetune(a) => finetune(a)?,
    };
    // A closed stdout (say, piped into `head`) must not fail the run.
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&manifest)?);
    Ok(())
}

fn resolve(g: &GridArgs) -> anyhow::Result<Grid> {
    match &g.settings {
        Some(s) => Grid::from_settings(s),
        None => Ok(Grid::new(&g.tw, &g.family, &g.classes)?),
    }
}

fn inputs(paths: &[PathBuf]) -> anyhow::Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.display().to_string(),
                sha256: digest_file(p)?,
            })
        })
        .collect()
}

fn manifest(command: &str, seed: Option<u64>, config: &impl Serialize, input: &[PathBuf]) -> anyhow::Result<Manifest> {
    Ok(Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config: serde_json::to_value(config)?,
        inputs: inputs(input)?,
        outputs: Vec::new(),
    })
}

fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn synth(a: &SynthArgs) -> anyhow::Result<Manifest> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            SynthConfig::from_toml(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    cfg.seed = a.seed;
    cfg.validate()?;
    let d = generate_dataset(&cfg)?;
    let mut out = Staged::new(&a.out_dir);
    for table in Table::ALL {
        out.add_with(table.file_name(), |buf| write_table(&d, table, buf))?;
    }
    out.add("synth_config.toml", cfg.to_toml().into_bytes());
    let input: Vec<PathBuf> = a.config.iter().cloned().collect();
    out.commit(manifest("synth", Some(a.seed), a, &input)?)
}

fn extract(a: &ExtractArgs) -> anyhow::Result<Manifest> {
    let grid = resolve(&a.grid)?;
    if !(0.0..=1.0).contains(&a.min_confidence) {
        return Err(UsageError(format!("--min-confidence {} outside [0, 1]", a.min_confidence)).into());
    }
    let paths = DataPaths {
        gaze: a.input.gaze.clone(),
        fixations: a.input.fixations.clone(),
        trials: a.input.trials.clone(),
        questionnaire: a.input.questionnaire.clone(),
    };
    let d = load_dataset(&paths, &ScreeningPolicy::default())?;
    for (key, reason) in &d.screening_log {
        log::warn!("excluded trial {key}: {reason}");
    }
    if d.trials.is_empty() {
        bail!("no trials left after screening");
    }
    let opts = ExtractOptions {
        min_confidence: a.min_confidence,
        ..Default::default()
    };
    let mut out = Staged::new(&a.out_dir);
    for &t_w in &grid.windows {
        let features = extract_all(&d, t_w, &opts)?;
        log::info!("t_w = {t_w}: {} slices", features.len());
        out.add_with(features_file(t_w), |buf| write_features_csv(&features, buf))?;
    }
    let input = [paths.gaze, paths.fixations, paths.trials, paths.questionnaire];
    out.commit(manifest("extract", None, a, &input)?)
}

fn label(a: &LabelArgs) -> anyhow::Result<Manifest> {
    let grid = resolve(&a.grid)?;
    let answers = read_questionnaire(&a.questionnaire)?;
    let mut out = Staged::new(&a.out_dir);
    let mut input = vec![a.questionnaire.clone()];
    for &t_w in &grid.windows {
        let path = a.out_dir.join(features_file(t_w));
        let features = read_features_csv(open(&path)?).with_context(|| format!("in {}", path.display()))?;
        input.push(path);
        for &spec in &grid.labels {
            let set = label_features(&features, &answers, spec)?;
            log::info!(
                "{}: class counts {:?}",
                setting_stem(spec, t_w),
                set.distribution.counts
            );
            out.add_with(labels_file(spec, t_w), |buf| write_labels_csv(&set, buf))?;
        }
    }
    out.commit(manifest("label", None, a, &input)?)
}

/// Labeled slices of one setting, read back from the run directory.
fn load_set(dir: &Path, spec: LabelSpec, t_w: f64, input: &mut Vec<PathBuf>) -> anyhow::Result<LabeledSet> {
    let fpath = dir.join(features_file(t_w));
    let lpath = dir.join(labels_file(spec, t_w));
    let features = read_features_csv(open(&fpath)?).with_context(|| format!("in {}", fpath.display()))?;
    let set = read_labels_csv(open(&lpath)?, &features).with_context(|| format!("in {}", lpath.display()))?;
    if set.spec != spec {
        bail!("{} holds {} labels", lpath.display(), set.spec.tag());
    }
    input.push(fpath);
    input.push(lpath);
    Ok(set)
}

/// Analysis/test partition of one setting, as row indices of its labels file.
#[derive(Debug, Serialize, Deserialize)]
struct SplitRecord {
    granularity: SplitGranularity,
    seed: u64,
    analysis: Vec<usize>,
    test: Vec<usize>,
}

fn split_file(spec: LabelSpec, t_w: f64) -> String {
    format!("split_{}.json", setting_stem(spec, t_w))
}

fn pipeline_file(spec: LabelSpec, t_w: f64) -> String {
    format!("pipeline_{}.json", setting_stem(spec, t_w))
}

fn trial_groups(set: &LabeledSet) -> Vec<usize> {
    let keys: Vec<TrialKey> = set.samples.iter().map(|s| s.features.provenance.trial_key()).collect();
    let unique: Vec<&TrialKey> = keys.iter().collect::<BTreeSet<_>>().into_iter().collect();
    keys.iter()
        .map(|k| unique.binary_search(&k).expect("key present"))
        .collect()
}

fn automl(a: &AutomlArgs) -> anyhow::Result<Manifest> {
    let grid = resolve(&a.grid)?;
    let config = SearchConfig {
        max_hpo_steps: a.max_hpo_steps,
        early_stop_patience: a.patience.unwrap_or(a.max_hpo_steps.min(100)),
        n_eval_splits: a.splits,
        train_fraction: a.train_fraction,
        seed: a.seed,
    };
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    let mut out = Staged::new(&a.out_dir);
    let mut input = Vec::new();
    for &t_w in &grid.windows {
        for &spec in &grid.labels {
            let stem = setting_stem(spec, t_w);
            let set = load_set(&a.out_dir, spec, t_w, &mut input)?;
            let split_seed = seed::derive(a.seed, &[seed::tag("analysis-test")]);
            let split = split_analysis_test(
                &set.labels(),
                &trial_groups(&set),
                TEST_FRACTION,
                split_seed,
                a.split_granularity,
            )
            .with_context(|| format!("splitting {stem}"))?;
            let (x, y) = set.design_at(&split.analysis);
            let outcome = search_data(&x, &y, &config).with_context(|| format!("searching {stem}"))?;
            log::info!("{stem}: {} at {:.4}", outcome.best_spec, outcome.best_mean);
            let fitted = finalize(&outcome.best_spec, &x, &y, a.seed)?;
            out.add_with(format!("ledger_{stem}.csv"), |buf| {
                write_ledger_csv(&outcome.ledger, buf)
            })?;
            out.add_with(pipeline_file(spec, t_w), |buf| fitted.write(buf))?;
            let record = SplitRecord {
                granularity: a.split_granularity,
                seed: split_seed,
                analysis: split.analysis,
                test: split.test,
            };
            out.add(split_file(spec, t_w), serde_json::to_vec(&record)?);
        }
    }
    out.commit(manifest("automl", Some(a.seed), a, &input)?)
}

fn read_spec(path: &Path, input: &mut Vec<PathBuf>) -> anyhow::Result<chronogaze::PipelineSpec> {
    let p = FittedPipeline::read(open(path)?).with_context(|| format!("in {}", path.display()))?;
    input.push(path.to_path_buf());
    Ok(p.spec)
}

fn check_reps(reps: usize) -> anyhow::Result<()> {
    if reps == 0 {
        return Err(UsageError("--reps must be at least 1".into()).into());
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> anyhow::Result<Manifest> {
    let grid = resolve(&a.grid)?;
    check_reps(a.reps)?;
    let mut out = Staged::new(&a.out_dir);
    let mut input = Vec::new();
    let mut book = ReportBook::default();
    for &spec in &grid.labels {
        for &t_w in &grid.windows {
            let stem = setting_stem(spec, t_w);
            let set = load_set(&a.out_dir, spec, t_w, &mut input)?;
            let pipeline = read_spec(&a.out_dir.join(pipeline_file(spec, t_w)), &mut input)?;
            let spath = a.out_dir.join(split_file(spec, t_w));
            let split: SplitRecord =
                serde_json::from_reader(open(&spath)?).with_context(|| format!("in {}", spath.display()))?;
            if let Some(&i) = split.analysis.iter().chain(&split.test).find(|&&i| i >= set.len()) {
                bail!("{} refers to row {i} of a {}-row table", spath.display(), set.len());
            }
            input.push(spath);
            let report = holdout_eval(
                &pipeline,
                &set.subset(&split.analysis),
                &set.subset(&split.test),
                a.reps,
                seed::derive(a.seed, &[seed::tag("holdout")]),
                t_w,
            )
            .with_context(|| format!("holdout for {stem}"))?;
            book.evaluations.push(report);
            for key in [ConditionKey::NActive, ConditionKey::PlannedDuration] {
                let name = key.protocol().as_str();
                let reports = condition_split_eval(
                    &pipeline,
                    &set,
                    key,
                    a.reps,
                    seed::derive(a.seed, &[seed::tag(name)]),
                    t_w,
                )
                .with_context(|| format!("{name} splits for {stem}"))?;
                let title = format!("{} classes, t_w = {t_w} s: accuracy by {name}", spec.tag());
                out.add(
                    format!("plot_{stem}_{name}.svg"),
                    condition_plot_svg(&title, &reports).into_bytes(),
                );
                book.evaluations.extend(reports);
            }
        }
    }
    out.add_with("report.json", |buf| book.write_json(buf))?;
    out.add_with("report.csv", |buf| book.write_csv(buf))?;
    out.commit(manifest("eval", Some(a.seed), a, &input)?)
}

fn finetune(a: &FinetuneArgs) -> anyhow::Result<Manifest> {
    let grid = resolve(&a.grid)?;
    check_reps(a.reps)?;
    let mut out = Staged::new(&a.out_dir);
    let mut input = Vec::new();
    let mut book = ReportBook::default();
    for &spec in &grid.labels {
        let mut per_window = Vec::new();
        for &t_w in &grid.windows {
            let set = load_set(&a.out_dir, spec, t_w, &mut input)?;
            let pipeline = read_spec(&a.out_dir.join(pipeline_file(spec, t_w)), &mut input)?;
            per_window.push((t_w, set, pipeline));
        }
        let participants: BTreeSet<String> = per_window
            .iter()
            .flat_map(|(_, set, _)| set.samples.iter().map(|s| s.features.provenance.participant_id.clone()))
            .collect();
        for participant in participants {
            let mut entries = Vec::new();
            for (t_w, set, pipeline) in &per_window {
                let s = seed::derive(a.seed, &[seed::tag(&participant)]);
                match finetune_eval(pipeline, set, &participant, SETUP_WINDOW_S, a.reps, s) {
                    Ok(e) => entries.push(e),
                    Err(e @ (ProtocolError::NoEvalSlices(_) | ProtocolError::UnknownParticipant(_))) => {
                        log::warn!("{} at t_w = {t_w}: {e}", spec.tag());
                    }
                    Err(e) => return Err(e).with_context(|| format!("{participant} at t_w = {t_w}")),
                }
            }
            book.finetune.push(FinetuneReport {
                participant,
                labels: spec,
                entries,
            });
        }
    }
    out.add_with("finetune.json", |buf| book.write_json(buf))?;
    out.add_with("finetune.csv", |buf| book.write_csv(buf))?;
    out.commit(manifest("finetune", Some(a.seed), a, &input)?)
}
