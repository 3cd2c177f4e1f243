//! Two-phase greedy pipeline search: enumerate preprocessor/classifier pairs
//! with default hyperparameters, then random-search the winner's
//! hyperparameters with early stopping.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learn::evaluate::{check_stratifiable, min_train_size};
use crate::learn::{
    evaluate_pipeline, ranges, ClassifierKind, ClassifierSpec, Evaluation, FittedPipeline, ForestParams, KnnParams,
    KnnVote, LearnError, Matrix, MaxFeatures, PipelineSpec, PreprocessorKind, PreprocessorSpec,
};
use crate::{par, seed};

/// Resampling attempts per phase-2 step before the step is given up.
pub const MAX_RESAMPLE_ATTEMPTS: usize = 1000;

#[derive(Debug, Error)]
pub enum AutomlError {
    #[error("every preprocessor/classifier combination failed")]
    AllCombosInvalid,
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub max_hpo_steps: usize,
    pub early_stop_patience: usize,
    pub n_eval_splits: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_hpo_steps: 1024,
            early_stop_patience: 100,
            n_eval_splits: 5,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), AutomlError> {
        if self.early_stop_patience == 0 || self.early_stop_patience > self.max_hpo_steps {
            return Err(AutomlError::Config(format!(
                "patience {} must be in 1..={}",
                self.early_stop_patience, self.max_hpo_steps
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(AutomlError::Config(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.n_eval_splits == 0 {
            return Err(AutomlError::Config("at least one evaluation split required".into()));
        }
        Ok(())
    }
}

/// Scores candidate pipelines. The search only sees this interface, which
/// lets tests substitute scripted evaluators.
pub trait Evaluator: Sync {
    fn n_features(&self) -> usize;
    /// Rows available to a fitted model (bounds kNN's k).
    fn n_train(&self) -> usize;
    fn evaluate(&self, spec: &PipelineSpec) -> Result<Evaluation, LearnError>;
}

/// Mean accuracy over shared stratified train/validation splits.
pub struct DataEvaluator<'a> {
    pub x: &'a Matrix,
    pub y: &'a [usize],
    pub n_splits: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl<'a> DataEvaluator<'a> {
    pub fn new(x: &'a Matrix, y: &'a [usize], config: &SearchConfig) -> Result<Self, LearnError> {
        check_stratifiable(y, config.n_eval_splits)?;
        Ok(Self {
            x,
            y,
            n_splits: config.n_eval_splits,
            train_fraction: config.train_fraction,
            seed: seed::derive(config.seed, &[seed::tag("splits")]),
        })
    }
}

impl Evaluator for DataEvaluator<'_> {
    fn n_features(&self) -> usize {
        self.x.cols()
    }

    fn n_train(&self) -> usize {
        min_train_size(self.y, self.train_fraction)
    }

    fn evaluate(&self, spec: &PipelineSpec) -> Result<Evaluation, LearnError> {
        evaluate_pipeline(spec, self.x, self.y, self.n_splits, self.train_fraction, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Enumerate,
    RandomSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub phase: Phase,
    /// Position within the phase.
    pub step: usize,
    pub spec: PipelineSpec,
    pub per_split: Vec<f64>,
    /// `None` for invalid configurations.
    pub mean: Option<f64>,
    pub error: Option<String>,
    /// Incumbent mean accuracy after this record.
    pub incumbent_mean: f64,
    pub wall_ms: f64,
}

impl LedgerRecord {
    pub fn is_valid(&self) -> bool {
        self.mean.is_some()
    }

    /// The record without its wall time, for reproducibility checks.
    pub fn outcome(&self) -> (Phase, usize, PipelineSpec, &[f64], Option<f64>, Option<&str>, f64) {
        (
            self.phase,
            self.step,
            self.spec,
            &self.per_split,
            self.mean,
            self.error.as_deref(),
            self.incumbent_mean,
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchLedger {
    pub records: Vec<LedgerRecord>,
    /// `(record index, mean)` whenever the incumbent changed.
    pub incumbent_history: Vec<(usize, f64)>,
}

impl SearchLedger {
    pub fn phase_count(&self, phase: Phase) -> usize {
        self.records.iter().filter(|r| r.phase == phase).count()
    }

    fn push(&mut self, record: LedgerRecord, improved: bool) {
        if improved {
            self.incumbent_history.push((self.records.len(), record.incumbent_mean));
        }
        self.records.push(record);
    }

    /// True when both ledgers agree on everything except timings.
    pub fn same_outcome(&self, other: &SearchLedger) -> bool {
        self.incumbent_history == other.incumbent_history
            && self.records.len() == other.records.len()
            && self
                .records
                .iter()
                .zip(&other.records)
                .all(|(a, b)| a.outcome() == b.outcome())
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

/// All preprocessor/classifier pairs in enumeration order.
pub fn combinations() -> Vec<(PreprocessorKind, ClassifierKind)> {
    PreprocessorKind::ALL
        .iter()
        .flat_map(|&p| ClassifierKind::SEARCHED.iter().map(move |&c| (p, c)))
        .collect()
}

/// Phase one: every pair with default hyperparameters. Returns the best
/// spec and its mean; ties keep the earlier pair.
pub fn phase1_enumerate<E: Evaluator>(ev: &E, ledger: &mut SearchLedger) -> Result<(PipelineSpec, f64), AutomlError> {
    let combos = combinations();
    let results = par::map(&combos, |&(p, c)| {
        let spec = PipelineSpec::default_for(p, c);
        let (r, ms) = timed(|| {
            spec.validate(ev.n_features(), ev.n_train())
                .and_then(|_| ev.evaluate(&spec))
        });
        (spec, r, ms)
    });
    let mut best: Option<(PipelineSpec, f64)> = None;
    for (step, (spec, r, wall_ms)) in results.into_iter().enumerate() {
        let (per_split, mean, error) = match r {
            Ok(e) => (e.per_split, Some(e.mean), None),
            Err(e) => {
                log::info!("{spec}: invalid ({e})");
                (Vec::new(), None, Some(e.to_string()))
            }
        };
        let improved = match (mean, &best) {
            (Some(_), None) => true,
            (Some(m), Some((_, b))) => m > *b,
            (None, _) => false,
        };
        if improved {
            best = Some((spec, mean.unwrap()));
        }
        let record = LedgerRecord {
            phase: Phase::Enumerate,
            step,
            spec,
            per_split,
            mean,
            error,
            incumbent_mean: best.map_or(f64::NAN, |b| b.1),
            wall_ms,
        };
        ledger.push(record, improved);
    }
    best.ok_or(AutomlError::AllCombosInvalid)
}

fn sample_forest(base: ForestParams, rng: &mut impl Rng) -> ForestParams {
    let depth_choices = ranges::MAX_DEPTH.1 - ranges::MAX_DEPTH.0 + 2;
    let d = rng.random_range(0..depth_choices);
    ForestParams {
        n_trees: rng.random_range(ranges::N_TREES.0..=ranges::N_TREES.1),
        max_depth: if d == 0 {
            None
        } else {
            Some(ranges::MAX_DEPTH.0 + d - 1)
        },
        min_samples_split: rng.random_range(ranges::MIN_SAMPLES_SPLIT.0..=ranges::MIN_SAMPLES_SPLIT.1),
        max_features: [MaxFeatures::Sqrt, MaxFeatures::Log2, MaxFeatures::Half][rng.random_range(0..3)],
        bootstrap: base.bootstrap,
    }
}

/// Draws hyperparameters uniformly from the search ranges for a fixed
/// preprocessor/classifier pair.
pub fn sample_spec(kinds: (PreprocessorKind, ClassifierKind), n_features: usize, rng: &mut impl Rng) -> PipelineSpec {
    let preprocessor = match kinds.0 {
        PreprocessorKind::None => PreprocessorSpec::None,
        PreprocessorKind::UnitNorm => PreprocessorSpec::UnitNorm,
        PreprocessorKind::VarianceThreshold => PreprocessorSpec::VarianceThreshold {
            threshold: rng.random_range(ranges::VT_THRESHOLD.0..=ranges::VT_THRESHOLD.1),
        },
        PreprocessorKind::Pca => PreprocessorSpec::Pca {
            components: Some(rng.random_range(1..=n_features.max(1))),
        },
    };
    let classifier = match kinds.1 {
        ClassifierKind::RandomForest => ClassifierSpec::RandomForest(sample_forest(ForestParams::random_forest(), rng)),
        ClassifierKind::ExtraTrees => ClassifierSpec::ExtraTrees(sample_forest(ForestParams::extra_trees(), rng)),
        ClassifierKind::Knn => ClassifierSpec::Knn(KnnParams {
            k: rng.random_range(ranges::KNN_K.0..=ranges::KNN_K.1),
            vote: if rng.random_bool(0.5) {
                KnnVote::Uniform
            } else {
                KnnVote::Distance
            },
        }),
        ClassifierKind::MajorityVote => ClassifierSpec::MajorityVote,
    };
    PipelineSpec::new(preprocessor, classifier)
}

/// Phase two: random search over the hyperparameters of `incumbent`'s pair.
/// Stops after `early_stop_patience` consecutive valid evaluations without
/// a strict improvement, or after `max_hpo_steps` steps.
pub fn phase2_random_search<E: Evaluator>(
    ev: &E,
    incumbent: (PipelineSpec, f64),
    config: &SearchConfig,
    ledger: &mut SearchLedger,
) -> (PipelineSpec, f64) {
    let kinds = incumbent.0.kinds();
    let mut best = incumbent;
    let mut rng = seed::rng_at(config.seed, &[seed::tag("phase2")]);
    let mut stale = 0;
    for step in 0..config.max_hpo_steps {
        let mut spec = sample_spec(kinds, ev.n_features(), &mut rng);
        let mut attempts = 1;
        let mut check = spec.validate(ev.n_features(), ev.n_train());
        while check.is_err() && attempts < MAX_RESAMPLE_ATTEMPTS {
            spec = sample_spec(kinds, ev.n_features(), &mut rng);
            check = spec.validate(ev.n_features(), ev.n_train());
            attempts += 1;
        }
        let (result, wall_ms) = timed(|| check.and_then(|_| ev.evaluate(&spec)));
        let (per_split, mean, error, improved) = match result {
            Ok(e) => {
                let improved = e.mean > best.1;
                if improved {
                    best = (spec, e.mean);
                    stale = 0;
                } else {
                    stale += 1;
                }
                (e.per_split, Some(e.mean), None, improved)
            }
            Err(e) => (Vec::new(), None, Some(e.to_string()), false),
        };
        ledger.push(
            LedgerRecord {
                phase: Phase::RandomSearch,
                step,
                spec,
                per_split,
                mean,
                error,
                incumbent_mean: best.1,
                wall_ms,
            },
            improved,
        );
        if stale >= config.early_stop_patience {
            log::info!("early stop after {} phase-2 steps", step + 1);
            break;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best_spec: PipelineSpec,
    pub best_mean: f64,
    pub phase1_spec: PipelineSpec,
    pub ledger: SearchLedger,
}

pub fn search<E: Evaluator>(ev: &E, config: &SearchConfig) -> Result<SearchOutcome, AutomlError> {
    config.validate()?;
    let mut ledger = SearchLedger::default();
    let phase1 = phase1_enumerate(ev, &mut ledger)?;
    log::info!("phase 1 winner {} at {:.4}", phase1.0, phase1.1);
    let (best_spec, best_mean) = phase2_random_search(ev, phase1, config, &mut ledger);
    Ok(SearchOutcome {
        best_spec,
        best_mean,
        phase1_spec: phase1.0,
        ledger,
    })
}

/// Searches on `(x, y)` with the data-backed evaluator.
pub fn search_data(x: &Matrix, y: &[usize], config: &SearchConfig) -> Result<SearchOutcome, AutomlError> {
    let ev = DataEvaluator::new(x, y, config)?;
    search(&ev, config)
}

/// Refits the chosen spec on all provided samples.
pub fn finalize(spec: &PipelineSpec, x: &Matrix, y: &[usize], seed: u64) -> Result<FittedPipeline, LearnError> {
    FittedPipeline::fit(spec, x, y, seed::derive(seed, &[seed::tag("final")]))
}

pub const LEDGER_COLUMNS: [&str; 11] = [
    "index",
    "phase",
    "step",
    "preprocessor",
    "classifier",
    "spec",
    "mean_accuracy",
    "split_accuracies",
    "incumbent_mean",
    "error",
    "wall_ms",
];

pub fn write_ledger_csv<W: Write>(ledger: &SearchLedger, w: W) -> Result<(), AutomlError> {
    let mut wtr = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| AutomlError::Io(std::io::Error::other(e));
    wtr.write_record(LEDGER_COLUMNS).map_err(csv_err)?;
    for (i, r) in ledger.records.iter().enumerate() {
        let phase = match r.phase {
            Phase::Enumerate => "enumerate",
            Phase::RandomSearch => "random_search",
        };
        let (p, c) = r.spec.kinds();
        let splits: Vec<String> = r.per_split.iter().map(|v| v.to_string()).collect();
        wtr.write_record([
            i.to_string(),
            phase.to_string(),
            r.step.to_string(),
            p.short_name().to_string(),
            c.short_name().to_string(),
            serde_json::to_string(&r.spec).expect("spec serializes"),
            r.mean.map_or(String::new(), |m| m.to_string()),
            splits.join(";"),
            r.incumbent_mean.to_string(),
            r.error.clone().unwrap_or_default(),
            format!("{:.3}", r.wall_ms),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}
