//! Subjective time-perception classification from eye-tracking recordings.
//!
//! The crate covers the whole offline workflow:
//!
//! - [`data`]: CSV ingestion of gaze/fixation streams, trial metadata and
//!   questionnaire answers, plus trial screening and analysis/test splits.
//! - [`events`]: saccade derivation and non-overlapping window slicing.
//! - [`features`]: the 26 per-window features (including the Index of
//!   Pupillary Activity) with per-trial baseline subtraction.
//! - [`labels`]: duration-estimate and perceived-passage-of-time labels.
//! - [`learn`]: preprocessors, classifiers and fitted pipelines.
//! - [`automl`]: the two-phase greedy pipeline search.
//! - [`protocols`]: holdout, per-condition and fine-tuning evaluations.
//! - [`synth`]: a synthetic recording generator with planted class signal and
//!   definition-level feature oracles.
//!
//! Data-parallel loops (trees, splits, repetitions, slices) run on rayon when
//! the `parallel` feature is enabled and sequentially otherwise. Results are
//! identical either way.

pub mod automl;
pub mod data;
pub mod events;
pub mod features;
pub mod labels;
pub mod learn;
pub mod par;
pub mod protocols;
pub mod seed;
pub mod synth;

pub use data::{Dataset, FixationEvent, GazeSample, TrialKey, TrialRecord};
pub use features::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
pub use labels::{LabelFamily, LabelSpec, LabeledSet};
pub use learn::{FittedPipeline, PipelineSpec};
