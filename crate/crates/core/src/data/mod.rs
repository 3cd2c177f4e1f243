//! Canonical gaze/fixation data model, CSV ingestion and trial screening.

mod io;
mod split;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{
    load_dataset, read_questionnaire, write_dataset, write_table, DataPaths, Table, FIXATION_COLUMNS, GAZE_COLUMNS,
    QUESTIONNAIRE_COLUMNS, TRIAL_COLUMNS,
};
pub use split::{split_analysis_test, SplitGranularity, SplitIndices};

/// Trial durations used in the experiment, in seconds.
pub const PLANNED_DURATIONS: [u32; 3] = [60, 180, 300];
/// Admissible counts of actively moving robots.
pub const ACTIVE_COUNTS: [u32; 8] = [1, 3, 5, 7, 9, 11, 13, 15];
/// Upper end of the duration-estimate timeline (10:00 min).
pub const MAX_ESTIMATE_S: f64 = 600.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{file}: column set mismatch, expected [{expected}], found [{found}]")]
    SchemaMismatch {
        file: String,
        expected: String,
        found: String,
    },
    #[error("{file}:{line}: {message}")]
    RowParse { file: String, line: u64, message: String },
    #[error("{file}:{line}: {message}")]
    CrossReference { file: String, line: u64, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("only one class present, stratification impossible")]
    SingleClass,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// One eye-tracker sample. Coordinates are normalized to the scene camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub timestamp: f64,
    pub pupil_x: f64,
    pub pupil_y: f64,
    pub diam2d_left: f64,
    pub diam2d_right: f64,
    pub diam3d_left: f64,
    pub diam3d_right: f64,
    pub confidence: f64,
}

impl GazeSample {
    /// Returns the name of the first violated field range, if any.
    pub fn range_violation(&self) -> Option<&'static str> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !self.timestamp.is_finite() {
            Some("timestamp_s")
        } else if !unit(self.pupil_x) {
            Some("pupil_x_norm")
        } else if !unit(self.pupil_y) {
            Some("pupil_y_norm")
        } else if !nonneg(self.diam2d_left) {
            Some("diam2d_left_px")
        } else if !nonneg(self.diam2d_right) {
            Some("diam2d_right_px")
        } else if !nonneg(self.diam3d_left) {
            Some("diam3d_left_mm")
        } else if !nonneg(self.diam3d_right) {
            Some("diam3d_right_mm")
        } else if !unit(self.confidence) {
            Some("confidence")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationEvent {
    pub id: u64,
    pub start: f64,
    pub duration: f64,
    pub dispersion: f64,
    pub x: f64,
    pub y: f64,
}

impl FixationEvent {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn range_violation(&self) -> Option<&'static str> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !self.start.is_finite() {
            Some("start_s")
        } else if !(self.duration.is_finite() && self.duration > 0.0) {
            Some("duration_s")
        } else if !(self.dispersion.is_finite() && self.dispersion >= 0.0) {
            Some("dispersion_deg")
        } else if !unit(self.x) {
            Some("fix_x_norm")
        } else if !unit(self.y) {
            Some("fix_y_norm")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrialKey {
    pub participant_id: String,
    pub trial_id: String,
}

impl TrialKey {
    pub fn new(participant_id: impl Into<String>, trial_id: impl Into<String>) -> Self {
        Self {
            participant_id: participant_id.into(),
            trial_id: trial_id.into(),
        }
    }
}

impl fmt::Display for TrialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.participant_id, self.trial_id)
    }
}

/// Post-trial questionnaire. Likert is encoded 1 = "very slow" .. 5 = "very fast".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireAnswer {
    pub estimated_duration: f64,
    pub ppot_likert: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub key: TrialKey,
    pub planned_duration: u32,
    pub n_active: u32,
    pub gaze: Vec<GazeSample>,
    pub fixations: Vec<FixationEvent>,
    pub baseline_gaze: Vec<GazeSample>,
    pub baseline_fixations: Vec<FixationEvent>,
    pub answers: Option<QuestionnaireAnswer>,
}

impl TrialRecord {
    pub fn new(key: TrialKey, planned_duration: u32, n_active: u32) -> Self {
        Self {
            key,
            planned_duration,
            n_active,
            gaze: Vec::new(),
            fixations: Vec::new(),
            baseline_gaze: Vec::new(),
            baseline_fixations: Vec::new(),
            answers: None,
        }
    }

    /// Shift every stream so that each phase starts at 0 s. The origin of a
    /// phase is its first gaze sample, or its first fixation if it has no gaze.
    pub fn normalize_timestamps(&mut self) {
        fn shift(gaze: &mut [GazeSample], fixations: &mut [FixationEvent]) {
            let origin = gaze
                .first()
                .map(|g| g.timestamp)
                .or_else(|| fixations.first().map(|f| f.start));
            if let Some(origin) = origin {
                for g in gaze.iter_mut() {
                    g.timestamp -= origin;
                }
                for f in fixations.iter_mut() {
                    f.start -= origin;
                }
            }
        }
        shift(&mut self.gaze, &mut self.fixations);
        shift(&mut self.baseline_gaze, &mut self.baseline_fixations);
    }
}

/// Why a trial was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExclusionReason {
    EmptyStream,
    NonMonotoneTimestamps,
    LowConfidence,
    MissingBaseline,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExclusionReason::EmptyStream => "empty stream",
            ExclusionReason::NonMonotoneTimestamps => "non-monotone timestamps",
            ExclusionReason::LowConfidence => "low confidence",
            ExclusionReason::MissingBaseline => "baseline missing",
        })
    }
}

/// Trial screening rules; each can be switched off individually.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningPolicy {
    pub reject_empty: bool,
    pub reject_non_monotone: bool,
    /// Minimum mean gaze confidence of the experiment stream; `None` disables.
    pub min_mean_confidence: Option<f64>,
    pub require_baseline: bool,
}

impl Default for ScreeningPolicy {
    fn default() -> Self {
        Self {
            reject_empty: true,
            reject_non_monotone: true,
            min_mean_confidence: Some(0.6),
            require_baseline: true,
        }
    }
}

fn gaze_monotone(gaze: &[GazeSample]) -> bool {
    gaze.windows(2).all(|w| w[1].timestamp >= w[0].timestamp)
}

fn fixations_monotone(fixations: &[FixationEvent]) -> bool {
    fixations
        .windows(2)
        .all(|w| w[1].id > w[0].id && w[1].start >= w[0].end())
}

/// Deterministic verdict for one trial. Checks run in a fixed order and the
/// first failing rule is reported.
pub fn screen_trial(t: &TrialRecord, policy: &ScreeningPolicy) -> Result<(), ExclusionReason> {
    if policy.reject_empty && (t.gaze.is_empty() || t.fixations.is_empty()) {
        return Err(ExclusionReason::EmptyStream);
    }
    if policy.require_baseline && (t.baseline_gaze.is_empty() || t.baseline_fixations.is_empty()) {
        return Err(ExclusionReason::MissingBaseline);
    }
    if policy.reject_non_monotone
        && !(gaze_monotone(&t.gaze)
            && gaze_monotone(&t.baseline_gaze)
            && fixations_monotone(&t.fixations)
            && fixations_monotone(&t.baseline_fixations))
    {
        return Err(ExclusionReason::NonMonotoneTimestamps);
    }
    if let Some(min) = policy.min_mean_confidence {
        if !t.gaze.is_empty() {
            let mean = t.gaze.iter().map(|g| g.confidence).sum::<f64>() / t.gaze.len() as f64;
            if mean < min {
                return Err(ExclusionReason::LowConfidence);
            }
        }
    }
    Ok(())
}

/// Screened collection of trials, ordered by [`TrialKey`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub trials: Vec<TrialRecord>,
    pub screening_log: Vec<(TrialKey, ExclusionReason)>,
}

impl Dataset {
    /// Screen `trials`, keeping the survivors sorted by key.
    pub fn screened(mut trials: Vec<TrialRecord>, policy: &ScreeningPolicy) -> Self {
        trials.sort_by(|a, b| a.key.cmp(&b.key));
        let mut kept = Vec::with_capacity(trials.len());
        let mut log = Vec::new();
        for t in trials {
            match screen_trial(&t, policy) {
                Ok(()) => kept.push(t),
                Err(reason) => {
                    log::info!("excluding trial {}: {reason}", t.key);
                    log.push((t.key, reason));
                }
            }
        }
        Self {
            trials: kept,
            screening_log: log,
        }
    }

    pub fn trial(&self, key: &TrialKey) -> Option<&TrialRecord> {
        self.trials
            .binary_search_by(|t| t.key.cmp(key))
            .ok()
            .map(|i| &self.trials[i])
    }

    pub fn participants(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.trials.iter().map(|t| t.key.participant_id.clone()).collect();
        ids.dedup();
        ids
    }
}
