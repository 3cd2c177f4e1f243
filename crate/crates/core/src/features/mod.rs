//! Per-window eye-movement and pupillary features with baseline subtraction.

pub mod ipa;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, FixationEvent, GazeSample, TrialKey, TrialRecord};
use crate::events::{derive_saccades, slice_trial, stream_span, SaccadeEvent, SliceError, WindowSlice};
use crate::par;

pub const FEATURE_COUNT: usize = 26;

/// Fixed feature vocabulary, in column order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "fixation_freq",
    "fixation_dur_mean",
    "fixation_dur_max",
    "fixation_disp_mean",
    "fixation_disp_max",
    "saccade_freq",
    "saccade_dur_mean",
    "saccade_dur_max",
    "saccade_speed_mean",
    "saccade_speed_max",
    "diam2d_mean_left",
    "diam2d_max_left",
    "diam2d_std_left",
    "diam2d_mean_right",
    "diam2d_max_right",
    "diam2d_std_right",
    "diam3d_mean_left",
    "diam3d_max_left",
    "diam3d_std_left",
    "diam3d_mean_right",
    "diam3d_max_right",
    "diam3d_std_right",
    "ipa_2d_left",
    "ipa_2d_right",
    "ipa_3d_left",
    "ipa_3d_right",
];

/// Number of leading eye-movement features; the rest are pupillary.
pub const EYE_MOVEMENT_COUNT: usize = 10;

pub const PROVENANCE_COLUMNS: [&str; 6] = [
    "participant_id",
    "trial_id",
    "t_start_s",
    "t_w_s",
    "planned_duration_s",
    "n_active",
];

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("trial {0} has no baseline recording")]
    MissingBaseline(TrialKey),
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error("features table line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Identifies one window of one trial, plus the trial's condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceProvenance {
    pub participant_id: String,
    pub trial_id: String,
    pub t_start: f64,
    pub t_w: f64,
    pub planned_duration: u32,
    pub n_active: u32,
}

impl SliceProvenance {
    pub fn trial_key(&self) -> TrialKey {
        TrialKey::new(self.participant_id.clone(), self.trial_id.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub provenance: SliceProvenance,
    pub values: [f64; FEATURE_COUNT],
}

/// The 26 features over a trial's whole baseline recording.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineProfile {
    pub key: TrialKey,
    pub values: [f64; FEATURE_COUNT],
}

/// What to do with windows that have no fixations or no valid samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyAggregate {
    /// Empty means, maxima and frequencies are 0.
    #[default]
    Zero,
    DropSlice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    /// Samples below this confidence are ignored by pupil statistics and IPA.
    pub min_confidence: f64,
    pub empty: EmptyAggregate,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            min_confidence: 0.6,
            empty: EmptyAggregate::Zero,
        }
    }
}

/// Streams and duration of one analysis window (a slice or a baseline).
#[derive(Debug, Clone, Copy)]
pub struct WindowData<'a> {
    pub span: f64,
    pub gaze: &'a [GazeSample],
    pub fixations: &'a [FixationEvent],
    pub saccades: &'a [SaccadeEvent],
}

impl<'a> From<&WindowSlice<'a>> for WindowData<'a> {
    fn from(w: &WindowSlice<'a>) -> Self {
        Self {
            span: w.t_w,
            gaze: w.gaze,
            fixations: w.fixations,
            saccades: w.saccades,
        }
    }
}

/// Single-pass mean / max / population standard deviation.
#[derive(Debug, Clone, Copy, Default)]
struct Running {
    n: usize,
    mean: f64,
    m2: f64,
    max: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.n += 1;
        if self.n == 1 || x > self.max {
            self.max = x;
        }
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.mean
        }
    }

    fn max(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.max
        }
    }

    fn std(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0).sqrt()
        }
    }
}

fn collect<I: IntoIterator<Item = f64>>(values: I) -> Running {
    let mut r = Running::default();
    for v in values {
        r.push(v);
    }
    r
}

pub fn eye_movement_features(w: &WindowData<'_>) -> [f64; EYE_MOVEMENT_COUNT] {
    let dur = collect(w.fixations.iter().map(|f| f.duration));
    let disp = collect(w.fixations.iter().map(|f| f.dispersion));
    let sdur = collect(w.saccades.iter().map(|s| s.duration));
    let speed = collect(w.saccades.iter().map(|s| s.speed));
    let freq = |n: usize| if w.span > 0.0 { n as f64 / w.span } else { 0.0 };
    [
        freq(w.fixations.len()),
        dur.mean(),
        dur.max(),
        disp.mean(),
        disp.max(),
        freq(w.saccades.len()),
        sdur.mean(),
        sdur.max(),
        speed.mean(),
        speed.max(),
    ]
}

const DIAMETERS: [fn(&GazeSample) -> f64; 4] = [
    |g| g.diam2d_left,
    |g| g.diam2d_right,
    |g| g.diam3d_left,
    |g| g.diam3d_right,
];

/// Mean, max and population std for each of 2d-left, 2d-right, 3d-left,
/// 3d-right over samples with `confidence >= min_confidence`.
pub fn pupil_stat_features(w: &WindowData<'_>, min_confidence: f64) -> [f64; 12] {
    let mut out = [0.0; 12];
    for (c, get) in DIAMETERS.iter().enumerate() {
        let r = collect(w.gaze.iter().filter(|g| g.confidence >= min_confidence).map(get));
        out[3 * c] = r.mean();
        out[3 * c + 1] = r.max();
        out[3 * c + 2] = r.std();
    }
    out
}

/// IPA for 2d-left, 2d-right, 3d-left, 3d-right. Series too short for the
/// wavelet filter yield 0.
pub fn ipa_features(w: &WindowData<'_>, min_confidence: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (c, get) in DIAMETERS.iter().enumerate() {
        let series: Vec<(f64, f64)> = w
            .gaze
            .iter()
            .filter(|g| g.confidence >= min_confidence)
            .map(|g| (g.timestamp, get(g)))
            .collect();
        out[c] = if series.is_empty() {
            0.0
        } else {
            match ipa::ipa(&series, w.span) {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("IPA set to 0: {e}");
                    0.0
                }
            }
        };
    }
    out
}

/// All 26 features of one window, before baseline subtraction.
pub fn raw_features(w: &WindowData<'_>, min_confidence: f64) -> [f64; FEATURE_COUNT] {
    let mut out = [0.0; FEATURE_COUNT];
    out[..10].copy_from_slice(&eye_movement_features(w));
    out[10..22].copy_from_slice(&pupil_stat_features(w, min_confidence));
    out[22..].copy_from_slice(&ipa_features(w, min_confidence));
    out
}

/// Features over the whole baseline recording, treated as one window.
pub fn baseline_profile(t: &TrialRecord, opts: &ExtractOptions) -> Result<BaselineProfile, FeatureError> {
    if t.baseline_gaze.is_empty() {
        return Err(FeatureError::MissingBaseline(t.key.clone()));
    }
    let saccades = derive_saccades(&t.baseline_fixations);
    let data = WindowData {
        span: stream_span(&t.baseline_gaze),
        gaze: &t.baseline_gaze,
        fixations: &t.baseline_fixations,
        saccades: &saccades,
    };
    Ok(BaselineProfile {
        key: t.key.clone(),
        values: raw_features(&data, opts.min_confidence),
    })
}

fn keep_window(w: &WindowSlice<'_>, opts: &ExtractOptions) -> bool {
    match opts.empty {
        EmptyAggregate::Zero => true,
        EmptyAggregate::DropSlice => {
            !w.fixations.is_empty() && w.gaze.iter().any(|g| g.confidence >= opts.min_confidence)
        }
    }
}

/// Baseline-subtracted features of every window of one trial.
pub fn extract_trial(t: &TrialRecord, t_w: f64, opts: &ExtractOptions) -> Result<Vec<FeatureVector>, FeatureError> {
    let baseline = baseline_profile(t, opts)?;
    let sliced = slice_trial(t, t_w)?;
    Ok(sliced
        .windows()
        .filter(|w| keep_window(w, opts))
        .map(|w| {
            let mut values = raw_features(&WindowData::from(&w), opts.min_confidence);
            for (v, b) in values.iter_mut().zip(baseline.values) {
                *v -= b;
            }
            FeatureVector {
                provenance: SliceProvenance {
                    participant_id: t.key.participant_id.clone(),
                    trial_id: t.key.trial_id.clone(),
                    t_start: w.t_start,
                    t_w,
                    planned_duration: t.planned_duration,
                    n_active: t.n_active,
                },
                values,
            }
        })
        .collect())
}

/// Features for every window of every trial, in dataset order. Trials are
/// processed in parallel; the output is identical to a sequential run.
pub fn extract_all(d: &Dataset, t_w: f64, opts: &ExtractOptions) -> Result<Vec<FeatureVector>, FeatureError> {
    let per_trial = par::map(&d.trials, |t| extract_trial(t, t_w, opts));
    let mut out = Vec::new();
    for r in per_trial {
        out.extend(r?);
    }
    Ok(out)
}

pub fn write_features_csv<W: Write>(features: &[FeatureVector], w: W) -> Result<(), FeatureError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(PROVENANCE_COLUMNS.iter().chain(FEATURE_NAMES.iter()))?;
    for f in features {
        let p = &f.provenance;
        let mut row = vec![
            p.participant_id.clone(),
            p.trial_id.clone(),
            p.t_start.to_string(),
            p.t_w.to_string(),
            p.planned_duration.to_string(),
            p.n_active.to_string(),
        ];
        row.extend(f.values.iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_features_csv<R: Read>(r: R) -> Result<Vec<FeatureVector>, FeatureError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let expected: Vec<&str> = PROVENANCE_COLUMNS.iter().chain(FEATURE_NAMES.iter()).copied().collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(FeatureError::Parse {
            line: 1,
            message: "unexpected header".into(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| FeatureError::Parse {
            line,
            message: format!("cannot parse {what}"),
        };
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(expected[i]));
        let mut values = [0.0; FEATURE_COUNT];
        for (k, v) in values.iter_mut().enumerate() {
            *v = num(PROVENANCE_COLUMNS.len() + k)?;
        }
        out.push(FeatureVector {
            provenance: SliceProvenance {
                participant_id: rec[0].to_string(),
                trial_id: rec[1].to_string(),
                t_start: num(2)?,
                t_w: num(3)?,
                planned_duration: rec[4].parse().map_err(|_| bad("planned_duration_s"))?,
                n_active: rec[5].parse().map_err(|_| bad("n_active"))?,
            },
            values,
        });
    }
    Ok(out)
}
