//! Synthetic recordings with a planted, tunable class signal.
//!
//! Pupil diameters follow `base + scale * z` where `z` (in noise standard
//! deviations) is the sum of a per-user offset shared by baseline and
//! experiment, the class shift, experiment-only participant shifts, white
//! noise and short rectangular dilation spikes. Spikes arrive as a Poisson
//! process whose rate depends on the class. Fixations start as a Poisson
//! process with Gamma-distributed durations.

pub mod oracle;

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    write_dataset, DataError, DataPaths, Dataset, FixationEvent, GazeSample, QuestionnaireAnswer, ScreeningPolicy,
    TrialKey, TrialRecord, ACTIVE_COUNTS, PLANNED_DURATIONS,
};
use crate::labels::LabelFamily;
use crate::{par, seed};

pub use oracle::{oracle_feature, oracle_slice_features, OracleError, OracleWindow};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    Config(String),
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Experiment-only pupil level shift of one participant, in noise standard
/// deviations. Baseline subtraction does not remove it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticipantShift {
    pub participant: usize,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_participants: usize,
    pub trials_per_participant: usize,
    /// Planned durations, cycled over each participant's trials.
    pub durations: Vec<u32>,
    pub gaze_rate_hz: f64,
    pub baseline_s: f64,
    pub fixation_rate_hz: f64,
    pub fixation_shape: f64,
    pub fixation_scale: f64,
    pub pupil_base_2d: f64,
    pub pupil_base_3d: f64,
    pub pupil_scale_2d: f64,
    pub pupil_scale_3d: f64,
    /// Pupil level added per class index, in noise standard deviations.
    pub class_shift: f64,
    /// Standard deviation of the per-user level offset.
    pub user_offset_sigma: f64,
    /// Standard deviation of a per-trial level offset shared by both phases.
    pub trial_sigma: f64,
    /// Dilation spikes per second for each class; the last rate repeats.
    pub spike_rates_hz: Vec<f64>,
    pub baseline_spike_rate_hz: f64,
    pub spike_amplitude: f64,
    pub spike_width_s: f64,
    pub participant_shifts: Vec<ParticipantShift>,
    /// Sample confidence is uniform in `[min_confidence, 1]`.
    pub min_confidence: f64,
    pub family: LabelFamily,
    pub n_classes: u8,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_participants: 4,
            trials_per_participant: 6,
            durations: PLANNED_DURATIONS.to_vec(),
            gaze_rate_hz: 120.0,
            baseline_s: 120.0,
            fixation_rate_hz: 3.0,
            fixation_shape: 2.0,
            fixation_scale: 0.1,
            pupil_base_2d: 40.0,
            pupil_base_3d: 4.0,
            pupil_scale_2d: 2.0,
            pupil_scale_3d: 0.2,
            class_shift: 4.0,
            user_offset_sigma: 1.0,
            trial_sigma: 0.0,
            spike_rates_hz: vec![0.5, 1.5],
            baseline_spike_rate_hz: 1.0,
            spike_amplitude: 3.0,
            spike_width_s: 0.05,
            participant_shifts: Vec::new(),
            min_confidence: 0.8,
            family: LabelFamily::DurationEstimate,
            n_classes: 2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn from_toml(s: &str) -> Result<Self, SynthError> {
        let cfg: SynthConfig = toml::from_str(s).map_err(|e| SynthError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Copy with every class-dependent term removed.
    pub fn without_signal(&self) -> Self {
        let rate = self.spike_rates_hz.first().copied().unwrap_or(1.0);
        Self {
            class_shift: 0.0,
            spike_rates_hz: vec![rate],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        let positive = [
            ("gaze_rate_hz", self.gaze_rate_hz),
            ("baseline_s", self.baseline_s),
            ("fixation_rate_hz", self.fixation_rate_hz),
            ("fixation_shape", self.fixation_shape),
            ("fixation_scale", self.fixation_scale),
            ("pupil_base_2d", self.pupil_base_2d),
            ("pupil_base_3d", self.pupil_base_3d),
            ("spike_width_s", self.spike_width_s),
            ("baseline_spike_rate_hz", self.baseline_spike_rate_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let finite = [
            ("pupil_scale_2d", self.pupil_scale_2d),
            ("pupil_scale_3d", self.pupil_scale_3d),
            ("class_shift", self.class_shift),
            ("user_offset_sigma", self.user_offset_sigma),
            ("trial_sigma", self.trial_sigma),
            ("spike_amplitude", self.spike_amplitude),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.n_participants == 0 || self.trials_per_participant == 0 {
            return bad("need at least one participant and one trial".into());
        }
        if self.durations.is_empty() || self.durations.iter().any(|d| !PLANNED_DURATIONS.contains(d)) {
            return bad(format!("durations must be drawn from {PLANNED_DURATIONS:?}"));
        }
        if self.spike_rates_hz.is_empty() || self.spike_rates_hz.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("spike rates must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return bad("min_confidence outside [0, 1]".into());
        }
        if self.n_classes != 2 && self.n_classes != 3 {
            return bad(format!("n_classes must be 2 or 3, got {}", self.n_classes));
        }
        if self.user_offset_sigma < 0.0 || self.trial_sigma < 0.0 {
            return bad("offset deviations must be non-negative".into());
        }
        if let Some(s) = self
            .participant_shifts
            .iter()
            .find(|s| s.participant >= self.n_participants)
        {
            return bad(format!("participant shift for unknown participant {}", s.participant));
        }
        Ok(())
    }

    pub fn participant_id(p: usize) -> String {
        format!("p{p:02}")
    }

    pub fn trial_id(j: usize) -> String {
        format!("t{j:02}")
    }

    /// Planted class of trial `j` of participant `p`; balanced across each
    /// participant's trials.
    pub fn planted_class(&self, p: usize, j: usize) -> usize {
        (p + j) % self.n_classes as usize
    }

    pub fn planned_duration(&self, j: usize) -> u32 {
        self.durations[j % self.durations.len()]
    }

    pub fn n_active(&self, j: usize) -> u32 {
        ACTIVE_COUNTS[(j / self.durations.len()) % ACTIVE_COUNTS.len()]
    }

    fn spike_rate(&self, class: usize) -> f64 {
        let r = &self.spike_rates_hz;
        r[class.min(r.len() - 1)]
    }

    fn participant_shift(&self, p: usize) -> f64 {
        self.participant_shifts
            .iter()
            .filter(|s| s.participant == p)
            .map(|s| s.shift)
            .sum()
    }
}

/// Questionnaire answers that label as `class` under the planted family.
pub fn planted_answer(family: LabelFamily, n_classes: u8, class: usize, planned: u32) -> QuestionnaireAnswer {
    let planned = f64::from(planned);
    match family {
        LabelFamily::DurationEstimate => {
            let e_rel = if n_classes == 2 {
                [0.7, 1.2][class]
            } else {
                [0.6, 0.9, 1.3][class]
            };
            QuestionnaireAnswer {
                estimated_duration: (planned * e_rel).round(),
                ppot_likert: 3,
            }
        }
        LabelFamily::Ppot => QuestionnaireAnswer {
            estimated_duration: planned,
            ppot_likert: if n_classes == 2 {
                [2, 4][class]
            } else {
                [1, 3, 5][class]
            },
        },
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Spike onset times of a Poisson process on `[0, duration)`.
fn poisson_times(rate: f64, duration: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let exp = Exp::new(rate).expect("positive rate");
    let mut out = Vec::new();
    let mut t = exp.sample(rng);
    while t < duration {
        out.push(t);
        t += exp.sample(rng);
    }
    out
}

fn pupil_stream(
    cfg: &SynthConfig,
    duration: f64,
    level: f64,
    spike_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<GazeSample> {
    let n = (duration * cfg.gaze_rate_hz).round() as usize;
    let spikes = poisson_times(spike_rate, duration, rng);
    let mut next_spike = 0;
    (0..n)
        .map(|k| {
            let t = k as f64 / cfg.gaze_rate_hz;
            while next_spike < spikes.len() && spikes[next_spike] + cfg.spike_width_s <= t {
                next_spike += 1;
            }
            let spike = if next_spike < spikes.len() && spikes[next_spike] <= t {
                cfg.spike_amplitude
            } else {
                0.0
            };
            let z = |rng: &mut ChaCha8Rng| level + spike + normal(rng);
            let d2l = cfg.pupil_base_2d + cfg.pupil_scale_2d * z(rng);
            let d2r = cfg.pupil_base_2d + cfg.pupil_scale_2d * z(rng);
            let d3l = cfg.pupil_base_3d + cfg.pupil_scale_3d * z(rng);
            let d3r = cfg.pupil_base_3d + cfg.pupil_scale_3d * z(rng);
            GazeSample {
                timestamp: t,
                pupil_x: rng.random_range(0.0..=1.0),
                pupil_y: rng.random_range(0.0..=1.0),
                diam2d_left: d2l.max(0.0),
                diam2d_right: d2r.max(0.0),
                diam3d_left: d3l.max(0.0),
                diam3d_right: d3r.max(0.0),
                confidence: rng.random_range(cfg.min_confidence..=1.0),
            }
        })
        .collect()
}

fn fixation_stream(cfg: &SynthConfig, duration: f64, rng: &mut ChaCha8Rng) -> Vec<FixationEvent> {
    let starts = poisson_times(cfg.fixation_rate_hz, duration, rng);
    let gamma = Gamma::new(cfg.fixation_shape, cfg.fixation_scale).expect("valid gamma");
    starts
        .iter()
        .enumerate()
        .map(|(i, &start)| {
            let room = starts.get(i + 1).map_or(f64::INFINITY, |&next| next - start);
            let d: f64 = gamma.sample(rng);
            FixationEvent {
                id: i as u64 + 1,
                start,
                duration: d.max(1e-3).min(room),
                dispersion: rng.random_range(0.2..1.5),
                x: rng.random_range(0.0..=1.0),
                y: rng.random_range(0.0..=1.0),
            }
        })
        .collect()
}

fn generate_trial(cfg: &SynthConfig, p: usize, j: usize) -> TrialRecord {
    let user_offset = cfg.user_offset_sigma * normal(&mut seed::rng_at(cfg.seed, &[p as u64, seed::tag("user")]));
    let mut rng = seed::rng_at(cfg.seed, &[p as u64, j as u64]);
    let class = cfg.planted_class(p, j);
    let planned = cfg.planned_duration(j);
    let trial_offset = cfg.trial_sigma * normal(&mut rng);
    let level = user_offset + trial_offset;
    let mut t = TrialRecord::new(
        TrialKey::new(SynthConfig::participant_id(p), SynthConfig::trial_id(j)),
        planned,
        cfg.n_active(j),
    );
    t.baseline_gaze = pupil_stream(cfg, cfg.baseline_s, level, cfg.baseline_spike_rate_hz, &mut rng);
    t.baseline_fixations = fixation_stream(cfg, cfg.baseline_s, &mut rng);
    let shift = cfg.participant_shift(p);
    t.gaze = pupil_stream(
        cfg,
        f64::from(planned),
        level + cfg.class_shift * class as f64 + shift,
        cfg.spike_rate(class),
        &mut rng,
    );
    t.fixations = fixation_stream(cfg, f64::from(planned), &mut rng);
    t.answers = Some(planted_answer(cfg.family, cfg.n_classes, class, planned));
    t
}

/// Generates every trial in memory. Trials are independent given
/// `(seed, participant, trial)` and are produced in parallel.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<Dataset, SynthError> {
    cfg.validate()?;
    let n = cfg.n_participants * cfg.trials_per_participant;
    let per = cfg.trials_per_participant;
    let trials = par::map_range(n, |i| generate_trial(cfg, i / per, i % per));
    let d = Dataset::screened(trials, &ScreeningPolicy::default());
    debug_assert!(d.screening_log.is_empty());
    Ok(d)
}

/// Writes the four input tables for `cfg` into `dir`.
pub fn generate(cfg: &SynthConfig, dir: &Path) -> Result<DataPaths, SynthError> {
    let d = generate_dataset(cfg)?;
    Ok(write_dataset(&d, dir)?)
}
