//! Definition-level recomputation of the 26 window features, written
//! without the extraction code so the two can be checked against each other.

use thiserror::Error;

use crate::data::{FixationEvent, GazeSample, TrialRecord};
use crate::features::ipa::SYM16_DEC_LO;
use crate::features::{FEATURE_COUNT, FEATURE_NAMES};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
}

/// Raw streams plus the time range and duration of one window. Events are
/// selected here, not by the caller: samples by timestamp, fixations and
/// saccades by start time, all in `[t_start, t_end)`.
#[derive(Debug, Clone, Copy)]
pub struct OracleWindow<'a> {
    /// The whole stream of the trial phase.
    pub gaze: &'a [GazeSample],
    pub fixations: &'a [FixationEvent],
    pub t_start: f64,
    pub t_end: f64,
    /// Duration used for rates.
    pub span: f64,
    pub min_confidence: f64,
}

impl OracleWindow<'_> {
    fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end
    }

    fn fixations(&self) -> Vec<&FixationEvent> {
        self.fixations.iter().filter(|f| self.contains(f.start)).collect()
    }

    /// `(duration, speed)` of every gap between consecutive fixations that
    /// starts inside the window.
    fn saccades(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for k in 1..self.fixations.len() {
            let a = &self.fixations[k - 1];
            let b = &self.fixations[k];
            let start = a.start + a.duration;
            let gap = b.start - start;
            if gap > 0.0 && self.contains(start) {
                let dist = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
                out.push((gap, dist / gap));
            }
        }
        out
    }

    fn diameters(&self, channel: usize) -> Vec<(f64, f64)> {
        self.gaze
            .iter()
            .filter(|g| self.contains(g.timestamp) && g.confidence >= self.min_confidence)
            .map(|g| {
                let d = match channel {
                    0 => g.diam2d_left,
                    1 => g.diam2d_right,
                    2 => g.diam3d_left,
                    _ => g.diam3d_right,
                };
                (g.timestamp, d)
            })
            .collect()
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().reduce(f64::max).unwrap_or(0.0)
}

/// Two-pass population standard deviation.
fn std(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

fn rate(count: usize, span: f64) -> f64 {
    if span > 0.0 {
        count as f64 / span
    } else {
        0.0
    }
}

/// Samples on the 120 Hz grid from the first timestamp, by linear
/// interpolation between the bracketing samples.
fn resample(series: &[(f64, f64)]) -> Vec<f64> {
    let t0 = series[0].0;
    let (t_last, d_last) = series[series.len() - 1];
    let n = ((t_last - t0) * 120.0 + 1e-9).floor() as usize + 1;
    (0..n)
        .map(|k| {
            let g = t0 + k as f64 / 120.0;
            if series.len() == 1 || g >= t_last {
                return d_last;
            }
            // last sample at or before g, but never the final one
            let below = series.partition_point(|s| s.0 <= g);
            let j = below.saturating_sub(1).min(series.len() - 2);
            let (ta, da) = series[j];
            let (tb, db) = series[j + 1];
            if g <= ta {
                da
            } else {
                (db - da) / (tb - ta) * (g - ta) + da
            }
        })
        .collect()
}

/// Circular convolution of `x` (padded to even length with its last
/// sample) with `filter`, keeping outputs `2i + 16`.
fn analysis_step(x: &[f64], filter: &[f64]) -> Vec<f64> {
    let mut xe = x.to_vec();
    if xe.len() % 2 == 1 {
        xe.push(*x.last().unwrap());
    }
    let m = xe.len();
    let conv: Vec<f64> = (0..m)
        .map(|n| {
            let mut acc = 0.0;
            for (j, h) in filter.iter().enumerate() {
                let idx = ((n as isize - j as isize).rem_euclid(m as isize)) as usize;
                acc += h * xe[idx];
            }
            acc
        })
        .collect();
    (0..m / 2).map(|i| conv[(2 * i + 16) % m]).collect()
}

fn ipa(series: &[(f64, f64)], span: f64) -> f64 {
    if series.is_empty() || span <= 0.0 {
        return 0.0;
    }
    let x = resample(series);
    if x.len() < 32 {
        return 0.0;
    }
    let lo = SYM16_DEC_LO;
    let hi: Vec<f64> = (0..32)
        .map(|k| if k % 2 == 1 { lo[31 - k] } else { -lo[31 - k] })
        .collect();
    let a1 = analysis_step(&x, &lo);
    let d2 = analysis_step(&a1, &hi);
    let mut mags: Vec<f64> = d2.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = mags.len();
    let median = if n % 2 == 1 {
        mags[n / 2]
    } else {
        (mags[n / 2 - 1] + mags[n / 2]) / 2.0
    };
    let lambda = median / 0.6745 * (2.0 * (n as f64).ln()).sqrt();
    let a: Vec<f64> = d2.iter().map(|v| v.abs()).collect();
    let mut count = 0;
    for i in 0..n {
        let l = if i == 0 { a[i] } else { a[i - 1] };
        let r = if i == n - 1 { a[i] } else { a[i + 1] };
        let peak = a[i] >= l && a[i] >= r && (a[i] > l || a[i] > r);
        if peak && a[i] > lambda {
            count += 1;
        }
    }
    count as f64 / span
}

/// Recomputes feature `name` on window `w`.
pub fn oracle_feature(name: &str, w: &OracleWindow<'_>) -> Result<f64, OracleError> {
    let fix = w.fixations();
    let sac = w.saccades();
    let fix_dur: Vec<f64> = fix.iter().map(|f| f.duration).collect();
    let fix_disp: Vec<f64> = fix.iter().map(|f| f.dispersion).collect();
    let sac_dur: Vec<f64> = sac.iter().map(|s| s.0).collect();
    let sac_speed: Vec<f64> = sac.iter().map(|s| s.1).collect();
    let channel = |tag: &str| match tag {
        "2d_left" => Some(0),
        "2d_right" => Some(1),
        "3d_left" => Some(2),
        "3d_right" => Some(3),
        _ => None,
    };
    let values = |c: usize| -> Vec<f64> { w.diameters(c).into_iter().map(|p| p.1).collect() };
    let value = match name {
        "fixation_freq" => rate(fix.len(), w.span),
        "fixation_dur_mean" => mean(&fix_dur),
        "fixation_dur_max" => max(&fix_dur),
        "fixation_disp_mean" => mean(&fix_disp),
        "fixation_disp_max" => max(&fix_disp),
        "saccade_freq" => rate(sac.len(), w.span),
        "saccade_dur_mean" => mean(&sac_dur),
        "saccade_dur_max" => max(&sac_dur),
        "saccade_speed_mean" => mean(&sac_speed),
        "saccade_speed_max" => max(&sac_speed),
        _ => {
            let unknown = || OracleError::UnknownFeature(name.to_string());
            if let Some(rest) = name.strip_prefix("ipa_") {
                let c = channel(rest).ok_or_else(unknown)?;
                ipa(&w.diameters(c), w.span)
            } else {
                let rest = name.strip_prefix("diam").ok_or_else(unknown)?;
                let (dim, tail) = rest.split_once('_').ok_or_else(unknown)?;
                let (stat, side) = tail.split_once('_').ok_or_else(unknown)?;
                let c = channel(&format!("{dim}_{side}")).ok_or_else(unknown)?;
                let v = values(c);
                match stat {
                    "mean" => mean(&v),
                    "max" => max(&v),
                    "std" => std(&v),
                    _ => return Err(unknown()),
                }
            }
        }
    };
    Ok(value)
}

/// First-to-last timestamp plus the median sampling interval, taking the
/// upper middle value for an even number of intervals.
fn stream_duration(gaze: &[GazeSample]) -> f64 {
    if gaze.len() < 2 {
        return 0.0;
    }
    let mut dts: Vec<f64> = (1..gaze.len())
        .map(|k| gaze[k].timestamp - gaze[k - 1].timestamp)
        .collect();
    dts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    gaze[gaze.len() - 1].timestamp - gaze[0].timestamp + dts[dts.len() / 2]
}

/// All features of the window `[t_start, t_start + t_w)` of `trial`'s
/// experiment, minus the same features over its whole baseline.
pub fn oracle_slice_features(trial: &TrialRecord, t_start: f64, t_w: f64, min_confidence: f64) -> [f64; FEATURE_COUNT] {
    let slice = OracleWindow {
        gaze: &trial.gaze,
        fixations: &trial.fixations,
        t_start,
        t_end: t_start + t_w,
        span: t_w,
        min_confidence,
    };
    let baseline = OracleWindow {
        gaze: &trial.baseline_gaze,
        fixations: &trial.baseline_fixations,
        t_start: f64::NEG_INFINITY,
        t_end: f64::INFINITY,
        span: stream_duration(&trial.baseline_gaze),
        min_confidence,
    };
    let mut out = [0.0; FEATURE_COUNT];
    for (v, name) in out.iter_mut().zip(FEATURE_NAMES) {
        let raw = oracle_feature(name, &slice).expect("known feature");
        let base = oracle_feature(name, &baseline).expect("known feature");
        *v = raw - base;
    }
    out
}
