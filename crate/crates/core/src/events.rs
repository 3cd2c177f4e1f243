//! Saccade derivation and non-overlapping window slicing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FixationEvent, GazeSample, TrialRecord};

/// Window sizes used in the sweep, in seconds.
pub const STANDARD_WINDOWS: [f64; 9] = [1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 30.0, 45.0, 60.0];

/// Slack for floating-point spans that should be exact multiples of a window.
const SPAN_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SliceError {
    #[error("window size must be positive, got {0}")]
    NonPositiveWindow(f64),
}

/// Gap between two consecutive fixations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaccadeEvent {
    pub start: f64,
    pub duration: f64,
    /// Euclidean distance between the fixation centroids, in normalized units.
    pub amplitude: f64,
    /// `amplitude / duration`.
    pub speed: f64,
}

/// One saccade per adjacent fixation pair separated by a positive gap.
pub fn derive_saccades(fixations: &[FixationEvent]) -> Vec<SaccadeEvent> {
    fixations
        .windows(2)
        .filter_map(|w| {
            let start = w[0].end();
            let duration = w[1].start - start;
            if duration <= 0.0 {
                return None;
            }
            let amplitude = (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
            Some(SaccadeEvent {
                start,
                duration,
                amplitude,
                speed: amplitude / duration,
            })
        })
        .collect()
}

/// Duration covered by a sample stream: first-to-last timestamp plus one
/// median sampling interval (each sample stands for the interval after it).
pub fn stream_span(gaze: &[GazeSample]) -> f64 {
    match gaze {
        [] => 0.0,
        [_] => 0.0,
        [first, .., last] => {
            let mut dts: Vec<f64> = gaze.windows(2).map(|w| w[1].timestamp - w[0].timestamp).collect();
            let mid = dts.len() / 2;
            let (_, median, _) = dts.select_nth_unstable_by(mid, f64::total_cmp);
            last.timestamp - first.timestamp + *median
        }
    }
}

/// `floor(span / t_w)`, tolerant to rounding in `span`.
pub fn slice_count(span: f64, t_w: f64) -> usize {
    if span <= 0.0 || t_w <= 0.0 {
        return 0;
    }
    (span / t_w + SPAN_EPS).floor() as usize
}

/// Borrowed view of one window of a trial.
#[derive(Debug, Clone, Copy)]
pub struct WindowSlice<'a> {
    pub trial: &'a TrialRecord,
    pub index: usize,
    pub t_start: f64,
    pub t_w: f64,
    pub gaze: &'a [GazeSample],
    pub fixations: &'a [FixationEvent],
    pub saccades: &'a [SaccadeEvent],
}

impl WindowSlice<'_> {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.t_w
    }
}

#[derive(Debug, Clone)]
struct Bounds {
    t_start: f64,
    gaze: (usize, usize),
    fixations: (usize, usize),
    saccades: (usize, usize),
}

/// A trial cut into consecutive windows of equal size starting at 0 s. The
/// trailing remainder shorter than the window is dropped.
#[derive(Debug, Clone)]
pub struct SlicedTrial<'a> {
    pub trial: &'a TrialRecord,
    pub t_w: f64,
    pub span: f64,
    pub saccades: Vec<SaccadeEvent>,
    bounds: Vec<Bounds>,
}

impl<'a> SlicedTrial<'a> {
    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    /// True when the window is longer than the recorded stream.
    pub fn window_longer_than_trial(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn window(&self, index: usize) -> WindowSlice<'_> {
        let b = &self.bounds[index];
        WindowSlice {
            trial: self.trial,
            index,
            t_start: b.t_start,
            t_w: self.t_w,
            gaze: &self.trial.gaze[b.gaze.0..b.gaze.1],
            fixations: &self.trial.fixations[b.fixations.0..b.fixations.1],
            saccades: &self.saccades[b.saccades.0..b.saccades.1],
        }
    }

    pub fn windows(&self) -> impl Iterator<Item = WindowSlice<'_>> + '_ {
        (0..self.bounds.len()).map(move |i| self.window(i))
    }
}

/// Cut the experiment streams of `trial` into windows of `t_w` seconds.
///
/// Samples belong to the window whose half-open interval contains their
/// timestamp; fixations and saccades belong to the window containing their
/// start. Streams must be time-ordered (screened trials are).
pub fn slice_trial(trial: &TrialRecord, t_w: f64) -> Result<SlicedTrial<'_>, SliceError> {
    if !(t_w > 0.0 && t_w.is_finite()) {
        return Err(SliceError::NonPositiveWindow(t_w));
    }
    let saccades = derive_saccades(&trial.fixations);
    let span = stream_span(&trial.gaze);
    let n = slice_count(span, t_w);
    if n == 0 {
        log::warn!(
            "trial {}: window of {t_w} s is longer than the {span:.3} s stream",
            trial.key
        );
    }
    let gaze_idx = |t: f64| trial.gaze.partition_point(|g| g.timestamp < t);
    let fix_idx = |t: f64| trial.fixations.partition_point(|f| f.start < t);
    let sac_idx = |t: f64| saccades.partition_point(|s| s.start < t);
    let bounds = (0..n)
        .map(|i| {
            let lo = i as f64 * t_w;
            let hi = (i + 1) as f64 * t_w;
            Bounds {
                t_start: lo,
                gaze: (gaze_idx(lo), gaze_idx(hi)),
                fixations: (fix_idx(lo), fix_idx(hi)),
                saccades: (sac_idx(lo), sac_idx(hi)),
            }
        })
        .collect();
    Ok(SlicedTrial {
        trial,
        t_w,
        span,
        saccades,
        bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::{fixation, sample};
    use crate::data::TrialKey;
    use proptest::prelude::*;

    fn fix_at(id: u64, start: f64, dur: f64, x: f64, y: f64) -> FixationEvent {
        FixationEvent {
            x,
            y,
            ..fixation(id, start, dur)
        }
    }

    fn trial_of(duration: u32, rate: f64) -> TrialRecord {
        let mut t = TrialRecord::new(TrialKey::new("p", "t"), duration, 1);
        let n = (duration as f64 * rate).round() as usize;
        t.gaze = (0..n).map(|i| sample(i as f64 / rate, 0.9)).collect();
        t.fixations = (0..duration as u64 * 2)
            .map(|i| fixation(i + 1, i as f64 * 0.5, 0.3))
            .collect();
        t
    }

    #[test]
    fn three_four_five_saccade() {
        let f = [fix_at(1, 0.0, 1.0, 0.2, 0.2), fix_at(2, 1.2, 0.8, 0.5, 0.6)];
        let s = derive_saccades(&f);
        assert_eq!(s.len(), 1);
        assert!((s[0].start - 1.0).abs() < 1e-12);
        assert!((s[0].duration - 0.2).abs() < 1e-12);
        assert!((s[0].amplitude - 0.5).abs() < 1e-12);
        assert!((s[0].speed - 2.5).abs() < 1e-9);
        assert!(derive_saccades(&f[..1]).is_empty());
        assert!(derive_saccades(&[]).is_empty());
    }

    #[test]
    fn touching_fixations_have_no_saccade() {
        let f = [fix_at(1, 0.0, 1.0, 0.2, 0.2), fix_at(2, 1.0, 0.8, 0.5, 0.6)];
        assert!(derive_saccades(&f).is_empty());
    }

    #[test]
    fn slice_counts() {
        let t60 = trial_of(60, 120.0);
        assert_eq!(slice_trial(&t60, 60.0).unwrap().len(), 1);
        assert_eq!(slice_trial(&t60, 45.0).unwrap().len(), 1);
        assert_eq!(slice_trial(&t60, 1.0).unwrap().len(), 60);
        let t300 = trial_of(300, 10.0);
        assert_eq!(slice_trial(&t300, 45.0).unwrap().len(), 6);
        let t180 = trial_of(180, 10.0);
        assert_eq!(slice_trial(&t180, 7.0).unwrap().len(), 25);
        let long = slice_trial(&t60, 61.0).unwrap();
        assert!(long.window_longer_than_trial());
        assert_eq!(slice_trial(&t60, 0.0).unwrap_err(), SliceError::NonPositiveWindow(0.0));
    }

    #[test]
    fn windows_are_contiguous() {
        let t = trial_of(60, 120.0);
        let s = slice_trial(&t, 10.0).unwrap();
        let mut total = 0;
        for (i, w) in s.windows().enumerate() {
            assert_eq!(w.t_start, i as f64 * 10.0);
            assert!(w
                .gaze
                .iter()
                .all(|g| g.timestamp >= w.t_start && g.timestamp < w.t_end()));
            assert_eq!(w.gaze.len(), 1200);
            total += w.fixations.len();
        }
        assert_eq!(total, t.fixations.len());
    }

    fn random_fixations(seed: u64, n: usize) -> Vec<FixationEvent> {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed);
        let mut t = 0.0;
        (0..n)
            .map(|i| {
                t += rng.random_range(0.01..0.2);
                let d = rng.random_range(0.05..0.6);
                let f = fix_at(i as u64 + 1, t, d, rng.random(), rng.random());
                t += d;
                f
            })
            .collect()
    }

    #[test]
    fn ten_random_fixations_brute_force() {
        for seed in 0..20 {
            let f = random_fixations(seed, 10);
            let s = derive_saccades(&f);
            assert_eq!(s.len(), 9);
            for (i, sac) in s.iter().enumerate() {
                let gap = f[i + 1].start - (f[i].start + f[i].duration);
                assert_eq!(sac.duration, gap);
                assert_eq!(sac.speed, sac.amplitude / sac.duration);
            }
        }
    }

    proptest! {
        #[test]
        fn saccades_translate_with_time(seed in 0u64..1000, delta in -100.0f64..100.0) {
            let f = random_fixations(seed, 12);
            let shifted: Vec<_> = f.iter().map(|e| FixationEvent { start: e.start + delta, ..*e }).collect();
            let a = derive_saccades(&f);
            let b = derive_saccades(&shifted);
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((y.start - x.start - delta).abs() < 1e-9);
                prop_assert!((y.duration - x.duration).abs() < 1e-9);
                prop_assert_eq!(x.amplitude, y.amplitude);
            }
        }

        #[test]
        fn each_fixation_in_one_window(seed in 0u64..500, t_w in 0.5f64..20.0) {
            let mut t = trial_of(60, 20.0);
            t.fixations = random_fixations(seed, 120);
            let s = slice_trial(&t, t_w).unwrap();
            prop_assert_eq!(s.len(), slice_count(s.span, t_w));
            let covered = s.len() as f64 * t_w;
            for f in &t.fixations {
                let owners = s.windows().filter(|w| w.fixations.iter().any(|g| g.id == f.id)).count();
                prop_assert_eq!(owners, usize::from(f.start >= 0.0 && f.start < covered));
            }
        }
    }
}
