//! Index of Pupillary Activity: the rate of abrupt pupil-diameter changes,
//! counted as thresholded modulus maxima of level-2 wavelet details.

use thiserror::Error;

/// Uniform resampling rate before the wavelet transform.
pub const IPA_RATE_HZ: f64 = 120.0;

/// Symlet-16 decomposition low-pass filter.
pub const SYM16_DEC_LO: [f64; 32] = [
    6.230006701220761e-06,
    -3.113556407621969e-06,
    -0.00010943147929529757,
    2.8078582128442894e-05,
    0.0008523547108047095,
    -0.0001084456223089688,
    -0.0038809122526038786,
    0.0007182119788317892,
    0.012666731659857348,
    -0.0031265171722710075,
    -0.031051202843553064,
    0.004869274404904607,
    0.032333091610663785,
    -0.06698304907021778,
    -0.034574228416972504,
    0.39712293362064416,
    0.7565249878756971,
    0.47534280601152273,
    -0.054040601387606135,
    -0.15959219218520598,
    0.03072113906330156,
    0.07803785290341991,
    -0.003510275068374009,
    -0.024952758046290123,
    0.001359844742484172,
    0.0069377611308027096,
    -0.00022211647621176323,
    -0.0013387206066921965,
    3.656592483348223e-05,
    0.00016545679579108483,
    -5.396483179315242e-06,
    -1.0797982104319795e-05,
];

const FILTER_LEN: usize = SYM16_DEC_LO.len();

/// Robust noise scale: median absolute deviation to standard deviation.
const MAD_TO_SIGMA: f64 = 0.6745;

#[derive(Debug, Error, PartialEq)]
pub enum IpaError {
    #[error("series has {len} samples after resampling, need at least {needed}")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("span must be positive, got {0}")]
    NonPositiveSpan(f64),
}

/// Quadrature-mirror high-pass companion of a low-pass filter.
pub fn quadrature_mirror(lo: &[f64; FILTER_LEN]) -> [f64; FILTER_LEN] {
    let mut hi = [0.0; FILTER_LEN];
    for (k, h) in hi.iter_mut().enumerate() {
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        *h = sign * lo[FILTER_LEN - 1 - k];
    }
    hi
}

/// One level of a periodized discrete wavelet transform. Odd-length input is
/// extended by repeating its last sample. Returns (approximation, detail).
pub fn dwt_periodized(x: &[f64], lo: &[f64; FILTER_LEN], hi: &[f64; FILTER_LEN]) -> (Vec<f64>, Vec<f64>) {
    let m = x.len() + x.len() % 2;
    // Periodic extension by FILTER_LEN on both sides, so the inner loop
    // indexes directly.
    let pad = FILTER_LEN as isize;
    let ext: Vec<f64> = (-pad..m as isize + pad)
        .map(|i| {
            let k = i.rem_euclid(m as isize) as usize;
            x[k.min(x.len() - 1)]
        })
        .collect();
    let half = FILTER_LEN / 2;
    let mut approx = Vec::with_capacity(m / 2);
    let mut detail = Vec::with_capacity(m / 2);
    for i in 0..m / 2 {
        let base = 2 * i + half + FILTER_LEN;
        let (mut a, mut d) = (0.0, 0.0);
        for j in 0..FILTER_LEN {
            let v = ext[base - j];
            a += lo[j] * v;
            d += hi[j] * v;
        }
        approx.push(a);
        detail.push(d);
    }
    (approx, detail)
}

/// Linear interpolation of a time-ordered series onto `t0 + k / rate`,
/// covering `[t0, t_last]`.
pub fn resample_uniform(series: &[(f64, f64)], rate: f64) -> Vec<f64> {
    let Some(&(t0, _)) = series.first() else {
        return Vec::new();
    };
    let t_last = series[series.len() - 1].0;
    let n = ((t_last - t0) * rate + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let g = t0 + k as f64 / rate;
        while j + 2 < series.len() && series[j + 1].0 <= g {
            j += 1;
        }
        let value = if series.len() == 1 || g >= t_last {
            series[series.len() - 1].1
        } else if g <= series[j].0 {
            series[j].1
        } else {
            let (ta, da) = series[j];
            let (tb, db) = series[j + 1];
            let slope = (db - da) / (tb - ta);
            slope * (g - ta) + da
        };
        out.push(value);
    }
    out
}

/// Magnitudes at local maxima of `|d|` (plateau edges excluded), zero elsewhere.
pub fn modulus_maxima(d: &[f64]) -> Vec<f64> {
    let n = d.len();
    (0..n)
        .map(|i| {
            let here = d[i].abs();
            let left = if i > 0 { d[i - 1].abs() } else { here };
            let right = if i + 1 < n { d[i + 1].abs() } else { here };
            if left <= here && here >= right && (left < here || here > right) {
                here
            } else {
                0.0
            }
        })
        .collect()
}

/// `sigma * sqrt(2 ln n)` with `sigma = median(|d|) / 0.6745`.
pub fn universal_threshold(d: &[f64]) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    let mut mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let n = mags.len();
    let median = if n % 2 == 1 {
        mags[n / 2]
    } else {
        (mags[n / 2 - 1] + mags[n / 2]) / 2.0
    };
    median / MAD_TO_SIGMA * (2.0 * (n as f64).ln()).sqrt()
}

/// Number of abrupt changes detected in a series.
pub fn abrupt_change_count(series: &[(f64, f64)]) -> Result<usize, IpaError> {
    let signal = resample_uniform(series, IPA_RATE_HZ);
    if signal.len() < FILTER_LEN {
        return Err(IpaError::SeriesTooShort {
            len: signal.len(),
            needed: FILTER_LEN,
        });
    }
    let hi = quadrature_mirror(&SYM16_DEC_LO);
    let (approx, _) = dwt_periodized(&signal, &SYM16_DEC_LO, &hi);
    let (_, detail2) = dwt_periodized(&approx, &SYM16_DEC_LO, &hi);
    let lambda = universal_threshold(&detail2);
    Ok(modulus_maxima(&detail2).into_iter().filter(|&m| m > lambda).count())
}

/// IPA in events per second over a window of `span` seconds.
pub fn ipa(series: &[(f64, f64)], span: f64) -> Result<f64, IpaError> {
    if span.is_nan() || span <= 0.0 {
        return Err(IpaError::NonPositiveSpan(span));
    }
    Ok(abrupt_change_count(series)? as f64 / span)
}
