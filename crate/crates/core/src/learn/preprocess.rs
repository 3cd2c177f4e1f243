use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{LearnError, Matrix, PreprocessorSpec};

/// Default number of principal components.
pub const DEFAULT_PCA_COMPONENTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedPreprocessor {
    Identity {
        n_features: usize,
    },
    Columns {
        n_features: usize,
        keep: Vec<usize>,
    },
    /// `basis` holds one unit-length component per row.
    Pca {
        mean: Vec<f64>,
        basis: Matrix,
    },
    UnitNorm {
        n_features: usize,
    },
}

/// Population variance of every column.
pub fn column_variances(x: &Matrix) -> Vec<f64> {
    let n = x.rows() as f64;
    (0..x.cols())
        .map(|j| {
            let mean = x.iter_rows().map(|r| r[j]).sum::<f64>() / n;
            x.iter_rows().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n
        })
        .collect()
}

pub fn fit_preprocessor(spec: &PreprocessorSpec, x: &Matrix) -> Result<FittedPreprocessor, LearnError> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(LearnError::EmptyInput);
    }
    if !x.is_finite() {
        return Err(LearnError::NonFinite);
    }
    let n_features = x.cols();
    Ok(match *spec {
        PreprocessorSpec::None => FittedPreprocessor::Identity { n_features },
        PreprocessorSpec::UnitNorm => FittedPreprocessor::UnitNorm { n_features },
        PreprocessorSpec::VarianceThreshold { threshold } => {
            let keep: Vec<usize> = column_variances(x)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > threshold)
                .map(|(j, _)| j)
                .collect();
            if keep.is_empty() {
                return Err(LearnError::AllColumnsDropped);
            }
            FittedPreprocessor::Columns { n_features, keep }
        }
        PreprocessorSpec::Pca { components } => {
            let k = components.unwrap_or(DEFAULT_PCA_COMPONENTS.min(n_features));
            fit_pca(x, k)?
        }
    })
}

fn fit_pca(x: &Matrix, k: usize) -> Result<FittedPreprocessor, LearnError> {
    let (n, d) = (x.rows(), x.cols());
    if k == 0 || k > d {
        return Err(LearnError::KTooLarge { k, available: d });
    }
    let mut mean = vec![0.0; d];
    for r in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centred = DMatrix::from_fn(n, d, |i, j| x.get(i, j) - mean[j]);
    let svd = centred.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let sigma_max = order.first().map_or(0.0, |&i| svd.singular_values[i]);
    let tol = sigma_max * n.max(d) as f64 * f64::EPSILON;
    let rank = order.iter().filter(|&&i| svd.singular_values[i] > tol).count();
    if k > rank {
        return Err(LearnError::KTooLarge { k, available: rank });
    }
    let mut basis = Matrix::zeros(k, d);
    for (c, &i) in order.iter().take(k).enumerate() {
        let row = basis.row_mut(c);
        for (j, v) in row.iter_mut().enumerate() {
            *v = v_t[(i, j)];
        }
        // Sign convention: the largest-magnitude loading is positive.
        let mut pivot = 0;
        for j in 1..d {
            if row[j].abs() > row[pivot].abs() {
                pivot = j;
            }
        }
        if row[pivot] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(FittedPreprocessor::Pca { mean, basis })
}

impl FittedPreprocessor {
    pub fn input_features(&self) -> usize {
        match self {
            Self::Identity { n_features } | Self::Columns { n_features, .. } | Self::UnitNorm { n_features } => {
                *n_features
            }
            Self::Pca { mean, .. } => mean.len(),
        }
    }

    pub fn output_features(&self) -> usize {
        match self {
            Self::Identity { n_features } | Self::UnitNorm { n_features } => *n_features,
            Self::Columns { keep, .. } => keep.len(),
            Self::Pca { basis, .. } => basis.rows(),
        }
    }

    pub fn transform_row(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match self {
            Self::Identity { .. } => out.extend_from_slice(row),
            Self::Columns { keep, .. } => out.extend(keep.iter().map(|&j| row[j])),
            Self::Pca { mean, basis } => {
                for b in basis.iter_rows() {
                    out.push(b.iter().zip(row).zip(mean).map(|((b, x), m)| b * (x - m)).sum());
                }
            }
            Self::UnitNorm { .. } => {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    out.extend(row.iter().map(|v| v / norm));
                } else {
                    out.extend_from_slice(row);
                }
            }
        }
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix, LearnError> {
        if x.cols() != self.input_features() {
            return Err(LearnError::FeatureMismatch {
                expected: self.input_features(),
                found: x.cols(),
            });
        }
        let mut data = Vec::with_capacity(x.rows() * self.output_features());
        let mut buf = Vec::new();
        for r in x.iter_rows() {
            self.transform_row(r, &mut buf);
            data.extend_from_slice(&buf);
        }
        Ok(Matrix::new(x.rows(), self.output_features(), data))
    }
}
