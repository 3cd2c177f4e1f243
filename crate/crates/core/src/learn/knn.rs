use serde::{Deserialize, Serialize};

use super::{argmax_first, check_xy, class_count, KnnParams, KnnVote, LearnError, Matrix};

/// Stored training set of a k-nearest-neighbour classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub params: KnnParams,
    pub n_classes: usize,
    x: Matrix,
    y: Vec<usize>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn fit_knn(params: KnnParams, x: &Matrix, y: &[usize]) -> Result<KnnModel, LearnError> {
    check_xy(x, y)?;
    if params.k == 0 {
        return Err(LearnError::InvalidParameter("k must be positive".into()));
    }
    if params.k > x.rows() {
        return Err(LearnError::KExceedsN {
            k: params.k,
            n: x.rows(),
        });
    }
    Ok(KnnModel {
        params,
        n_classes: class_count(y),
        x: x.clone(),
        y: y.to_vec(),
    })
}

impl KnnModel {
    /// The `k` nearest training points as `(squared distance, label)`,
    /// ordered by distance then label, which makes the result independent of
    /// the training row order.
    pub fn neighbours(&self, query: &[f64]) -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = self
            .x
            .iter_rows()
            .zip(&self.y)
            .map(|(r, &c)| (squared_distance(r, query), c))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let k = self.params.k;
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, cmp);
            all.truncate(k);
        }
        all.sort_unstable_by(cmp);
        all
    }

    pub fn predict_row(&self, query: &[f64]) -> usize {
        let nb = self.neighbours(query);
        match self.params.vote {
            KnnVote::Uniform => {
                let mut votes = vec![0usize; self.n_classes];
                for &(_, c) in &nb {
                    votes[c] += 1;
                }
                argmax_first(&votes)
            }
            KnnVote::Distance => {
                let mut votes = vec![0.0f64; self.n_classes];
                if nb.iter().any(|&(d, _)| d == 0.0) {
                    // Exact matches outweigh everything else.
                    for &(d, c) in &nb {
                        if d == 0.0 {
                            votes[c] += 1.0;
                        }
                    }
                } else {
                    for &(d, c) in &nb {
                        votes[c] += 1.0 / d.sqrt();
                    }
                }
                argmax_first(&votes)
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<usize> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }
}
