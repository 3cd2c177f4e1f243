use serde::{Deserialize, Serialize};

use super::split::stratified_partition;
use super::{accuracy, check_xy, class_count, FittedPipeline, LearnError, Matrix, PipelineSpec};
use crate::{par, seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean: f64,
    pub per_split: Vec<f64>,
}

impl Evaluation {
    pub fn from_splits(per_split: Vec<f64>) -> Self {
        let mean = if per_split.is_empty() {
            0.0
        } else {
            per_split.iter().sum::<f64>() / per_split.len() as f64
        };
        Self { mean, per_split }
    }
}

/// Train/validation partition `s` of a run seeded with `seed`. The same
/// seed yields the same partitions for every pipeline, so comparisons
/// between pipelines are paired.
pub fn split_indices(y: &[usize], train_fraction: f64, seed: u64, s: usize) -> (Vec<usize>, Vec<usize>) {
    stratified_partition(y, 1.0 - train_fraction, seed::derive(seed, &[s as u64]))
}

/// Size of the smallest training part over the splits of
/// [`evaluate_pipeline`].
pub fn min_train_size(y: &[usize], train_fraction: f64) -> usize {
    let mut counts = vec![0usize; class_count(y)];
    for &c in y {
        counts[c] += 1;
    }
    counts
        .iter()
        .map(|&n| n - super::split::held_out_count(n, 1.0 - train_fraction))
        .sum()
}

/// Check that every class present has at least `n_splits` members.
pub fn check_stratifiable(y: &[usize], n_splits: usize) -> Result<(), LearnError> {
    let mut counts = vec![0usize; class_count(y)];
    for &c in y {
        counts[c] += 1;
    }
    if let Some((c, &n)) = counts.iter().enumerate().find(|(_, &n)| n > 0 && n < n_splits.max(2)) {
        return Err(LearnError::StratificationImpossible(format!(
            "class {c} has {n} members, {} splits requested",
            n_splits
        )));
    }
    Ok(())
}

/// Mean validation accuracy over `n_splits` stratified train/validation
/// splits.
pub fn evaluate_pipeline(
    spec: &PipelineSpec,
    x: &Matrix,
    y: &[usize],
    n_splits: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<Evaluation, LearnError> {
    check_xy(x, y)?;
    if n_splits == 0 {
        return Err(LearnError::InvalidParameter("at least one split required".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(LearnError::InvalidParameter(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    check_stratifiable(y, n_splits)?;
    spec.validate(x.cols(), min_train_size(y, train_fraction))?;
    let per_split = par::map_range(n_splits, |s| {
        let (train, val) = split_indices(y, train_fraction, seed, s);
        let ty: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        let vy: Vec<usize> = val.iter().map(|&i| y[i]).collect();
        let fitted = FittedPipeline::fit(spec, &x.select_rows(&train), &ty, seed::derive(seed, &[s as u64, 1]))?;
        Ok(accuracy(&fitted.predict(&x.select_rows(&val))?, &vy))
    })
    .into_iter()
    .collect::<Result<Vec<f64>, LearnError>>()?;
    Ok(Evaluation::from_splits(per_split))
}
