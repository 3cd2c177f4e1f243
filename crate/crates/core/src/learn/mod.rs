//! Preprocessors, classifiers and pipelines forming the search space.

pub mod evaluate;
pub mod knn;
pub mod pipeline;
pub mod preprocess;
pub mod split;
pub mod tree;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use evaluate::{evaluate_pipeline, Evaluation};
pub use pipeline::FittedPipeline;
pub use split::{stratified_partition, stratified_shuffle_split};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("stratification impossible: {0}")]
    StratificationImpossible(String),
    #[error("k = {k} exceeds the {n} training samples")]
    KExceedsN { k: usize, n: usize },
    #[error("variance threshold removed every column")]
    AllColumnsDropped,
    #[error("{k} components requested but only {available} available")]
    KTooLarge { k: usize, available: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("expected {expected} features, got {found}")]
    FeatureMismatch { expected: usize, found: usize },
    #[error("unsupported pipeline file: {0}")]
    Format(String),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix::new(indices.len(), self.cols, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessorKind {
    None,
    VarianceThreshold,
    Pca,
    UnitNorm,
}

impl PreprocessorKind {
    /// Enumeration order of the pipeline search.
    pub const ALL: [PreprocessorKind; 4] = [Self::None, Self::VarianceThreshold, Self::Pca, Self::UnitNorm];

    pub fn short_name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::VarianceThreshold => "VT",
            Self::Pca => "PCA",
            Self::UnitNorm => "NOR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    RandomForest,
    ExtraTrees,
    Knn,
    MajorityVote,
}

impl ClassifierKind {
    /// Classifiers of the search space, in enumeration order. The majority
    /// vote dummy is a reference only.
    pub const SEARCHED: [ClassifierKind; 3] = [Self::RandomForest, Self::ExtraTrees, Self::Knn];

    pub fn short_name(self) -> &'static str {
        match self {
            Self::RandomForest => "RFC",
            Self::ExtraTrees => "ETC",
            Self::Knn => "kNN",
            Self::MajorityVote => "dummy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PreprocessorSpec {
    None,
    VarianceThreshold {
        threshold: f64,
    },
    /// `components: None` means `min(10, n_features)`.
    Pca {
        components: Option<usize>,
    },
    UnitNorm,
}

impl PreprocessorSpec {
    pub fn default_for(kind: PreprocessorKind) -> Self {
        match kind {
            PreprocessorKind::None => Self::None,
            PreprocessorKind::VarianceThreshold => Self::VarianceThreshold { threshold: 0.0 },
            PreprocessorKind::Pca => Self::Pca { components: None },
            PreprocessorKind::UnitNorm => Self::UnitNorm,
        }
    }

    pub fn kind(&self) -> PreprocessorKind {
        match self {
            Self::None => PreprocessorKind::None,
            Self::VarianceThreshold { .. } => PreprocessorKind::VarianceThreshold,
            Self::Pca { .. } => PreprocessorKind::Pca,
            Self::UnitNorm => PreprocessorKind::UnitNorm,
        }
    }
}

/// Candidate features per node, as a function of the feature count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    Half,
    All,
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let n = n_features as f64;
        let k = match self {
            Self::Sqrt => n.sqrt().floor(),
            Self::Log2 => n.log2().floor(),
            Self::Half => (0.5 * n).floor(),
            Self::All => n,
        };
        (k as usize).clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows trees until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

impl ForestParams {
    pub fn random_forest() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
        }
    }

    pub fn extra_trees() -> Self {
        Self {
            bootstrap: false,
            ..Self::random_forest()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnVote {
    Uniform,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    pub vote: KnnVote,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            k: 5,
            vote: KnnVote::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    RandomForest(ForestParams),
    ExtraTrees(ForestParams),
    Knn(KnnParams),
    MajorityVote,
}

impl ClassifierSpec {
    pub fn default_for(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::RandomForest => Self::RandomForest(ForestParams::random_forest()),
            ClassifierKind::ExtraTrees => Self::ExtraTrees(ForestParams::extra_trees()),
            ClassifierKind::Knn => Self::Knn(KnnParams::default()),
            ClassifierKind::MajorityVote => Self::MajorityVote,
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            Self::RandomForest(_) => ClassifierKind::RandomForest,
            Self::ExtraTrees(_) => ClassifierKind::ExtraTrees,
            Self::Knn(_) => ClassifierKind::Knn,
            Self::MajorityVote => ClassifierKind::MajorityVote,
        }
    }
}

/// Search ranges for hyperparameters.
pub mod ranges {
    pub const N_TREES: (usize, usize) = (10, 500);
    pub const MAX_DEPTH: (usize, usize) = (2, 32);
    pub const MIN_SAMPLES_SPLIT: (usize, usize) = (2, 20);
    pub const KNN_K: (usize, usize) = (1, 50);
    pub const VT_THRESHOLD: (f64, f64) = (0.0, 0.5);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub preprocessor: PreprocessorSpec,
    pub classifier: ClassifierSpec,
}

impl PipelineSpec {
    pub fn new(preprocessor: PreprocessorSpec, classifier: ClassifierSpec) -> Self {
        Self {
            preprocessor,
            classifier,
        }
    }

    pub fn default_for(p: PreprocessorKind, c: ClassifierKind) -> Self {
        Self::new(PreprocessorSpec::default_for(p), ClassifierSpec::default_for(c))
    }

    /// Majority-class reference pipeline.
    pub fn dummy() -> Self {
        Self::new(PreprocessorSpec::None, ClassifierSpec::MajorityVote)
    }

    pub fn kinds(&self) -> (PreprocessorKind, ClassifierKind) {
        (self.preprocessor.kind(), self.classifier.kind())
    }

    /// Checks hyperparameter ranges for data with `n_features` columns and
    /// `n_train` training rows. Data-dependent conditions (surviving columns
    /// after a variance threshold, numerical rank) are checked at fit time.
    pub fn validate(&self, n_features: usize, n_train: usize) -> Result<(), LearnError> {
        let bad = |m: String| Err(LearnError::InvalidParameter(m));
        match self.preprocessor {
            PreprocessorSpec::VarianceThreshold { threshold } => {
                let (lo, hi) = ranges::VT_THRESHOLD;
                if !(lo..=hi).contains(&threshold) {
                    return bad(format!("variance threshold {threshold} outside [{lo}, {hi}]"));
                }
            }
            PreprocessorSpec::Pca { components: Some(k) } => {
                if k == 0 {
                    return bad("PCA needs at least one component".into());
                }
                if k > n_features {
                    return Err(LearnError::KTooLarge {
                        k,
                        available: n_features,
                    });
                }
            }
            _ => {}
        }
        match self.classifier {
            ClassifierSpec::RandomForest(p) | ClassifierSpec::ExtraTrees(p) => {
                let in_range = |v: usize, (lo, hi): (usize, usize)| (lo..=hi).contains(&v);
                if !in_range(p.n_trees, ranges::N_TREES) {
                    return bad(format!("n_trees {} outside {:?}", p.n_trees, ranges::N_TREES));
                }
                if let Some(d) = p.max_depth {
                    if !in_range(d, ranges::MAX_DEPTH) {
                        return bad(format!("max_depth {d} outside {:?}", ranges::MAX_DEPTH));
                    }
                }
                if !in_range(p.min_samples_split, ranges::MIN_SAMPLES_SPLIT) {
                    return bad(format!(
                        "min_samples_split {} outside {:?}",
                        p.min_samples_split,
                        ranges::MIN_SAMPLES_SPLIT
                    ));
                }
            }
            ClassifierSpec::Knn(p) => {
                let (lo, hi) = ranges::KNN_K;
                if !(lo..=hi).contains(&p.k) {
                    return bad(format!("k {} outside [{lo}, {hi}]", p.k));
                }
                if p.k > n_train {
                    return Err(LearnError::KExceedsN { k: p.k, n: n_train });
                }
            }
            ClassifierSpec::MajorityVote => {}
        }
        Ok(())
    }
}

impl fmt::Display for PipelineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.preprocessor {
            PreprocessorSpec::None => {}
            PreprocessorSpec::VarianceThreshold { threshold } => write!(f, "VT(t={threshold:.4}) & ")?,
            PreprocessorSpec::Pca { components: None } => write!(f, "PCA & ")?,
            PreprocessorSpec::Pca { components: Some(k) } => write!(f, "PCA(k={k}) & ")?,
            PreprocessorSpec::UnitNorm => write!(f, "NOR & ")?,
        }
        match self.classifier {
            ClassifierSpec::RandomForest(p) | ClassifierSpec::ExtraTrees(p) => {
                let depth = p.max_depth.map_or("none".to_string(), |d| d.to_string());
                write!(
                    f,
                    "{}(trees={}, depth={depth}, split={}, features={:?}, bootstrap={})",
                    self.classifier.kind().short_name(),
                    p.n_trees,
                    p.min_samples_split,
                    p.max_features,
                    p.bootstrap
                )
            }
            ClassifierSpec::Knn(p) => write!(f, "kNN(k={}, vote={:?})", p.k, p.vote),
            ClassifierSpec::MajorityVote => f.write_str("dummy"),
        }
    }
}

/// Number of classes implied by labels `0..n`.
pub fn class_count(y: &[usize]) -> usize {
    y.iter().copied().max().map_or(0, |m| m + 1)
}

pub(crate) fn check_xy(x: &Matrix, y: &[usize]) -> Result<(), LearnError> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(LearnError::EmptyInput);
    }
    if x.rows() != y.len() {
        return Err(LearnError::LengthMismatch {
            rows: x.rows(),
            labels: y.len(),
        });
    }
    if !x.is_finite() {
        return Err(LearnError::NonFinite);
    }
    Ok(())
}

/// Smallest class index with the largest vote; votes compare exactly.
pub(crate) fn argmax_first<T: PartialOrd + Copy>(votes: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in votes.iter().enumerate().skip(1) {
        if v > votes[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_features_resolution() {
        assert_eq!(MaxFeatures::Sqrt.resolve(26), 5);
        assert_eq!(MaxFeatures::Log2.resolve(26), 4);
        assert_eq!(MaxFeatures::Half.resolve(26), 13);
        assert_eq!(MaxFeatures::Log2.resolve(1), 1);
    }

    #[test]
    fn validation() {
        let ok = PipelineSpec::default_for(PreprocessorKind::Pca, ClassifierKind::RandomForest);
        assert!(ok.validate(26, 100).is_ok());
        let knn = PipelineSpec::new(
            PreprocessorSpec::None,
            ClassifierSpec::Knn(KnnParams {
                k: 40,
                vote: KnnVote::Distance,
            }),
        );
        assert_eq!(knn.validate(26, 30), Err(LearnError::KExceedsN { k: 40, n: 30 }));
        let pca = PipelineSpec::new(
            PreprocessorSpec::Pca { components: Some(30) },
            ClassifierSpec::MajorityVote,
        );
        assert!(matches!(pca.validate(26, 100), Err(LearnError::KTooLarge { .. })));
        let mut rf = ForestParams::random_forest();
        rf.n_trees = 5;
        let spec = PipelineSpec::new(PreprocessorSpec::None, ClassifierSpec::RandomForest(rf));
        assert!(matches!(spec.validate(26, 100), Err(LearnError::InvalidParameter(_))));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = PipelineSpec::new(
            PreprocessorSpec::VarianceThreshold { threshold: 0.125 },
            ClassifierSpec::ExtraTrees(ForestParams::extra_trees()),
        );
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<PipelineSpec>(&s).unwrap(), spec);
        assert_eq!(
            spec.to_string(),
            "VT(t=0.1250) & ETC(trees=100, depth=none, split=2, features=Sqrt, bootstrap=false)"
        );
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax_first(&[1, 3, 3]), 1);
        assert_eq!(argmax_first(&[0.0, 0.0]), 0);
        assert_eq!(accuracy(&[0, 1, 1], &[0, 1, 0]), 2.0 / 3.0);
    }
}
