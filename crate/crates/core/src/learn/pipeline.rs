use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::knn::{fit_knn, KnnModel};
use super::preprocess::{fit_preprocessor, FittedPreprocessor};
use super::tree::{fit_forest, Forest, SplitRule};
use super::{argmax_first, check_xy, class_count, ClassifierSpec, LearnError, Matrix, PipelineSpec};

pub const PIPELINE_FORMAT: &str = "chronogaze-pipeline";
pub const PIPELINE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedClassifier {
    Forest(Forest),
    Knn(KnnModel),
    Constant { class: usize },
}

/// A preprocessor and classifier fitted together on one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub spec: PipelineSpec,
    pub seed: u64,
    pub n_classes: usize,
    /// Classes present in the training labels, ascending.
    pub classes_seen: Vec<usize>,
    pub preprocessor: FittedPreprocessor,
    pub classifier: FittedClassifier,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    pipeline: FittedPipeline,
}

impl FittedPipeline {
    pub fn fit(spec: &PipelineSpec, x: &Matrix, y: &[usize], seed: u64) -> Result<Self, LearnError> {
        check_xy(x, y)?;
        let preprocessor = fit_preprocessor(&spec.preprocessor, x)?;
        let xt = preprocessor.transform(x)?;
        let n_classes = class_count(y);
        let mut seen = vec![false; n_classes];
        for &c in y {
            seen[c] = true;
        }
        let classes_seen: Vec<usize> = (0..n_classes).filter(|&c| seen[c]).collect();
        let classifier = match spec.classifier {
            ClassifierSpec::RandomForest(p) => FittedClassifier::Forest(fit_forest(&p, SplitRule::Best, &xt, y, seed)?),
            ClassifierSpec::ExtraTrees(p) => FittedClassifier::Forest(fit_forest(&p, SplitRule::Random, &xt, y, seed)?),
            ClassifierSpec::Knn(p) => FittedClassifier::Knn(fit_knn(p, &xt, y)?),
            ClassifierSpec::MajorityVote => {
                let mut counts = vec![0usize; n_classes];
                for &c in y {
                    counts[c] += 1;
                }
                FittedClassifier::Constant {
                    class: argmax_first(&counts),
                }
            }
        };
        Ok(Self {
            spec: *spec,
            seed,
            n_classes,
            classes_seen,
            preprocessor,
            classifier,
        })
    }

    /// True when training saw a single class, so every prediction is that
    /// class.
    pub fn is_degenerate(&self) -> bool {
        self.classes_seen.len() < 2
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>, LearnError> {
        let xt = self.preprocessor.transform(x)?;
        Ok(match &self.classifier {
            FittedClassifier::Forest(f) => f.predict(&xt),
            FittedClassifier::Knn(k) => k.predict(&xt),
            FittedClassifier::Constant { class } => vec![*class; x.rows()],
        })
    }

    pub fn to_json(&self) -> Result<String, LearnError> {
        let env = EnvelopeRef {
            format: PIPELINE_FORMAT,
            version: PIPELINE_VERSION,
            pipeline: self,
        };
        serde_json::to_string(&env).map_err(|e| LearnError::Format(e.to_string()))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), LearnError> {
        let s = self.to_json()?;
        w.write_all(s.as_bytes()).map_err(|e| LearnError::Format(e.to_string()))
    }

    pub fn read<R: Read>(r: R) -> Result<Self, LearnError> {
        let env: Envelope = serde_json::from_reader(r).map_err(|e| LearnError::Format(e.to_string()))?;
        if env.format != PIPELINE_FORMAT {
            return Err(LearnError::Format(format!("format {:?}", env.format)));
        }
        if env.version != PIPELINE_VERSION {
            return Err(LearnError::Format(format!("version {}", env.version)));
        }
        Ok(env.pipeline)
    }
}

#[derive(Serialize)]
struct EnvelopeRef<'a> {
    format: &'static str,
    version: u32,
    pipeline: &'a FittedPipeline,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{ClassifierKind, KnnParams, KnnVote, PreprocessorKind, PreprocessorSpec};

    fn data() -> (Matrix, Vec<usize>) {
        let rows: Vec<[f64; 3]> = (0..30)
            .map(|i| [i as f64, (i % 3) as f64, 7.0 + (i as f64 * 0.9).sin()])
            .collect();
        let y = (0..30).map(|i| usize::from(i >= 15)).collect();
        (Matrix::from_rows(&rows), y)
    }

    #[test]
    fn one_nn_after_vt_reaches_full_training_accuracy() {
        let (x, y) = data();
        for pre in [PreprocessorKind::None, PreprocessorKind::VarianceThreshold] {
            let spec = PipelineSpec::new(
                PreprocessorSpec::default_for(pre),
                ClassifierSpec::Knn(KnnParams {
                    k: 1,
                    vote: KnnVote::Uniform,
                }),
            );
            let p = FittedPipeline::fit(&spec, &x, &y, 0).unwrap();
            assert_eq!(p.predict(&x).unwrap(), y);
        }
    }

    #[test]
    fn serialization_round_trip_is_byte_stable() {
        let (x, y) = data();
        for c in ClassifierKind::SEARCHED {
            for pre in [PreprocessorKind::None, PreprocessorKind::Pca] {
                let spec = PipelineSpec::default_for(pre, c);
                let spec = PipelineSpec {
                    preprocessor: match spec.preprocessor {
                        PreprocessorSpec::Pca { .. } => PreprocessorSpec::Pca { components: Some(2) },
                        p => p,
                    },
                    ..spec
                };
                let a = FittedPipeline::fit(&spec, &x, &y, 4).unwrap();
                let b = FittedPipeline::fit(&spec, &x, &y, 4).unwrap();
                let s = a.to_json().unwrap();
                assert_eq!(s, b.to_json().unwrap());
                let back = FittedPipeline::read(s.as_bytes()).unwrap();
                assert_eq!(back, a);
                assert_eq!(back.predict(&x).unwrap(), a.predict(&x).unwrap());
            }
        }
        assert!(FittedPipeline::read(&br#"{"format":"other","version":1}"#[..]).is_err());
    }

    #[test]
    fn dummy_predicts_majority() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]);
        let p = FittedPipeline::fit(&PipelineSpec::dummy(), &x, &[1, 0, 1], 0).unwrap();
        assert_eq!(p.predict(&x).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn single_class_is_flagged() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]);
        let spec = PipelineSpec::default_for(PreprocessorKind::None, ClassifierKind::ExtraTrees);
        let p = FittedPipeline::fit(&spec, &x, &[2, 2, 2], 0).unwrap();
        assert!(p.is_degenerate());
        assert_eq!(p.predict(&x).unwrap(), vec![2, 2, 2]);
    }
}
