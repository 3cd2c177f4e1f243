//! Duration-estimate and perceived-passage-of-time (PPOT) labels.
//!
//! Every window slice inherits the label of its trial.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, QuestionnaireAnswer, TrialKey};
use crate::features::{FeatureVector, SliceProvenance};
use crate::learn::Matrix;

/// Binary duration threshold: `e_rel <= 0.9` is an underestimate.
pub const DURATION_BINARY_THRESHOLD: f64 = 0.9;
/// Three-class duration thresholds: under `< 0.75 <=` correct `<= 1.05 <` over.
pub const DURATION_TERNARY_THRESHOLDS: (f64, f64) = (0.75, 1.05);

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("actual duration must be positive, got {0}")]
    NonPositiveActual(f64),
    #[error("Likert answer {0} outside 1..5")]
    OutOfRangeLikert(u8),
    #[error("unsupported number of classes {0}")]
    UnsupportedArity(u8),
    #[error("no questionnaire answers for trial {0}")]
    MissingQuestionnaire(TrialKey),
    #[error("labels table line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("{0}")]
    Csv(String),
}

impl From<csv::Error> for LabelError {
    fn from(e: csv::Error) -> Self {
        LabelError::Csv(e.to_string())
    }
}

impl From<std::io::Error> for LabelError {
    fn from(e: std::io::Error) -> Self {
        LabelError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelFamily {
    DurationEstimate,
    Ppot,
}

impl LabelFamily {
    pub const ALL: [LabelFamily; 2] = [LabelFamily::DurationEstimate, LabelFamily::Ppot];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelFamily::DurationEstimate => "duration",
            LabelFamily::Ppot => "ppot",
        }
    }
}

impl fmt::Display for LabelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LabelFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "duration" | "duration_estimate" => Ok(LabelFamily::DurationEstimate),
            "ppot" => Ok(LabelFamily::Ppot),
            other => Err(format!("unknown label family {other:?}")),
        }
    }
}

/// Label family plus arity (2 or 3 classes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelSpec {
    pub family: LabelFamily,
    pub n_classes: u8,
}

impl LabelSpec {
    pub fn new(family: LabelFamily, n_classes: u8) -> Result<Self, LabelError> {
        if n_classes != 2 && n_classes != 3 {
            return Err(LabelError::UnsupportedArity(n_classes));
        }
        Ok(Self { family, n_classes })
    }

    /// Duration thresholds in increasing order; empty for PPOT.
    pub fn thresholds(&self) -> Vec<f64> {
        match (self.family, self.n_classes) {
            (LabelFamily::DurationEstimate, 2) => vec![DURATION_BINARY_THRESHOLD],
            (LabelFamily::DurationEstimate, _) => {
                vec![DURATION_TERNARY_THRESHOLDS.0, DURATION_TERNARY_THRESHOLDS.1]
            }
            (LabelFamily::Ppot, _) => Vec::new(),
        }
    }

    pub fn class_names(&self) -> &'static [&'static str] {
        match (self.family, self.n_classes) {
            (LabelFamily::DurationEstimate, 2) => &["under", "over"],
            (LabelFamily::DurationEstimate, _) => &["under", "correct", "over"],
            (LabelFamily::Ppot, 2) => &["slow", "fast"],
            (LabelFamily::Ppot, _) => &["slow", "neutral", "fast"],
        }
    }

    /// Short tag such as `duration2`.
    pub fn tag(&self) -> String {
        format!("{}{}", self.family, self.n_classes)
    }

    pub fn label(&self, answer: &QuestionnaireAnswer, actual_duration: f64) -> Result<usize, LabelError> {
        match self.family {
            LabelFamily::DurationEstimate => {
                let e = relative_estimation_error(answer.estimated_duration, actual_duration)?;
                Ok(duration_label(e, self.n_classes))
            }
            LabelFamily::Ppot => ppot_label(answer.ppot_likert, self.n_classes),
        }
    }
}

/// Estimated over actual duration.
pub fn relative_estimation_error(estimated: f64, actual: f64) -> Result<f64, LabelError> {
    if actual.is_nan() || actual <= 0.0 {
        return Err(LabelError::NonPositiveActual(actual));
    }
    Ok(estimated / actual)
}

/// Duration class: binary 0 = under (`e <= 0.9`), 1 = over; ternary
/// 0 = under (`e < 0.75`), 1 = correct (`0.75 <= e <= 1.05`), 2 = over.
pub fn duration_label(e_rel: f64, n_classes: u8) -> usize {
    if n_classes == 2 {
        usize::from(e_rel > DURATION_BINARY_THRESHOLD)
    } else {
        let (lo, hi) = DURATION_TERNARY_THRESHOLDS;
        if e_rel < lo {
            0
        } else if e_rel <= hi {
            1
        } else {
            2
        }
    }
}

/// PPOT class from a 1..5 Likert answer: binary {1,2} slow, {3,4,5} fast;
/// ternary {1,2} slow, {3} neutral, {4,5} fast.
pub fn ppot_label(likert: u8, n_classes: u8) -> Result<usize, LabelError> {
    if !(1..=5).contains(&likert) {
        return Err(LabelError::OutOfRangeLikert(likert));
    }
    Ok(match (n_classes, likert) {
        (_, 1 | 2) => 0,
        (2, _) => 1,
        (_, 3) => 1,
        _ => 2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: Vec<usize>,
    pub majority_share: f64,
}

impl ClassDistribution {
    pub fn from_labels(labels: &[usize], n_classes: usize) -> Self {
        let mut counts = vec![0; n_classes];
        for &y in labels {
            counts[y] += 1;
        }
        let majority_share = if labels.is_empty() {
            0.0
        } else {
            *counts.iter().max().unwrap() as f64 / labels.len() as f64
        };
        Self { counts, majority_share }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: usize,
}

/// Labeled feature vectors of one setting, with their class histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub spec: LabelSpec,
    pub samples: Vec<LabeledSample>,
    pub distribution: ClassDistribution,
}

impl LabeledSet {
    pub fn new(spec: LabelSpec, samples: Vec<LabeledSample>) -> Self {
        let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
        let distribution = ClassDistribution::from_labels(&labels, spec.n_classes as usize);
        Self {
            spec,
            samples,
            distribution,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes as usize
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Subset by sample indices, keeping order.
    pub fn subset(&self, indices: &[usize]) -> LabeledSet {
        LabeledSet::new(self.spec, indices.iter().map(|&i| self.samples[i].clone()).collect())
    }

    pub fn filter<F: Fn(&LabeledSample) -> bool>(&self, keep: F) -> LabeledSet {
        LabeledSet::new(self.spec, self.samples.iter().filter(|s| keep(s)).cloned().collect())
    }

    /// Feature matrix and label vector of the samples at `indices`.
    pub fn design_at(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        let rows: Vec<&[f64]> = indices.iter().map(|&i| &self.samples[i].features.values[..]).collect();
        let y = indices.iter().map(|&i| self.samples[i].label).collect();
        (Matrix::from_rows(&rows), y)
    }

    pub fn design(&self) -> (Matrix, Vec<usize>) {
        let all: Vec<usize> = (0..self.samples.len()).collect();
        self.design_at(&all)
    }
}

/// Label feature vectors from a map of questionnaire answers; the actual
/// duration is the trial's planned duration.
pub fn label_features(
    features: &[FeatureVector],
    answers: &BTreeMap<TrialKey, QuestionnaireAnswer>,
    spec: LabelSpec,
) -> Result<LabeledSet, LabelError> {
    let mut samples = Vec::with_capacity(features.len());
    for f in features {
        let key = f.provenance.trial_key();
        let answer = answers
            .get(&key)
            .ok_or_else(|| LabelError::MissingQuestionnaire(key.clone()))?;
        let label = spec.label(answer, f64::from(f.provenance.planned_duration))?;
        samples.push(LabeledSample {
            features: f.clone(),
            label,
        });
    }
    Ok(LabeledSet::new(spec, samples))
}

pub fn label_dataset(features: &[FeatureVector], d: &Dataset, spec: LabelSpec) -> Result<LabeledSet, LabelError> {
    let answers: BTreeMap<TrialKey, QuestionnaireAnswer> = d
        .trials
        .iter()
        .filter_map(|t| t.answers.map(|a| (t.key.clone(), a)))
        .collect();
    label_features(features, &answers, spec)
}

/// `labels.csv`: provenance, family, n_classes, class_index, class_name.
pub fn write_labels_csv<W: Write>(set: &LabeledSet, w: W) -> Result<(), LabelError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "participant_id",
        "trial_id",
        "t_start_s",
        "t_w_s",
        "planned_duration_s",
        "n_active",
        "family",
        "n_classes",
        "class_index",
        "class_name",
    ])?;
    let names = set.spec.class_names();
    for s in &set.samples {
        let p: &SliceProvenance = &s.features.provenance;
        wtr.write_record([
            p.participant_id.clone(),
            p.trial_id.clone(),
            p.t_start.to_string(),
            p.t_w.to_string(),
            p.planned_duration.to_string(),
            p.n_active.to_string(),
            set.spec.family.to_string(),
            set.spec.n_classes.to_string(),
            s.label.to_string(),
            names[s.label].to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Re-attach labels from `labels.csv` to the matching feature rows.
pub fn read_labels_csv<R: Read>(r: R, features: &[FeatureVector]) -> Result<LabeledSet, LabelError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut samples = Vec::with_capacity(features.len());
    let mut spec = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |message: String| LabelError::Parse { line, message };
        let f = features
            .get(i)
            .ok_or_else(|| err("more labels than feature rows".into()))?;
        let p = &f.provenance;
        let t_start: f64 = rec[2].parse().map_err(|_| err("bad t_start_s".into()))?;
        if rec[0] != p.participant_id || rec[1] != p.trial_id || t_start != p.t_start {
            return Err(err("row does not match the feature table".into()));
        }
        let family: LabelFamily = rec[6].parse().map_err(err)?;
        let n_classes: u8 = rec[7].parse().map_err(|_| err("bad n_classes".into()))?;
        let row_spec = LabelSpec::new(family, n_classes)?;
        if *spec.get_or_insert(row_spec) != row_spec {
            return Err(err("mixed label specs".into()));
        }
        let label: usize = rec[8].parse().map_err(|_| err("bad class_index".into()))?;
        if label >= n_classes as usize {
            return Err(err(format!("class index {label} >= {n_classes}")));
        }
        samples.push(LabeledSample {
            features: f.clone(),
            label,
        });
    }
    if samples.len() != features.len() {
        return Err(LabelError::Parse {
            line: 0,
            message: format!("{} labels for {} feature rows", samples.len(), features.len()),
        });
    }
    let spec = spec.ok_or_else(|| LabelError::Parse {
        line: 0,
        message: "empty labels table".into(),
    })?;
    Ok(LabeledSet::new(spec, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FEATURE_COUNT;
    use proptest::prelude::*;

    #[test]
    fn relative_error() {
        assert_eq!(relative_estimation_error(90.0, 60.0).unwrap(), 1.5);
        assert_eq!(relative_estimation_error(270.0, 300.0).unwrap(), 0.9);
        assert_eq!(relative_estimation_error(0.0, 180.0).unwrap(), 0.0);
        assert_eq!(
            relative_estimation_error(10.0, 0.0),
            Err(LabelError::NonPositiveActual(0.0))
        );
    }

    #[test]
    fn duration_boundaries() {
        assert_eq!(duration_label(0.9, 2), 0);
        assert_eq!(duration_label(0.75, 3), 1);
        assert_eq!(duration_label(1.2, 3), 2);
        assert_eq!(duration_label(0.9, 3), 1);
    }

    #[test]
    fn ppot_mapping() {
        assert_eq!(ppot_label(3, 2), Ok(1));
        assert_eq!(ppot_label(3, 3), Ok(1));
        assert_eq!(ppot_label(1, 2), Ok(0));
        assert_eq!(ppot_label(6, 2), Err(LabelError::OutOfRangeLikert(6)));
        assert_eq!(ppot_label(0, 3), Err(LabelError::OutOfRangeLikert(0)));
        let spec = LabelSpec::new(LabelFamily::Ppot, 3).unwrap();
        assert_eq!(spec.class_names()[1], "neutral");
        assert!(LabelSpec::new(LabelFamily::Ppot, 4).is_err());
    }

    fn vector(p: &str, t: &str, t_start: f64, duration: u32) -> FeatureVector {
        FeatureVector {
            provenance: SliceProvenance {
                participant_id: p.into(),
                trial_id: t.into(),
                t_start,
                t_w: 10.0,
                planned_duration: duration,
                n_active: 1,
            },
            values: [0.0; FEATURE_COUNT],
        }
    }

    #[test]
    fn slices_inherit_trial_label() {
        let features: Vec<_> = (0..6).map(|i| vector("p", "t", i as f64 * 10.0, 60)).collect();
        let mut answers = BTreeMap::new();
        answers.insert(
            TrialKey::new("p", "t"),
            QuestionnaireAnswer {
                estimated_duration: 30.0,
                ppot_likert: 2,
            },
        );
        let spec = LabelSpec::new(LabelFamily::DurationEstimate, 2).unwrap();
        let set = label_features(&features, &answers, spec).unwrap();
        assert_eq!(set.len(), 6);
        assert!(set.samples.iter().all(|s| s.label == 0));
        assert_eq!(set.distribution.counts, vec![6, 0]);

        let orphan = [vector("q", "t", 0.0, 60)];
        assert_eq!(
            label_features(&orphan, &answers, spec).unwrap_err(),
            LabelError::MissingQuestionnaire(TrialKey::new("q", "t"))
        );
    }

    #[test]
    fn likert_histogram() {
        let mut answers = BTreeMap::new();
        let features: Vec<_> = (1..=5u8)
            .map(|l| {
                answers.insert(
                    TrialKey::new("p", l.to_string()),
                    QuestionnaireAnswer {
                        estimated_duration: 60.0,
                        ppot_likert: l,
                    },
                );
                vector("p", &l.to_string(), 0.0, 60)
            })
            .collect();
        let set = label_features(&features, &answers, LabelSpec::new(LabelFamily::Ppot, 3).unwrap()).unwrap();
        assert_eq!(set.distribution.counts, vec![2, 1, 2]);
    }

    #[test]
    fn majority_share_fifty_nine_percent() {
        // 59 under-estimating trials and 41 over-estimating ones
        let mut answers = BTreeMap::new();
        let features: Vec<_> = (0..100)
            .map(|i| {
                let estimate = if i < 59 { 30.0 } else { 90.0 };
                answers.insert(
                    TrialKey::new("p", i.to_string()),
                    QuestionnaireAnswer {
                        estimated_duration: estimate,
                        ppot_likert: 3,
                    },
                );
                vector("p", &i.to_string(), 0.0, 60)
            })
            .collect();
        let spec = LabelSpec::new(LabelFamily::DurationEstimate, 2).unwrap();
        let set = label_features(&features, &answers, spec).unwrap();
        assert_eq!(set.distribution.majority_share, 0.59);
    }

    #[test]
    fn labels_csv_round_trip() {
        let features: Vec<_> = (0..3).map(|i| vector("p", "t", i as f64 * 10.0, 60)).collect();
        let mut answers = BTreeMap::new();
        answers.insert(
            TrialKey::new("p", "t"),
            QuestionnaireAnswer {
                estimated_duration: 70.0,
                ppot_likert: 5,
            },
        );
        let spec = LabelSpec::new(LabelFamily::DurationEstimate, 3).unwrap();
        let set = label_features(&features, &answers, spec).unwrap();
        let mut buf = Vec::new();
        write_labels_csv(&set, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains(",duration,3,2,over"));
        assert_eq!(read_labels_csv(buf.as_slice(), &features).unwrap(), set);
        assert!(read_labels_csv(buf.as_slice(), &features[..2]).is_err());
    }

    proptest! {
        #[test]
        fn duration_label_monotone(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for n in [2u8, 3] {
                prop_assert!(duration_label(lo, n) <= duration_label(hi, n));
                prop_assert!(duration_label(hi, n) < n as usize);
            }
        }
    }
}
