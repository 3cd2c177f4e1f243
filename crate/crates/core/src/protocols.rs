//! Holdout, per-condition and fine-tuning evaluations, plus report output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::labels::{ClassDistribution, LabelFamily, LabelSpec, LabeledSet};
use crate::learn::{
    accuracy, stratified_partition, stratified_shuffle_split, FittedPipeline, LearnError, PipelineSpec,
};
use crate::{par, seed};

/// Share of the analysis data used for training in each repetition.
pub const TRAIN_FRACTION: f64 = 0.8;
/// Seconds of each trial the target user contributes for fine-tuning.
pub const SETUP_WINDOW_S: f64 = 30.0;

const EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("analysis and test sets share slice {0}")]
    Overlap(String),
    #[error("empty {0} set")]
    Empty(&'static str),
    #[error("participant {0} not in the data")]
    UnknownParticipant(String),
    #[error("no participants other than {0}")]
    NoOtherParticipants(String),
    #[error("participant {0} has no slices after the setup window")]
    NoEvalSlices(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Holdout,
    NActive,
    PlannedDuration,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Holdout => "holdout",
            Protocol::NActive => "n_active",
            Protocol::PlannedDuration => "planned_duration",
        }
    }
}

/// Trial attribute used by [`condition_split_eval`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKey {
    NActive,
    PlannedDuration,
}

impl ConditionKey {
    pub fn protocol(self) -> Protocol {
        match self {
            ConditionKey::NActive => Protocol::NActive,
            ConditionKey::PlannedDuration => Protocol::PlannedDuration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub family: LabelFamily,
    pub n_classes: u8,
    pub t_w: f64,
    pub protocol: Protocol,
    /// Condition value for per-condition reports.
    pub subset: Option<u32>,
}

impl Setting {
    pub fn key(&self) -> String {
        let mut s = format!("{}{}/tw={}", self.family, self.n_classes, self.t_w);
        if let Some(v) = self.subset {
            let _ = write!(s, "/{}={v}", self.protocol.as_str());
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub setting: Setting,
    pub spec: PipelineSpec,
    pub n_samples: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub repetitions: usize,
    pub accuracies: Vec<f64>,
    /// `None` when the subset was too small to evaluate.
    pub accuracy_mean: Option<f64>,
    /// Population standard deviation over the repetitions.
    pub accuracy_std: Option<f64>,
    /// Majority-class share of the scored samples.
    pub majority_class_share: f64,
    pub class_counts: Vec<usize>,
    pub flags: Vec<String>,
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

fn provenance_key(set: &LabeledSet, i: usize) -> (String, String, u64) {
    let p = &set.samples[i].features.provenance;
    (p.participant_id.clone(), p.trial_id.clone(), p.t_start.to_bits())
}

/// Repeatedly trains on a stratified 80% of `analysis` and scores every
/// sample of `test`. Repetition `r` uses seed `derive(seed, [r])`.
pub fn holdout_eval(
    spec: &PipelineSpec,
    analysis: &LabeledSet,
    test: &LabeledSet,
    repetitions: usize,
    seed: u64,
    t_w: f64,
) -> Result<EvaluationReport, ProtocolError> {
    if repetitions == 0 {
        return Err(ProtocolError::NoRepetitions);
    }
    if analysis.is_empty() {
        return Err(ProtocolError::Empty("analysis"));
    }
    if test.is_empty() {
        return Err(ProtocolError::Empty("test"));
    }
    let seen: BTreeSet<_> = (0..analysis.len()).map(|i| provenance_key(analysis, i)).collect();
    if let Some(i) = (0..test.len()).find(|&i| seen.contains(&provenance_key(test, i))) {
        let (p, t, s) = provenance_key(test, i);
        return Err(ProtocolError::Overlap(format!("{p}/{t}@{}", f64::from_bits(s))));
    }
    let (ax, ay) = analysis.design();
    let (tx, ty) = test.design();
    let test_fraction = 1.0 - TRAIN_FRACTION;
    // Surface stratification problems once instead of per repetition.
    let (train0, _) = stratified_shuffle_split(&ay, test_fraction, seed::derive(seed, &[0]))?;
    let accuracies = par::map_range(repetitions, |r| {
        let (train, _) = stratified_partition(&ay, test_fraction, seed::derive(seed, &[r as u64]));
        let y: Vec<usize> = train.iter().map(|&i| ay[i]).collect();
        let fitted = FittedPipeline::fit(spec, &ax.select_rows(&train), &y, seed::derive(seed, &[r as u64, 1]))?;
        Ok(accuracy(&fitted.predict(&tx)?, &ty))
    })
    .into_iter()
    .collect::<Result<Vec<f64>, LearnError>>()?;
    let dist = ClassDistribution::from_labels(&ty, test.n_classes());
    let mut flags = Vec::new();
    if repetitions == 1 {
        flags.push("single_repetition".to_string());
    }
    let (mean, std) = mean_std(&accuracies);
    Ok(EvaluationReport {
        setting: Setting {
            family: analysis.spec.family,
            n_classes: analysis.spec.n_classes,
            t_w,
            protocol: Protocol::Holdout,
            subset: None,
        },
        spec: *spec,
        n_samples: analysis.len() + test.len(),
        n_train: train0.len(),
        n_test: test.len(),
        repetitions,
        accuracies,
        accuracy_mean: mean,
        accuracy_std: std,
        majority_class_share: dist.majority_share,
        class_counts: dist.counts,
        flags,
    })
}

fn condition_value(set: &LabeledSet, i: usize, key: ConditionKey) -> u32 {
    let p = &set.samples[i].features.provenance;
    match key {
        ConditionKey::NActive => p.n_active,
        ConditionKey::PlannedDuration => p.planned_duration,
    }
}

/// One report per value of `key`: each subset gets its own stratified 80/20
/// shuffle split per repetition. Subsets that cannot be split are reported
/// with flags and no accuracy.
pub fn condition_split_eval(
    spec: &PipelineSpec,
    set: &LabeledSet,
    key: ConditionKey,
    repetitions: usize,
    seed: u64,
    t_w: f64,
) -> Result<Vec<EvaluationReport>, ProtocolError> {
    if repetitions == 0 {
        return Err(ProtocolError::NoRepetitions);
    }
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for i in 0..set.len() {
        groups.entry(condition_value(set, i, key)).or_default().push(i);
    }
    let test_fraction = 1.0 - TRAIN_FRACTION;
    let mut reports = Vec::with_capacity(groups.len());
    for (value, idx) in groups {
        let (x, y) = set.design_at(&idx);
        let dist = ClassDistribution::from_labels(&y, set.n_classes());
        let subset_seed = seed::derive(seed, &[u64::from(value)]);
        let mut flags = Vec::new();
        if dist.counts.contains(&1) {
            flags.push("singleton_class".to_string());
        }
        let (train0, test0) = stratified_partition(&y, test_fraction, seed::derive(subset_seed, &[0]));
        let mut accuracies = Vec::new();
        if train0.is_empty() || test0.is_empty() {
            flags.push("subset_too_small".to_string());
        } else {
            let results = par::map_range(repetitions, |r| {
                let (train, test) = stratified_partition(&y, test_fraction, seed::derive(subset_seed, &[r as u64]));
                let ty: Vec<usize> = train.iter().map(|&i| y[i]).collect();
                let vy: Vec<usize> = test.iter().map(|&i| y[i]).collect();
                let fitted = FittedPipeline::fit(
                    spec,
                    &x.select_rows(&train),
                    &ty,
                    seed::derive(subset_seed, &[r as u64, 1]),
                )?;
                Ok(accuracy(&fitted.predict(&x.select_rows(&test))?, &vy))
            });
            match results.into_iter().collect::<Result<Vec<f64>, LearnError>>() {
                Ok(a) => accuracies = a,
                Err(e) => {
                    log::warn!("{} = {value}: {e}", key.protocol().as_str());
                    flags.push(format!("fit_error: {e}"));
                }
            }
        }
        if repetitions == 1 {
            flags.push("single_repetition".to_string());
        }
        let (mean, std) = mean_std(&accuracies);
        reports.push(EvaluationReport {
            setting: Setting {
                family: set.spec.family,
                n_classes: set.spec.n_classes,
                t_w,
                protocol: key.protocol(),
                subset: Some(value),
            },
            spec: *spec,
            n_samples: idx.len(),
            n_train: train0.len(),
            n_test: test0.len(),
            repetitions,
            accuracies,
            accuracy_mean: mean,
            accuracy_std: std,
            majority_class_share: dist.majority_share,
            class_counts: dist.counts,
            flags,
        });
    }
    Ok(reports)
}

/// Splits one participant's slices into setup and evaluation parts. With
/// `t_w <= setup_window` the setup part holds slices ending by the setup
/// window; with longer windows it holds the first slice of each trial. The
/// evaluation part is everything else, so the two parts cover the
/// participant's slices exactly.
pub fn setup_eval_indices(set: &LabeledSet, participant: &str, setup_window: f64) -> (Vec<usize>, Vec<usize>) {
    let mine: Vec<usize> = (0..set.len())
        .filter(|&i| set.samples[i].features.provenance.participant_id == participant)
        .collect();
    let mut first: BTreeMap<&str, f64> = BTreeMap::new();
    for &i in &mine {
        let p = &set.samples[i].features.provenance;
        let e = first.entry(p.trial_id.as_str()).or_insert(p.t_start);
        *e = e.min(p.t_start);
    }
    mine.into_iter().partition(|&i| {
        let p = &set.samples[i].features.provenance;
        if p.t_w <= setup_window + EPS {
            p.t_start + p.t_w <= setup_window + EPS
        } else {
            p.t_start == first[p.trial_id.as_str()]
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneEntry {
    pub t_w: f64,
    pub spec: PipelineSpec,
    pub n_other: usize,
    pub n_setup: usize,
    pub n_eval: usize,
    pub repetitions: usize,
    pub acc_with: f64,
    pub acc_without: f64,
    /// `100 * (acc_with - acc_without)`.
    pub delta_pp: f64,
    pub per_rep_with: Vec<f64>,
    pub per_rep_without: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub participant: String,
    pub labels: LabelSpec,
    /// One entry per window size, each with that size's pipeline.
    pub entries: Vec<FinetuneEntry>,
}

/// Trains with the target's setup slices added to all other participants'
/// slices ("with") and without them ("without"), scoring both on the
/// target's remaining slices. `set` holds slices of a single window size.
pub fn finetune_eval(
    spec: &PipelineSpec,
    set: &LabeledSet,
    target: &str,
    setup_window: f64,
    repetitions: usize,
    seed: u64,
) -> Result<FinetuneEntry, ProtocolError> {
    if repetitions == 0 {
        return Err(ProtocolError::NoRepetitions);
    }
    let others: Vec<usize> = (0..set.len())
        .filter(|&i| set.samples[i].features.provenance.participant_id != target)
        .collect();
    let (setup, eval) = setup_eval_indices(set, target, setup_window);
    if setup.is_empty() && eval.is_empty() {
        return Err(ProtocolError::UnknownParticipant(target.to_string()));
    }
    if others.is_empty() {
        return Err(ProtocolError::NoOtherParticipants(target.to_string()));
    }
    if eval.is_empty() {
        return Err(ProtocolError::NoEvalSlices(target.to_string()));
    }
    let t_w = set.samples[eval[0]].features.provenance.t_w;
    let with: Vec<usize> = others.iter().chain(&setup).copied().collect();
    let (x_with, y_with) = set.design_at(&with);
    let (x_without, y_without) = set.design_at(&others);
    let (x_eval, y_eval) = set.design_at(&eval);
    let runs = par::map_range(repetitions, |r| {
        let s = seed::derive(seed, &[r as u64]);
        let a = FittedPipeline::fit(spec, &x_with, &y_with, s)?;
        let b = FittedPipeline::fit(spec, &x_without, &y_without, s)?;
        Ok((
            accuracy(&a.predict(&x_eval)?, &y_eval),
            accuracy(&b.predict(&x_eval)?, &y_eval),
        ))
    })
    .into_iter()
    .collect::<Result<Vec<(f64, f64)>, LearnError>>()?;
    let per_rep_with: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let per_rep_without: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let acc_with = per_rep_with.iter().sum::<f64>() / repetitions as f64;
    let acc_without = per_rep_without.iter().sum::<f64>() / repetitions as f64;
    Ok(FinetuneEntry {
        t_w,
        spec: *spec,
        n_other: others.len(),
        n_setup: setup.len(),
        n_eval: eval.len(),
        repetitions,
        acc_with,
        acc_without,
        delta_pp: 100.0 * (acc_with - acc_without),
        per_rep_with,
        per_rep_without,
    })
}

/// Every report of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBook {
    pub evaluations: Vec<EvaluationReport>,
    pub finetune: Vec<FinetuneReport>,
}

fn report_metrics(r: &EvaluationReport) -> Value {
    json!({
        "spec": r.spec.to_string(),
        "n_samples": r.n_samples,
        "n_train": r.n_train,
        "n_test": r.n_test,
        "repetitions": r.repetitions,
        "accuracy_mean": r.accuracy_mean,
        "accuracy_std": r.accuracy_std,
        "majority_class_share": r.majority_class_share,
        "class_counts": r.class_counts,
        "accuracies": r.accuracies,
        "flags": r.flags,
    })
}

impl ReportBook {
    /// Nested as protocol, then setting key, then metrics.
    pub fn to_json(&self) -> Value {
        let mut root = serde_json::Map::new();
        for r in &self.evaluations {
            let proto = root
                .entry(r.setting.protocol.as_str())
                .or_insert_with(|| Value::Object(Default::default()));
            proto
                .as_object_mut()
                .expect("protocol entry is an object")
                .insert(r.setting.key(), report_metrics(r));
        }
        if !self.finetune.is_empty() {
            let mut ft = serde_json::Map::new();
            for f in &self.finetune {
                let mut by_tw = serde_json::Map::new();
                for e in &f.entries {
                    let mut v = serde_json::to_value(e).expect("entry serializes");
                    v["spec"] = Value::String(e.spec.to_string());
                    by_tw.insert(format!("tw={}", e.t_w), v);
                }
                ft.entry(f.labels.tag())
                    .or_insert_with(|| Value::Object(Default::default()))
                    .as_object_mut()
                    .expect("label entry is an object")
                    .insert(f.participant.clone(), Value::Object(by_tw));
            }
            root.insert("finetune".into(), Value::Object(ft));
        }
        Value::Object(root)
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<(), ProtocolError> {
        let s = serde_json::to_string_pretty(&self.to_json()).expect("report serializes");
        w.write_all(s.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ProtocolError> {
        let mut wtr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| ProtocolError::Io(std::io::Error::other(e));
        wtr.write_record([
            "protocol",
            "family",
            "n_classes",
            "t_w_s",
            "subset",
            "participant",
            "n_samples",
            "n_train",
            "n_test",
            "repetitions",
            "accuracy_mean",
            "accuracy_std",
            "majority_class_share",
            "delta_pp",
            "flags",
        ])
        .map_err(io)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for r in &self.evaluations {
            let s = &r.setting;
            wtr.write_record([
                s.protocol.as_str().to_string(),
                s.family.to_string(),
                s.n_classes.to_string(),
                s.t_w.to_string(),
                s.subset.map_or(String::new(), |v| v.to_string()),
                String::new(),
                r.n_samples.to_string(),
                r.n_train.to_string(),
                r.n_test.to_string(),
                r.repetitions.to_string(),
                opt(r.accuracy_mean),
                opt(r.accuracy_std),
                r.majority_class_share.to_string(),
                String::new(),
                r.flags.join(";"),
            ])
            .map_err(io)?;
        }
        for f in &self.finetune {
            for e in &f.entries {
                wtr.write_record([
                    "finetune".to_string(),
                    f.labels.family.to_string(),
                    f.labels.n_classes.to_string(),
                    e.t_w.to_string(),
                    String::new(),
                    f.participant.clone(),
                    (e.n_other + e.n_setup + e.n_eval).to_string(),
                    (e.n_other + e.n_setup).to_string(),
                    e.n_eval.to_string(),
                    e.repetitions.to_string(),
                    e.acc_with.to_string(),
                    String::new(),
                    String::new(),
                    e.delta_pp.to_string(),
                    String::new(),
                ])
                .map_err(io)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Accuracy per condition value with the majority-class share as a dashed
/// reference line, as a standalone SVG document.
pub fn condition_plot_svg(title: &str, reports: &[EvaluationReport]) -> String {
    let (w, h) = (480.0, 320.0);
    let (left, right, top, bottom) = (56.0, 16.0, 36.0, 44.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let n = reports.len().max(1);
    let px = |i: usize| {
        if n == 1 {
            left + pw / 2.0
        } else {
            left + pw * i as f64 / (n - 1) as f64
        }
    };
    let py = |v: f64| top + ph * (1.0 - v.clamp(0.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let y = py(v);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r##"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.2}" stroke="#333"/>"##,
        top + ph
    );
    let mut acc_pts = Vec::new();
    let mut maj_pts = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        let x = px(i);
        let label = r.setting.subset.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            top + ph + 16.0
        );
        if let Some(a) = r.accuracy_mean {
            acc_pts.push(format!("{x:.2},{:.2}", py(a)));
            let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{:.2}" r="3" fill="#1f77b4"/>"##, py(a));
        }
        maj_pts.push(format!("{x:.2},{:.2}", py(r.majority_class_share)));
    }
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        acc_pts.join(" ")
    );
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#888" stroke-dasharray="5,4"/>"##,
        maj_pts.join(" ")
    );
    let _ = writeln!(
        s,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="#1f77b4">accuracy</text><text x="{:.2}" y="{:.2}" text-anchor="end" fill="#888">majority class</text>"##,
        left + pw,
        top + 12.0,
        left + pw,
        top + 26.0
    );
    let axis = reports.first().map_or("condition", |r| r.setting.protocol.as_str());
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{axis}</text>"#,
        left + pw / 2.0,
        h - 8.0
    );
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureVector, SliceProvenance, FEATURE_COUNT};
    use crate::labels::{LabelSpec, LabeledSample};
    use crate::learn::{ClassifierKind, PreprocessorKind};

    fn sample(p: &str, t: &str, t_start: f64, t_w: f64, n_active: u32, v: f64, label: usize) -> LabeledSample {
        let mut values = [0.0; FEATURE_COUNT];
        values[10] = v;
        values[11] = (t_start * 0.37).sin();
        LabeledSample {
            features: FeatureVector {
                provenance: SliceProvenance {
                    participant_id: p.into(),
                    trial_id: t.into(),
                    t_start,
                    t_w,
                    planned_duration: 60,
                    n_active,
                },
                values,
            },
            label,
        }
    }

    fn spec2() -> LabelSpec {
        LabelSpec::new(LabelFamily::DurationEstimate, 2).unwrap()
    }

    fn planted(p: &str, n_trials: usize, t_w: f64) -> Vec<LabeledSample> {
        let per_trial = (60.0 / t_w) as usize;
        let mut out = Vec::new();
        for t in 0..n_trials {
            let c = t % 2;
            for k in 0..per_trial {
                let noise = ((t * 31 + k * 7) as f64 * 0.61).sin() * 0.5;
                out.push(sample(
                    p,
                    &t.to_string(),
                    k as f64 * t_w,
                    t_w,
                    [1, 3][t / 2 % 2],
                    c as f64 * 4.0 + noise,
                    c,
                ));
            }
        }
        out
    }

    #[test]
    fn constant_test_labels() {
        let analysis = LabeledSet::new(spec2(), planted("a", 4, 10.0));
        let test = LabeledSet::new(
            spec2(),
            (0..5).map(|k| sample("b", "0", k as f64, 10.0, 1, 0.1, 0)).collect(),
        );
        let spec = PipelineSpec::default_for(PreprocessorKind::None, ClassifierKind::Knn);
        let r = holdout_eval(&spec, &analysis, &test, 3, 1, 10.0).unwrap();
        assert_eq!(r.accuracies, vec![1.0; 3]);
        assert_eq!(r.accuracy_std, Some(0.0));
        assert_eq!(r.majority_class_share, 1.0);
        let one = holdout_eval(&spec, &analysis, &test, 1, 1, 10.0).unwrap();
        assert_eq!(one.accuracy_std, Some(0.0));
        assert_eq!(one.flags, vec!["single_repetition"]);
    }

    #[test]
    fn overlap_is_rejected() {
        let set = LabeledSet::new(spec2(), planted("a", 4, 10.0));
        let spec = PipelineSpec::dummy();
        assert!(matches!(
            holdout_eval(&spec, &set, &set.subset(&[0]), 2, 0, 10.0),
            Err(ProtocolError::Overlap(_))
        ));
    }

    #[test]
    fn condition_reports_per_value() {
        let set = LabeledSet::new(spec2(), planted("a", 8, 5.0));
        let spec = PipelineSpec::default_for(PreprocessorKind::None, ClassifierKind::RandomForest);
        let reports = condition_split_eval(&spec, &set, ConditionKey::NActive, 3, 2, 5.0).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].setting.subset, Some(1));
        for r in &reports {
            assert_eq!(r.n_samples, 48);
            assert!(r.accuracy_mean.unwrap() >= 0.95);
            assert_eq!(r.majority_class_share, 0.5);
        }
    }

    #[test]
    fn tiny_subset_is_flagged() {
        let set = LabeledSet::new(spec2(), vec![sample("a", "0", 0.0, 60.0, 1, 0.0, 0)]);
        let r = condition_split_eval(&PipelineSpec::dummy(), &set, ConditionKey::PlannedDuration, 2, 0, 60.0).unwrap();
        assert_eq!(r[0].accuracy_mean, None);
        assert!(r[0].flags.iter().any(|f| f == "subset_too_small"));
    }

    #[test]
    fn dummy_scores_majority_share() {
        let samples: Vec<_> = (0..100)
            .map(|i| sample("a", &i.to_string(), 0.0, 10.0, 1, i as f64, usize::from(i % 10 == 0)))
            .collect();
        let set = LabeledSet::new(spec2(), samples);
        let r = condition_split_eval(&PipelineSpec::dummy(), &set, ConditionKey::NActive, 5, 0, 10.0).unwrap();
        assert!((r[0].accuracy_mean.unwrap() - r[0].majority_class_share).abs() < 0.05);
    }

    #[test]
    fn setup_and_eval_cover_participant() {
        for (t_w, per_trial, setup_per_trial) in
            [(30.0, 10, 1), (10.0, 30, 3), (20.0, 15, 1), (45.0, 6, 1), (60.0, 5, 1)]
        {
            let samples: Vec<_> = (0..2)
                .flat_map(|t| (0..per_trial).map(move |k| sample("u", &t.to_string(), k as f64 * t_w, t_w, 1, 0.0, 0)))
                .collect();
            let set = LabeledSet::new(spec2(), samples);
            let (setup, eval) = setup_eval_indices(&set, "u", SETUP_WINDOW_S);
            assert_eq!(setup.len(), 2 * setup_per_trial, "t_w {t_w}");
            assert_eq!(setup.len() + eval.len(), set.len());
            assert!(setup.iter().all(|i| !eval.contains(i)));
        }
    }

    #[test]
    fn finetune_helps_shifted_user() {
        // the target's classes sit 2 units above everyone else's
        let mut samples = planted("a", 6, 10.0);
        samples.extend(planted("b", 6, 10.0));
        for mut s in planted("t", 6, 10.0) {
            s.features.values[10] += 2.0;
            s.features.values[12] = 1.0;
            samples.push(s);
        }
        let set = LabeledSet::new(spec2(), samples);
        let spec = PipelineSpec::default_for(PreprocessorKind::None, ClassifierKind::RandomForest);
        let e = finetune_eval(&spec, &set, "t", SETUP_WINDOW_S, 2, 0).unwrap();
        assert_eq!((e.n_setup, e.n_eval), (18, 18));
        assert!(e.delta_pp > 0.0, "{e:?}");
        assert!(matches!(
            finetune_eval(&spec, &set, "nobody", SETUP_WINDOW_S, 1, 0),
            Err(ProtocolError::UnknownParticipant(_))
        ));
    }

    #[test]
    fn report_outputs_are_stable() {
        let set = LabeledSet::new(spec2(), planted("a", 8, 10.0));
        let spec = PipelineSpec::dummy();
        let book = ReportBook {
            evaluations: condition_split_eval(&spec, &set, ConditionKey::NActive, 2, 0, 10.0).unwrap(),
            finetune: Vec::new(),
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        book.write_json(&mut a).unwrap();
        book.write_json(&mut b).unwrap();
        assert_eq!(a, b);
        let v: Value = serde_json::from_slice(&a).unwrap();
        assert!(v["n_active"]["duration2/tw=10/n_active=3"]["accuracy_mean"].is_number());
        let mut c = Vec::new();
        book.write_csv(&mut c).unwrap();
        assert_eq!(String::from_utf8(c).unwrap().lines().count(), 3);
        let svg = condition_plot_svg("a < b", &book.evaluations);
        assert!(svg.starts_with("<svg") && svg.contains("a &lt; b") && svg.ends_with("</svg>\n"));
    }
}
