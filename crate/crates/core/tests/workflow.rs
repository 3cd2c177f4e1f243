use chronogaze::automl::{finalize, search_data, write_ledger_csv, Phase, SearchConfig};
use chronogaze::data::{load_dataset, ScreeningPolicy};
use chronogaze::features::{extract_all, read_features_csv, write_features_csv, ExtractOptions};
use chronogaze::labels::{label_dataset, read_labels_csv, write_labels_csv};
use chronogaze::protocols::{holdout_eval, ReportBook};
use chronogaze::synth::{generate, generate_dataset, SynthConfig};
use chronogaze::{FittedPipeline, LabelFamily, LabelSpec};

fn planted() -> SynthConfig {
    SynthConfig {
        n_participants: 3,
        trials_per_participant: 4,
        durations: vec![60],
        baseline_s: 30.0,
        seed: 5,
        ..Default::default()
    }
}

fn search_config(seed: u64) -> SearchConfig {
    SearchConfig {
        max_hpo_steps: 4,
        early_stop_patience: 4,
        n_eval_splits: 3,
        seed,
        ..Default::default()
    }
}

#[test]
fn files_round_trip_through_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = planted();
    let paths = generate(&cfg, dir.path()).unwrap();
    let loaded = load_dataset(&paths, &ScreeningPolicy::default()).unwrap();
    let direct = generate_dataset(&cfg).unwrap();
    assert_eq!(loaded.trials.len(), 12);

    let opts = ExtractOptions::default();
    let features = extract_all(&loaded, 10.0, &opts).unwrap();
    assert_eq!(features, extract_all(&direct, 10.0, &opts).unwrap());
    assert_eq!(features.len(), 12 * 6);

    let mut buf = Vec::new();
    write_features_csv(&features, &mut buf).unwrap();
    let reread = read_features_csv(buf.as_slice()).unwrap();
    assert_eq!(reread, features);

    let spec = LabelSpec::new(LabelFamily::DurationEstimate, 2).unwrap();
    let set = label_dataset(&features, &loaded, spec).unwrap();
    let mut lbuf = Vec::new();
    write_labels_csv(&set, &mut lbuf).unwrap();
    let relabeled = read_labels_csv(lbuf.as_slice(), &features).unwrap();
    assert_eq!(relabeled.labels(), set.labels());

    let (x, y) = set.design();
    let outcome = search_data(&x, &y, &search_config(1)).unwrap();
    assert_eq!(outcome.ledger.phase_count(Phase::Enumerate), 12);
    assert!(outcome.ledger.phase_count(Phase::RandomSearch) <= 4);
    let mut ledger_csv = Vec::new();
    write_ledger_csv(&outcome.ledger, &mut ledger_csv).unwrap();
    assert_eq!(
        String::from_utf8(ledger_csv).unwrap().lines().count(),
        1 + outcome.ledger.records.len()
    );

    let fitted = finalize(&outcome.best_spec, &x, &y, 1).unwrap();
    let mut pbuf = Vec::new();
    fitted.write(&mut pbuf).unwrap();
    let restored = FittedPipeline::read(pbuf.as_slice()).unwrap();
    assert_eq!(restored.predict(&x).unwrap(), fitted.predict(&x).unwrap());
}

/// Signal-free data, so accuracies vary with the seed.
fn report_json(seed: u64) -> String {
    let cfg = planted().without_signal();
    let d = generate_dataset(&cfg).unwrap();
    let features = extract_all(&d, 10.0, &ExtractOptions::default()).unwrap();
    let set = label_dataset(&features, &d, LabelSpec::new(LabelFamily::DurationEstimate, 2).unwrap()).unwrap();
    let analysis = set.filter(|s| s.features.provenance.participant_id != "p02");
    let test = set.filter(|s| s.features.provenance.participant_id == "p02");
    let (x, y) = analysis.design();
    let outcome = search_data(&x, &y, &search_config(seed)).unwrap();
    let report = holdout_eval(&outcome.best_spec, &analysis, &test, 5, seed, 10.0).unwrap();
    let book = ReportBook {
        evaluations: vec![report],
        finetune: Vec::new(),
    };
    let mut out = Vec::new();
    book.write_json(&mut out).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| report_json(3));
    let b = four.install(|| report_json(3));
    assert_eq!(a, b);
    assert_ne!(a, report_json(4));
}

#[test]
fn planted_signal_is_learned_across_participants() {
    let cfg = SynthConfig {
        n_participants: 4,
        ..planted()
    };
    let d = generate_dataset(&cfg).unwrap();
    let features = extract_all(&d, 10.0, &ExtractOptions::default()).unwrap();
    let set = label_dataset(&features, &d, LabelSpec::new(LabelFamily::DurationEstimate, 2).unwrap()).unwrap();
    let analysis = set.filter(|s| s.features.provenance.participant_id != "p03");
    let test = set.filter(|s| s.features.provenance.participant_id == "p03");
    let spec = chronogaze::PipelineSpec::default_for(
        chronogaze::learn::PreprocessorKind::None,
        chronogaze::learn::ClassifierKind::RandomForest,
    );
    let report = holdout_eval(&spec, &analysis, &test, 3, 0, 10.0).unwrap();
    assert!(report.accuracy_mean.unwrap() >= 0.95, "{:?}", report.accuracies);
}
