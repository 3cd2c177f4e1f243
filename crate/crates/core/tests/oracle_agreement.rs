use chronogaze::features::{extract_all, ExtractOptions};
use chronogaze::synth::{generate_dataset, oracle_slice_features, SynthConfig};
use chronogaze::FEATURE_NAMES;

fn is_rate(name: &str) -> bool {
    name.ends_with("_freq") || name.starts_with("ipa_")
}

fn check(t_w: f64) -> usize {
    let cfg = SynthConfig {
        n_participants: 2,
        trials_per_participant: 3,
        baseline_s: 40.0,
        seed: 21,
        ..Default::default()
    };
    let d = generate_dataset(&cfg).unwrap();
    let opts = ExtractOptions::default();
    let features = extract_all(&d, t_w, &opts).unwrap();
    for fv in &features {
        let trial = d.trial(&fv.provenance.trial_key()).unwrap();
        let expected = oracle_slice_features(trial, fv.provenance.t_start, t_w, opts.min_confidence);
        for (k, name) in FEATURE_NAMES.iter().enumerate() {
            let (a, b) = (fv.values[k], expected[k]);
            if is_rate(name) {
                assert_eq!(a, b, "{name} at {:?}", fv.provenance);
            } else {
                let tol = 1e-9 * a.abs().max(b.abs()).max(1e-12);
                assert!((a - b).abs() <= tol, "{name}: {a} vs {b} at {:?}", fv.provenance);
            }
        }
    }
    features.len()
}

#[test]
fn five_second_windows_match_oracle() {
    assert_eq!(check(5.0), 2 * (12 + 36 + 60));
}

#[test]
fn thirty_second_windows_match_oracle() {
    assert_eq!(check(30.0), 2 * (2 + 6 + 10));
}
