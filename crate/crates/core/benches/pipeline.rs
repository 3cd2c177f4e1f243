use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use chronogaze::features::{extract_all, ExtractOptions};
use chronogaze::labels::label_dataset;
use chronogaze::learn::{ClassifierKind, PreprocessorKind};
use chronogaze::synth::{generate_dataset, SynthConfig};
use chronogaze::{FittedPipeline, LabelFamily, LabelSpec, PipelineSpec};

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let threads = rayon::current_num_threads();
    let mut out = vec![(
        "sequential".to_string(),
        rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
    )];
    if chronogaze::par::is_parallel() {
        out.push((
            format!("rayon-{threads}"),
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap(),
        ));
    }
    out
}

fn bench(c: &mut Criterion) {
    let cfg = SynthConfig {
        n_participants: 4,
        trials_per_participant: 6,
        ..Default::default()
    };
    let data = generate_dataset(&cfg).unwrap();
    let opts = ExtractOptions::default();
    let features = extract_all(&data, 10.0, &opts).unwrap();
    let set = label_dataset(
        &features,
        &data,
        LabelSpec::new(LabelFamily::DurationEstimate, 2).unwrap(),
    )
    .unwrap();
    let (x, y) = set.design();
    let forest = PipelineSpec::default_for(PreprocessorKind::None, ClassifierKind::RandomForest);

    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_with_input(BenchmarkId::new("extract_tw10", &name), &pool, |b, pool| {
            b.iter(|| pool.install(|| extract_all(&data, 10.0, &opts).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("fit_forest", &name), &pool, |b, pool| {
            b.iter(|| pool.install(|| FittedPipeline::fit(&forest, &x, &y, 7).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
