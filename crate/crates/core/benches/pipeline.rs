//! Serial versus parallel execution of the data-parallel stages.
//!
//! `cargo bench -p eegauth-core`. Building with `--no-default-features`
//! turns `Parallel` into a serial run, which makes both rows match.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use eegauth_core::autoselect::cross_val_scores;
use eegauth_core::classifiers::{AlgorithmId, HyperParams};
use eegauth_core::dataset::{assemble_user_dataset, by_subject, stratified_kfold, Instance, UserDataset};
use eegauth_core::features;
use eegauth_core::pipeline::{extract_cohort, ExtractConfig};
use eegauth_core::signal::{self, Segment};
use eegauth_core::synth::{self, CohortSpec};
use eegauth_core::ExecMode;

const MODES: [(&str, ExecMode); 2] = [("serial", ExecMode::Serial), ("parallel", ExecMode::Parallel)];

fn small_spec() -> CohortSpec {
    CohortSpec {
        n_subjects: 4,
        duration_s: 20.0,
        ..CohortSpec::default()
    }
}

fn segments(n: usize) -> Vec<Segment> {
    let member = synth::make_member(&small_spec(), 0).unwrap();
    let filtered = signal::bandpass_filter(&member.recording, 0.5, 40.0).unwrap();
    signal::random_segments(&filtered, n, 1).unwrap()
}

fn dataset() -> UserDataset {
    let recs: Vec<_> = synth::make_cohort(&small_spec(), ExecMode::Parallel)
        .unwrap()
        .into_iter()
        .map(|m| m.recording)
        .collect();
    let cfg = ExtractConfig {
        n_segments: 200,
        ..ExtractConfig::default()
    };
    let inst = extract_cohort(&recs, &cfg, ExecMode::Parallel).unwrap();
    let groups = by_subject(&inst);
    let pool: Vec<Instance> = groups.iter().filter(|(s, _)| *s != "SS01").flat_map(|(_, v)| v.clone()).collect();
    assemble_user_dataset("SS01", &groups["SS01"], &pool, 3).unwrap()
}

fn bench_features(c: &mut Criterion) {
    let segs = segments(200);
    let mut g = c.benchmark_group("extract_200_segments");
    for (name, mode) in MODES {
        g.bench_function(name, |b| b.iter(|| features::extract_all(black_box(&segs), mode).unwrap()));
    }
    g.finish();
}

fn bench_cv(c: &mut Criterion) {
    let ds = dataset();
    let split = stratified_kfold(&ds, 10, 5).unwrap();
    let mut g = c.benchmark_group("cv_10_fold");
    g.sample_size(10);
    for algorithm in [AlgorithmId::Knn, AlgorithmId::RandomForest] {
        let params = HyperParams::default_for(algorithm);
        for (name, mode) in MODES {
            g.bench_with_input(BenchmarkId::new(format!("{algorithm:?}"), name), &params, |b, p| {
                b.iter(|| cross_val_scores(&ds, p, &split, 9, mode).unwrap())
            });
        }
    }
    g.finish();
}

fn bench_synth(c: &mut Criterion) {
    let spec = small_spec();
    let mut g = c.benchmark_group("synth_4_subjects");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(name, |b| b.iter(|| synth::make_cohort(black_box(&spec), mode).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, bench_features, bench_cv, bench_synth);
criterion_main!(benches);
