//! Hot-path benchmarks: the depthwise convolution update at several filter
//! sizes, point binning, and the map window round trip.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use convbki::{bayesian_update, voxelize, GlobalMap, Pose};
use convbki_bench::{filter, global_points, scene, update_inputs, window_spec, PRIOR_ALPHA};

fn bench_bayesian_update(c: &mut Criterion) {
    let spec = window_spec();
    let (prior, input) = update_inputs(&spec);
    let mut group = c.benchmark_group("bayesian_update");
    for filter_size in [3usize, 5, 7] {
        let kernel_filter = filter(filter_size);
        group.bench_with_input(
            BenchmarkId::from_parameter(filter_size),
            &filter_size,
            |b, _| b.iter(|| bayesian_update(&prior, &input, &kernel_filter).unwrap()),
        );
    }
    group.finish();
}

fn bench_voxelize(c: &mut Criterion) {
    let spec = window_spec();
    let anchor = spec.base_anchor();
    let points = global_points(&scene(), 0);
    c.bench_function("voxelize_4000_points", |b| {
        b.iter(|| voxelize(&points, &spec, anchor).unwrap())
    });
}

fn bench_window_round_trip(c: &mut Criterion) {
    let spec = window_spec();
    let (prior, input) = update_inputs(&spec);
    let kernel_filter = filter(5);
    let updated = bayesian_update(&prior, &input, &kernel_filter).unwrap();
    let mut map = GlobalMap::new(spec.num_classes, PRIOR_ALPHA, convbki::map::GC_DISABLED)
        .expect("bench map args are valid");
    map.write_back(&updated, 0).unwrap();
    let pose = Pose::identity();
    c.bench_function("extract_and_write_back", |b| {
        b.iter(|| {
            let local = map.extract_local(&pose, &spec);
            map.write_back(&local, 1).unwrap()
        })
    });
}

criterion_group!(
    benches,
    bench_bayesian_update,
    bench_voxelize,
    bench_window_round_trip
);
criterion_main!(benches);
