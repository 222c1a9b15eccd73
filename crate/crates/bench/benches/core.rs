use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hardsphere::bounds::bounds_report;
use hardsphere::construction::run_layer;
use hardsphere::percolation2d::estimate_theta;
use hardsphere::{Point, Region, RegionRegistry, StarLattice};
use hardsphere_bench::d45_params;

fn bounds(c: &mut Criterion) {
    c.bench_function("bounds_scan_11_200", |b| {
        b.iter(|| (11..=200).map(|d| bounds_report(black_box(d)).unwrap().ratio).sum::<f64>())
    });
}

fn lattice(c: &mut Criterion) {
    let mut g = c.benchmark_group("lattice_build");
    for r in [12.0, 30.0] {
        g.bench_with_input(BenchmarkId::from_parameter(r), &r, |b, &r| b.iter(|| StarLattice::build(r).unwrap()));
    }
    g.finish();
}

fn registry(c: &mut Criterion) {
    c.bench_function("registry_overlapping_reveals_d2", |b| {
        b.iter(|| {
            let mut reg = RegionRegistry::new(50.0, 2, 7).unwrap();
            for i in 0..20 {
                let x = 0.1 * i as f64;
                reg.reveal(&Region::ball(Point(vec![x, 0.0]), 0.5)).unwrap();
            }
            reg.materialized()
        })
    });
}

fn construction(c: &mut Criterion) {
    let p = d45_params(200);
    let lat = StarLattice::build(20.0).unwrap();
    let layer = vec![0; 43];
    c.bench_function("run_layer_d45_200_steps", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            run_layer(&p, &lat, seed, &layer).unwrap().state.steps
        })
    });
}

fn percolation(c: &mut Criterion) {
    c.bench_function("theta_r30_100_trials", |b| b.iter(|| estimate_theta(0.8, 30.0, 100, 1).unwrap().theta_hat));
}

criterion_group!(benches, bounds, lattice, registry, construction, percolation);
criterion_main!(benches);
