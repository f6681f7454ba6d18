//! Kernel benchmarks. The heavy grid kernels fan out through `exec`, so
//! building with and without the `parallel` feature measures the rayon
//! path against the sequential fallback:
//!
//! ```text
//! cargo bench -p anklekit-core                         # parallel (default)
//! cargo bench -p anklekit-core --no-default-features   # sequential
//! ```
//!
//! Bench IDs carry the mode, so criterion keeps the two result sets apart.
//! The ODE stepper and marching cubes are inherently sequential and are
//! included as contrast: the feature should not move them.

use anklekit_core::gait::{cylinder_load_from_ankle, synthetic_profile};
use anklekit_core::hydraulics::{simulate_cycle, FluidProps, HydraulicConfig};
use anklekit_core::lattice::{demo_block, marching_cubes, sample_grid, volume_fraction};
use anklekit_core::routing::{preset_perpendicular, pressure_loss_estimate, route_channel};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

#[cfg(feature = "parallel")]
const MODE: &str = "parallel";
#[cfg(not(feature = "parallel"))]
const MODE: &str = "sequential";

fn bench_sample_grid(c: &mut Criterion) {
    let demo = demo_block();
    let solid = demo.solid(6.0e-4).unwrap();
    let mut group = c.benchmark_group("sample_grid_48x40x20");
    group.sample_size(20);
    group.bench_function(MODE, |b| {
        b.iter(|| sample_grid(black_box(&solid), &demo.bbox, (48, 40, 20)).unwrap())
    });
    group.finish();
}

fn bench_volume_fraction(c: &mut Criterion) {
    let demo = demo_block();
    let solid = demo.solid(6.0e-4).unwrap();
    let grid = sample_grid(&solid, &demo.bbox, (64, 52, 24)).unwrap();
    let mut group = c.benchmark_group("volume_fraction_64x52x24");
    group.bench_function(MODE, |b| b.iter(|| volume_fraction(black_box(&grid), 0.0)));
    group.finish();
}

fn bench_marching_cubes(c: &mut Criterion) {
    let demo = demo_block();
    let solid = demo.solid(6.0e-4).unwrap();
    let grid = sample_grid(&solid, &demo.bbox, (48, 40, 20)).unwrap();
    let mut group = c.benchmark_group("marching_cubes_48x40x20");
    group.sample_size(20);
    group.bench_function(MODE, |b| b.iter(|| marching_cubes(black_box(&grid), 0.0)));
    group.finish();
}

fn bench_simulate_cycle(c: &mut Criterion) {
    let config = HydraulicConfig::default();
    let profile = synthetic_profile(config.cadence_s, 200).unwrap();
    let load = cylinder_load_from_ankle(&profile, &config.linkage).unwrap();
    let mut group = c.benchmark_group("simulate_cycle_2000_steps");
    group.sample_size(20);
    group.bench_function(MODE, |b| {
        b.iter(|| simulate_cycle(black_box(&config), &load, 2000).unwrap())
    });
    group.finish();
}

fn bench_route_losses(c: &mut Criterion) {
    let (a, b_port) = preset_perpendicular();
    let route = route_channel(&a, &b_port, 6, 3.0 * a.diameter_m).unwrap();
    let fluid = FluidProps::default();
    let q = 2.5 * std::f64::consts::FRAC_PI_4 * a.diameter_m * a.diameter_m;
    let mut group = c.benchmark_group("route_loss_estimate");
    group.bench_function(MODE, |b| {
        b.iter(|| pressure_loss_estimate(black_box(&route), q, &fluid).unwrap())
    });
    group.finish();
}

criterion_group!(
    kernels,
    bench_sample_grid,
    bench_volume_fraction,
    bench_marching_cubes,
    bench_simulate_cycle,
    bench_route_losses
);
criterion_main!(kernels);
