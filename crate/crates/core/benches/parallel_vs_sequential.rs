//! Compares the data-parallel build of the solver/simulator against the
//! sequential fallback.
//!
//! The parallel path is exercised through thread pools of different sizes
//! (a 1-thread pool is the closest in-process stand-in for the sequential
//! build); for the true fallback numbers, rerun the suite with
//! `cargo bench --no-default-features`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use crmkit_core::grid::{GridSpec, Mat};
use crmkit_core::params::ModelParams;
use crmkit_core::pde::{consumer_step_once, solve_consumer_pde, SolveOptions};
use crmkit_core::sim::{simulate_ensemble, PolicyFields, SimOptions};

fn bench_grid() -> GridSpec {
    GridSpec {
        x_c_min: 10.0,
        x_c_max: 200.0,
        x_d_min: 30.0,
        x_d_max: 110.0,
        n_c: 120,
        n_d: 120,
        n_t: 50,
    }
}

#[cfg(feature = "parallel")]
fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

#[cfg(not(feature = "parallel"))]
fn with_pool<T>(_threads: usize, f: impl FnOnce() -> T) -> T {
    f()
}

fn backward_step(c: &mut Criterion) {
    let params = ModelParams::default_french();
    let grid = bench_grid();
    let slice = Mat::from_fn(&grid, |i, j| (i as f64 - 30.0) * (j as f64 + 2.0));
    let mut group = c.benchmark_group("consumer_backward_step");
    let threads: &[usize] = if cfg!(feature = "parallel") { &[1, 2, 4] } else { &[1] };
    for &t in threads {
        let label = if cfg!(feature = "parallel") {
            format!("parallel_{t}_threads")
        } else {
            "sequential".to_string()
        };
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| {
                with_pool(t, || consumer_step_once(&params, &grid, &slice, 1e-5).unwrap())
            })
        });
    }
    group.finish();
}

fn ensemble(c: &mut Criterion) {
    let params = ModelParams::default_french();
    let grid = GridSpec { n_t: 400, ..bench_grid() };
    let mut group = c.benchmark_group("no_adjustment_ensemble_256");
    group.sample_size(10);
    let threads: &[usize] = if cfg!(feature = "parallel") { &[1, 2, 4] } else { &[1] };
    for &t in threads {
        let label = if cfg!(feature = "parallel") {
            format!("parallel_{t}_threads")
        } else {
            "sequential".to_string()
        };
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| {
                with_pool(t, || {
                    simulate_ensemble(
                        &params,
                        &grid,
                        &PolicyFields::NoAdjustment,
                        &SimOptions::default(),
                        256,
                        42,
                    )
                    .unwrap()
                })
            })
        });
    }
    group.finish();
}

fn full_solve_small(c: &mut Criterion) {
    let params = ModelParams::default_french();
    let grid = GridSpec {
        x_c_min: 10.0,
        x_c_max: 200.0,
        x_d_min: 30.0,
        x_d_max: 110.0,
        n_c: 40,
        n_d: 40,
        n_t: 100,
    };
    let mut group = c.benchmark_group("consumer_solve_40x40x100");
    group.sample_size(10);
    group.bench_function("default_build", |b| {
        b.iter(|| solve_consumer_pde(&params, &grid, &SolveOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, backward_step, ensemble, full_solve_small);
criterion_main!(benches);
