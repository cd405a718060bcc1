use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use zkcyl::dynamics::{gaussian_data, Discretization, Nonlinearity};
use zkcyl::integrator::{StageSolver, StepperOptions};
use zkcyl::par::Execution;
use zkcyl::spectral::TorusGrid;
use zkcyl::transverse::RadialLayout;

fn one_step(c: &mut Criterion) {
    let nl = Nonlinearity::critical();
    let mut group = c.benchmark_group("gauss2_step");
    group.sample_size(10);
    for n in [128usize, 512] {
        for exec in [Execution::Serial, Execution::Parallel] {
            let grid = TorusGrid::new(5.0, n).unwrap();
            let layout = RadialLayout::new(1.0, 20.0, 20, 100).unwrap();
            let disc = Discretization::new(grid, layout, exec);
            let u = gaussian_data(&disc, 2.0, 1.0).unwrap();
            let solver = StageSolver::precompute(2.5e-3, &disc, StepperOptions::default()).unwrap();
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), n), &u, |b, u| {
                b.iter(|| solver.step(u, Some(&nl)).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, one_step);
criterion_main!(benches);
