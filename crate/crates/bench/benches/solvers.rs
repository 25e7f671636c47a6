use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wiener_bench::{kernels, unit_grid};
use wiener_core::clark_ocone::ito_kernel;
use wiener_core::gaussian::gauss_hermite;
use wiener_core::grid::DiscretePath;
use wiener_core::stochastic::{sample_ensemble, SampleObjective};
use wiener_core::variational::{shoot, BoundaryCondition, LagrangianModel, ShootingConfig};
use wiener_core::Polynomial;

fn quadrature(c: &mut Criterion) {
    let mut g = c.benchmark_group("gauss_hermite");
    for order in [20, 64] {
        g.bench_with_input(BenchmarkId::from_parameter(order), &order, |b, &n| {
            b.iter(|| gauss_hermite(black_box(n)).unwrap())
        });
    }
    g.finish();
}

fn shooting(c: &mut Criterion) {
    let grid = unit_grid(1000);
    let mut g = c.benchmark_group("shoot_free_endpoint");
    for (name, kernel) in kernels() {
        let model = LagrangianModel::new(kernel);
        g.bench_function(name, |b| {
            b.iter(|| {
                shoot(
                    &model,
                    &grid,
                    BoundaryCondition::FreeEndpoint,
                    &ShootingConfig::default(),
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

fn ensembles(c: &mut Criterion) {
    let grid = unit_grid(200);
    c.bench_function("sample_ensemble_10k_x_200", |b| {
        b.iter(|| sample_ensemble(grid, black_box(10_000), 42).unwrap())
    });
}

fn objective(c: &mut Criterion) {
    let grid = unit_grid(200);
    let ens = sample_ensemble(grid, 10_000, 42).unwrap();
    let z = DiscretePath::from_fn(grid, |t| 0.5 * t).unwrap().into_values();
    let mut g = c.benchmark_group("objective_gradient");
    for (name, kernel) in kernels() {
        let obj = SampleObjective::new(&kernel, &ens).unwrap();
        g.bench_function(name, |b| b.iter(|| obj.gradient(black_box(&z)).unwrap()));
    }
    g.finish();
}

fn clark_ocone(c: &mut Criterion) {
    let g = Polynomial::new(vec![0.0, 1.0, -2.0, 0.5, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let big_g = Polynomial::new(vec![0.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
    c.bench_function("ito_kernel_degree_8", |b| {
        b.iter(|| ito_kernel(black_box(&g), black_box(&big_g), 1.0).unwrap())
    });
}

criterion_group!(benches, quadrature, shooting, ensembles, objective, clark_ocone);
criterion_main!(benches);
