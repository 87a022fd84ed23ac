use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rte_core::fields::{extension_profile, make_phantom, make_sigma, Extension, PhantomSpec, SigmaSpec};
use rte_core::transport::solve_forward_with;
use rte_core::{BoundaryGrid, DiscDomain, Grid2, MeasurementOperator, ScatterKernel, TransportConfig, Vec2};

struct Setup {
    op: MeasurementOperator,
    f: rte_core::ScalarField,
}

fn setup(n: usize, n_theta: usize) -> Setup {
    let d = DiscDomain::unit();
    let grid = Grid2::covering(&d.omega1(), n).unwrap();
    let sigma = make_sigma(&d, grid, n_theta, &SigmaSpec::constant(0.5)).unwrap();
    let kernel = ScatterKernel::isotropic(0.3, extension_profile(&d, grid, Extension::Cutoff)).unwrap();
    let bg = Arc::new(BoundaryGrid::on_circle(d.omega1(), 4 * n, n_theta).unwrap());
    let op = MeasurementOperator::new(&sigma, Some(&kernel), d.omega1(), bg, &TransportConfig::default()).unwrap();
    let spec = PhantomSpec::Gaussian { center: Vec2::new(0.2, -0.1), width: 0.25, amp: 1.0 };
    Setup { f: make_phantom(&d, grid, &spec).unwrap(), op }
}

fn operators(c: &mut Criterion) {
    let mut group = c.benchmark_group("operators");
    group.sample_size(10);
    for (n, n_theta) in [(32, 16), (64, 32)] {
        let s = setup(n, n_theta);
        let g = s.op.apply(&s.f).unwrap();
        let id = format!("{n}x{n}/{n_theta}");
        group.bench_with_input(BenchmarkId::new("forward_solve", &id), &s, |b, s| {
            b.iter(|| solve_forward_with(s.op.transport(), black_box(&s.f)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("X", &id), &s, |b, s| b.iter(|| s.op.apply(black_box(&s.f)).unwrap()));
        group.bench_with_input(BenchmarkId::new("X_adjoint", &id), &s, |b, s| {
            b.iter(|| s.op.adjoint(black_box(&g)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, operators);
criterion_main!(benches);
