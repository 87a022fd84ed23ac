use std::sync::Arc;

use proptest::prelude::*;

use rte_core::fields::io::{read_scalar_field, write_scalar_field};
use rte_core::fields::{make_phantom, make_sigma, KernelSpec, PhantomSpec, SigmaSpec};
use rte_core::inversion::{accept_last, ReconConfig, Reconstructor};
use rte_core::{BoundaryGrid, BoundarySinogram, DiscDomain, Grid2, MeasurementOperator, ScalarField, TransportConfig, Vec2};

fn operator_on(n: usize, n_theta: usize, albedo: f64, sigma: f64, bg: Arc<BoundaryGrid>) -> MeasurementOperator {
    let d = DiscDomain::unit();
    let grid = Grid2::covering(&d.omega1(), n).unwrap();
    let s = make_sigma(&d, grid, n_theta, &SigmaSpec::constant(sigma)).unwrap();
    let k = KernelSpec::Isotropic { albedo_scale: albedo, extension: Default::default() }.build(&d, grid).unwrap();
    let cfg = TransportConfig { ray_step: 0.02, ..Default::default() };
    MeasurementOperator::new(&s, k.as_ref(), d.omega1(), bg, &cfg).unwrap()
}

fn operator(n: usize, n_theta: usize, albedo: f64, sigma: f64) -> (DiscDomain, MeasurementOperator) {
    let d = DiscDomain::unit();
    let bg = Arc::new(BoundaryGrid::on_circle(d.omega1(), 4 * n, n_theta).unwrap());
    (d, operator_on(n, n_theta, albedo, sigma, bg))
}

#[test]
fn data_survive_a_file_round_trip() {
    let (d, op) = operator(24, 16, 0.2, 0.4);
    let spec = PhantomSpec::Gaussian { center: Vec2::new(0.1, 0.0), width: 0.3, amp: 1.0 };
    let f = make_phantom(&d, op.grid_2d(), &spec).unwrap();
    let g = op.apply(&f).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let csv = dir.path().join("g.csv");
    g.write_csv(&csv).unwrap();
    let back = BoundarySinogram::read_csv(&csv, op.boundary_grid().clone()).unwrap();
    // CSV stores shortest round-trip decimal, so values come back exactly.
    assert_eq!(back, g);

    write_scalar_field(&dir.path().join("f"), &f).unwrap();
    assert_eq!(read_scalar_field(&dir.path().join("f")).unwrap(), f);
}

#[test]
fn forward_then_reconstruct_on_a_small_grid() {
    let (d, op) = operator(24, 16, 0.3, 0.5);
    // Data simulated on a grid twice as fine, on the same boundary samples.
    let fine = operator_on(48, 32, 0.3, 0.5, op.boundary_grid().clone());
    let spec = PhantomSpec::Gaussian { center: Vec2::new(0.1, 0.2), width: 0.3, amp: 1.0 };
    let g = fine.apply(&make_phantom(&d, fine.grid_2d(), &spec).unwrap()).unwrap();
    let cfg = ReconConfig { max_krylov_iter: 40, krylov_tol: 1e-4, ..Default::default() };
    let rec = accept_last(Reconstructor::new(&op, d.omega(), &cfg).unwrap().solve(&g, None)).unwrap();
    let truth = make_phantom(&d, op.grid_2d(), &spec).unwrap();
    let diff = ScalarField {
        grid: truth.grid,
        values: rec.f_hat.values.iter().zip(&truth.values).map(|(a, b)| a - b).collect(),
    };
    let rel = diff.norm_l2_in(&d.omega()) / truth.norm_l2_in(&d.omega());
    assert!(rel < 0.05, "relative error {rel}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn adjoint_identity_holds_for_any_coefficients(
        albedo in 0.0f64..0.5,
        sigma in 0.0f64..2.0,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let (_, op) = operator(12, 8, albedo, sigma);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f = ScalarField {
            grid: op.grid_2d(),
            values: (0..op.grid_2d().len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let g = BoundarySinogram {
            grid: op.boundary_grid().clone(),
            values: (0..op.boundary_grid().len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let lhs = op.apply(&f).unwrap().dot(&g);
        let rhs = f.dot(&op.adjoint(&g).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * f.norm_l2() * g.norm_sigma());
    }
}
