use std::fmt;
use std::sync::Arc;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use rte_core::geometry::{phase_space_integral, santalo_integral};
use rte_core::{BoundaryGrid, BoundarySample, BoundarySinogram, MeasurementOperator, PhaseField, ScalarField, Vec2};

use crate::config::ExperimentConfig;
use crate::experiment::{boundary_grid, Level};
use crate::manifest::Run;
use crate::CheckFailed;

/// Fault injection and degenerate inputs for the self-test.
#[derive(Debug, Clone, Copy, Default)]
pub struct Faults {
    /// Shifts `X*g` by one node so that it is no longer the transpose.
    pub break_adjoint: bool,
    /// Replaces the Santaló boundary grid by tangent rays only.
    pub tangent_grid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Warn,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Warn => "WARN",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

fn check(name: &'static str, measured: f64, threshold: f64, detail: String) -> Check {
    let status = if measured <= threshold { Status::Pass } else { Status::Fail };
    Check { name, status, measured, threshold, detail }
}

fn random_field(level: &Level, rng: &mut ChaCha8Rng) -> ScalarField {
    ScalarField { grid: level.grid, values: (0..level.grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect() }
}

fn random_sinogram(bg: &Arc<BoundaryGrid>, rng: &mut ChaCha8Rng) -> BoundarySinogram {
    BoundarySinogram { grid: bg.clone(), values: (0..bg.len()).map(|_| rng.random_range(-1.0..1.0)).collect() }
}

fn santalo(cfg: &ExperimentConfig, faults: Faults) -> Result<Check> {
    let omega = cfg.domain.omega();
    let b = cfg.grids.boundary;
    let mut bg = BoundaryGrid::on_circle(omega, b.n_beta, b.n_alpha)?;
    if faults.tangent_grid {
        // One tangent ray per direction: ν·θ = 0, so every weight vanishes.
        let samples = (0..b.n_alpha)
            .map(|m| {
                let alpha = 2.0 * std::f64::consts::PI * m as f64 / b.n_alpha as f64;
                BoundarySample {
                    boundary_angle: alpha + std::f64::consts::FRAC_PI_2,
                    direction_angle: alpha,
                    sigma_weight: 0.0,
                    beta_index: 0,
                    alpha_index: m,
                }
            })
            .collect();
        bg = BoundaryGrid::from_samples(omega, b.n_beta, b.n_alpha, samples);
    }
    let c = omega.center;
    let r = omega.radius;
    let f = |p: Vec2, t: f64| (1.0 + 0.5 * t.cos()) * (-2.0 * (p - c).norm_sq() / (r * r)).exp();
    if bg.total_weight() == 0.0 {
        return Ok(Check {
            name: "santalo",
            status: Status::Warn,
            measured: f64::NAN,
            threshold: 1e-2,
            detail: format!("all {} boundary samples have zero weight; identity not tested", bg.len()),
        });
    }
    let lhs = santalo_integral(&bg, f, cfg.transport.ray_step.min(r / 200.0));
    let rhs = phase_space_integral(&omega, f, 200, 400, 64);
    let rel = (lhs - rhs).abs() / rhs.abs();
    Ok(check("santalo", rel, 1e-2, format!("boundary {lhs:.8e} vs phase space {rhs:.8e}")))
}

fn adjoint(op: &MeasurementOperator, level: &Level, faults: Faults, rng: &mut ChaCha8Rng) -> Result<Check> {
    let bg = op.boundary_grid().clone();
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let f = random_field(level, rng);
        let g = random_sinogram(&bg, rng);
        let mut xs = op.adjoint(&g)?;
        if faults.break_adjoint {
            xs.values.rotate_left(1);
        }
        let lhs = op.apply(&f)?.dot(&g);
        let rhs = f.dot(&xs);
        worst = worst.max((lhs - rhs).abs() / (f.norm_l2() * g.norm_sigma()));
    }
    Ok(check("adjoint", worst, 1e-10, "max |⟨Xf,g⟩_Σ − ⟨f,X*g⟩| / (‖f‖‖g‖_Σ) over 5 pairs".into()))
}

fn boundedness(op: &MeasurementOperator, cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Check> {
    let grid = op.grid_2d();
    let n_theta = op.transport().n_theta();
    let diam = cfg.domain.omega1().diameter();
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let values = (0..grid.len() * n_theta).map(|_| rng.random_range(0.0..1.0)).collect();
        let g = PhaseField::from_values(grid, n_theta, values)?;
        let out = op.boundary_transport(&g)?;
        worst = worst.max(out.dot(&out) / (diam * g.norm_l2().powi(2)));
    }
    Ok(check("boundedness", worst, 1.0 + 1e-6, "max ‖R₊T₁⁻¹g‖²_Σ / (diam(Ω₁)‖g‖²) over 5 sources".into()))
}

fn k_zero(cfg: &ExperimentConfig, level: &Level, rng: &mut ChaCha8Rng) -> Result<Check> {
    let bg = boundary_grid(cfg)?;
    let kernel = cfg.kernel.scaled(0.0).build(&cfg.domain, level.grid)?;
    let op = MeasurementOperator::new(&level.sigma, kernel.as_ref(), cfg.domain.omega1(), bg, &cfg.transport)?;
    let f = random_field(level, rng);
    let x = op.apply(&f)?;
    let i = op.apply_i_sigma(&f)?;
    let rel = x.minus(&i)?.norm_sigma() / i.norm_sigma();
    Ok(check("k=0 reduction", rel, 1e-12, "‖Xf − I_σf‖_Σ / ‖I_σf‖_Σ with zero albedo".into()))
}

pub fn checks(cfg: &ExperimentConfig, faults: Faults) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let level = Level::new(cfg, cfg.grids.recon)?;
    let op = level.operator(&cfg.domain, boundary_grid(cfg)?, &cfg.transport)?;
    Ok(vec![
        santalo(cfg, faults)?,
        adjoint(&op, &level, faults, &mut rng)?,
        boundedness(&op, cfg, &mut rng)?,
        k_zero(cfg, &level, &mut rng)?,
    ])
}

fn report(run: &mut Run, list: &[Check]) -> Result<()> {
    for c in list {
        println!("{:<4} {:<14} {:>10.3e} (≤ {:.1e})  {}", c.status, c.name, c.measured, c.threshold, c.detail);
    }
    run.write_json("selftest.json", &list)
}

fn conclude(run: Run, list: &[Check]) -> Result<()> {
    run.finish()?;
    let failed: Vec<&str> = list.iter().filter(|c| c.status == Status::Fail).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CheckFailed(failed.join(", ")).into())
    }
}

pub fn run(cfg: &ExperimentConfig, faults: Faults) -> Result<()> {
    let mut run = Run::start("selftest", cfg)?;
    let list = run.timed("checks", || checks(cfg, faults))?;
    report(&mut run, &list)?;
    conclude(run, &list)
}

/// The adjoint identity alone.
pub fn run_adjoint(cfg: &ExperimentConfig, faults: Faults) -> Result<()> {
    let mut run = Run::start("adjoint-test", cfg)?;
    let list = run.timed("checks", || -> Result<_> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let level = Level::new(cfg, cfg.grids.recon)?;
        let op = level.operator(&cfg.domain, boundary_grid(cfg)?, &cfg.transport)?;
        Ok(vec![adjoint(&op, &level, faults, &mut rng)?])
    })?;
    report(&mut run, &list)?;
    conclude(run, &list)
}
