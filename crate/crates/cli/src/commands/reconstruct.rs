use anyhow::Result;
use serde::Serialize;

use rte_core::fields::io::write_scalar_field;
use rte_core::inversion::{accept_last, select_alpha_discrepancy, AlphaTrial, Reconstruction, Reconstructor};
use rte_core::{BoundarySinogram, MeasurementOperator, ScalarField};

use crate::config::{ExperimentConfig, NoiseSpec};
use crate::experiment::{add_noise, boundary_grid, Level};
use crate::manifest::Run;

#[derive(Debug, Serialize)]
pub struct Metrics {
    /// `‖f̂ − f‖ / ‖f‖` over Ω; the absolute error when `f = 0`.
    pub rel_l2: f64,
    pub max_error: f64,
    pub iterations: usize,
    pub converged: bool,
    pub alpha: f64,
    pub delta: f64,
    pub final_misfit: f64,
    pub neumann_terms: usize,
    pub alpha_trials: Vec<AlphaTrial>,
}

/// Error of `f_hat` against `truth` over Ω.
pub fn errors(cfg: &ExperimentConfig, f_hat: &ScalarField, truth: &ScalarField) -> (f64, f64) {
    let omega = cfg.domain.omega();
    let mut diff = f_hat.clone();
    for (d, t) in diff.values.iter_mut().zip(&truth.values) {
        *d -= t;
    }
    let diff = diff.restrict_to(&omega);
    let scale = truth.norm_l2_in(&omega);
    let abs = diff.norm_l2_in(&omega);
    (if scale > 0.0 { abs / scale } else { abs }, diff.max_abs())
}

pub struct Outcome {
    pub level: Level,
    pub op: MeasurementOperator,
    pub data: BoundarySinogram,
    pub rec: Reconstruction,
    pub metrics: Metrics,
}

/// Generates data on the data grid, optionally adds noise, and inverts on
/// the reconstruction grid.
pub fn solve(cfg: &ExperimentConfig, run: &mut Run) -> Result<Outcome> {
    let bg = boundary_grid(cfg)?;
    let data = run.timed("data", || -> Result<_> {
        let fine = Level::new(cfg, cfg.grids.data_grid())?;
        Ok(fine.operator(&cfg.domain, bg.clone(), &cfg.transport)?.apply(&fine.phantom)?)
    })?;
    let (g, delta) = add_noise(cfg, &data)?;
    let level = Level::new(cfg, cfg.grids.recon)?;
    let op = run.timed("operator", || level.operator(&cfg.domain, bg, &cfg.transport))?;
    let solver = Reconstructor::new(&op, cfg.domain.omega(), &cfg.recon)?;
    let scan = matches!(cfg.noise, NoiseSpec::Gaussian { .. })
        && cfg.recon.tikhonov_alpha == 0.0
        && !cfg.discrepancy.alphas.is_empty();
    let (rec, trials) = run.timed("reconstruct", || -> Result<_> {
        if scan {
            let choice = select_alpha_discrepancy(solver, &g, delta, cfg.discrepancy.tau, &cfg.discrepancy.alphas)?;
            Ok((choice.reconstruction, choice.trials))
        } else {
            Ok((accept_last(solver.solve(&g, None))?, Vec::new()))
        }
    })?;
    let (rel_l2, max_error) = errors(cfg, &rec.f_hat, &level.phantom);
    let metrics = Metrics {
        rel_l2,
        max_error,
        iterations: rec.iterations,
        converged: rec.converged,
        alpha: rec.alpha,
        delta,
        final_misfit: rec.residuals.last().copied().unwrap_or(0.0),
        neumann_terms: op.neumann_terms(),
        alpha_trials: trials,
    };
    Ok(Outcome { level, op, data: g, rec, metrics })
}

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    let mut run = Run::start("reconstruct", cfg)?;
    let Outcome { level, data, rec, metrics, .. } = solve(cfg, &mut run)?;
    let csv = run.path("data.csv");
    data.write_csv(&csv)?;
    run.add(csv);
    run.add_all(write_scalar_field(&run.path("f_true"), &level.phantom)?);
    run.add_all(write_scalar_field(&run.path("f_hat"), &rec.f_hat)?);
    let mut csv = String::from("iteration,misfit,normal_residual,objective\n");
    for (i, ((m, n), o)) in rec.residuals.iter().zip(&rec.normal_residuals).zip(&rec.objective).enumerate() {
        csv.push_str(&format!("{i},{m:e},{n:e},{o:e}\n"));
    }
    run.write("residuals.csv", csv)?;
    run.write_json("metrics.json", &metrics)?;
    println!(
        "reconstruct: rel L2 error {:.4e}, max error {:.4e}, {} iterations (converged: {}), alpha {:.1e}",
        metrics.rel_l2, metrics.max_error, metrics.iterations, metrics.converged, metrics.alpha
    );
    let manifest = run.finish()?;
    println!("wrote {}", manifest.display());
    Ok(())
}
