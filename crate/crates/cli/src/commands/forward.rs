use anyhow::Result;

use rte_core::fields::io::{write_phase_field, write_scalar_field};
use rte_core::transport::solve_forward_with;

use crate::config::ExperimentConfig;
use crate::experiment::{boundary_grid, Level};
use crate::manifest::Run;

/// Solves the forward problem on the data grid and writes `u`, the boundary
/// sinogram `Xf` and the Neumann residual history.
pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    let mut run = Run::start("forward", cfg)?;
    let level = run.timed("setup", || Level::new(cfg, cfg.grids.data_grid()))?;
    let bg = boundary_grid(cfg)?;
    let op = run.timed("operator", || level.operator(&cfg.domain, bg, &cfg.transport))?;
    let sol = run.timed("solve", || solve_forward_with(op.transport(), &level.phantom))?;
    let g = run.timed("measure", || op.apply(&level.phantom))?;

    run.add_all(write_scalar_field(&run.path("phantom"), &level.phantom)?);
    run.add_all(write_phase_field(&run.path("u"), &sol.u)?);
    let csv = run.path("sinogram.csv");
    g.write_csv(&csv)?;
    run.add(csv);
    run.add_all(g.write_bin(&run.path("sinogram"))?);
    let mut hist = String::from("iteration,residual\n");
    for (i, r) in sol.residual_history.iter().enumerate() {
        hist.push_str(&format!("{},{r:e}\n", i + 1));
    }
    run.write("residuals.csv", hist)?;

    println!(
        "forward: {}² grid, {} directions, {} boundary samples, {} Neumann iterations, ‖Xf‖_Σ = {:.6e}",
        level.grid.nx,
        level.n_theta,
        g.values.len(),
        sol.iterations,
        g.norm_sigma()
    );
    let manifest = run.finish()?;
    println!("wrote {}", manifest.display());
    Ok(())
}
