use std::time::Instant;

use anyhow::Result;
use serde::Serialize;

use rte_core::inversion::stability_probe;
use rte_core::transport::{estimate_contraction, solve_forward_with};
use rte_core::{Error, TransportOperator};

use crate::commands::reconstruct;
use crate::config::ExperimentConfig;
use crate::experiment::Level;
use crate::manifest::Run;

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub lambda: f64,
    /// `ok`, `non_contractive` or `error`.
    pub status: String,
    /// Last residual ratio of the forward Neumann iteration.
    pub neumann_ratio: f64,
    /// Power-iteration estimate of the spectral radius of `T₁⁻¹(λK)`.
    pub power_estimate: f64,
    pub iterations: Option<usize>,
    pub rel_error: f64,
    pub sigma_min: f64,
    pub c_estimate: f64,
}

impl Row {
    fn empty(lambda: f64) -> Row {
        Row {
            lambda,
            status: "ok".into(),
            neumann_ratio: f64::NAN,
            power_estimate: f64::NAN,
            iterations: None,
            rel_error: f64::NAN,
            sigma_min: f64::NAN,
            c_estimate: f64::NAN,
        }
    }
}

fn sweep_one(cfg: &ExperimentConfig, run: &mut Run, row: &mut Row) -> Result<()> {
    let level = Level::new(cfg, cfg.grids.recon)?;
    let top = TransportOperator::new(&level.sigma, level.kernel.as_ref(), cfg.domain.omega1(), &cfg.transport)?;
    row.power_estimate = estimate_contraction(&top, 30)?;
    let sol = solve_forward_with(&top, &level.phantom)?;
    let h = &sol.residual_history;
    row.neumann_ratio = if h.len() >= 2 && h[h.len() - 2] > 0.0 { h[h.len() - 1] / h[h.len() - 2] } else { 0.0 };
    let out = reconstruct::solve(cfg, run)?;
    row.iterations = Some(out.metrics.iterations);
    row.rel_error = out.metrics.rel_l2;
    let probe = stability_probe(&out.op, &cfg.domain, &cfg.probe)?;
    row.sigma_min = probe.sigma_min;
    row.c_estimate = probe.c_estimate;
    Ok(())
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:e}")
    }
}

fn short(v: f64) -> String {
    if v.is_nan() {
        "-".into()
    } else {
        format!("{v:.4e}")
    }
}

/// Scattering strengths at which the transport iteration stops contracting
/// are recorded as `non_contractive`; the sweep carries on.
pub fn run(cfg: &ExperimentConfig, lambdas: &[f64]) -> Result<()> {
    let mut run = Run::start("lambda-sweep", cfg)?;
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut c = cfg.clone();
        c.transport.lambda_scale = lambda;
        let mut row = Row::empty(lambda);
        let t = Instant::now();
        let res = sweep_one(&c, &mut run, &mut row);
        run.record(&format!("lambda={lambda}"), t.elapsed().as_secs_f64());
        match res {
            Ok(()) => {}
            Err(e) => match e.downcast_ref::<Error>() {
                Some(Error::NonContractive { ratio, .. }) => {
                    row.status = "non_contractive".into();
                    if row.neumann_ratio.is_nan() {
                        row.neumann_ratio = *ratio;
                    }
                }
                _ => row.status = format!("error: {e}"),
            },
        }
        println!(
            "lambda {lambda:<8} {:<16} ratio {:>11} power {:>11} rel error {:>11} C {:>11}",
            row.status,
            short(row.neumann_ratio),
            short(row.power_estimate),
            short(row.rel_error),
            short(row.c_estimate)
        );
        rows.push(row);
    }

    let mut csv = String::from("lambda,status,neumann_ratio,power_estimate,iterations,rel_error,sigma_min,c_estimate\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.lambda,
            r.status.replace(',', ";"),
            fmt(r.neumann_ratio),
            fmt(r.power_estimate),
            r.iterations.map(|i| i.to_string()).unwrap_or_default(),
            fmt(r.rel_error),
            fmt(r.sigma_min),
            fmt(r.c_estimate)
        ));
    }
    run.write("lambda_sweep.csv", csv)?;

    // ρ(T₁⁻¹(λK)) is linear in λ, so one finite estimate locates the threshold.
    let critical = rows
        .iter()
        .find(|r| r.lambda > 0.0 && r.power_estimate.is_finite() && r.power_estimate > 0.0)
        .map(|r| r.lambda / r.power_estimate);
    match critical {
        Some(l) => println!("critical lambda ≈ {l:.4} (spectral radius reaches 1)"),
        None => println!("critical lambda: no scattering, not defined"),
    }
    run.write_json("lambda_sweep.json", &serde_json::json!({ "rows": rows, "critical_lambda": critical }))?;
    run.finish()?;
    Ok(())
}
