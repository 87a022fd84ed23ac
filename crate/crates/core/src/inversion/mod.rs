//! Recovery of the source from boundary data: conjugate gradients on the
//! regularized normal equations `(X*X + α)f = X*g` over fields supported in
//! Ω̄, an optional `|ξ|` preconditioner, and a probe of the stability
//! constant in `‖f‖ ≤ C‖X*Xf‖_{H¹(Ω₁)}`.

mod riesz;
mod stability;

use serde::{Deserialize, Serialize};

pub use riesz::{riesz_preconditioner, RieszFilter};
pub use stability::{h1_norm, stability_probe, ProbeConfig, StabilityReport};

use crate::error::{Error, Result};
use crate::fields::{dot, PhaseField, ScalarField, ScatterKernel};
use crate::geometry::Circle;
use crate::measurement::{BoundarySinogram, MeasurementOperator};
use crate::transport::TransportConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    #[default]
    None,
    Riesz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    pub max_krylov_iter: usize,
    /// Stop when `‖(X*X + α)f − X*g‖ ≤ krylov_tol · ‖X*g‖`.
    pub krylov_tol: f64,
    pub tikhonov_alpha: f64,
    pub preconditioner: Preconditioner,
    /// Low-frequency cutoff of the preconditioner, as a fraction of Nyquist.
    pub riesz_taper: f64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            max_krylov_iter: 100,
            krylov_tol: 1e-6,
            tikhonov_alpha: 0.0,
            preconditioner: Preconditioner::None,
            riesz_taper: 0.02,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_krylov_iter == 0 {
            return Err(Error::Parameter("max_krylov_iter must be >= 1".into()));
        }
        if !(self.krylov_tol > 0.0) {
            return Err(Error::Parameter(format!("krylov_tol must be > 0, got {}", self.krylov_tol)));
        }
        if !(self.tikhonov_alpha >= 0.0 && self.tikhonov_alpha.is_finite()) {
            return Err(Error::Parameter(format!("tikhonov_alpha must be >= 0, got {}", self.tikhonov_alpha)));
        }
        if !(self.riesz_taper > 0.0 && self.riesz_taper < 1.0) {
            return Err(Error::Parameter(format!("riesz_taper must lie in (0, 1), got {}", self.riesz_taper)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub f_hat: ScalarField,
    /// `‖Xf_k − g‖_Σ / ‖g‖_Σ` for `k = 0, 1, …`.
    pub residuals: Vec<f64>,
    /// `‖(X*X + α)f_k − X*g‖ / ‖X*g‖`.
    pub normal_residuals: Vec<f64>,
    /// `(‖Xf_k − g‖²_Σ + α‖f_k‖²) / ‖g‖²_Σ`; nonincreasing.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub alpha: f64,
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn masked(mut v: Vec<f64>, mask: &[bool]) -> Vec<f64> {
    for (x, &m) in v.iter_mut().zip(mask) {
        if !m {
            *x = 0.0;
        }
    }
    v
}

/// Krylov solver on a fixed measurement operator and support.
pub struct Reconstructor<'a> {
    op: &'a MeasurementOperator,
    mask: Vec<bool>,
    filter: Option<RieszFilter>,
    cfg: ReconConfig,
}

impl<'a> Reconstructor<'a> {
    /// `support` is Ω; iterates are projected onto nodes inside it.
    pub fn new(op: &'a MeasurementOperator, support: Circle, cfg: &ReconConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = op.grid_2d();
        let filter = match cfg.preconditioner {
            Preconditioner::None => None,
            Preconditioner::Riesz => Some(RieszFilter::new(grid, cfg.riesz_taper)?),
        };
        Ok(Reconstructor { op, mask: grid.mask(&support), filter, cfg: *cfg })
    }

    pub fn config(&self) -> &ReconConfig {
        &self.cfg
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.cfg.tikhonov_alpha = alpha;
        self
    }

    fn field(&self, values: Vec<f64>) -> ScalarField {
        ScalarField { grid: self.op.grid_2d(), values }
    }

    fn precondition(&self, r: &[f64]) -> Result<Vec<f64>> {
        match &self.filter {
            None => Ok(r.to_vec()),
            Some(q) => Ok(masked(q.apply(&self.field(r.to_vec()))?.values, &self.mask)),
        }
    }

    /// Preconditioned CG from `start` (or zero). The data misfit is carried
    /// by recursion on `Xf_k`, so each iteration costs one `X` and one `X*`.
    pub fn solve(&self, g: &BoundarySinogram, start: Option<&ScalarField>) -> Result<Reconstruction> {
        let op = self.op;
        let alpha = self.cfg.tikhonov_alpha;
        let cell = op.grid_2d().cell_area();
        let g_norm2 = g.dot(g);
        let b = masked(op.adjoint(g)?.values, &self.mask);
        let b_norm = dot(&b, &b).sqrt();

        let mut x = match start {
            Some(s) => masked(s.values.clone(), &self.mask),
            None => vec![0.0; b.len()],
        };
        let warm = x.iter().any(|&v| v != 0.0);
        let mut xx = if warm { op.apply(&self.field(x.clone()))? } else { BoundarySinogram::zeros(g.grid.clone()) };
        let mut r = b.clone();
        if warm {
            let ax = masked(op.adjoint(&xx)?.values, &self.mask);
            for ((ri, ai), xi) in r.iter_mut().zip(&ax).zip(&x) {
                *ri -= ai + alpha * xi;
            }
        }

        let g_scale = if g_norm2 > 0.0 { g_norm2 } else { 1.0 };
        let b_scale = if b_norm > 0.0 { b_norm } else { 1.0 };
        let misfit = |xx: &BoundarySinogram, x: &[f64]| -> Result<(f64, f64)> {
            let m2 = xx.minus(g)?.dot(&xx.minus(g)?);
            let reg = alpha * dot(x, x) * cell;
            Ok(((m2 / g_scale).sqrt(), (m2 + reg) / g_scale))
        };
        let (m0, j0) = misfit(&xx, &x)?;
        let mut residuals = vec![m0];
        let mut objective = vec![j0];
        let mut normal_residuals = vec![dot(&r, &r).sqrt() / b_scale];

        if b_norm == 0.0 || normal_residuals[0] <= self.cfg.krylov_tol {
            return Ok(Reconstruction {
                f_hat: self.field(x),
                residuals,
                normal_residuals,
                objective,
                iterations: 0,
                converged: true,
                alpha,
            });
        }

        let mut z = self.precondition(&r)?;
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.cfg.max_krylov_iter {
            iterations += 1;
            let xp = op.apply(&self.field(p.clone()))?;
            let mut ap = masked(op.adjoint(&xp)?.values, &self.mask);
            axpy(alpha, &p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let step = rz / pap;
            axpy(step, &p, &mut x);
            axpy(-step, &ap, &mut r);
            axpy(step, &xp.values, &mut xx.values);
            let (m, j) = misfit(&xx, &x)?;
            residuals.push(m);
            objective.push(j);
            let nr = dot(&r, &r).sqrt() / b_scale;
            normal_residuals.push(nr);
            if nr <= self.cfg.krylov_tol {
                converged = true;
                break;
            }
            z = self.precondition(&r)?;
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        let rec = Reconstruction {
            f_hat: self.field(x),
            residuals,
            normal_residuals,
            objective,
            iterations,
            converged,
            alpha,
        };
        if converged {
            Ok(rec)
        } else {
            Err(Error::MaxIterReached(Box::new(rec)))
        }
    }
}

/// Reconstructs `f` from `g` on the grid of `sigma`. On budget exhaustion
/// the error carries the last iterate.
pub fn reconstruct(
    sigma: &PhaseField,
    kernel: Option<&ScatterKernel>,
    g: &BoundarySinogram,
    transport_circle: Circle,
    support: Circle,
    cfg: &TransportConfig,
    rcfg: &ReconConfig,
) -> Result<Reconstruction> {
    let op = MeasurementOperator::new(sigma, kernel, transport_circle, g.grid.clone(), cfg)?;
    Reconstructor::new(&op, support, rcfg)?.solve(g, None)
}

/// Takes the last iterate whether or not the budget ran out.
pub fn accept_last(r: Result<Reconstruction>) -> Result<Reconstruction> {
    match r {
        Err(Error::MaxIterReached(rec)) => Ok(*rec),
        other => other,
    }
}

/// One point of a discrepancy scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaTrial {
    pub alpha: f64,
    /// `‖Xf_α − g‖_Σ`.
    pub misfit: f64,
}

#[derive(Debug, Clone)]
pub struct DiscrepancyChoice {
    pub alpha: f64,
    pub reconstruction: Reconstruction,
    pub trials: Vec<AlphaTrial>,
}

/// Discrepancy principle: the smallest `α` in `alphas` whose misfit still
/// reaches `tau · delta`. Candidates are tried from large to small with
/// warm starts; the scan stops at the first `α` that overfits.
pub fn select_alpha_discrepancy(
    solver: Reconstructor<'_>,
    g: &BoundarySinogram,
    delta: f64,
    tau: f64,
    alphas: &[f64],
) -> Result<DiscrepancyChoice> {
    if alphas.is_empty() {
        return Err(Error::Parameter("empty alpha grid".into()));
    }
    let mut order: Vec<f64> = alphas.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));
    let g_norm = g.norm_sigma();
    let mut solver = solver;
    let mut best: Option<(f64, Reconstruction)> = None;
    let mut trials = Vec::new();
    let mut warm: Option<ScalarField> = None;
    for &alpha in &order {
        solver = solver.with_alpha(alpha);
        let rec = accept_last(solver.solve(g, warm.as_ref()))?;
        let misfit = rec.residuals.last().copied().unwrap_or(1.0) * g_norm;
        trials.push(AlphaTrial { alpha, misfit });
        let meets = misfit >= tau * delta;
        if meets || best.is_none() {
            warm = Some(rec.f_hat.clone());
            best = Some((alpha, rec));
        }
        if !meets {
            break;
        }
    }
    let (alpha, reconstruction) = best.expect("at least one alpha tried");
    Ok(DiscrepancyChoice { alpha, reconstruction, trials })
}
