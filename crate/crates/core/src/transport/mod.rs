//! The transport operators: attenuation `E`, the explicit inverse `T₁⁻¹`,
//! the scattering operator `K`, and the Neumann-series forward solver for
//! `(Id − T₁⁻¹K)u = T₁⁻¹Jf`.

mod lattice;
mod scatter;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub(crate) use lattice::LatticeSet;
pub use scatter::{apply_k, apply_k_transpose, ModeMoments};

use crate::error::{Error, Result};
use crate::fields::{PhaseField, ScalarField, ScatterKernel};
use crate::geometry::{midpoint_segments, Circle, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportConfig {
    /// Quadrature step along characteristics.
    pub ray_step: f64,
    /// Relative residual at which the Neumann iteration stops.
    pub neumann_tol: f64,
    pub neumann_max_iter: usize,
    /// The λ of the `(σ, λk)` family.
    pub lambda_scale: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig { ray_step: 1.0 / 256.0, neumann_tol: 1e-8, neumann_max_iter: 200, lambda_scale: 1.0 }
    }
}

impl TransportConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ray_step > 0.0 && self.ray_step.is_finite()) {
            return Err(Error::Parameter(format!("ray_step must be > 0, got {}", self.ray_step)));
        }
        if !(self.neumann_tol > 0.0) {
            return Err(Error::Parameter(format!("neumann_tol must be > 0, got {}", self.neumann_tol)));
        }
        if self.neumann_max_iter < 1 {
            return Err(Error::Parameter("neumann_max_iter must be >= 1".into()));
        }
        if !(self.lambda_scale >= 0.0 && self.lambda_scale.is_finite()) {
            return Err(Error::Parameter(format!("lambda_scale must be >= 0, got {}", self.lambda_scale)));
        }
        Ok(())
    }
}

/// `E(x, θ) = exp(−∫₀^∞ σ(x + sθ, θ) ds)`, integrated up to the exit from
/// `circle` (σ vanishes outside it).
pub fn attenuation_e(sigma: &PhaseField, circle: &Circle, x: Vec2, theta: f64, ray_step: f64) -> f64 {
    let dir = Vec2::from_angle(theta);
    let Some((t1, t2)) = circle.line_crossings(x, dir) else {
        return 1.0;
    };
    let start = t1.max(0.0);
    if t2 <= start {
        return 1.0;
    }
    let origin = x + dir * start;
    let integral: f64 = midpoint_segments(t2 - start, ray_step)
        .map(|(t, len)| len * sigma.sample(origin + dir * t, theta))
        .sum();
    (-integral).exp()
}

/// Precomputed `T₁⁻¹` lattices together with the λ-scaled kernel.
#[derive(Debug, Clone)]
pub struct TransportOperator {
    pub(crate) lattices: LatticeSet,
    n_theta: usize,
    kernel: Option<ScatterKernel>,
    cfg: TransportConfig,
}

impl TransportOperator {
    /// `circle` bounds the transport domain (normally Ω₁).
    pub fn new(
        sigma: &PhaseField,
        kernel: Option<&ScatterKernel>,
        circle: Circle,
        cfg: &TransportConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if sigma.min_value() < 0.0 {
            return Err(Error::Parameter("absorption must be nonnegative".into()));
        }
        if let Some(k) = kernel {
            if k.profile.grid != sigma.grid {
                return Err(Error::Shape("kernel profile and absorption use different grids".into()));
            }
            if 2 * k.bandwidth() as usize >= sigma.n_theta {
                return Err(Error::Parameter(format!(
                    "kernel bandwidth {} is not resolved by {} directions",
                    k.bandwidth(),
                    sigma.n_theta
                )));
            }
        }
        let kernel = kernel.map(|k| k.scaled(cfg.lambda_scale)).filter(|k| !k.is_zero());
        let lattices = LatticeSet::new(sigma.grid, circle, sigma.n_theta, cfg.ray_step, Some(sigma));
        Ok(TransportOperator { lattices, n_theta: sigma.n_theta, kernel, cfg: *cfg })
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn grid(&self) -> crate::fields::Grid2 {
        self.lattices.grid
    }

    pub fn circle(&self) -> Circle {
        self.lattices.circle
    }

    pub fn config(&self) -> &TransportConfig {
        &self.cfg
    }

    /// The effective kernel `λk`, or `None` when scattering is absent.
    pub fn kernel(&self) -> Option<&ScatterKernel> {
        self.kernel.as_ref()
    }

    fn check(&self, g: &PhaseField) -> Result<()> {
        if g.grid != self.lattices.grid || g.n_theta != self.n_theta {
            return Err(Error::Shape("phase field does not match the transport grid".into()));
        }
        Ok(())
    }

    /// `T₁⁻¹g` with zero incoming data on the transport boundary.
    pub fn t1_inv(&self, g: &PhaseField) -> Result<PhaseField> {
        self.check(g)?;
        let slices: Vec<Vec<f64>> =
            (0..self.n_theta).into_par_iter().map(|l| self.lattices.solve_dir(l, g.slice(l))).collect();
        Ok(PhaseField { grid: g.grid, n_theta: self.n_theta, values: slices.concat() })
    }

    /// Transpose of [`TransportOperator::t1_inv`].
    pub fn t1_inv_transpose(&self, ubar: &PhaseField) -> Result<PhaseField> {
        self.check(ubar)?;
        let slices: Vec<Vec<f64>> = (0..self.n_theta)
            .into_par_iter()
            .map(|l| self.lattices.solve_dir_transpose(l, ubar.slice(l)))
            .collect();
        Ok(PhaseField { grid: ubar.grid, n_theta: self.n_theta, values: slices.concat() })
    }

    /// `λK u`; zero when there is no scattering.
    pub fn k(&self, u: &PhaseField) -> PhaseField {
        match &self.kernel {
            Some(k) => apply_k(k, u, 1.0),
            None => PhaseField { grid: u.grid, n_theta: u.n_theta, values: vec![0.0; u.values.len()] },
        }
    }

    /// Transpose of [`TransportOperator::k`].
    pub fn k_transpose(&self, v: &PhaseField) -> PhaseField {
        match &self.kernel {
            Some(k) => apply_k_transpose(k, v, 1.0),
            None => PhaseField { grid: v.grid, n_theta: v.n_theta, values: vec![0.0; v.values.len()] },
        }
    }
}

/// `T₁⁻¹g` on the disc `circle`.
pub fn apply_t1_inv(sigma: &PhaseField, g: &PhaseField, circle: Circle, cfg: &TransportConfig) -> Result<PhaseField> {
    TransportOperator::new(sigma, None, circle, cfg)?.t1_inv(g)
}

#[derive(Debug, Clone)]
pub struct ForwardSolution {
    pub u: PhaseField,
    /// Number of `T₁⁻¹K` applications performed.
    pub iterations: usize,
    /// `‖u⁽ᵐ⁾ − T₁⁻¹Ku⁽ᵐ⁾ − T₁⁻¹Jf‖ / ‖T₁⁻¹Jf‖` for each iterate.
    pub residual_history: Vec<f64>,
}

/// Consecutive non-decreasing residual ratios that signal divergence.
const DIVERGENCE_STREAK: usize = 5;

/// Tracks residuals of a Neumann iteration and detects non-contraction.
#[derive(Debug, Default)]
pub(crate) struct ContractionMonitor {
    history: Vec<f64>,
    streak: usize,
}

impl ContractionMonitor {
    /// Records a residual; errors once the iteration is judged divergent.
    pub fn push(&mut self, residual: f64) -> Result<()> {
        if let Some(&prev) = self.history.last() {
            let ratio = if prev > 0.0 { residual / prev } else { 0.0 };
            self.streak = if ratio >= 1.0 || !ratio.is_finite() { self.streak + 1 } else { 0 };
            if self.streak >= DIVERGENCE_STREAK {
                self.history.push(residual);
                return Err(Error::NonContractive { iterations: self.history.len(), ratio });
            }
        }
        self.history.push(residual);
        Ok(())
    }

    pub fn last_ratio(&self) -> f64 {
        match self.history.as_slice() {
            [.., a, b] if *a > 0.0 => b / a,
            _ => 0.0,
        }
    }

    pub fn into_history(self) -> Vec<f64> {
        self.history
    }
}

/// Solves the forward problem by Neumann iteration
/// `u⁽⁰⁾ = T₁⁻¹Jf`, `u⁽ᵐ⁺¹⁾ = T₁⁻¹Jf + T₁⁻¹K u⁽ᵐ⁾`. The returned iterate
/// has a verified residual below `neumann_tol`.
pub fn solve_forward_with(op: &TransportOperator, f: &ScalarField) -> Result<ForwardSolution> {
    let cfg = op.config();
    let jf = PhaseField::isotropic(f, op.n_theta())?;
    let base = op.t1_inv(&jf)?;
    let base_norm = base.norm_l2();
    let mut u = base.clone();
    let mut monitor = ContractionMonitor::default();
    for iter in 1..=cfg.neumann_max_iter {
        let next = if op.kernel().is_some() {
            let mut t = op.t1_inv(&op.k(&u))?;
            for (a, b) in t.values.iter_mut().zip(&base.values) {
                *a += b;
            }
            t
        } else {
            base.clone()
        };
        let diff: f64 = u.values.iter().zip(&next.values).map(|(a, b)| (a - b) * (a - b)).sum();
        let diff = (diff * u.grid.cell_area() * u.d_theta()).sqrt();
        let residual = if base_norm > 0.0 { diff / base_norm } else { 0.0 };
        monitor.push(residual)?;
        if residual <= cfg.neumann_tol {
            return Ok(ForwardSolution { u, iterations: iter, residual_history: monitor.into_history() });
        }
        u = next;
    }
    Err(Error::NonContractive { iterations: cfg.neumann_max_iter, ratio: monitor.last_ratio() })
}

/// Builds the transport operator on `circle` and solves the forward problem.
pub fn solve_forward(
    sigma: &PhaseField,
    kernel: Option<&ScatterKernel>,
    f: &ScalarField,
    circle: Circle,
    cfg: &TransportConfig,
) -> Result<ForwardSolution> {
    if f.grid != sigma.grid {
        return Err(Error::Shape("source and absorption use different grids".into()));
    }
    let op = TransportOperator::new(sigma, kernel, circle, cfg)?;
    solve_forward_with(&op, f)
}

/// Power-iteration estimate of the spectral radius of `T₁⁻¹(λK)`,
/// started from `T₁⁻¹J1`.
pub fn estimate_contraction(op: &TransportOperator, iterations: usize) -> Result<f64> {
    if op.kernel().is_none() {
        return Ok(0.0);
    }
    let grid = op.grid();
    let circle = op.circle();
    let one = ScalarField::from_fn(grid, |p| f64::from(circle.contains(p)));
    let mut v = op.t1_inv(&PhaseField::isotropic(&one, op.n_theta())?)?;
    let mut ratio = 0.0;
    for _ in 0..iterations.max(1) {
        let nv = v.norm_l2();
        if nv == 0.0 {
            return Ok(0.0);
        }
        let w = op.t1_inv(&op.k(&v))?;
        ratio = w.norm_l2() / nv;
        let s = 1.0 / w.norm_l2().max(f64::MIN_POSITIVE);
        v = PhaseField { values: w.values.iter().map(|x| x * s).collect(), ..w };
    }
    Ok(ratio)
}
