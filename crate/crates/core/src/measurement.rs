//! Boundary measurements: the trace `R₊` of the transport solution on the
//! outgoing boundary, the attenuated transform `I_σ`, and the transposes
//! of both with respect to `dΣ`.
//!
//! The measurement map is evaluated as `Xf = B s` with
//! `s = Σ_{m≤N} (KT₁⁻¹)^m Jf`, where `B` marches each boundary ray back
//! through the transport disc. The number of terms `N` is fixed when the
//! operator is built, so `X` is a fixed linear map and its transpose is exact.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Grid2, PhaseField, ScalarField, ScatterKernel};
use crate::geometry::{midpoint_segments, BoundaryGrid, Circle, Vec2};
use crate::transport::{attenuation_e, ContractionMonitor, TransportConfig, TransportOperator};

/// Values on the samples of a [`BoundaryGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySinogram {
    pub grid: Arc<BoundaryGrid>,
    pub values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    beta: f64,
    alpha: f64,
    weight: f64,
    value: f64,
}

/// Sidecar of the binary sinogram format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinogramSidecar {
    pub n_beta: usize,
    pub n_alpha: usize,
    pub n_samples: usize,
    pub center: [f64; 2],
    pub radius: f64,
    pub kind: String,
}

impl BoundarySinogram {
    pub fn zeros(grid: Arc<BoundaryGrid>) -> Self {
        let n = grid.len();
        BoundarySinogram { grid, values: vec![0.0; n] }
    }

    pub fn from_values(grid: Arc<BoundaryGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("sinogram has {} values for {} samples", values.len(), grid.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("sinogram values must be finite".into()));
        }
        Ok(BoundarySinogram { grid, values })
    }

    /// `Σ g h · w`.
    pub fn dot(&self, other: &BoundarySinogram) -> f64 {
        self.grid.samples.iter().zip(self.values.iter().zip(&other.values)).map(|(s, (a, b))| s.sigma_weight * a * b).sum()
    }

    /// `‖g‖_Σ`.
    pub fn norm_sigma(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> BoundarySinogram {
        BoundarySinogram { grid: self.grid.clone(), values: self.values.iter().map(|v| v * s).collect() }
    }

    /// `self − other` on a shared grid.
    pub fn minus(&self, other: &BoundarySinogram) -> Result<BoundarySinogram> {
        if !self.grid.same_layout(&other.grid) {
            return Err(Error::Shape("sinograms live on different boundary grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(BoundarySinogram { grid: self.grid.clone(), values })
    }

    /// Adds i.i.d. Gaussian noise of standard deviation `std` to every
    /// sample. Returns the noisy data and the expected `Σ`-norm of the
    /// noise, `std · (Σ w)^{1/2}`.
    pub fn with_gaussian_noise<R: Rng + ?Sized>(&self, std: f64, rng: &mut R) -> Result<(BoundarySinogram, f64)> {
        let normal = Normal::new(0.0, std)
            .ok()
            .filter(|_| std >= 0.0)
            .ok_or_else(|| Error::Parameter(format!("noise deviation must be >= 0, got {std}")))?;
        let values = self.values.iter().map(|v| v + normal.sample(rng)).collect();
        Ok((BoundarySinogram { grid: self.grid.clone(), values }, std * self.grid.total_weight().sqrt()))
    }

    /// CSV with header `beta,alpha,weight,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (s, &value) in self.grid.samples.iter().zip(&self.values) {
            w.serialize(CsvRow { beta: s.boundary_angle, alpha: s.direction_angle, weight: s.sigma_weight, value })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV written for `grid`; rows must match its samples.
    pub fn read_csv(path: &Path, grid: Arc<BoundaryGrid>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut values = Vec::with_capacity(grid.len());
        for (line, row) in r.deserialize::<CsvRow>().enumerate() {
            let row = row?;
            let Some(s) = grid.samples.get(line) else {
                return Err(Error::Shape(format!("{}: more rows than boundary samples", path.display())));
            };
            if (s.boundary_angle - row.beta).abs() > 1e-9 || (s.direction_angle - row.alpha).abs() > 1e-9 {
                return Err(Error::Shape(format!("{}: row {} does not match the boundary grid", path.display(), line + 2)));
            }
            values.push(row.value);
        }
        Self::from_values(grid, values)
    }

    /// Binary payload plus JSON sidecar, like the field files.
    pub fn write_bin(&self, stem: &Path) -> Result<Vec<PathBuf>> {
        let c = self.grid.circle;
        let meta = SinogramSidecar {
            n_beta: self.grid.n_beta,
            n_alpha: self.grid.n_alpha,
            n_samples: self.grid.len(),
            center: [c.center.x, c.center.y],
            radius: c.radius,
            kind: "sinogram".into(),
        };
        let bin = stem.with_extension("bin");
        let json = stem.with_extension("json");
        let bytes: Vec<u8> = self.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(&bin, bytes)?;
        fs::write(&json, serde_json::to_string_pretty(&meta)?)?;
        Ok(vec![bin, json])
    }
}

/// One boundary ray: exit point, direction, length back to the transport
/// boundary, and the phase-grid direction it reads.
#[derive(Debug, Clone, Copy)]
struct RayPlan {
    x: Vec2,
    dir: Vec2,
    back: f64,
    l: usize,
}

/// `X`, `X*`, `I_σ` and `I_σ*` on a fixed transport grid and boundary grid.
#[derive(Debug, Clone)]
pub struct MeasurementOperator {
    transport: TransportOperator,
    sigma: PhaseField,
    grid: Arc<BoundaryGrid>,
    rays: Vec<RayPlan>,
    /// `rays` index ranges per boundary direction.
    by_alpha: Vec<(usize, std::ops::Range<usize>)>,
    /// Directions in which σ is not identically zero.
    attenuated: Vec<bool>,
    ray_step: f64,
    neumann_terms: usize,
}

impl MeasurementOperator {
    /// `transport_circle` is Ω₁; the boundary grid may sit on Ω₁ or on Ω.
    pub fn new(
        sigma: &PhaseField,
        kernel: Option<&ScatterKernel>,
        transport_circle: Circle,
        grid: Arc<BoundaryGrid>,
        cfg: &TransportConfig,
    ) -> Result<Self> {
        let transport = TransportOperator::new(sigma, kernel, transport_circle, cfg)?;
        Self::from_transport(transport, sigma, grid)
    }

    fn from_transport(transport: TransportOperator, sigma: &PhaseField, grid: Arc<BoundaryGrid>) -> Result<Self> {
        let n_theta = transport.n_theta();
        if grid.n_alpha == 0 || !n_theta.is_multiple_of(grid.n_alpha) {
            return Err(Error::Parameter(format!(
                "boundary directions ({}) must divide the phase directions ({n_theta})",
                grid.n_alpha
            )));
        }
        let tc = transport.circle();
        let mc = grid.circle;
        if (mc.center - tc.center).norm() + mc.radius > tc.radius * (1.0 + 1e-12) {
            return Err(Error::Domain("measurement circle must lie inside the transport disc".into()));
        }
        let stride = n_theta / grid.n_alpha;
        let rays: Vec<RayPlan> = grid
            .samples
            .iter()
            .map(|s| {
                let (x, dir) = grid.ray_of(s);
                let back = tc.line_crossings(x, dir).map_or(0.0, |(t1, _)| (-t1).max(0.0));
                RayPlan { x, dir, back, l: s.alpha_index * stride }
            })
            .collect();
        let mut by_alpha: Vec<(usize, std::ops::Range<usize>)> = Vec::new();
        for (i, r) in rays.iter().enumerate() {
            match by_alpha.last_mut() {
                Some((l, range)) if *l == r.l && range.end == i => range.end = i + 1,
                _ => by_alpha.push((r.l, i..i + 1)),
            }
        }
        let ray_step = transport.config().ray_step;
        let attenuated = (0..n_theta).map(|l| sigma.slice(l).iter().any(|&v| v != 0.0)).collect();
        let mut op = MeasurementOperator {
            transport,
            sigma: sigma.clone(),
            grid,
            rays,
            by_alpha,
            attenuated,
            ray_step,
            neumann_terms: 0,
        };
        op.neumann_terms = op.calibrate_terms()?;
        Ok(op)
    }

    /// Smallest `N` for which the next Neumann term of an indicator source
    /// falls below `neumann_tol` relative to the first.
    fn calibrate_terms(&self) -> Result<usize> {
        if self.transport.kernel().is_none() {
            return Ok(0);
        }
        let cfg = *self.transport.config();
        let circle = self.transport.circle();
        let one = ScalarField::from_fn(self.grid_2d(), |p| f64::from(circle.contains(p)));
        let jf = PhaseField::isotropic(&one, self.transport.n_theta())?;
        let base = jf.norm_l2();
        let mut term = jf;
        let mut monitor = ContractionMonitor::default();
        for n in 1..=cfg.neumann_max_iter {
            term = self.transport.k(&self.transport.t1_inv(&term)?);
            let r = term.norm_l2() / base;
            monitor.push(r)?;
            if r <= cfg.neumann_tol {
                return Ok(n);
            }
        }
        Err(Error::NonContractive { iterations: cfg.neumann_max_iter, ratio: monitor.last_ratio() })
    }

    pub fn grid_2d(&self) -> Grid2 {
        self.transport.grid()
    }

    pub fn boundary_grid(&self) -> &Arc<BoundaryGrid> {
        &self.grid
    }

    pub fn transport(&self) -> &TransportOperator {
        &self.transport
    }

    /// Number of scattering terms `N` in `Σ_{m≤N} (KT₁⁻¹)^m`.
    pub fn neumann_terms(&self) -> usize {
        self.neumann_terms
    }

    fn check_field(&self, f: &ScalarField) -> Result<()> {
        if f.grid != self.grid_2d() {
            return Err(Error::Shape("field grid does not match the operator grid".into()));
        }
        Ok(())
    }

    fn check_sinogram(&self, g: &BoundarySinogram) -> Result<()> {
        if !g.grid.same_layout(&self.grid) {
            return Err(Error::Shape("sinogram does not live on the operator's boundary grid".into()));
        }
        Ok(())
    }

    /// Attenuated midpoint sum of `src` back along one ray, optionally
    /// scattering `coef × weight` into `out` instead (the transpose).
    #[inline]
    fn march(&self, ray: &RayPlan, src: &[f64], transpose: Option<(&mut [f64], f64)>) -> f64 {
        let g = self.grid_2d();
        let sig = self.sigma.slice(ray.l);
        let attenuated = self.attenuated[ray.l];
        let mut surv = 1.0;
        let mut acc = 0.0;
        let mut out = transpose;
        for (t, len) in midpoint_segments(ray.back, self.ray_step) {
            let p = ray.x - ray.dir * t;
            let w = if attenuated {
                let h = (-0.5 * len * g.interpolate(sig, p)).exp();
                let w = len * surv * h;
                surv *= h * h;
                w
            } else {
                len
            };
            match out.as_mut() {
                Some((o, coef)) => g.scatter(o, p, w * *coef),
                None => acc += w * g.interpolate(src, p),
            }
        }
        acc
    }

    /// `B`: boundary values of `T₁⁻¹s` from a phase-space source.
    fn trace(&self, s: &PhaseField) -> Vec<f64> {
        self.rays.par_iter().map(|r| self.march(r, s.slice(r.l), None)).collect()
    }

    /// Transpose of [`MeasurementOperator::trace`].
    fn trace_transpose(&self, coef: &[f64]) -> PhaseField {
        let g = self.grid_2d();
        let n = g.len();
        let parts: Vec<(usize, Vec<f64>)> = self
            .by_alpha
            .par_iter()
            .map(|(l, range)| {
                let mut out = vec![0.0; n];
                for i in range.clone() {
                    if coef[i] != 0.0 {
                        self.march(&self.rays[i], &[], Some((&mut out, coef[i])));
                    }
                }
                (*l, out)
            })
            .collect();
        let mut field = PhaseField { grid: g, n_theta: self.transport.n_theta(), values: vec![0.0; n * self.transport.n_theta()] };
        for (l, part) in parts {
            for (a, b) in field.slice_mut(l).iter_mut().zip(&part) {
                *a += b;
            }
        }
        field
    }

    fn sinogram(&self, values: Vec<f64>) -> BoundarySinogram {
        BoundarySinogram { grid: self.grid.clone(), values }
    }

    /// `R₊T₁⁻¹g` for a phase-space source `g`.
    pub fn boundary_transport(&self, g: &PhaseField) -> Result<BoundarySinogram> {
        if g.grid != self.grid_2d() || g.n_theta != self.transport.n_theta() {
            return Err(Error::Shape("phase field does not match the operator grid".into()));
        }
        Ok(self.sinogram(self.trace(g)))
    }

    /// `I_σ f`, the measurement without scattering.
    pub fn apply_i_sigma(&self, f: &ScalarField) -> Result<BoundarySinogram> {
        self.check_field(f)?;
        let values = self.rays.par_iter().map(|r| self.march(r, &f.values, None)).collect();
        Ok(self.sinogram(values))
    }

    /// `Xf`.
    pub fn apply(&self, f: &ScalarField) -> Result<BoundarySinogram> {
        if self.neumann_terms == 0 {
            return self.apply_i_sigma(f);
        }
        self.check_field(f)?;
        let jf = PhaseField::isotropic(f, self.transport.n_theta())?;
        let mut s = jf.clone();
        for _ in 0..self.neumann_terms {
            s = self.transport.k(&self.transport.t1_inv(&s)?);
            for (a, b) in s.values.iter_mut().zip(&jf.values) {
                *a += b;
            }
        }
        Ok(self.sinogram(self.trace(&s)))
    }

    /// `Σ`-weights times `g`, divided by the cell area.
    fn adjoint_coefficients(&self, g: &BoundarySinogram) -> Vec<f64> {
        let inv_area = 1.0 / self.grid_2d().cell_area();
        self.grid.samples.iter().zip(&g.values).map(|(s, v)| s.sigma_weight * v * inv_area).collect()
    }

    /// `Jᵀ`: sum over directions.
    fn collapse(&self, q: &PhaseField) -> ScalarField {
        let g = self.grid_2d();
        let mut out = vec![0.0; g.len()];
        for l in 0..q.n_theta {
            for (a, b) in out.iter_mut().zip(q.slice(l)) {
                *a += b;
            }
        }
        ScalarField { grid: g, values: out }
    }

    /// `I_σ* g` as the exact transpose of [`MeasurementOperator::apply_i_sigma`].
    pub fn i_sigma_adjoint(&self, g: &BoundarySinogram) -> Result<ScalarField> {
        self.check_sinogram(g)?;
        Ok(self.collapse(&self.trace_transpose(&self.adjoint_coefficients(g))))
    }

    /// `X* g`, the exact transpose of [`MeasurementOperator::apply`] for the
    /// inner products `⟨·,·⟩_Σ` and `Σ f h ΔxΔy`.
    pub fn adjoint(&self, g: &BoundarySinogram) -> Result<ScalarField> {
        if self.neumann_terms == 0 {
            return self.i_sigma_adjoint(g);
        }
        self.check_sinogram(g)?;
        let r = self.trace_transpose(&self.adjoint_coefficients(g));
        let mut q = r.clone();
        for _ in 0..self.neumann_terms {
            q = self.transport.t1_inv_transpose(&self.transport.k_transpose(&q))?;
            for (a, b) in q.values.iter_mut().zip(&r.values) {
                *a += b;
            }
        }
        Ok(self.collapse(&q))
    }

    /// `X*Xf`.
    pub fn normal(&self, f: &ScalarField) -> Result<ScalarField> {
        self.adjoint(&self.apply(f)?)
    }

    /// `I_σ* g` from the continuous formula `∫ E(x, θ) g♯(x, θ) dθ`, where
    /// `g♯` carries boundary values back along rays (linear in the
    /// boundary angle). Only nodes inside the measurement circle are set.
    pub fn i_sigma_adjoint_direct(&self, g: &BoundarySinogram) -> Result<ScalarField> {
        self.check_sinogram(g)?;
        let bg = &*self.grid;
        let (nb, na) = (bg.n_beta, bg.n_alpha);
        let mut table = vec![None; nb * na];
        for (s, &v) in bg.samples.iter().zip(&g.values) {
            table[s.alpha_index * nb + s.beta_index] = Some(v);
        }
        let circle = bg.circle;
        let tc = self.transport.circle();
        let d_alpha = 2.0 * std::f64::consts::PI / na as f64;
        let grid = self.grid_2d();
        let values = grid
            .nodes()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&(_, p)| {
                if !circle.contains(p) {
                    return 0.0;
                }
                let mut acc = 0.0;
                for m in 0..na {
                    let alpha = d_alpha * m as f64;
                    let dir = Vec2::from_angle(alpha);
                    let Some((_, t2)) = circle.line_crossings(p, dir) else { continue };
                    let exit = p + dir * t2 - circle.center;
                    let beta = exit.y.atan2(exit.x).rem_euclid(2.0 * std::f64::consts::PI);
                    let h = sharp(&table[m * nb..(m + 1) * nb], beta);
                    if h != 0.0 {
                        acc += attenuation_e(&self.sigma, &tc, p, alpha, self.ray_step) * h;
                    }
                }
                acc * d_alpha
            })
            .collect();
        Ok(ScalarField { grid, values })
    }
}

/// Linear interpolation in the boundary angle over `β_i = 2π(i + ½)/n`;
/// a missing (incoming) neighbour defers to the present one.
fn sharp(row: &[Option<f64>], beta: f64) -> f64 {
    let n = row.len();
    let t = beta / (2.0 * std::f64::consts::PI) * n as f64 - 0.5;
    let i0 = t.floor();
    let w = t - i0;
    let a = row[(i0 as isize).rem_euclid(n as isize) as usize];
    let b = row[((i0 as isize) + 1).rem_euclid(n as isize) as usize];
    match (a, b) {
        (Some(a), Some(b)) => a + w * (b - a),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => 0.0,
    }
}

/// `Xf` for a one-off configuration.
pub fn apply_x(
    sigma: &PhaseField,
    kernel: Option<&ScatterKernel>,
    f: &ScalarField,
    transport_circle: Circle,
    grid: Arc<BoundaryGrid>,
    cfg: &TransportConfig,
) -> Result<BoundarySinogram> {
    MeasurementOperator::new(sigma, kernel, transport_circle, grid, cfg)?.apply(f)
}

/// `X* g` for a one-off configuration.
pub fn apply_x_star(
    sigma: &PhaseField,
    kernel: Option<&ScatterKernel>,
    g: &BoundarySinogram,
    transport_circle: Circle,
    cfg: &TransportConfig,
) -> Result<ScalarField> {
    MeasurementOperator::new(sigma, kernel, transport_circle, g.grid.clone(), cfg)?.adjoint(g)
}

pub fn apply_i_sigma(
    sigma: &PhaseField,
    f: &ScalarField,
    transport_circle: Circle,
    grid: Arc<BoundaryGrid>,
    cfg: &TransportConfig,
) -> Result<BoundarySinogram> {
    MeasurementOperator::new(sigma, None, transport_circle, grid, cfg)?.apply_i_sigma(f)
}

/// `I_σ* g` as the discrete transpose.
pub fn apply_i_sigma_star(
    sigma: &PhaseField,
    g: &BoundarySinogram,
    transport_circle: Circle,
    cfg: &TransportConfig,
) -> Result<ScalarField> {
    MeasurementOperator::new(sigma, None, transport_circle, g.grid.clone(), cfg)?.i_sigma_adjoint(g)
}

/// `I_σ* g` from the continuous back-projection formula.
pub fn apply_i_sigma_star_direct(
    sigma: &PhaseField,
    g: &BoundarySinogram,
    transport_circle: Circle,
    cfg: &TransportConfig,
) -> Result<ScalarField> {
    MeasurementOperator::new(sigma, None, transport_circle, g.grid.clone(), cfg)?.i_sigma_adjoint_direct(g)
}
