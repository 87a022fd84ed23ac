//! Empirical look at the stability estimate `‖f‖_{L²(Ω)} ≤ C‖X*Xf‖_{H¹(Ω₁)}`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitDisc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{dot, Bump, Grid2, ScalarField};
use crate::geometry::{Circle, DiscDomain, Vec2};
use crate::measurement::MeasurementOperator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub n_probe: usize,
    pub seed: u64,
    /// Lanczos steps for the smallest Ritz value; 0 skips it.
    pub lanczos_steps: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { n_probe: 8, seed: 7, lanczos_steps: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    /// `1 / sigma_min`, a lower bound for the best constant `C`.
    pub c_estimate: f64,
    /// Smallest `‖X*Xf‖_{H¹(Ω₁)}` over the unit-norm probes.
    pub sigma_min: f64,
    /// Square root of the smallest Ritz value of `(X*X)ᵀ(1 − Δ)(X*X)` on Ω.
    pub lanczos_sigma_min: Option<f64>,
    pub probe_ratios: Vec<f64>,
}

/// Grid pairs `(k, k')` of horizontal and vertical neighbours inside `circle`.
fn neighbour_pairs(grid: Grid2, circle: &Circle) -> (Vec<(usize, usize, f64)>, Vec<bool>) {
    let inside = grid.mask(circle);
    let mut pairs = Vec::new();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.index(i, j);
            if !inside[k] {
                continue;
            }
            if i + 1 < grid.nx && inside[k + 1] {
                pairs.push((k, k + 1, 1.0 / grid.dx()));
            }
            if j + 1 < grid.ny && inside[k + grid.nx] {
                pairs.push((k, k + grid.nx, 1.0 / grid.dy()));
            }
        }
    }
    (pairs, inside)
}

/// Discrete `‖h‖_{H¹}` over the nodes inside `circle`: the L² term plus
/// forward differences between neighbouring inside nodes.
pub fn h1_norm(h: &ScalarField, circle: &Circle) -> f64 {
    let (pairs, inside) = neighbour_pairs(h.grid, circle);
    let l2: f64 = h.values.iter().zip(&inside).filter(|(_, &m)| m).map(|(v, _)| v * v).sum();
    let grad: f64 = pairs.iter().map(|&(a, b, s)| ((h.values[b] - h.values[a]) * s).powi(2)).sum();
    ((l2 + grad) * h.grid.cell_area()).sqrt()
}

/// `(1 − Δ)`-type Gram operator whose quadratic form is `h1_norm²/cell`.
fn h1_gram(h: &[f64], pairs: &[(usize, usize, f64)], inside: &[bool]) -> Vec<f64> {
    let mut out: Vec<f64> = h.iter().zip(inside).map(|(v, &m)| if m { *v } else { 0.0 }).collect();
    for &(a, b, s) in pairs {
        let d = (h[b] - h[a]) * s * s;
        out[b] += d;
        out[a] -= d;
    }
    out
}

/// Smooth random source: a few Gaussian bumps of width ≥ 0.1 inside Ω,
/// so probes describe the same function at every resolution.
fn random_probe(domain: &DiscDomain, grid: Grid2, rng: &mut ChaCha8Rng) -> ScalarField {
    let omega = domain.omega();
    let bumps: Vec<Bump> = (0..4)
        .map(|_| {
            let [x, y]: [f64; 2] = UnitDisc.sample(rng);
            Bump {
                center: omega.center + Vec2::new(x, y) * (0.6 * omega.radius),
                width: rng.random_range(0.1..0.25) * omega.radius,
                amp: rng.random_range(-1.0..1.0),
            }
        })
        .collect();
    let f = ScalarField::from_fn(grid, |p| {
        if omega.contains(p) {
            bumps.iter().map(|b| b.value(p)).sum()
        } else {
            0.0
        }
    });
    let n = f.norm_l2_in(&omega);
    f.scaled(1.0 / n)
}

/// Probes `f ↦ ‖X*Xf‖_{H¹(Ω₁)}` on random unit sources and, optionally,
/// with a short Lanczos run.
pub fn stability_probe(op: &MeasurementOperator, domain: &DiscDomain, cfg: &ProbeConfig) -> Result<StabilityReport> {
    if cfg.n_probe == 0 {
        return Err(Error::Parameter("n_probe must be >= 1".into()));
    }
    let grid = op.grid_2d();
    let omega1 = domain.omega1();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut probe_ratios = Vec::with_capacity(cfg.n_probe);
    let mut first = None;
    for _ in 0..cfg.n_probe {
        let f = random_probe(domain, grid, &mut rng);
        probe_ratios.push(h1_norm(&op.normal(&f)?, &omega1));
        first.get_or_insert(f);
    }
    let sigma_min = probe_ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let lanczos_sigma_min = match (cfg.lanczos_steps, first) {
        (0, _) | (_, None) => None,
        (m, Some(f0)) => Some(lanczos_min(op, domain, &f0, m)?.max(0.0).sqrt()),
    };
    Ok(StabilityReport { c_estimate: 1.0 / sigma_min, sigma_min, lanczos_sigma_min, probe_ratios })
}

/// Smallest Ritz value of `P N G N P` (N = X*X, G the H¹ Gram matrix,
/// P the restriction to Ω) with full reorthogonalization.
fn lanczos_min(op: &MeasurementOperator, domain: &DiscDomain, start: &ScalarField, steps: usize) -> Result<f64> {
    let grid = op.grid_2d();
    let support = grid.mask(&domain.omega());
    let (pairs, inside) = neighbour_pairs(grid, &domain.omega1());
    let apply = |v: &[f64]| -> Result<Vec<f64>> {
        let n1 = op.normal(&ScalarField { grid, values: v.to_vec() })?;
        let gn = h1_gram(&n1.values, &pairs, &inside);
        let mut out = op.normal(&ScalarField { grid, values: gn })?.values;
        for (o, &m) in out.iter_mut().zip(&support) {
            if !m {
                *o = 0.0;
            }
        }
        Ok(out)
    };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let norm0 = dot(&start.values, &start.values).sqrt();
    basis.push(start.values.iter().map(|v| v / norm0).collect());
    let mut alphas = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    for k in 0..steps {
        let mut w = apply(&basis[k])?;
        let a = dot(&w, &basis[k]);
        alphas.push(a);
        for q in &basis {
            let c = dot(&w, q);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= c * qi;
            }
        }
        let b = dot(&w, &w).sqrt();
        if k + 1 == steps || b <= 1e-14 * a.abs() {
            break;
        }
        betas.push(b);
        basis.push(w.iter().map(|v| v / b).collect());
    }
    let m = alphas.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j {
            betas[i]
        } else if j + 1 == i {
            betas[j]
        } else {
            0.0
        }
    });
    // Cell-area factors cancel between ‖Nf‖²_{H¹} and ‖f‖².
    let eig = SymmetricEigen::new(t);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}
