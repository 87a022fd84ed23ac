//! Source phantoms and absorption coefficients on the grid.

use serde::{Deserialize, Serialize};

use super::grid::{direction_angle, validate_n_theta, Grid2, PhaseField, ScalarField};
use crate::error::{Error, Result};
use crate::geometry::{DiscDomain, Vec2};

/// Subsamples per axis used for area-fraction indicators.
const SUPERSAMPLE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: Vec2,
    pub width: f64,
    pub amp: f64,
}

impl Bump {
    pub fn value(&self, p: Vec2) -> f64 {
        self.amp * (-(p - self.center).norm_sq() / (2.0 * self.width * self.width)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhantomSpec {
    Zero,
    /// `amp · exp(−|x − c|² / 2w²)` truncated to Ω̄.
    Gaussian { center: Vec2, width: f64, amp: f64 },
    /// Indicator of a disc, stored as cell area fractions.
    DiscIndicator { center: Vec2, radius: f64 },
    MultiBump { bumps: Vec<Bump> },
}

impl PhantomSpec {
    fn validate(&self, domain: &DiscDomain) -> Result<()> {
        let omega = domain.omega();
        let check_bump = |b: &Bump| -> Result<()> {
            if !(b.width > 0.0) || !b.amp.is_finite() {
                return Err(Error::Parameter(format!("bad gaussian parameters {b:?}")));
            }
            if !omega.contains(b.center) {
                return Err(Error::Parameter(format!(
                    "gaussian centre ({}, {}) lies outside Ω",
                    b.center.x, b.center.y
                )));
            }
            Ok(())
        };
        match self {
            PhantomSpec::Zero => Ok(()),
            PhantomSpec::Gaussian { center, width, amp } => {
                check_bump(&Bump { center: *center, width: *width, amp: *amp })
            }
            PhantomSpec::MultiBump { bumps } => bumps.iter().try_for_each(check_bump),
            PhantomSpec::DiscIndicator { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::Parameter(format!("disc radius must be positive, got {radius}")));
                }
                if (*center - domain.center).norm() + radius > domain.radius * (1.0 + 1e-12) {
                    return Err(Error::Parameter("disc phantom support escapes Ω".into()));
                }
                Ok(())
            }
        }
    }

    /// Pointwise value of the continuous phantom (zero outside Ω̄).
    pub fn value_at(&self, domain: &DiscDomain, p: Vec2) -> f64 {
        if !domain.omega().contains(p) {
            return 0.0;
        }
        match self {
            PhantomSpec::Zero => 0.0,
            PhantomSpec::Gaussian { center, width, amp } => {
                Bump { center: *center, width: *width, amp: *amp }.value(p)
            }
            PhantomSpec::MultiBump { bumps } => bumps.iter().map(|b| b.value(p)).sum(),
            PhantomSpec::DiscIndicator { center, radius } => {
                f64::from((p - *center).norm_sq() <= radius * radius)
            }
        }
    }
}

/// Samples a phantom on `grid`. Gaussians are point-sampled; disc
/// indicators store the fraction of each cell inside the disc.
pub fn make_phantom(domain: &DiscDomain, grid: Grid2, spec: &PhantomSpec) -> Result<ScalarField> {
    spec.validate(domain)?;
    let field = match spec {
        PhantomSpec::DiscIndicator { center, radius } => {
            let c = *center;
            let r2 = radius * radius;
            area_fraction(grid, |p| (p - c).norm_sq() <= r2)
        }
        _ => ScalarField::from_fn(grid, |p| spec.value_at(domain, p)),
    };
    Ok(field.restrict_to(&domain.omega()))
}

/// Fraction of each cell for which `inside` holds, by supersampling.
pub fn area_fraction(grid: Grid2, inside: impl Fn(Vec2) -> bool) -> ScalarField {
    let (dx, dy) = (grid.dx(), grid.dy());
    let n = SUPERSAMPLE;
    let inv = 1.0 / (n * n) as f64;
    ScalarField::from_fn(grid, |c| {
        let mut hits = 0usize;
        for a in 0..n {
            for b in 0..n {
                let p = Vec2::new(
                    c.x + dx * ((a as f64 + 0.5) / n as f64 - 0.5),
                    c.y + dy * ((b as f64 + 0.5) / n as f64 - 0.5),
                );
                hits += usize::from(inside(p));
            }
        }
        hits as f64 * inv
    })
}

/// How a coefficient given on Ω is continued into Ω₁.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    /// Quintic smoothstep from 1 on ∂Ω to 0 on ∂Ω₁ (C² across both).
    #[default]
    Cutoff,
    /// Zero outside Ω (cell area fractions at the rim).
    None,
}

/// Spatial profile `χ` equal to 1 on Ω and continued into Ω₁ per `ext`.
pub fn extension_profile(domain: &DiscDomain, grid: Grid2, ext: Extension) -> ScalarField {
    let (c, r, r1) = (domain.center, domain.radius, domain.enlarged_radius);
    match ext {
        Extension::Cutoff => ScalarField::from_fn(grid, |p| cutoff((p - c).norm(), r, r1)),
        Extension::None => area_fraction(grid, |p| (p - c).norm_sq() <= r * r),
    }
}

fn cutoff(d: f64, r: f64, r1: f64) -> f64 {
    if d <= r {
        1.0
    } else if d >= r1 {
        0.0
    } else {
        let s = (d - r) / (r1 - r);
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Absorption coefficient `σ(x, θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaSpec {
    Zero,
    Constant {
        value: f64,
        #[serde(default)]
        extension: Extension,
    },
    /// `base + amp · exp(−|x − c|²/2w²)` on Ω.
    Blob {
        base: f64,
        amp: f64,
        center: Vec2,
        width: f64,
        #[serde(default)]
        extension: Extension,
    },
    /// `value + amp · cos θ`, direction dependent; requires `|amp| ≤ value`.
    Anisotropic {
        value: f64,
        amp: f64,
        #[serde(default)]
        extension: Extension,
    },
}

impl SigmaSpec {
    pub fn constant(value: f64) -> Self {
        SigmaSpec::Constant { value, extension: Extension::Cutoff }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            SigmaSpec::Zero => true,
            SigmaSpec::Constant { value, .. } => *value >= 0.0 && value.is_finite(),
            SigmaSpec::Blob { base, amp, width, .. } => {
                *base >= 0.0 && base + amp.min(0.0) >= 0.0 && *width > 0.0
            }
            SigmaSpec::Anisotropic { value, amp, .. } => *value >= 0.0 && amp.abs() <= *value,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("absorption must be nonnegative: {self:?}")))
        }
    }

    /// Multiplies every coefficient by `s` (used for perturbation studies).
    pub fn scaled(&self, s: f64) -> SigmaSpec {
        match *self {
            SigmaSpec::Zero => SigmaSpec::Zero,
            SigmaSpec::Constant { value, extension } => SigmaSpec::Constant { value: value * s, extension },
            SigmaSpec::Blob { base, amp, center, width, extension } => {
                SigmaSpec::Blob { base: base * s, amp: amp * s, center, width, extension }
            }
            SigmaSpec::Anisotropic { value, amp, extension } => {
                SigmaSpec::Anisotropic { value: value * s, amp: amp * s, extension }
            }
        }
    }
}

/// Samples `σ` as a phase field (constant in θ unless anisotropic).
pub fn make_sigma(domain: &DiscDomain, grid: Grid2, n_theta: usize, spec: &SigmaSpec) -> Result<PhaseField> {
    spec.validate()?;
    validate_n_theta(n_theta)?;
    let (spatial, angular_amp, ext) = match *spec {
        SigmaSpec::Zero => return PhaseField::zeros(grid, n_theta),
        SigmaSpec::Constant { value, extension } => (ScalarField::from_fn(grid, |_| value), 0.0, extension),
        SigmaSpec::Blob { base, amp, center, width, extension } => {
            let b = Bump { center, width, amp };
            (ScalarField::from_fn(grid, |p| base + b.value(p)), 0.0, extension)
        }
        SigmaSpec::Anisotropic { value, amp, extension } => (ScalarField::from_fn(grid, |_| value), amp, extension),
    };
    let profile = extension_profile(domain, grid, ext);
    let omega1 = domain.omega1();
    let mut values = Vec::with_capacity(grid.len() * n_theta);
    for l in 0..n_theta {
        let c = angular_amp * direction_angle(l, n_theta).cos();
        for (k, p) in grid.nodes() {
            let v = if omega1.contains(p) { (spatial.values[k] + c) * profile.values[k] } else { 0.0 };
            values.push(v);
        }
    }
    PhaseField::from_values(grid, n_theta, values)
}
