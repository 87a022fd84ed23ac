//! Scattering kernels as finite angular-mode sums
//! `k(x, θ, θ') = Σⱼ Θⱼ(θ) κⱼ(x, θ')` with `κⱼ(x, θ') = cⱼ χ(x) Φⱼ(θ')`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::grid::{Grid2, ScalarField};
use super::phantom::{extension_profile, Extension};
use crate::error::{Error, Result};
use crate::geometry::{DiscDomain, Vec2};

/// Real Fourier mode on S¹.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FourierMode {
    Const,
    Cos(u32),
    Sin(u32),
}

impl FourierMode {
    #[inline]
    pub fn eval(self, angle: f64) -> f64 {
        match self {
            FourierMode::Const => 1.0,
            FourierMode::Cos(m) => (m as f64 * angle).cos(),
            FourierMode::Sin(m) => (m as f64 * angle).sin(),
        }
    }

    pub fn order(self) -> u32 {
        match self {
            FourierMode::Const => 0,
            FourierMode::Cos(m) | FourierMode::Sin(m) => m,
        }
    }

    /// `H¹(S¹)` norm.
    pub fn h1_norm(self) -> f64 {
        let m = self.order() as f64;
        match self {
            FourierMode::Const => (2.0 * PI).sqrt(),
            _ => (PI * (1.0 + m * m)).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMode {
    /// `Θⱼ`, the dependence on the outgoing direction θ.
    pub outgoing: FourierMode,
    /// `Φⱼ`, the dependence on the incoming direction θ'.
    pub incoming: FourierMode,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterKernel {
    pub modes: Vec<KernelMode>,
    /// Spatial factor `χ(x)`, shared by all modes.
    pub profile: ScalarField,
}

impl ScatterKernel {
    pub fn new(modes: Vec<KernelMode>, profile: ScalarField) -> Self {
        ScatterKernel { modes, profile }
    }

    /// Henyey–Greenstein-type kernel on S¹,
    /// `albedo/2π · Σ_{|m|≤J} g^{|m|} e^{im(θ−θ')}`, as real cos/sin pairs.
    /// Modes with vanishing coefficient are dropped.
    pub fn henyey_greenstein(g: f64, albedo_scale: f64, truncation: u32, profile: ScalarField) -> Result<Self> {
        if !(g.abs() < 1.0) {
            return Err(Error::Parameter(format!("anisotropy g must lie in (-1, 1), got {g}")));
        }
        if !(albedo_scale >= 0.0 && albedo_scale.is_finite()) {
            return Err(Error::Parameter(format!("albedo scale must be >= 0, got {albedo_scale}")));
        }
        if truncation < 1 {
            return Err(Error::Parameter("mode truncation J must be >= 1".into()));
        }
        let mut modes = vec![KernelMode {
            outgoing: FourierMode::Const,
            incoming: FourierMode::Const,
            coeff: albedo_scale / (2.0 * PI),
        }];
        for m in 1..=truncation {
            let c = albedo_scale / PI * g.powi(m as i32);
            if c == 0.0 {
                continue;
            }
            modes.push(KernelMode { outgoing: FourierMode::Cos(m), incoming: FourierMode::Cos(m), coeff: c });
            modes.push(KernelMode { outgoing: FourierMode::Sin(m), incoming: FourierMode::Sin(m), coeff: c });
        }
        Ok(ScatterKernel { modes, profile })
    }

    pub fn isotropic(albedo_scale: f64, profile: ScalarField) -> Result<Self> {
        Self::henyey_greenstein(0.0, albedo_scale, 1, profile)
    }

    #[inline]
    pub fn eval(&self, x: Vec2, theta: f64, theta_prime: f64) -> f64 {
        let chi = self.profile.sample(x);
        chi * self
            .modes
            .iter()
            .map(|m| m.coeff * m.outgoing.eval(theta) * m.incoming.eval(theta_prime))
            .sum::<f64>()
    }

    /// The kernel `λk`.
    pub fn scaled(&self, lambda: f64) -> ScatterKernel {
        let modes = self.modes.iter().map(|m| KernelMode { coeff: m.coeff * lambda, ..*m }).collect();
        ScatterKernel { modes, profile: self.profile.clone() }
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.coeff == 0.0) || self.profile.values.iter().all(|&v| v == 0.0)
    }

    /// `Σⱼ ‖Θⱼ‖_{H¹} ‖κⱼ‖_∞`; finite for any finite truncation.
    pub fn mode_norm_sum(&self) -> f64 {
        let chi = self.profile.max_abs();
        self.modes.iter().map(|m| m.outgoing.h1_norm() * m.coeff.abs() * chi).sum()
    }

    /// Highest angular order present.
    pub fn bandwidth(&self) -> u32 {
        self.modes.iter().map(|m| m.outgoing.order().max(m.incoming.order())).max().unwrap_or(0)
    }
}

/// Scattering kernel as it appears in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    #[default]
    None,
    Isotropic {
        albedo_scale: f64,
        #[serde(default)]
        extension: Extension,
    },
    HenyeyGreenstein {
        g: f64,
        albedo_scale: f64,
        truncation: u32,
        #[serde(default)]
        extension: Extension,
    },
}

impl KernelSpec {
    /// `None` when the spec describes no scattering.
    pub fn build(&self, domain: &DiscDomain, grid: Grid2) -> Result<Option<ScatterKernel>> {
        match *self {
            KernelSpec::None => Ok(None),
            KernelSpec::Isotropic { albedo_scale, extension } => {
                ScatterKernel::isotropic(albedo_scale, extension_profile(domain, grid, extension)).map(Some)
            }
            KernelSpec::HenyeyGreenstein { g, albedo_scale, truncation, extension } => {
                ScatterKernel::henyey_greenstein(g, albedo_scale, truncation, extension_profile(domain, grid, extension))
                    .map(Some)
            }
        }
    }

    pub fn albedo_scale(&self) -> f64 {
        match *self {
            KernelSpec::None => 0.0,
            KernelSpec::Isotropic { albedo_scale, .. } | KernelSpec::HenyeyGreenstein { albedo_scale, .. } => {
                albedo_scale
            }
        }
    }

    /// Same kernel with the albedo multiplied by `s`.
    pub fn scaled(&self, s: f64) -> KernelSpec {
        match *self {
            KernelSpec::None => KernelSpec::None,
            KernelSpec::Isotropic { albedo_scale, extension } => {
                KernelSpec::Isotropic { albedo_scale: albedo_scale * s, extension }
            }
            KernelSpec::HenyeyGreenstein { g, albedo_scale, truncation, extension } => {
                KernelSpec::HenyeyGreenstein { g, albedo_scale: albedo_scale * s, truncation, extension }
            }
        }
    }
}

/// Evaluates `k(x, θ, θ')`.
pub fn eval_kernel(k: &ScatterKernel, x: Vec2, theta: f64, theta_prime: f64) -> f64 {
    k.eval(x, theta, theta_prime)
}
