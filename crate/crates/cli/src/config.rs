//! Experiment configuration: a JSON document with strict key checking.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rte_core::fields::{make_phantom, make_sigma, KernelSpec, PhantomSpec, SigmaSpec};
use rte_core::geometry::MeasureSurface;
use rte_core::inversion::{ProbeConfig, ReconConfig};
use rte_core::{DiscDomain, Grid2, TransportConfig, Vec2};

/// A configuration problem, with the line it was found on when known.
#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
    pub line: Option<usize>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error (line {l}): {}", self.message),
            None => write!(f, "config error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Nodes per axis of the square grid covering Ω₁.
    pub n: usize,
    pub n_theta: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    pub n_beta: usize,
    pub n_alpha: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridsSpec {
    pub recon: GridSpec,
    /// Defaults to twice the reconstruction grid in space and angle.
    pub data: Option<GridSpec>,
    pub boundary: BoundarySpec,
    pub inverse_crime_avoidance: bool,
}

impl Default for GridsSpec {
    fn default() -> Self {
        GridsSpec {
            recon: GridSpec { n: 128, n_theta: 64 },
            data: None,
            boundary: BoundarySpec { n_beta: 512, n_alpha: 64 },
            inverse_crime_avoidance: true,
        }
    }
}

impl GridsSpec {
    pub fn data_grid(&self) -> GridSpec {
        self.data.unwrap_or(GridSpec { n: 2 * self.recon.n, n_theta: 2 * self.recon.n_theta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    #[default]
    None,
    /// Standard deviation `rel_level · max |g|` on every sample.
    Gaussian { rel_level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscrepancySpec {
    pub tau: f64,
    /// Candidate regularization parameters; used when the data are noisy
    /// and `recon.tikhonov_alpha` is 0.
    pub alphas: Vec<f64>,
}

impl Default for DiscrepancySpec {
    fn default() -> Self {
        DiscrepancySpec { tau: 1.1, alphas: (0..7).map(|i| 10f64.powi(-i)).collect() }
    }
}

fn default_phantom() -> PhantomSpec {
    PhantomSpec::Gaussian { center: Vec2::new(0.2, -0.1), width: 0.25, amp: 1.0 }
}

fn default_sigma() -> SigmaSpec {
    SigmaSpec::Zero
}

fn default_output() -> PathBuf {
    PathBuf::from("rte-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "DiscDomain::unit")]
    pub domain: DiscDomain,
    #[serde(default)]
    pub grids: GridsSpec,
    #[serde(default = "default_phantom")]
    pub phantom: PhantomSpec,
    #[serde(default = "default_sigma")]
    pub sigma: SigmaSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub recon: ReconConfig,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub discrepancy: DiscrepancySpec,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub measure_on: MeasureSurface,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config uses defaults")
    }
}

/// Line of the first occurrence of `"key"` in the source text.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { message: format!("cannot read {}: {e}", path.display()), line: None })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| ConfigError { message: e.to_string(), line: Some(e.line()).filter(|&l| l > 0) })?;
        cfg.validate().map_err(|(key, message)| ConfigError { message, line: line_of(text, key) })?;
        Ok(cfg)
    }

    /// On failure returns the offending key and a message.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let d = &self.domain;
        DiscDomain::new(d.center, d.radius, d.enlarged_radius).map_err(|e| ("domain", e.to_string()))?;
        let g = &self.grids;
        let data = g.data_grid();
        for (key, spec) in [("recon", g.recon), ("data", data)] {
            if spec.n < 4 {
                return Err((key, format!("grids.{key}.n must be >= 4, got {}", spec.n)));
            }
            rte_core::fields::validate_n_theta(spec.n_theta).map_err(|e| (key, format!("grids.{key}: {e}")))?;
            if spec.n_theta % g.boundary.n_alpha != 0 {
                return Err((
                    "n_alpha",
                    format!(
                        "grids.boundary.n_alpha ({}) must divide grids.{key}.n_theta ({})",
                        g.boundary.n_alpha, spec.n_theta
                    ),
                ));
            }
        }
        if g.inverse_crime_avoidance && data.n <= g.recon.n {
            return Err((
                "data",
                format!(
                    "data grid ({}²) must be finer than the reconstruction grid ({}²) while inverse_crime_avoidance is on",
                    data.n, g.recon.n
                ),
            ));
        }
        if g.boundary.n_beta < 4 || g.boundary.n_alpha < 4 {
            return Err(("boundary", "grids.boundary needs n_beta >= 4 and n_alpha >= 4".into()));
        }
        // Coefficients are checked on a tiny grid so that bad parameters
        // surface as config errors rather than mid-run.
        let tiny = Grid2::covering(&d.omega1(), 4).map_err(|e| ("domain", e.to_string()))?;
        make_phantom(d, tiny, &self.phantom).map_err(|e| ("phantom", e.to_string()))?;
        make_sigma(d, tiny, g.recon.n_theta, &self.sigma).map_err(|e| ("sigma", e.to_string()))?;
        if let Some(k) = self.kernel.build(d, tiny).map_err(|e| ("kernel", e.to_string()))? {
            let n_theta = g.recon.n_theta.min(data.n_theta);
            if 2 * k.bandwidth() as usize >= n_theta {
                return Err((
                    "truncation",
                    format!("kernel bandwidth {} needs more than {} directions", k.bandwidth(), 2 * k.bandwidth()),
                ));
            }
        }
        self.transport.validate().map_err(|e| ("transport", e.to_string()))?;
        self.recon.validate().map_err(|e| ("recon", e.to_string()))?;
        if let NoiseSpec::Gaussian { rel_level } = self.noise {
            if !(rel_level >= 0.0 && rel_level.is_finite()) {
                return Err(("rel_level", format!("noise.rel_level must be >= 0, got {rel_level}")));
            }
        }
        if !(self.discrepancy.tau > 0.0) || self.discrepancy.alphas.iter().any(|a| !(*a >= 0.0)) {
            return Err(("discrepancy", "discrepancy needs tau > 0 and nonnegative alphas".into()));
        }
        if self.probe.n_probe == 0 {
            return Err(("n_probe", "probe.n_probe must be >= 1".into()));
        }
        Ok(())
    }
}
