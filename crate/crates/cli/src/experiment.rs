//! Builds grids, coefficients and operators from a config.

use std::sync::Arc;

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rte_core::fields::{make_phantom, make_sigma};
use rte_core::{
    BoundaryGrid, BoundarySinogram, DiscDomain, Grid2, MeasurementOperator, PhaseField, ScalarField, ScatterKernel,
    TransportConfig,
};

use crate::config::{ExperimentConfig, GridSpec, NoiseSpec};

/// Coefficients and source sampled on one grid.
pub struct Level {
    pub grid: Grid2,
    pub n_theta: usize,
    pub sigma: PhaseField,
    pub kernel: Option<ScatterKernel>,
    pub phantom: ScalarField,
}

impl Level {
    pub fn new(cfg: &ExperimentConfig, spec: GridSpec) -> Result<Level> {
        let d = &cfg.domain;
        let grid = Grid2::covering(&d.omega1(), spec.n)?;
        Ok(Level {
            grid,
            n_theta: spec.n_theta,
            sigma: make_sigma(d, grid, spec.n_theta, &cfg.sigma)?,
            kernel: cfg.kernel.build(d, grid)?,
            phantom: make_phantom(d, grid, &cfg.phantom)?,
        })
    }

    pub fn operator(
        &self,
        domain: &DiscDomain,
        boundary: Arc<BoundaryGrid>,
        transport: &TransportConfig,
    ) -> Result<MeasurementOperator> {
        Ok(MeasurementOperator::new(&self.sigma, self.kernel.as_ref(), domain.omega1(), boundary, transport)?)
    }
}

pub fn boundary_grid(cfg: &ExperimentConfig) -> Result<Arc<BoundaryGrid>> {
    let b = cfg.grids.boundary;
    Ok(Arc::new(BoundaryGrid::on_circle(cfg.measure_on.circle(&cfg.domain), b.n_beta, b.n_alpha)?))
}

/// Adds the configured noise; returns the data and the expected noise norm
/// `δ` (0 for clean data). The seed alone fixes the realization.
pub fn add_noise(cfg: &ExperimentConfig, g: &BoundarySinogram) -> Result<(BoundarySinogram, f64)> {
    match cfg.noise {
        NoiseSpec::None => Ok((g.clone(), 0.0)),
        NoiseSpec::Gaussian { rel_level } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            Ok(g.with_gaussian_noise(rel_level * g.max_abs(), &mut rng)?)
        }
    }
}
