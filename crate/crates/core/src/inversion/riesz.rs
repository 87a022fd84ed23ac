//! Fourier multiplier `|ξ|/(4π)`, an approximate inverse of the normal
//! operator `I*I` whose kernel is `2/|x − y|` (symbol `4π/|ξ|`).

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::fields::{Grid2, ScalarField};

/// Zero-padded FFT filter on a fixed grid.
#[derive(Clone)]
pub struct RieszFilter {
    grid: Grid2,
    px: usize,
    py: usize,
    multiplier: Vec<f64>,
    fx: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RieszFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RieszFilter").field("grid", &self.grid).field("padded", &(self.px, self.py)).finish()
    }
}

/// `t²(2 − t)`: rises from 0 with zero slope and meets `t` with slope 1.
#[inline]
fn taper_profile(t: f64) -> f64 {
    t * t * (2.0 - t)
}

impl RieszFilter {
    /// `taper` is the cutoff as a fraction of the Nyquist radius; below it
    /// the multiplier bends smoothly down to 0 at `ξ = 0`.
    pub fn new(grid: Grid2, taper: f64) -> Result<Self> {
        if !(taper > 0.0 && taper < 1.0) {
            return Err(Error::Parameter(format!("riesz taper must lie in (0, 1), got {taper}")));
        }
        let px = (2 * grid.nx).next_power_of_two();
        let py = (2 * grid.ny).next_power_of_two();
        let nyquist = PI / grid.dx().max(grid.dy());
        let cut = taper * nyquist;
        let freq = |k: usize, n: usize, d: f64| {
            let s = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            2.0 * PI * s / (n as f64 * d)
        };
        let mut multiplier = Vec::with_capacity(px * py);
        for j in 0..py {
            let ky = freq(j, py, grid.dy());
            for i in 0..px {
                let kx = freq(i, px, grid.dx());
                let r = kx.hypot(ky);
                let m = if r >= cut { r } else { cut * taper_profile(r / cut) };
                multiplier.push(m / (4.0 * PI));
            }
        }
        let mut planner = FftPlanner::new();
        Ok(RieszFilter {
            grid,
            px,
            py,
            multiplier,
            fx: planner.plan_fft_forward(px),
            fy: planner.plan_fft_forward(py),
            ix: planner.plan_fft_inverse(px),
            iy: planner.plan_fft_inverse(py),
        })
    }

    pub fn grid(&self) -> Grid2 {
        self.grid
    }

    fn transform(&self, buf: &mut [Complex64], rows: &dyn Fft<f64>, cols: &dyn Fft<f64>) {
        let (px, py) = (self.px, self.py);
        for row in buf.chunks_exact_mut(px) {
            rows.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); py];
        for i in 0..px {
            for j in 0..py {
                col[j] = buf[j * px + i];
            }
            cols.process(&mut col);
            for j in 0..py {
                buf[j * px + i] = col[j];
            }
        }
    }

    /// Applies the multiplier; symmetric positive semidefinite.
    pub fn apply(&self, h: &ScalarField) -> Result<ScalarField> {
        if h.grid != self.grid {
            return Err(Error::Shape("field grid does not match the filter grid".into()));
        }
        let (nx, ny, px) = (self.grid.nx, self.grid.ny, self.px);
        let mut buf = vec![Complex64::new(0.0, 0.0); px * self.py];
        for j in 0..ny {
            for i in 0..nx {
                buf[j * px + i].re = h.values[j * nx + i];
            }
        }
        self.transform(&mut buf, &*self.fx, &*self.fy);
        for (b, m) in buf.iter_mut().zip(&self.multiplier) {
            *b *= m;
        }
        self.transform(&mut buf, &*self.ix, &*self.iy);
        let scale = 1.0 / (px * self.py) as f64;
        let mut values = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                values[j * nx + i] = buf[j * px + i].re * scale;
            }
        }
        Ok(ScalarField { grid: self.grid, values })
    }
}

/// One-off application of the tapered `|ξ|/(4π)` multiplier.
pub fn riesz_preconditioner(h: &ScalarField, taper: f64) -> Result<ScalarField> {
    RieszFilter::new(h.grid, taper)?.apply(h)
}
