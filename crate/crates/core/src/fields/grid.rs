use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Circle, Vec2};

/// Cell-centred uniform grid over a bounding box. Node `(i, j)` sits at
/// `(xmin + (i + ½)dx, ymin + (j + ½)dy)`; the flat index is `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub nx: usize,
    pub ny: usize,
    /// `[xmin, ymin, xmax, ymax]`
    pub bbox: [f64; 4],
}

/// Bilinear stencil: base node and fractional offsets.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    pub i0: isize,
    pub j0: isize,
    pub tx: f64,
    pub ty: f64,
}

impl Grid2 {
    pub fn new(nx: usize, ny: usize, bbox: [f64; 4]) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Parameter(format!("grid must be at least 2x2, got {nx}x{ny}")));
        }
        if !(bbox[2] > bbox[0] && bbox[3] > bbox[1]) {
            return Err(Error::Parameter(format!("degenerate bounding box {bbox:?}")));
        }
        Ok(Grid2 { nx, ny, bbox })
    }

    /// `n × n` grid on the bounding square of `circle`.
    pub fn covering(circle: &Circle, n: usize) -> Result<Self> {
        let c = circle.center;
        let r = circle.radius;
        Self::new(n, n, [c.x - r, c.y - r, c.x + r, c.y + r])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        (self.bbox[2] - self.bbox[0]) / self.nx as f64
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        (self.bbox[3] - self.bbox[1]) / self.ny as f64
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.bbox[0] + (i as f64 + 0.5) * self.dx(),
            self.bbox[1] + (j as f64 + 0.5) * self.dy(),
        )
    }

    #[inline]
    pub fn node_at(&self, idx: usize) -> Vec2 {
        self.node(idx % self.nx, idx / self.nx)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, Vec2)> + '_ {
        (0..self.len()).map(move |k| (k, self.node_at(k)))
    }

    /// Flat indices of nodes inside `circle`.
    pub fn nodes_inside(&self, circle: &Circle) -> Vec<usize> {
        self.nodes().filter(|&(_, p)| circle.contains(p)).map(|(k, _)| k).collect()
    }

    /// 0/1 mask of nodes inside `circle`.
    pub fn mask(&self, circle: &Circle) -> Vec<bool> {
        self.nodes().map(|(_, p)| circle.contains(p)).collect()
    }

    #[inline]
    pub(crate) fn stencil(&self, p: Vec2) -> Stencil {
        let fx = (p.x - self.bbox[0]) / self.dx() - 0.5;
        let fy = (p.y - self.bbox[1]) / self.dy() - 0.5;
        let i0 = fx.floor();
        let j0 = fy.floor();
        Stencil { i0: i0 as isize, j0: j0 as isize, tx: fx - i0, ty: fy - j0 }
    }

    /// Bilinear interpolation of node values; nodes beyond the grid read as 0.
    #[inline]
    pub fn interpolate(&self, values: &[f64], p: Vec2) -> f64 {
        let s = self.stencil(p);
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let (i0, j0) = (s.i0, s.j0);
        if i0 >= 0 && j0 >= 0 && i0 + 1 < nx && j0 + 1 < ny {
            let k = (j0 * nx + i0) as usize;
            let n = self.nx;
            let a = values[k] + s.tx * (values[k + 1] - values[k]);
            let b = values[k + n] + s.tx * (values[k + n + 1] - values[k + n]);
            return a + s.ty * (b - a);
        }
        let mut acc = 0.0;
        for (di, dj, w) in corner_weights(&s) {
            let (i, j) = (i0 + di, j0 + dj);
            if i >= 0 && j >= 0 && i < nx && j < ny {
                acc += w * values[(j * nx + i) as usize];
            }
        }
        acc
    }

    /// Transpose of [`Grid2::interpolate`]: adds `value` times the bilinear
    /// weights into `out`.
    #[inline]
    pub fn scatter(&self, out: &mut [f64], p: Vec2, value: f64) {
        let s = self.stencil(p);
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let (i0, j0) = (s.i0, s.j0);
        if i0 >= 0 && j0 >= 0 && i0 + 1 < nx && j0 + 1 < ny {
            let k = (j0 * nx + i0) as usize;
            let n = self.nx;
            let vb = value * s.ty;
            let va = value - vb;
            out[k] += va - va * s.tx;
            out[k + 1] += va * s.tx;
            out[k + n] += vb - vb * s.tx;
            out[k + n + 1] += vb * s.tx;
            return;
        }
        for (di, dj, w) in corner_weights(&s) {
            let (i, j) = (i0 + di, j0 + dj);
            if i >= 0 && j >= 0 && i < nx && j < ny {
                out[(j * nx + i) as usize] += w * value;
            }
        }
    }
}

#[inline]
fn corner_weights(s: &Stencil) -> [(isize, isize, f64); 4] {
    [
        (0, 0, (1.0 - s.tx) * (1.0 - s.ty)),
        (1, 0, s.tx * (1.0 - s.ty)),
        (0, 1, (1.0 - s.tx) * s.ty),
        (1, 1, s.tx * s.ty),
    ]
}

/// Gridded function of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid2,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid2) -> Self {
        ScalarField { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_values(grid: Grid2, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "expected {} values for a {}x{} grid, got {}",
                grid.len(),
                grid.nx,
                grid.ny,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("field values must be finite".into()));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: Grid2, f: impl Fn(Vec2) -> f64) -> Self {
        let values = grid.nodes().map(|(_, p)| f(p)).collect();
        ScalarField { grid, values }
    }

    #[inline]
    pub fn sample(&self, p: Vec2) -> f64 {
        self.grid.interpolate(&self.values, p)
    }

    /// Zeroes every node outside `circle`.
    pub fn restrict_to(mut self, circle: &Circle) -> Self {
        for (k, p) in self.grid.nodes() {
            if !circle.contains(p) {
                self.values[k] = 0.0;
            }
        }
        self
    }

    /// `Σ f g · cell_area`.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        dot(&self.values, &other.values) * self.grid.cell_area()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// L² norm over nodes inside `circle` only.
    pub fn norm_l2_in(&self, circle: &Circle) -> f64 {
        let s: f64 = self
            .grid
            .nodes()
            .filter(|&(_, p)| circle.contains(p))
            .map(|(k, _)| self.values[k] * self.values[k])
            .sum();
        (s * self.grid.cell_area()).sqrt()
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        ScalarField { grid: self.grid, values: self.values.iter().map(|v| v * s).collect() }
    }
}

/// Gridded function of `(x, θ)` with `n_theta` uniform directions
/// `θ_l = 2πl / n_theta`. Layout is `[l][j][i]` with `i` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    pub grid: Grid2,
    pub n_theta: usize,
    pub values: Vec<f64>,
}

/// Checks the direction count used by phase fields.
pub fn validate_n_theta(n_theta: usize) -> Result<()> {
    if n_theta < 4 || !n_theta.is_multiple_of(2) {
        return Err(Error::Parameter(format!("n_theta must be even and >= 4, got {n_theta}")));
    }
    Ok(())
}

/// Angle of direction index `l` out of `n`.
#[inline]
pub fn direction_angle(l: usize, n: usize) -> f64 {
    2.0 * PI * l as f64 / n as f64
}

impl PhaseField {
    pub fn zeros(grid: Grid2, n_theta: usize) -> Result<Self> {
        validate_n_theta(n_theta)?;
        Ok(PhaseField { grid, n_theta, values: vec![0.0; grid.len() * n_theta] })
    }

    pub fn from_fn(grid: Grid2, n_theta: usize, f: impl Fn(Vec2, f64) -> f64) -> Result<Self> {
        validate_n_theta(n_theta)?;
        let mut values = Vec::with_capacity(grid.len() * n_theta);
        for l in 0..n_theta {
            let theta = direction_angle(l, n_theta);
            values.extend(grid.nodes().map(|(_, p)| f(p, theta)));
        }
        Ok(PhaseField { grid, n_theta, values })
    }

    pub fn from_values(grid: Grid2, n_theta: usize, values: Vec<f64>) -> Result<Self> {
        validate_n_theta(n_theta)?;
        if values.len() != grid.len() * n_theta {
            return Err(Error::Shape(format!(
                "expected {} phase values, got {}",
                grid.len() * n_theta,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("field values must be finite".into()));
        }
        Ok(PhaseField { grid, n_theta, values })
    }

    /// `Jf`: the same scalar field in every direction.
    pub fn isotropic(f: &ScalarField, n_theta: usize) -> Result<Self> {
        validate_n_theta(n_theta)?;
        let mut values = Vec::with_capacity(f.values.len() * n_theta);
        for _ in 0..n_theta {
            values.extend_from_slice(&f.values);
        }
        Ok(PhaseField { grid: f.grid, n_theta, values })
    }

    #[inline]
    pub fn angle(&self, l: usize) -> f64 {
        direction_angle(l, self.n_theta)
    }

    #[inline]
    pub fn d_theta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    #[inline]
    pub fn slice(&self, l: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[l * n..(l + 1) * n]
    }

    #[inline]
    pub fn slice_mut(&mut self, l: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.values[l * n..(l + 1) * n]
    }

    /// Bilinear in `x`, periodic linear in `θ`.
    pub fn sample(&self, p: Vec2, theta: f64) -> f64 {
        let t = theta.rem_euclid(2.0 * PI) / self.d_theta();
        let l0 = (t.floor() as usize) % self.n_theta;
        let w = t - t.floor();
        let l1 = (l0 + 1) % self.n_theta;
        let a = self.grid.interpolate(self.slice(l0), p);
        if w == 0.0 {
            return a;
        }
        let b = self.grid.interpolate(self.slice(l1), p);
        a + w * (b - a)
    }

    /// `Σ u v · cell_area · dθ`.
    pub fn dot(&self, other: &PhaseField) -> f64 {
        dot(&self.values, &other.values) * self.grid.cell_area() * self.d_theta()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> Grid2 {
        Grid2::covering(&Circle::new(Vec2::ZERO, 1.3).unwrap(), n).unwrap()
    }

    #[test]
    fn interpolation_reproduces_bilinear_functions() {
        let g = unit_grid(16);
        let f = ScalarField::from_fn(g, |p| 2.0 + 0.5 * p.x - 0.25 * p.y + 0.1 * p.x * p.y);
        for &(x, y) in &[(0.1, 0.2), (-0.7, 0.33), (0.5, -0.9)] {
            let p = Vec2::new(x, y);
            let exact = 2.0 + 0.5 * x - 0.25 * y + 0.1 * x * y;
            assert!((f.sample(p) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn scatter_is_transpose_of_interpolate() {
        let g = unit_grid(9);
        let vals: Vec<f64> = (0..g.len()).map(|k| ((k * 37) % 11) as f64 - 5.0).collect();
        // Includes points in the half-cell rim and outside the grid.
        for &(x, y) in &[(0.0, 0.0), (1.29, -1.2), (-1.35, 0.4), (0.77, 1.27)] {
            let p = Vec2::new(x, y);
            let mut e = vec![0.0; g.len()];
            g.scatter(&mut e, p, 1.0);
            let via_scatter: f64 = dot(&e, &vals);
            assert!((via_scatter - g.interpolate(&vals, p)).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_of_unit_area_bump() {
        let g = unit_grid(256);
        let w: f64 = 0.2;
        let norm = 1.0 / (2.0 * PI * w * w);
        let f = ScalarField::from_fn(g, |p| norm * (-(p.norm_sq()) / (2.0 * w * w)).exp());
        let q = f.integral();
        assert!((0.99..=1.01).contains(&q), "{q}");
    }

    #[test]
    fn phase_field_rejects_odd_direction_count() {
        assert!(PhaseField::zeros(unit_grid(4), 7).is_err());
        assert!(PhaseField::zeros(unit_grid(4), 2).is_err());
    }

    #[test]
    fn phase_sample_interpolates_in_angle() {
        let g = unit_grid(8);
        let u = PhaseField::from_fn(g, 8, |_, t| t.cos()).unwrap();
        let mid = u.sample(Vec2::ZERO, PI / 8.0);
        let expect = 0.5 * (1.0 + (PI / 4.0).cos());
        assert!((mid - expect).abs() < 1e-12);
    }
}
