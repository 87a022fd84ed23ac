//! Characteristic lattice for one direction θ.
//!
//! Parallel lines `x = c + a·θ + b·θ⊥` with uniform transverse spacing cover
//! the transport disc. Along each line the source is sampled bilinearly at
//! segment midpoints (fixed `ray_step`, exact partial last segment) and the
//! attenuated integral
//! `U(a) = ∫_{entry}^{a} exp(−∫_s^a σ) g ds` is accumulated in one pass.
//! Values at grid nodes are read off by linear interpolation along and
//! across lines. Every stage is linear and has an explicit transpose.

use crate::fields::{Grid2, PhaseField};
use crate::geometry::{segment_counts, Circle, Vec2};

#[derive(Debug, Clone, Copy)]
struct Line {
    b: f64,
    a_entry: f64,
    n_seg: usize,
    last_len: f64,
    /// Offset of this line's first sample in the per-sample arrays.
    sample_offset: usize,
}

impl Line {
    #[inline]
    fn seg_len(&self, s: usize, step: f64) -> f64 {
        if s + 1 == self.n_seg {
            self.last_len
        } else {
            step
        }
    }

    /// Offset of the line's cumulative values (`n_seg + 1` entries).
    #[inline]
    fn cum_offset(&self, line_index: usize) -> usize {
        self.sample_offset + line_index
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Lattice {
    dir: Vec2,
    perp: Vec2,
    center: Vec2,
    step: f64,
    db: f64,
    b0: f64,
    lines: Vec<Line>,
    n_samples: usize,
    /// Per-sample `exp(−σ·len)` and `len·exp(−σ·len/2)`; `None` when σ ≡ 0.
    attenuation: Option<(Vec<f64>, Vec<f64>)>,
}

/// Up to four `(cumulative index, weight)` pairs reading one node.
pub(crate) type Readout = [(usize, f64); 4];

impl Lattice {
    /// `sigma_slice` holds σ(·, θ) on `grid`.
    pub fn new(grid: &Grid2, circle: &Circle, theta: f64, step: f64, sigma_slice: Option<&[f64]>) -> Self {
        let dir = Vec2::from_angle(theta);
        let perp = dir.perp();
        let r = circle.radius;
        let target = grid.dx().min(grid.dy());
        let n_gaps = ((2.0 * r / target).ceil() as usize).max(1);
        let db = 2.0 * r / n_gaps as f64;
        let b0 = -r;
        let mut lines = Vec::with_capacity(n_gaps + 1);
        let mut offset = 0;
        for k in 0..=n_gaps {
            let b = b0 + k as f64 * db;
            let half = (r * r - b * b).max(0.0).sqrt();
            let (n_full, rem) = segment_counts(2.0 * half, step);
            let n_seg = n_full + usize::from(rem > 0.0);
            let last_len = if rem > 0.0 { rem } else { step };
            lines.push(Line { b, a_entry: -half, n_seg, last_len, sample_offset: offset });
            offset += n_seg;
        }
        let mut lat = Lattice {
            dir,
            perp,
            center: circle.center,
            step,
            db,
            b0,
            lines,
            n_samples: offset,
            attenuation: None,
        };
        if let Some(sig) = sigma_slice {
            if sig.iter().any(|&v| v != 0.0) {
                let mut decay = Vec::with_capacity(offset);
                let mut weight = Vec::with_capacity(offset);
                for line in &lat.lines {
                    for s in 0..line.n_seg {
                        let len = line.seg_len(s, step);
                        let sv = grid.interpolate(sig, lat.sample_point(line, s));
                        decay.push((-sv * len).exp());
                        weight.push(len * (-0.5 * sv * len).exp());
                    }
                }
                lat.attenuation = Some((decay, weight));
            }
        }
        lat
    }

    /// Length of the cumulative buffer (one spare slot so readouts on
    /// zero-length lines stay in bounds).
    pub fn cum_len(&self) -> usize {
        self.n_samples + self.lines.len() + 1
    }

    #[inline]
    fn sample_point(&self, line: &Line, s: usize) -> Vec2 {
        let a = line.a_entry + s as f64 * self.step + 0.5 * line.seg_len(s, self.step);
        self.center + self.dir * a + self.perp * line.b
    }

    /// Fills `cum` with the cumulative attenuated integrals of `src`.
    pub fn sweep(&self, grid: &Grid2, src: &[f64], cum: &mut [f64]) {
        for (li, line) in self.lines.iter().enumerate() {
            let co = line.cum_offset(li);
            cum[co] = 0.0;
            let mut u = 0.0;
            for s in 0..line.n_seg {
                let v = grid.interpolate(src, self.sample_point(line, s));
                let so = line.sample_offset + s;
                u = match &self.attenuation {
                    Some((d, w)) => d[so] * u + w[so] * v,
                    None => u + line.seg_len(s, self.step) * v,
                };
                cum[co + s + 1] = u;
            }
        }
    }

    /// Transpose of [`Lattice::sweep`]: adds into `src_bar`.
    pub fn sweep_transpose(&self, grid: &Grid2, cum_bar: &[f64], src_bar: &mut [f64]) {
        for (li, line) in self.lines.iter().enumerate() {
            let co = line.cum_offset(li);
            let mut ubar = 0.0;
            for s in (0..line.n_seg).rev() {
                ubar += cum_bar[co + s + 1];
                let so = line.sample_offset + s;
                let (d, w) = match &self.attenuation {
                    Some((d, w)) => (d[so], w[so]),
                    None => (1.0, line.seg_len(s, self.step)),
                };
                if ubar != 0.0 {
                    grid.scatter(src_bar, self.sample_point(line, s), w * ubar);
                }
                ubar *= d;
            }
        }
    }

    /// Interpolation weights reading the cumulative values at node `p`.
    #[inline]
    pub fn readout(&self, p: Vec2) -> Readout {
        let q = p - self.center;
        let a = q.dot(self.dir);
        let t = (q.dot(self.perp) - self.b0) / self.db;
        let last = self.lines.len() - 2;
        let k = (t.floor().max(0.0) as usize).min(last);
        let wb = (t - k as f64).clamp(0.0, 1.0);
        let (i0, w0) = self.along(k, a);
        let (i1, w1) = self.along(k + 1, a);
        [(i0, (1.0 - wb) * (1.0 - w0)), (i0 + 1, (1.0 - wb) * w0), (i1, wb * (1.0 - w1)), (i1 + 1, wb * w1)]
    }

    /// Position along line `k` as `(cum index, fraction to next)`.
    #[inline]
    fn along(&self, k: usize, a: f64) -> (usize, f64) {
        let line = &self.lines[k];
        let co = line.cum_offset(k);
        let ta = a - line.a_entry;
        if ta <= 0.0 || line.n_seg == 0 {
            // Before the entry point the integral is zero (cum[co] = 0).
            return (co, 0.0);
        }
        let s = (ta / self.step).floor() as usize;
        if s >= line.n_seg {
            return (co + line.n_seg - 1, 1.0);
        }
        let len = line.seg_len(s, self.step);
        let frac = ((ta - s as f64 * self.step) / len).min(1.0);
        (co + s, frac)
    }
}

/// One lattice per direction of a phase grid.
#[derive(Debug, Clone)]
pub(crate) struct LatticeSet {
    pub grid: Grid2,
    pub circle: Circle,
    pub lattices: Vec<Lattice>,
    /// Nodes inside the transport disc, with positions.
    pub inside: Vec<(usize, Vec2)>,
}

impl LatticeSet {
    pub fn new(grid: Grid2, circle: Circle, n_theta: usize, step: f64, sigma: Option<&PhaseField>) -> Self {
        use rayon::prelude::*;
        let lattices = (0..n_theta)
            .into_par_iter()
            .map(|l| {
                let theta = crate::fields::direction_angle(l, n_theta);
                Lattice::new(&grid, &circle, theta, step, sigma.map(|s| s.slice(l)))
            })
            .collect();
        let inside = grid.nodes().filter(|&(_, p)| circle.contains(p)).collect();
        LatticeSet { grid, circle, lattices, inside }
    }

    /// `T₁⁻¹` in direction `l`: source on the grid → solution at nodes.
    pub fn solve_dir(&self, l: usize, src: &[f64]) -> Vec<f64> {
        let lat = &self.lattices[l];
        let mut cum = vec![0.0; lat.cum_len()];
        lat.sweep(&self.grid, src, &mut cum);
        let mut out = vec![0.0; self.grid.len()];
        for &(k, p) in &self.inside {
            out[k] = lat.readout(p).iter().map(|&(i, w)| w * cum[i]).sum();
        }
        out
    }

    /// Transpose of [`LatticeSet::solve_dir`].
    pub fn solve_dir_transpose(&self, l: usize, ubar: &[f64]) -> Vec<f64> {
        let lat = &self.lattices[l];
        let mut cum_bar = vec![0.0; lat.cum_len()];
        for &(k, p) in &self.inside {
            let v = ubar[k];
            if v != 0.0 {
                for (i, w) in lat.readout(p) {
                    cum_bar[i] += w * v;
                }
            }
        }
        let mut out = vec![0.0; self.grid.len()];
        lat.sweep_transpose(&self.grid, &cum_bar, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::dot;

    fn setup(n: usize) -> (Grid2, Circle) {
        let c = Circle::new(Vec2::ZERO, 1.3).unwrap();
        (Grid2::covering(&c, n).unwrap(), c)
    }

    #[test]
    fn unattenuated_constant_source_gives_back_distance() {
        let (g, c) = setup(64);
        let src: Vec<f64> = g.nodes().map(|(_, p)| f64::from(p.norm() < 1.25)).collect();
        let set = LatticeSet::new(g, c, 8, 1.0 / 256.0, None);
        for l in [0usize, 1, 3] {
            let theta = crate::fields::direction_angle(l, 8);
            let u = set.solve_dir(l, &src);
            for &(k, p) in set.inside.iter().filter(|(_, p)| p.norm() < 1.0) {
                // Distance back to the circle of radius 1.25 where the source ends.
                let inner = Circle::new(Vec2::ZERO, 1.25).unwrap();
                let (t1, _) = inner.line_crossings(p, Vec2::from_angle(theta)).unwrap();
                assert!((u[k] - (-t1)).abs() < 0.03, "l={l} p={p:?} {} vs {}", u[k], -t1);
            }
        }
    }

    #[test]
    fn transpose_identity() {
        let (g, c) = setup(20);
        let sig: Vec<f64> = g.nodes().map(|(_, p)| 0.4 + 0.3 * p.x).map(|v: f64| v.max(0.0)).collect();
        let sigma = PhaseField::from_values(g, 4, sig.repeat(4)).unwrap();
        let set = LatticeSet::new(g, c, 4, 0.05, Some(&sigma));
        let a: Vec<f64> = (0..g.len()).map(|k| ((k * 7919) % 13) as f64 / 13.0 - 0.4).collect();
        let b: Vec<f64> = (0..g.len()).map(|k| ((k * 104729) % 17) as f64 / 17.0 - 0.5).collect();
        for l in 0..4 {
            let lhs = dot(&set.solve_dir(l, &a), &b);
            let rhs = dot(&a, &set.solve_dir_transpose(l, &b));
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0), "{lhs} {rhs}");
        }
    }
}
