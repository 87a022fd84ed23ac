//! The scattering operator `(Ku)(x, θ) = ∫ k(x, θ, θ') u(x, θ') dθ'`,
//! factorized per mode: first the angular moments
//! `Mⱼ(x) = cⱼ Σ_l Φⱼ(θ_l) u_l(x) Δθ`, then `Ku_l = χ Σⱼ Θⱼ(θ_l) Mⱼ`.

use rayon::prelude::*;

use crate::fields::{PhaseField, ScatterKernel};

/// Per-mode angular moments of a phase field, one spatial array per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMoments {
    pub values: Vec<Vec<f64>>,
}

impl ModeMoments {
    /// Moments against `Φⱼ` (or against `Θⱼ` when `transpose`), including
    /// `cⱼ` and `Δθ` but not the spatial factor `χ`.
    pub fn of(kernel: &ScatterKernel, u: &PhaseField, transpose: bool) -> Self {
        let n = u.grid.len();
        let dth = u.d_theta();
        let values = kernel
            .modes
            .par_iter()
            .map(|m| {
                let phi = if transpose { m.outgoing } else { m.incoming };
                let mut acc = vec![0.0; n];
                for l in 0..u.n_theta {
                    let w = m.coeff * phi.eval(u.angle(l)) * dth;
                    if w != 0.0 {
                        for (a, v) in acc.iter_mut().zip(u.slice(l)) {
                            *a += w * v;
                        }
                    }
                }
                acc
            })
            .collect();
        ModeMoments { values }
    }

    /// Adds `scale · χ Σⱼ Θⱼ(θ) Mⱼ` (or `Φⱼ` when `transpose`) into `out`.
    pub fn expand_into(&self, kernel: &ScatterKernel, theta: f64, scale: f64, transpose: bool, out: &mut [f64]) {
        let chi = &kernel.profile.values;
        for (m, mom) in kernel.modes.iter().zip(&self.values) {
            let th = if transpose { m.incoming } else { m.outgoing };
            let w = scale * th.eval(theta);
            if w == 0.0 {
                continue;
            }
            for ((o, c), v) in out.iter_mut().zip(chi).zip(mom) {
                *o += w * c * v;
            }
        }
    }
}

fn apply(kernel: &ScatterKernel, u: &PhaseField, scale: f64, transpose: bool) -> PhaseField {
    let mom = ModeMoments::of(kernel, u, transpose);
    let mut out = PhaseField { grid: u.grid, n_theta: u.n_theta, values: vec![0.0; u.values.len()] };
    let n = u.grid.len();
    out.values.par_chunks_mut(n).enumerate().for_each(|(l, slice)| {
        mom.expand_into(kernel, crate::fields::direction_angle(l, u.n_theta), scale, transpose, slice);
    });
    out
}

/// `λKu` with the trapezoid rule in θ'.
pub fn apply_k(kernel: &ScatterKernel, u: &PhaseField, lambda_scale: f64) -> PhaseField {
    apply(kernel, u, lambda_scale, false)
}

/// Transpose of [`apply_k`] for the inner product `Σ u v ΔxΔyΔθ`.
pub fn apply_k_transpose(kernel: &ScatterKernel, v: &PhaseField, lambda_scale: f64) -> PhaseField {
    apply(kernel, v, lambda_scale, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Grid2, ScalarField};
    use crate::geometry::{Circle, Vec2};
    use std::f64::consts::PI;

    fn grid() -> Grid2 {
        Grid2::covering(&Circle::new(Vec2::ZERO, 1.3).unwrap(), 10).unwrap()
    }

    fn ones(g: Grid2) -> ScalarField {
        ScalarField::from_fn(g, |_| 1.0)
    }

    #[test]
    fn isotropic_average_of_constant() {
        let g = grid();
        let k = ScatterKernel::isotropic(1.0, ones(g)).unwrap();
        let u = PhaseField::from_fn(g, 16, |p, _| 1.0 + p.x).unwrap();
        let ku = apply_k(&k, &u, 1.0);
        for (a, b) in ku.values.iter().zip(&u.values) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn fourier_modes_are_eigenfunctions() {
        let g = grid();
        let (gg, albedo) = (0.6, 0.8);
        let k = ScatterKernel::henyey_greenstein(gg, albedo, 6, ones(g)).unwrap();
        for m in [1u32, 2] {
            let u = PhaseField::from_fn(g, 32, |_, t| (m as f64 * t).cos()).unwrap();
            let ku = apply_k(&k, &u, 1.0);
            let expect = albedo * f64::powi(gg, m as i32);
            for (a, b) in ku.values.iter().zip(&u.values) {
                assert!((a - expect * b).abs() < 1e-12, "m={m}");
            }
        }
    }

    #[test]
    fn zero_lambda_gives_zero() {
        let g = grid();
        let k = ScatterKernel::henyey_greenstein(0.3, 1.0, 3, ones(g)).unwrap();
        let u = PhaseField::from_fn(g, 8, |p, t| p.y + t.sin()).unwrap();
        assert!(apply_k(&k, &u, 0.0).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transpose_identity() {
        let g = grid();
        let chi = ScalarField::from_fn(g, |p| 1.0 + 0.5 * p.x * p.y);
        let k = ScatterKernel::new(
            vec![
                crate::fields::KernelMode {
                    outgoing: crate::fields::FourierMode::Cos(1),
                    incoming: crate::fields::FourierMode::Sin(2),
                    coeff: 0.3,
                },
                crate::fields::KernelMode {
                    outgoing: crate::fields::FourierMode::Const,
                    incoming: crate::fields::FourierMode::Cos(1),
                    coeff: 1.0 / PI,
                },
            ],
            chi,
        );
        let u = PhaseField::from_fn(g, 8, |p, t| (3.0 * p.x + t).sin()).unwrap();
        let v = PhaseField::from_fn(g, 8, |p, t| (p.y - 2.0 * t).cos() + p.x).unwrap();
        let lhs = apply_k(&k, &u, 0.7).dot(&v);
        let rhs = u.dot(&apply_k_transpose(&k, &v, 0.7));
        assert!((lhs - rhs).abs() < 1e-13 * lhs.abs().max(1.0));
    }
}
