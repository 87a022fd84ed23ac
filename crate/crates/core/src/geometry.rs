//! Disc domains, ray/boundary intersection and the outgoing boundary
//! phase space `∂₊SΩ` with its measure `dΣ = |ν·θ| dS dθ`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector at angle `a` (radians, counter-clockwise from +x).
    #[inline]
    pub fn from_angle(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Vec2 { x: c, y: s }
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    /// Counter-clockwise rotation by π/2.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2 { x: -self.y, y: self.x }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    #[inline]
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A closed disc. Both Ω and its enlargement Ω₁ are circles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Vec2,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Vec2, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Parameter(format!("radius must be positive, got {radius}")));
        }
        Ok(Circle { center, radius })
    }

    #[inline]
    pub fn contains(&self, p: Vec2) -> bool {
        (p - self.center).norm_sq() <= self.radius * self.radius * (1.0 + 1e-12)
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn circumference(&self) -> f64 {
        2.0 * PI * self.radius
    }

    /// Boundary point at polar angle `beta`.
    pub fn point_at(&self, beta: f64) -> Vec2 {
        self.center + Vec2::from_angle(beta) * self.radius
    }

    /// Parameters `t1 ≤ t2` where the line `p + t·dir` crosses the circle,
    /// or `None` when the line misses it. `dir` must be a unit vector.
    #[inline]
    pub fn line_crossings(&self, p: Vec2, dir: Vec2) -> Option<(f64, f64)> {
        let q = p - self.center;
        let qd = q.dot(dir);
        let disc = qd * qd - (q.norm_sq() - self.radius * self.radius);
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        Some((-qd - s, -qd + s))
    }

    /// Entry/exit times `(τ₋, τ₊)` of a ray whose base point is inside.
    pub fn exit_times(&self, ray: &Ray) -> Result<(f64, f64)> {
        if !self.contains(ray.base_point) {
            return Err(Error::Domain(format!(
                "base point ({}, {}) lies outside the disc of radius {}",
                ray.base_point.x, ray.base_point.y, self.radius
            )));
        }
        // A point on the closed disc always yields a real (possibly double) root.
        let (t1, t2) = self
            .line_crossings(ray.base_point, ray.direction)
            .unwrap_or((0.0, 0.0));
        Ok((t1.min(0.0), t2.max(0.0)))
    }
}

/// The convex domain Ω together with the concentric enlargement Ω₁ ⋑ Ω.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscDomain {
    pub center: Vec2,
    pub radius: f64,
    pub enlarged_radius: f64,
}

/// Default ratio between the radii of Ω₁ and Ω.
pub const DEFAULT_ENLARGEMENT: f64 = 1.3;

impl DiscDomain {
    pub fn new(center: Vec2, radius: f64, enlarged_radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Parameter(format!("radius must be positive, got {radius}")));
        }
        if !(enlarged_radius > radius && enlarged_radius.is_finite()) {
            return Err(Error::Parameter(format!(
                "enlarged radius {enlarged_radius} must exceed radius {radius}"
            )));
        }
        Ok(DiscDomain { center, radius, enlarged_radius })
    }

    pub fn with_default_enlargement(center: Vec2, radius: f64) -> Result<Self> {
        Self::new(center, radius, DEFAULT_ENLARGEMENT * radius)
    }

    /// Unit disc at the origin with Ω₁ of radius 1.3.
    pub fn unit() -> Self {
        DiscDomain { center: Vec2::ZERO, radius: 1.0, enlarged_radius: DEFAULT_ENLARGEMENT }
    }

    pub fn omega(&self) -> Circle {
        Circle { center: self.center, radius: self.radius }
    }

    pub fn omega1(&self) -> Circle {
        Circle { center: self.center, radius: self.enlarged_radius }
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }
}

/// Which boundary carries the measurements (and bounds the transport domain).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureSurface {
    Omega,
    #[default]
    Omega1,
}

impl MeasureSurface {
    pub fn circle(self, domain: &DiscDomain) -> Circle {
        match self {
            MeasureSurface::Omega => domain.omega(),
            MeasureSurface::Omega1 => domain.omega1(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub base_point: Vec2,
    pub direction: Vec2,
}

impl Ray {
    pub fn new(base_point: Vec2, direction_angle: f64) -> Self {
        Ray { base_point, direction: Vec2::from_angle(direction_angle) }
    }

    pub fn from_direction(base_point: Vec2, direction: Vec2) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Parameter("ray direction must be non-zero".into()));
        }
        Ok(Ray { base_point, direction: direction * (1.0 / n) })
    }
}

/// Entry/exit times on Ω for a ray based inside Ω.
pub fn exit_times(domain: &DiscDomain, ray: &Ray) -> Result<(f64, f64)> {
    domain.omega().exit_times(ray)
}

/// Splits `[0, length]` into steps of `step`, the last one possibly
/// partial, and yields `(midpoint, segment_length)` pairs.
#[inline]
pub fn midpoint_segments(length: f64, step: f64) -> impl Iterator<Item = (f64, f64)> {
    let (n_full, rem) = segment_counts(length, step);
    let total = n_full + usize::from(rem > 0.0);
    (0..total).map(move |k| {
        let start = k as f64 * step;
        let len = if k < n_full { step } else { rem };
        (start + 0.5 * len, len)
    })
}

/// Number of full steps and the length of the trailing partial step.
#[inline]
pub fn segment_counts(length: f64, step: f64) -> (usize, f64) {
    if length <= 0.0 {
        return (0, 0.0);
    }
    let n_full = (length / step).floor() as usize;
    let rem = length - n_full as f64 * step;
    // Remainders at roundoff level are folded away.
    if rem <= 1e-12 * step {
        (n_full, 0.0)
    } else {
        (n_full, rem)
    }
}

/// One quadrature node of `∂₊SΩ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub boundary_angle: f64,
    pub direction_angle: f64,
    /// `|ν·θ| · (circumference / n_beta) · (2π / n_alpha)`.
    pub sigma_weight: f64,
    pub beta_index: usize,
    pub alpha_index: usize,
}

/// Tensor grid on `∂₊SΩ`: boundary angles `β_i = 2π(i + ½)/n_beta`,
/// directions `α_m = 2πm/n_alpha`. Samples are ordered by direction first.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    pub circle: Circle,
    pub n_beta: usize,
    pub n_alpha: usize,
    pub samples: Vec<BoundarySample>,
}

const TANGENT_EPS: f64 = 1e-12;

impl BoundaryGrid {
    pub fn on_circle(circle: Circle, n_beta: usize, n_alpha: usize) -> Result<Self> {
        if n_beta < 4 || n_alpha < 4 {
            return Err(Error::Parameter(format!(
                "boundary grid needs n_beta >= 4 and n_alpha >= 4, got {n_beta} x {n_alpha}"
            )));
        }
        let d_s = circle.circumference() / n_beta as f64;
        let d_theta = 2.0 * PI / n_alpha as f64;
        let mut samples = Vec::with_capacity(n_beta * n_alpha / 2 + n_beta);
        for m in 0..n_alpha {
            let alpha = d_theta * m as f64;
            for i in 0..n_beta {
                let beta = 2.0 * PI * (i as f64 + 0.5) / n_beta as f64;
                let cos = (beta - alpha).cos();
                if cos < -TANGENT_EPS {
                    continue;
                }
                let nu_dot = if cos.abs() <= TANGENT_EPS { 0.0 } else { cos };
                samples.push(BoundarySample {
                    boundary_angle: beta,
                    direction_angle: alpha,
                    sigma_weight: nu_dot * d_s * d_theta,
                    beta_index: i,
                    alpha_index: m,
                });
            }
        }
        Ok(BoundaryGrid { circle, n_beta, n_alpha, samples })
    }

    /// Builds a grid from explicit samples (used for degenerate test grids).
    pub fn from_samples(circle: Circle, n_beta: usize, n_alpha: usize, samples: Vec<BoundarySample>) -> Self {
        BoundaryGrid { circle, n_beta, n_alpha, samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.samples.iter().map(|s| s.sigma_weight).sum()
    }

    /// True when two grids describe the same sample layout.
    pub fn same_layout(&self, other: &BoundaryGrid) -> bool {
        self.n_beta == other.n_beta
            && self.n_alpha == other.n_alpha
            && self.circle == other.circle
            && self.samples.len() == other.samples.len()
    }

    /// Boundary point and direction of a sample.
    pub fn ray_of(&self, s: &BoundarySample) -> (Vec2, Vec2) {
        (self.circle.point_at(s.boundary_angle), Vec2::from_angle(s.direction_angle))
    }
}

/// Outgoing boundary grid on Ω.
pub fn boundary_grid(domain: &DiscDomain, n_beta: usize, n_alpha: usize) -> Result<BoundaryGrid> {
    BoundaryGrid::on_circle(domain.omega(), n_beta, n_alpha)
}

/// Discrete `∫_{∂₊S} ∫_{τ₋}^0 f(x + tθ, θ) dt dΣ`: each boundary ray is
/// integrated back through the disc with the midpoint rule.
pub fn santalo_integral<F>(grid: &BoundaryGrid, f: F, ray_step: f64) -> f64
where
    F: Fn(Vec2, f64) -> f64,
{
    let circle = grid.circle;
    grid.samples
        .iter()
        .filter(|s| s.sigma_weight > 0.0)
        .map(|s| {
            let (x, theta) = grid.ray_of(s);
            let back = circle.line_crossings(x, theta).map_or(0.0, |(t1, _)| (-t1).max(0.0));
            let line: f64 = midpoint_segments(back, ray_step)
                .map(|(t, len)| len * f(x - theta * t, s.direction_angle))
                .sum();
            s.sigma_weight * line
        })
        .sum()
}

/// Direct phase-space integral `∫_{disc} ∫_{S¹} f dθ dx` by the midpoint
/// rule in polar coordinates; the right-hand side of the Santaló identity.
pub fn phase_space_integral<F>(circle: &Circle, f: F, n_r: usize, n_phi: usize, n_theta: usize) -> f64
where
    F: Fn(Vec2, f64) -> f64,
{
    let dr = circle.radius / n_r as f64;
    let dphi = 2.0 * PI / n_phi as f64;
    let dtheta = 2.0 * PI / n_theta as f64;
    let mut total = 0.0;
    for ir in 0..n_r {
        let r = (ir as f64 + 0.5) * dr;
        for ip in 0..n_phi {
            let x = circle.center + Vec2::from_angle((ip as f64 + 0.5) * dphi) * r;
            let mut inner = 0.0;
            for it in 0..n_theta {
                inner += f(x, (it as f64 + 0.5) * dtheta);
            }
            total += inner * dtheta * r * dr * dphi;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn exit_times_examples() {
        let d = DiscDomain::unit();
        let (m, p) = exit_times(&d, &Ray::new(Vec2::ZERO, 0.0)).unwrap();
        assert!(close(m, -1.0, 1e-14) && close(p, 1.0, 1e-14));
        let (m, p) = exit_times(&d, &Ray::new(Vec2::new(0.5, 0.0), 0.0)).unwrap();
        assert!(close(m, -1.5, 1e-14) && close(p, 0.5, 1e-14));
        let (m, p) = exit_times(&d, &Ray::new(Vec2::new(1.0, 0.0), PI / 2.0)).unwrap();
        assert!(close(m, 0.0, 1e-7) && close(p, 0.0, 1e-7));
    }

    #[test]
    fn exit_times_outside_is_domain_error() {
        let d = DiscDomain::unit();
        let err = exit_times(&d, &Ray::new(Vec2::new(1.5, 0.0), 0.0)).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn domain_rejects_non_nested_radii() {
        assert!(DiscDomain::new(Vec2::ZERO, 1.0, 1.0).is_err());
        assert!(DiscDomain::new(Vec2::ZERO, -1.0, 2.0).is_err());
    }

    #[test]
    fn small_boundary_grid_keeps_outgoing_half() {
        let g = boundary_grid(&DiscDomain::unit(), 4, 4).unwrap();
        assert_eq!(g.len(), 8);
        assert!(g.samples.iter().all(|s| s.sigma_weight > 0.0));
    }

    #[test]
    fn tangent_samples_have_zero_weight() {
        // β offsets of π/4 against α steps of π/4 produce exact tangencies.
        let g = boundary_grid(&DiscDomain::unit(), 4, 8).unwrap();
        let tangent: Vec<_> = g
            .samples
            .iter()
            .filter(|s| (s.boundary_angle - s.direction_angle).cos().abs() < 1e-9)
            .collect();
        assert!(!tangent.is_empty());
        assert!(tangent.iter().all(|s| s.sigma_weight == 0.0));
        assert!(g.samples.iter().all(|s| s.sigma_weight >= 0.0));
    }

    #[test]
    fn total_weight_matches_brute_force_quadrature() {
        // ∫_{∂Ω} ∫_{ν·θ>0} ν·θ dθ dS by a dense independent midpoint rule.
        // Coprime counts keep the kinks at ν·θ = 0 off the sample lattice.
        let (n, m_count) = (2000, 2001);
        let mut brute = 0.0;
        for i in 0..n {
            let beta = 2.0 * PI * (i as f64 + 0.5) / n as f64;
            for m in 0..m_count {
                let alpha = 2.0 * PI * (m as f64 + 0.5) / m_count as f64;
                brute += (beta - alpha).cos().max(0.0);
            }
        }
        brute *= (2.0 * PI / n as f64) * (2.0 * PI / m_count as f64);
        assert!(close(brute, 4.0 * PI, 1e-5));
        let g = boundary_grid(&DiscDomain::unit(), 256, 256).unwrap();
        assert!((g.total_weight() - brute).abs() / brute < 1e-3);
    }

    #[test]
    fn santalo_constant_and_zero() {
        let d = DiscDomain::unit();
        let g = boundary_grid(&d, 256, 256).unwrap();
        let one = santalo_integral(&g, |_, _| 1.0, 1e-3);
        assert!((one / (2.0 * PI * PI) - 1.0).abs() < 0.01, "{one}");
        assert_eq!(santalo_integral(&g, |_, _| 0.0, 1e-3), 0.0);
    }

    #[test]
    fn santalo_half_disc() {
        let d = DiscDomain::unit();
        let g = boundary_grid(&d, 256, 256).unwrap();
        let half = |p: Vec2, _: f64| if p.x > 0.0 { 1.0 } else { 0.0 };
        let lhs = santalo_integral(&g, half, 1e-3);
        let area_side = phase_space_integral(&d.omega(), half, 200, 400, 8);
        assert!((lhs / (PI * PI) - 1.0).abs() < 0.01, "{lhs}");
        assert!((area_side / (PI * PI) - 1.0).abs() < 0.01, "{area_side}");
    }

    #[test]
    fn segments_cover_length() {
        let segs: Vec<_> = midpoint_segments(1.05, 0.25).collect();
        assert_eq!(segs.len(), 5);
        let total: f64 = segs.iter().map(|s| s.1).sum();
        assert!(close(total, 1.05, 1e-14));
        assert!(close(segs[4].0, 1.025, 1e-14));
        assert_eq!(midpoint_segments(0.0, 0.1).count(), 0);
    }

    proptest! {
        #[test]
        fn reversal_symmetry(r in 0.0f64..0.999, phi in 0.0f64..6.3, a in 0.0f64..6.3) {
            let d = DiscDomain::unit();
            let x = Vec2::from_angle(phi) * r;
            let (m, p) = exit_times(&d, &Ray::new(x, a)).unwrap();
            let (m2, p2) = exit_times(&d, &Ray::new(x, a + PI)).unwrap();
            prop_assert!((m + p2).abs() < 1e-10);
            prop_assert!((p + m2).abs() < 1e-10);
            prop_assert!(m <= 0.0 && p >= 0.0);
            prop_assert!(p - m <= d.diameter() + 1e-12);
            let exit = x + Vec2::from_angle(a) * p;
            prop_assert!((exit.norm() - 1.0).abs() < 1e-10);
        }
    }
}
