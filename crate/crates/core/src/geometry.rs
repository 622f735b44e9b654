//! Charts, the torus group law and the `T^3` action on `S^5`.
//!
//! Torus angles are stored in `[0, 2pi)`; comparisons between angles always
//! use the shortest angular distance.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use serde::{Deserialize, Serialize};

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use crate::math::Real;
use crate::{Error, Result};

/// Allowed deviation of a constructed sphere point from unit norm.
pub const SPHERE_TOL: f64 = 1e-12;

/// Slack used when deciding whether a point lies in the closed triangle.
pub const TRIANGLE_SLACK: f64 = 1e-12;

/// Reduces one angle into `[0, 2pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    // fmod is exact, so the only rounding happens when adding 2pi back.
    let mut w = libm::fmod(a, TAU);
    if w < 0.0 {
        w += TAU;
    }
    if w >= TAU {
        0.0
    } else {
        w
    }
}

pub fn wrap_angles(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(raw.iter().map(|&a| wrap_angle(a)).collect())
}

/// Signed representative of `a - b` in `[-pi, pi)`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    if d >= core::f64::consts::PI {
        d - TAU
    } else {
        d
    }
}

pub fn angular_distance(a: f64, b: f64) -> f64 {
    angle_difference(a, b).abs()
}

pub fn torus_translate(theta: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != lambda.len() {
        return Err(Error::LengthMismatch {
            expected: theta.len(),
            got: lambda.len(),
        });
    }
    let sum: Vec<f64> = theta.iter().zip(lambda).map(|(t, l)| t + l).collect();
    wrap_angles(&sum)
}

/// A point of `R^k x T^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductPoint {
    pub x: Vec<f64>,
    pub theta: Vec<f64>,
}

impl ProductPoint {
    /// Builds a point, wrapping the angles.
    pub fn new(x: Vec<f64>, theta: &[f64]) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            x,
            theta: wrap_angles(theta)?,
        })
    }

    pub fn coords(&self) -> Vec<f64> {
        let mut c = self.x.clone();
        c.extend_from_slice(&self.theta);
        c
    }
}

/// A point of the unit sphere `S^5` in ambient coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    y: [f64; 6],
}

impl SpherePoint {
    pub fn new(y: [f64; 6]) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let deviation = (norm(&y) - 1.0).abs();
        if deviation > SPHERE_TOL {
            return Err(Error::OffSphere { deviation });
        }
        Ok(Self { y })
    }

    /// Radially projects a nonzero vector onto the sphere.
    pub fn normalized(y: [f64; 6]) -> Result<Self> {
        let r = norm(&y);
        if !r.is_finite() || r == 0.0 {
            return Err(Error::InvalidArgument(
                "cannot normalize a zero vector".into(),
            ));
        }
        Ok(Self {
            y: y.map(|v| v / r),
        })
    }

    /// The point whose pair norms squared are `(x1, x2, 1 - x1 - x2)` with the
    /// given phase in each coordinate pair.
    pub fn from_base(x: [f64; 2], phases: [f64; 3]) -> Result<Self> {
        let x3 = 1.0 - x[0] - x[1];
        let radii = [x[0], x[1], x3].map(|v| v.max(0.0).sqrt());
        let mut y = [0.0; 6];
        for j in 0..3 {
            y[2 * j] = radii[j] * phases[j].cos();
            y[2 * j + 1] = radii[j] * phases[j].sin();
        }
        Self::normalized(y)
    }

    pub fn coords(&self) -> &[f64; 6] {
        &self.y
    }
}

/// A point of the closed triangle with vertices `(0,0), (1,0), (0,1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrianglePoint {
    pub x: [f64; 2],
}

impl TrianglePoint {
    pub fn new(x: [f64; 2]) -> Result<Self> {
        if !in_triangle(&x) {
            return Err(Error::OutsideDomain {
                chart: "triangle",
                point: x.to_vec(),
            });
        }
        Ok(Self { x })
    }

    /// True when the point is in the open triangle, the base of the free part.
    pub fn is_interior(&self) -> bool {
        self.x[0] > 0.0 && self.x[1] > 0.0 && self.x[0] + self.x[1] < 1.0
    }
}

fn in_triangle(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
        && x[0] >= -TRIANGLE_SLACK
        && x[1] >= -TRIANGLE_SLACK
        && x[0] + x[1] <= 1.0 + TRIANGLE_SLACK
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Rotates the pairs `(y1,y2), (y3,y4), (y5,y6)` of a vector by `lambda`.
pub(crate) fn rotate_pairs(lambda: &[f64], v: &[f64]) -> [f64; 6] {
    let mut out = [0.0; 6];
    for j in 0..3 {
        let (s, c) = lambda[j].sin_cos();
        let (a, b) = (v[2 * j], v[2 * j + 1]);
        out[2 * j] = c * a - s * b;
        out[2 * j + 1] = s * a + c * b;
    }
    out
}

pub fn torus_act_s5(lambda: &[f64; 3], y: &SpherePoint) -> SpherePoint {
    SpherePoint {
        y: rotate_pairs(lambda, &y.y),
    }
}

/// `pi(y) = (y1^2 + y2^2, y3^2 + y4^2)`.
pub fn base_projection(y: &SpherePoint) -> TrianglePoint {
    TrianglePoint {
        x: project_coords(&y.y),
    }
}

pub(crate) fn project_coords(y: &[f64]) -> [f64; 2] {
    [y[0] * y[0] + y[1] * y[1], y[2] * y[2] + y[3] * y[3]]
}

/// `(y1^2+y2^2)(y3^2+y4^2)(y5^2+y6^2)`, zero exactly on the singular set.
pub fn singular_indicator_s5(y: &SpherePoint) -> f64 {
    indicator_coords(&y.y)
}

pub(crate) fn indicator_coords(y: &[f64]) -> f64 {
    (y[0] * y[0] + y[1] * y[1]) * (y[2] * y[2] + y[3] * y[3]) * (y[4] * y[4] + y[5] * y[5])
}

/// The charts the toolkit knows how to integrate on.
///
/// Coordinates are flat `f64` slices: `Product` is `(x_1..x_k, theta_1..theta_n)`,
/// `Circle` is `(alpha, theta_1..theta_n)`, `Sphere5` is `(y_1..y_6)` and
/// `Triangle` is `(x_1, x_2)`. The torus acts on the `theta` block (product and
/// circle charts) or by pair rotations (sphere); the triangle carries no action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Chart {
    Product { k: usize, n: usize },
    Circle { n: usize },
    Sphere5,
    Triangle,
}

impl Chart {
    pub fn name(&self) -> &'static str {
        match self {
            Chart::Product { .. } => "product",
            Chart::Circle { .. } => "circle",
            Chart::Sphere5 => "sphere5",
            Chart::Triangle => "triangle",
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Chart::Product { k, n } => k + n,
            Chart::Circle { n } => 1 + n,
            Chart::Sphere5 => 6,
            Chart::Triangle => 2,
        }
    }

    /// Dimension of the acting torus.
    pub fn action_rank(&self) -> usize {
        match *self {
            Chart::Product { n, .. } | Chart::Circle { n } => n,
            Chart::Sphere5 => 3,
            Chart::Triangle => 0,
        }
    }

    /// Dimension of the orbit space coordinates returned by [`Chart::base`].
    pub fn base_dim(&self) -> usize {
        match *self {
            Chart::Product { k, .. } => k,
            Chart::Circle { .. } => 1,
            Chart::Sphere5 | Chart::Triangle => 2,
        }
    }

    pub fn is_angle(&self, i: usize) -> bool {
        match *self {
            Chart::Product { k, .. } => i >= k,
            Chart::Circle { .. } => true,
            Chart::Sphere5 | Chart::Triangle => false,
        }
    }

    /// Whether the base coordinate is periodic.
    pub fn periodic_base(&self) -> bool {
        matches!(self, Chart::Circle { .. })
    }

    pub fn check_len(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: p.len(),
            });
        }
        Ok(())
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        if p.len() != self.dim() || p.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Chart::Sphere5 => (norm(p) - 1.0).abs() <= 1e-8,
            Chart::Triangle => in_triangle(p),
            _ => true,
        }
    }

    /// Brings coordinates back to the canonical representative: angles wrapped,
    /// sphere points renormalized.
    pub fn normalize(&self, p: &mut [f64]) {
        match self {
            Chart::Sphere5 => {
                let r = norm(p);
                if r > 0.0 {
                    p.iter_mut().for_each(|v| *v /= r);
                }
            }
            _ => {
                for (i, v) in p.iter_mut().enumerate() {
                    if self.is_angle(i) {
                        *v = wrap_angle(*v);
                    }
                }
            }
        }
    }

    pub fn normalized(&self, p: &[f64]) -> Vec<f64> {
        let mut q = p.to_vec();
        self.normalize(&mut q);
        q
    }

    /// Componentwise `a - b`, angles taken as the shortest signed difference.
    pub fn difference(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| {
                if self.is_angle(i) {
                    angle_difference(*x, *y)
                } else {
                    x - y
                }
            })
            .collect()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        norm(&self.difference(a, b))
    }

    /// Orbit-space coordinates of a point.
    pub fn base(&self, p: &[f64]) -> Vec<f64> {
        match *self {
            Chart::Product { k, .. } => p[..k].to_vec(),
            Chart::Circle { .. } => vec![p[0]],
            Chart::Sphere5 => project_coords(p).to_vec(),
            Chart::Triangle => p.to_vec(),
        }
    }

    pub fn base_distance(&self, base_a: &[f64], base_b: &[f64]) -> f64 {
        if self.periodic_base() {
            angular_distance(base_a[0], base_b[0])
        } else {
            norm(
                &base_a
                    .iter()
                    .zip(base_b)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            )
        }
    }

    /// Angles along the orbit through `p`.
    pub fn fiber_angles(&self, p: &[f64]) -> Vec<f64> {
        match *self {
            Chart::Product { k, .. } => p[k..].to_vec(),
            Chart::Circle { .. } => p[1..].to_vec(),
            Chart::Sphere5 => (0..3)
                .map(|j| wrap_angle(p[2 * j + 1].atan2(p[2 * j])))
                .collect(),
            Chart::Triangle => Vec::new(),
        }
    }

    /// The point over `base` that shares the fiber position of `template`.
    ///
    /// On the sphere this uses the section that keeps the phases of each
    /// coordinate pair (phase zero where a pair of `template` vanishes).
    pub fn lift(&self, base: &[f64], template: &[f64]) -> Result<Vec<f64>> {
        match *self {
            Chart::Product { k, .. } => {
                let mut q = template.to_vec();
                q[..k].copy_from_slice(&base[..k]);
                Ok(q)
            }
            Chart::Circle { .. } => {
                let mut q = template.to_vec();
                q[0] = wrap_angle(base[0]);
                Ok(q)
            }
            Chart::Sphere5 => {
                let x = [base[0], base[1]];
                if !in_triangle(&x) {
                    return Err(Error::OutsideDomain {
                        chart: "triangle",
                        point: x.to_vec(),
                    });
                }
                let phases = [0, 1, 2].map(|j| {
                    let (a, b) = (template[2 * j], template[2 * j + 1]);
                    if a == 0.0 && b == 0.0 {
                        0.0
                    } else {
                        b.atan2(a)
                    }
                });
                Ok(SpherePoint::from_base(x, phases)?.y.to_vec())
            }
            Chart::Triangle => Ok(base.to_vec()),
        }
    }

    /// The torus action `lambda . p`.
    pub fn act(&self, lambda: &[f64], p: &[f64]) -> Vec<f64> {
        match *self {
            Chart::Product { k, .. } => {
                let mut q = p.to_vec();
                for (v, l) in q[k..].iter_mut().zip(lambda) {
                    *v = wrap_angle(*v + l);
                }
                q
            }
            Chart::Circle { .. } => {
                let mut q = p.to_vec();
                for (v, l) in q[1..].iter_mut().zip(lambda) {
                    *v = wrap_angle(*v + l);
                }
                q
            }
            Chart::Sphere5 => rotate_pairs(lambda, p).to_vec(),
            Chart::Triangle => p.to_vec(),
        }
    }

    /// Tangent map of `lambda` applied to a vector based at `p`.
    pub fn act_vector(&self, lambda: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            Chart::Sphere5 => rotate_pairs(lambda, v).to_vec(),
            _ => v.to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angles(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let w = wrap_angles(&[TAU, -PI / 2.0]).unwrap();
        assert_eq!(w[0], 0.0);
        assert!((w[1] - 3.0 * PI / 2.0).abs() < 1e-15);
        let w = wrap_angles(&[7.5, 13.0]).unwrap();
        assert!((w[0] + TAU - 7.5).abs() < 1e-14);
        assert!((w[1] + 2.0 * TAU - 13.0).abs() < 1e-14);
        assert_eq!(wrap_angles(&[f64::NAN]), Err(Error::NonFinite));
        assert_eq!(wrap_angle(-1e-20), 0.0);
    }

    #[test]
    fn translate_examples() {
        assert_eq!(
            torus_translate(&[1.0, 2.0], &[0.0, 0.0]).unwrap(),
            vec![1.0, 2.0]
        );
        let t = torus_translate(&[PI, PI], &[PI, PI]).unwrap();
        assert!(t.iter().all(|&v| v == 0.0));
        assert!(matches!(
            torus_translate(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn s5_action_examples() {
        let e1 = SpherePoint::new([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(torus_act_s5(&[0.0; 3], &e1), e1);
        let r = torus_act_s5(&[PI, 0.0, 0.0], &e1);
        assert!((r.coords()[0] + 1.0).abs() < 1e-15);
        assert!(r.coords()[1].abs() < 1e-15);
        assert_eq!(base_projection(&e1).x, [1.0, 0.0]);
        assert_eq!(singular_indicator_s5(&e1), 0.0);
    }

    #[test]
    fn symmetric_point_projects_to_centroid() {
        let c = (1.0f64 / 3.0).sqrt();
        let y = SpherePoint::normalized([c, 0.0, 0.0, c, c, 0.0]).unwrap();
        let x = base_projection(&y).x;
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-15 && (x[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((singular_indicator_s5(&y) - 1.0 / 27.0).abs() < 1e-16);
    }

    #[test]
    fn off_sphere_rejected() {
        assert!(SpherePoint::new([1.0, 1e-6, 0.0, 0.0, 0.0, 0.0]).is_ok());
        assert!(matches!(
            SpherePoint::new([1.0, 1e-3, 0.0, 0.0, 0.0, 0.0]),
            Err(Error::OffSphere { .. })
        ));
        assert!(TrianglePoint::new([0.7, 0.7]).is_err());
    }

    #[test]
    fn sphere_lift_inverts_projection() {
        let y = SpherePoint::normalized([0.3, -0.2, 0.5, 0.1, -0.4, 0.6]).unwrap();
        let base = Chart::Sphere5.base(y.coords());
        let q = Chart::Sphere5.lift(&base, y.coords()).unwrap();
        assert!(Chart::Sphere5.distance(&q, y.coords()) < 1e-14);
    }

    fn sphere_point() -> impl Strategy<Value = SpherePoint> {
        prop::array::uniform6(-1.0f64..1.0)
            .prop_filter("nonzero", |v| norm(v) > 1e-3)
            .prop_map(|v| SpherePoint::normalized(v).unwrap())
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent(v in prop::collection::vec(-1e6f64..1e6, 1..5)) {
            let w = wrap_angles(&v).unwrap();
            prop_assert_eq!(wrap_angles(&w).unwrap(), w.clone());
            for (a, b) in v.iter().zip(&w) {
                prop_assert!((0.0..TAU).contains(b));
                let turns = (a - b) / TAU;
                prop_assert!((turns - turns.round()).abs() < 1e-9);
            }
        }

        #[test]
        fn translate_group_laws(
            th in prop::collection::vec(0.0f64..TAU, 3),
            l1 in prop::collection::vec(-10.0f64..10.0, 3),
            l2 in prop::collection::vec(-10.0f64..10.0, 3),
        ) {
            let neg: Vec<f64> = l1.iter().map(|v| -v).collect();
            let back = torus_translate(&torus_translate(&th, &l1).unwrap(), &neg).unwrap();
            for (a, b) in back.iter().zip(&th) {
                prop_assert!(angular_distance(*a, *b) < 1e-13);
            }
            let left = torus_translate(&torus_translate(&th, &l1).unwrap(), &l2).unwrap();
            let l12: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| a + b).collect();
            let right = torus_translate(&th, &l12).unwrap();
            for (a, b) in left.iter().zip(&right) {
                prop_assert!(angular_distance(*a, *b) < 1e-13);
            }
        }

        #[test]
        fn projection_is_invariant(y in sphere_point(), l in prop::array::uniform3(-10.0f64..10.0)) {
            let moved = torus_act_s5(&l, &y);
            let (a, b) = (base_projection(&y).x, base_projection(&moved).x);
            prop_assert!((a[0] - b[0]).abs() <= 1e-14 && (a[1] - b[1]).abs() <= 1e-14);
            prop_assert!((norm(moved.coords()) - 1.0).abs() <= 1e-14);
            prop_assert!((singular_indicator_s5(&y) - singular_indicator_s5(&moved)).abs() <= 1e-15);
            let neg = l.map(|v| -v);
            let back = torus_act_s5(&neg, &moved);
            prop_assert!(Chart::Sphere5.distance(back.coords(), y.coords()) < 1e-14);
            let t = base_projection(&y);
            prop_assert!(t.x[0] >= 0.0 && t.x[1] >= 0.0 && t.x[0] + t.x[1] <= 1.0 + 1e-15);
        }
    }
}
