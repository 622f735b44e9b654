//! Solving `xi . f = g` for `g(0) = 0` by integrating `g` along the
//! trajectories of the radial field, and the torus normal form built on it.
//!
//! Along the trajectory `s -> e^s x` of `xi`, `f(x) = int_{-inf}^0 g(e^s x) ds`
//! satisfies `xi . f = g`; the integral converges because `|g(y)| <= L |y|`.
//! The integral is truncated at `s_min`, where the neglected tail is bounded
//! by `L |x| e^{s_min}`, and evaluated with a composite Gauss-Legendre rule
//! that is chosen once per solution, so `f` is a fixed smooth function of `x`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::fields::{linear_model_field, FieldHandle, FieldMeta, ScalarFn};
use crate::geometry::{norm, wrap_angle, Chart};
use crate::linalg::gauss_legendre;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use crate::math::Real;
use crate::{Error, Result};

const NODES_PER_PANEL: usize = 10;
const MAX_PANELS: usize = 4096;

#[derive(Clone)]
pub struct RadialSolution {
    g: Arc<ScalarFn>,
    k: usize,
    annulus: (f64, f64),
    s_min: f64,
    lipschitz: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl core::fmt::Debug for RadialSolution {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("RadialSolution")
            .field("k", &self.k)
            .field("annulus", &self.annulus)
            .field("s_min", &self.s_min)
            .field("lipschitz", &self.lipschitz)
            .field("node_count", &self.nodes.len())
            .finish()
    }
}

impl RadialSolution {
    /// `f(x)`; `f(0) = 0` by convention.
    pub fn eval(&self, x: &[f64]) -> f64 {
        if x.iter().all(|v| *v == 0.0) {
            return 0.0;
        }
        let mut y = vec![0.0; x.len()];
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| {
                let scale = s.exp();
                y.iter_mut().zip(x).for_each(|(yi, xi)| *yi = scale * xi);
                w * (self.g)(&y)
            })
            .sum()
    }

    pub fn s_min(&self) -> f64 {
        self.s_min
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn annulus(&self) -> (f64, f64) {
        self.annulus
    }

    /// Bound on `|g(e^{s_min} x)|`, the exact defect of the truncated integral.
    pub fn tail_bound(&self, x: &[f64]) -> f64 {
        self.lipschitz * norm(x) * self.s_min.exp()
    }

    /// `|xi . f(x) - g(x)|`, with `xi . f` measured by Richardson-extrapolated
    /// central differences of `eps -> f(e^eps x)`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        (radial_derivative(&|p: &[f64]| self.eval(p), x, 1e-3) - (self.g)(x)).abs()
    }
}

/// `d/d eps f(e^eps x)` at `eps = 0`, i.e. `xi . f(x)`, to `O(h^4)`.
pub fn radial_derivative(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> f64 {
    let central = |h: f64| {
        let up: Vec<f64> = x.iter().map(|v| v * h.exp()).collect();
        let down: Vec<f64> = x.iter().map(|v| v * (-h).exp()).collect();
        (f(&up) - f(&down)) / (2.0 * h)
    };
    (4.0 * central(h / 2.0) - central(h)) / 3.0
}

/// Probe points spread over the ball of radius `r_max` in `R^k`.
fn probe_points(k: usize, r_max: f64) -> Vec<Vec<f64>> {
    let mut pts = Vec::new();
    let directions = 2 * k + 2 * k * k.saturating_sub(1) + 1;
    for d in 0..directions {
        // deterministic spread: axes, then pairwise diagonals, then a skew direction
        let mut dir = vec![0.0; k];
        if d < 2 * k {
            dir[d / 2] = if d % 2 == 0 { 1.0 } else { -1.0 };
        } else if d + 1 < directions {
            let idx = d - 2 * k;
            let (pair, sign) = (idx / 2, idx % 2);
            let (i, j) = (pair / k.max(1) % k, (pair % k + 1) % k);
            dir[i] = 1.0;
            dir[j] += if sign == 0 { 1.0 } else { -1.0 };
        } else {
            for (i, v) in dir.iter_mut().enumerate() {
                *v = 1.0 + 0.37 * i as f64;
            }
        }
        let len = norm(&dir);
        if len == 0.0 {
            continue;
        }
        for step in 1..=8 {
            let r = r_max * step as f64 / 8.0;
            pts.push(dir.iter().map(|v| v * r / len).collect());
        }
    }
    pts
}

fn gradient_norm(g: &ScalarFn, x: &[f64]) -> f64 {
    let h = 1e-6;
    let mut q = x.to_vec();
    let mut acc = 0.0;
    for i in 0..x.len() {
        q[i] = x[i] + h;
        let fp = g(&q);
        q[i] = x[i] - h;
        let fm = g(&q);
        q[i] = x[i];
        acc += ((fp - fm) / (2.0 * h)).powi(2);
    }
    acc.sqrt()
}

fn composite_rule(a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(NODES_PER_PANEL);
    let width = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * NODES_PER_PANEL);
    let mut weights = Vec::with_capacity(panels * NODES_PER_PANEL);
    for p in 0..panels {
        let mid = a + width * (p as f64 + 0.5);
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(mid + 0.5 * width * xi);
            weights.push(0.5 * width * wi);
        }
    }
    (nodes, weights)
}

fn integrate_along(g: &ScalarFn, x: &[f64], nodes: &[f64], weights: &[f64]) -> f64 {
    let mut y = vec![0.0; x.len()];
    nodes
        .iter()
        .zip(weights)
        .map(|(&s, &w)| {
            let e = s.exp();
            y.iter_mut().zip(x).for_each(|(yi, xi)| *yi = e * xi);
            w * g(&y)
        })
        .sum()
}

/// Solves `xi . f = g` on the annulus `r_min <= |x| <= r_max` of `R^k`.
pub fn solve_radial(
    g: Arc<ScalarFn>,
    k: usize,
    annulus: (f64, f64),
    tol: f64,
) -> Result<RadialSolution> {
    let (r_min, r_max) = annulus;
    if k == 0 || !(r_min > 0.0) || !(r_max > r_min) || !(tol > 0.0) {
        return Err(Error::InvalidArgument(
            "need k >= 1, 0 < r_min < r_max and tol > 0".into(),
        ));
    }
    let g0 = g(&vec![0.0; k]);
    if !g0.is_finite() || g0.abs() > 1e-12 {
        return Err(Error::NonzeroAtOrigin(g0));
    }

    let probes = probe_points(k, r_max);
    let mut lipschitz = probes
        .iter()
        .chain(core::iter::once(&vec![0.0; k]))
        .map(|p| gradient_norm(g.as_ref(), p))
        .fold(0.0, f64::max);
    if !lipschitz.is_finite() {
        return Err(Error::NonFinite);
    }
    lipschitz = 2.0 * lipschitz + f64::MIN_POSITIVE;

    let s_min = (tol * r_min.min(1.0) / (lipschitz * r_max.max(1.0)))
        .ln()
        .min(-1.0);

    // The tail beyond s_min must respect the Lipschitz bound.
    let (tail_nodes, tail_weights) = composite_rule(s_min - 20.0, s_min, 20);
    for p in &probes {
        let tail = integrate_along(g.as_ref(), p, &tail_nodes, &tail_weights).abs();
        let bound = lipschitz * norm(p) * s_min.exp();
        if tail > bound * (1.0 + 1e-9) + 1e-300 {
            return Err(Error::TailNotConverged { tail, bound });
        }
    }

    let outer: Vec<&Vec<f64>> = probes
        .iter()
        .filter(|p| norm(p) >= r_max * (1.0 - 1e-9))
        .collect();
    let mut panels = ((-s_min).ceil() as usize).max(4);
    let (mut nodes, mut weights) = composite_rule(s_min, 0.0, panels);
    loop {
        let (n2, w2) = composite_rule(s_min, 0.0, 2 * panels);
        let change = outer
            .iter()
            .map(|p| {
                (integrate_along(g.as_ref(), p, &nodes, &weights)
                    - integrate_along(g.as_ref(), p, &n2, &w2))
                .abs()
            })
            .fold(0.0, f64::max);
        if change <= 1e-3 * tol || 2 * panels > MAX_PANELS {
            break;
        }
        panels *= 2;
        nodes = n2;
        weights = w2;
    }

    Ok(RadialSolution {
        g,
        k,
        annulus,
        s_min,
        lipschitz,
        nodes,
        weights,
    })
}

/// `xi + sum_r g_r(x) d/dtheta_r` on `R^k x T^n`.
pub fn lifted_radial_field(k: usize, g_list: &[Arc<ScalarFn>]) -> FieldHandle {
    let gs: Vec<Arc<ScalarFn>> = g_list.to_vec();
    let n = gs.len();
    FieldHandle::new(
        "xi+sum g_r d/dtheta_r",
        Chart::Product { k, n },
        move |p, out| {
            out[..k].copy_from_slice(&p[..k]);
            for (o, g) in out[k..].iter_mut().zip(&gs) {
                *o = g(&p[..k]);
            }
        },
    )
    .with_meta(FieldMeta {
        invariant: true,
        base_box: vec![(-1.0, 1.0); k],
        ..FieldMeta::default()
    })
}

/// Frequencies `b_r = g_r(0)` and correctors `phi_r` with
/// `xi . phi_r = g_r - g_r(0)`.
#[derive(Clone, Debug)]
pub struct NormalFormReport {
    pub k: usize,
    pub frequencies: Vec<f64>,
    pub correctors: Vec<RadialSolution>,
}

impl NormalFormReport {
    /// `F(x, theta) = (x, theta - phi(x))`, which carries `xi + sum g_r d/dtheta_r`
    /// to `xi + sum b_r d/dtheta_r`.
    pub fn coordinate_change(&self) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        move |p: &[f64]| {
            let x = &p[..self.k];
            let mut q = p.to_vec();
            for (t, phi) in q[self.k..].iter_mut().zip(&self.correctors) {
                *t = wrap_angle(*t - phi.eval(x));
            }
            q
        }
    }

    /// The normal form `xi + sum b_r d/dtheta_r`.
    pub fn target_field(&self) -> FieldHandle {
        linear_model_field(self.k, &self.frequencies, false)
    }

    /// Largest corrector residual `|xi . phi_r - (g_r - b_r)|` over `points`.
    pub fn max_corrector_residual(&self, points: &[Vec<f64>]) -> f64 {
        points
            .iter()
            .flat_map(|x| self.correctors.iter().map(move |c| c.residual(x)))
            .fold(0.0, f64::max)
    }
}

pub fn normalize_lifted_field(
    g_list: &[Arc<ScalarFn>],
    k: usize,
    annulus: (f64, f64),
    tol: f64,
) -> Result<NormalFormReport> {
    let zero = vec![0.0; k];
    let mut frequencies = Vec::with_capacity(g_list.len());
    let mut correctors = Vec::with_capacity(g_list.len());
    for g in g_list {
        let b = g(&zero);
        if !b.is_finite() {
            return Err(Error::NonFinite);
        }
        let inner = g.clone();
        let shifted: Arc<ScalarFn> = Arc::new(move |x: &[f64]| inner(x) - b);
        frequencies.push(b);
        correctors.push(solve_radial(shifted, k, annulus, tol)?);
    }
    Ok(NormalFormReport {
        k,
        frequencies,
        correctors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::pushforward_residual;
    use crate::sampling;

    fn solve(g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static, k: usize) -> RadialSolution {
        solve_radial(Arc::new(g), k, (0.1, 2.0), 1e-10).unwrap()
    }

    #[test]
    fn degree_one_is_reproduced() {
        let f = solve(|x| x[0], 2);
        for x in [[0.1, 0.0], [1.0, -1.0], [-1.3, 0.9]] {
            assert!((f.eval(&x) - x[0]).abs() < 1e-9);
        }
        assert_eq!(f.eval(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn homogeneous_cubic_is_divided_by_degree() {
        let g = |x: &[f64]| x[0] * x[0] * x[1];
        let f = solve(g, 2);
        let x = [0.8, -1.1];
        assert!((f.eval(&x) - g(&x) / 3.0).abs() < 1e-9);
        assert!(f.residual(&x) < 1e-8);
    }

    #[test]
    fn rejects_nonzero_at_origin() {
        let r = solve_radial(Arc::new(|x: &[f64]| 1.0 + x[0]), 1, (0.1, 2.0), 1e-8);
        assert!(matches!(r, Err(Error::NonzeroAtOrigin(_))));
        let r = solve_radial(Arc::new(|x: &[f64]| x[0]), 1, (0.0, 2.0), 1e-8);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn non_lipschitz_tail_is_reported() {
        // sqrt|x| has g(0) = 0 but no Lipschitz bound at the origin.
        let r = solve_radial(Arc::new(|x: &[f64]| x[0].abs().sqrt()), 1, (0.1, 2.0), 1e-8);
        assert!(matches!(r, Err(Error::TailNotConverged { .. })), "{r:?}");
    }

    #[test]
    fn smooth_non_polynomial_residual() {
        let f = solve(|x| x[0].sin() * x[1], 2);
        let mut rng = sampling::rng(2);
        for _ in 0..200 {
            let x = sampling::shell_point(&mut rng, 2, 0.1, 2.0);
            assert!(f.residual(&x) < 1e-8);
        }
    }

    #[test]
    fn normal_form_trivial_cases() {
        let c: Arc<ScalarFn> = Arc::new(|_| 0.75);
        let lin: Arc<ScalarFn> = Arc::new(|x| 0.5 + x[0]);
        let nf = normalize_lifted_field(&[c, lin], 2, (0.1, 2.0), 1e-10).unwrap();
        assert_eq!(nf.frequencies, vec![0.75, 0.5]);
        let x = [0.6, -0.3];
        assert!(nf.correctors[0].eval(&x).abs() < 1e-12);
        assert!((nf.correctors[1].eval(&x) - 0.6).abs() < 1e-9);
    }

    #[test]
    fn normal_form_conjugates_fields() {
        let g1: Arc<ScalarFn> = Arc::new(|x| 1.0 + x[0] * x[1] - 0.5 * x[1].powi(3));
        let g2: Arc<ScalarFn> = Arc::new(|x| 2.0f64.sqrt() + x[0].powi(2) * x[1] + x[0]);
        let gs = [g1, g2];
        let nf = normalize_lifted_field(&gs, 2, (0.1, 2.0), 1e-10).unwrap();
        let source = lifted_radial_field(2, &gs);
        let target = nf.target_field();
        let f = nf.coordinate_change();
        let mut rng = sampling::rng(4);
        for _ in 0..50 {
            let mut p = sampling::shell_point(&mut rng, 2, 0.1, 2.0);
            p.extend(sampling::torus_angles(&mut rng, 2));
            assert!(pushforward_residual(&f, &source, &target, &p, 1e-4).unwrap() < 1e-6);
        }
    }
}
