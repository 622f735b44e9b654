//! Vector fields on the supported charts: the explicit library used by the
//! constructions, a little field algebra, and finite-difference Lie brackets
//! and pushforwards.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{E, PI, TAU};
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{norm, project_coords, wrap_angle, Chart};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use crate::math::Real;
use crate::{Error, Result};

pub type EvalFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
pub type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// The frequency vector `(1, e, e^2)` used on `S^5`.
pub const S5_FREQUENCIES: [f64; 3] = [1.0, E, E * E];

/// Default finite-difference step for brackets and pushforwards.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Fiber over a source of the base field.
    Source,
    /// Fiber over a sink of the base field.
    Sink,
    Saddle,
    /// Zero created by the damping factor at a regular point of the base field.
    Artificial,
    /// A stratum of the singular set of the action (points with isotropy).
    SingularStratum,
}

/// A distinguished fiber of a field: where it lives in the base, what it is,
/// and the declared order of nullity of the field along it (if it vanishes).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub id: String,
    pub kind: FeatureKind,
    pub base: Vec<f64>,
    pub order: Option<u32>,
    /// `order` is only a lower bound (the singular stratum of `S^5`).
    #[serde(default)]
    pub order_is_lower_bound: bool,
}

impl Feature {
    pub fn new(id: &str, kind: FeatureKind, base: Vec<f64>, order: Option<u32>) -> Self {
        Self {
            id: id.to_string(),
            kind,
            base,
            order,
            order_is_lower_bound: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub features: Vec<Feature>,
    /// Frequencies of the affine part along the torus, when there is one.
    pub frequencies: Vec<f64>,
    /// Caller-declared rational independence of `frequencies`.
    pub dense: Option<bool>,
    /// A small integer relation among the frequencies, if one was found.
    pub density_warning: Option<Vec<i64>>,
    /// Declared invariant under the chart's torus action.
    pub invariant: bool,
    /// Sampling box for the Euclidean base coordinates.
    pub base_box: Vec<(f64, f64)>,
}

/// A named, immutable evaluation rule `point -> tangent vector` on a chart.
#[derive(Clone)]
pub struct FieldHandle {
    name: String,
    chart: Chart,
    eval: Arc<EvalFn>,
    meta: FieldMeta,
}

impl fmt::Debug for FieldHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldHandle")
            .field("name", &self.name)
            .field("chart", &self.chart)
            .field("meta", &self.meta)
            .finish()
    }
}

impl FieldHandle {
    pub fn new<F>(name: &str, chart: Chart, eval: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            chart,
            eval: Arc::new(eval),
            meta: FieldMeta::default(),
        }
    }

    pub fn with_meta(mut self, meta: FieldMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn renamed(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn meta(&self) -> &FieldMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut FieldMeta {
        &mut self.meta
    }

    pub fn eval_into(&self, p: &[f64], out: &mut [f64]) {
        (self.eval)(p, out)
    }

    pub fn eval(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.chart.dim()];
        (self.eval)(p, &mut out);
        out
    }

    /// `f * self`, keeping the metadata.
    pub fn scaled_by(&self, name: &str, f: Arc<ScalarFn>) -> FieldHandle {
        let inner = self.eval.clone();
        FieldHandle {
            name: name.to_string(),
            chart: self.chart,
            eval: Arc::new(move |p: &[f64], out: &mut [f64]| {
                inner(p, out);
                let s = f(p);
                out.iter_mut().for_each(|v| *v *= s);
            }),
            meta: self.meta.clone(),
        }
    }

    /// `self + other`; the metadata of `self` is kept.
    pub fn plus(&self, name: &str, other: &FieldHandle) -> Result<FieldHandle> {
        if self.chart != other.chart {
            return Err(Error::ChartMismatch(self.chart.name(), other.chart.name()));
        }
        let (a, b) = (self.eval.clone(), other.eval.clone());
        let dim = self.chart.dim();
        Ok(FieldHandle {
            name: name.to_string(),
            chart: self.chart,
            eval: Arc::new(move |p: &[f64], out: &mut [f64]| {
                a(p, out);
                let mut tmp = vec![0.0; dim];
                b(p, &mut tmp);
                out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
            }),
            meta: self.meta.clone(),
        })
    }
}

/// Searches for a nonzero integer vector `m` with `|m_i| <= max_coeff` and
/// `|sum m_i a_i| < tol`.
///
/// Exhaustive for up to three frequencies; for more, only pairwise relations
/// are searched through continued-fraction convergents of `a_i / a_j`.
pub fn integer_relation(a: &[f64], max_coeff: i64, tol: f64) -> Option<Vec<i64>> {
    let n = a.len();
    if let Some(i) = a.iter().position(|v| v.abs() < tol) {
        let mut m = vec![0; n];
        m[i] = 1;
        return Some(m);
    }
    if n <= 3 {
        let range = -max_coeff..=max_coeff;
        let mut m = vec![0i64; n];
        // first nonzero coefficient positive; enumerate with an odometer
        let total = (2 * max_coeff + 1).pow(n as u32);
        for idx in 0..total {
            let mut r = idx;
            for slot in m.iter_mut() {
                *slot = r % (2 * max_coeff + 1) - max_coeff;
                r /= 2 * max_coeff + 1;
            }
            match m.iter().find(|&&c| c != 0) {
                Some(&c) if c > 0 => {}
                _ => continue,
            }
            debug_assert!(m.iter().all(|c| range.contains(c)));
            let s: f64 = m.iter().zip(a).map(|(&c, &v)| c as f64 * v).sum();
            if s.abs() < tol {
                let g = m.iter().fold(0, |g, &c| gcd(g, c.abs()));
                return Some(m.iter().map(|c| c / g).collect());
            }
        }
        return None;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if let Some((p, q)) = small_ratio(a[i] / a[j], max_coeff, tol / a[j].abs()) {
                let mut m = vec![0; n];
                m[i] = q;
                m[j] = -p;
                return Some(m);
            }
        }
    }
    None
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Continued-fraction convergent `p/q` of `x` with `|p|, |q| <= bound` and
/// `|q x - p| < tol`.
fn small_ratio(x: f64, bound: i64, tol: f64) -> Option<(i64, i64)> {
    let (mut p0, mut q0, mut p1, mut q1) = (0i64, 1i64, 1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e12 {
            break;
        }
        let a = a as i64;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if p2.abs() > bound || q2.abs() > bound {
            break;
        }
        if (q2 as f64 * x - p2 as f64).abs() < tol {
            return Some((p2, q2));
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = r - a as f64;
        if frac.abs() < 1e-300 {
            break;
        }
        r = 1.0 / frac;
    }
    None
}

fn frequency_meta(a: &[f64], dense: bool) -> FieldMeta {
    FieldMeta {
        frequencies: a.to_vec(),
        dense: Some(dense),
        density_warning: integer_relation(a, 50, 1e-9),
        invariant: true,
        ..FieldMeta::default()
    }
}

/// `xi = sum x_j d/dx_j` on `R^k`.
pub fn radial_field(k: usize) -> Result<FieldHandle> {
    if k == 0 {
        return Err(Error::InvalidArgument("radial field needs k >= 1".into()));
    }
    let meta = FieldMeta {
        features: vec![Feature::new(
            "origin",
            FeatureKind::Source,
            vec![0.0; k],
            Some(1),
        )],
        base_box: vec![(-1.0, 1.0); k],
        ..FieldMeta::default()
    };
    Ok(
        FieldHandle::new("xi", Chart::Product { k, n: 0 }, |p, out| {
            out.copy_from_slice(p)
        })
        .with_meta(meta),
    )
}

/// The constant field `T = sum a_r d/dtheta_r` on `T^n`.
///
/// `dense` is the caller's declaration that the `a_r` are rationally
/// independent; a small integer relation, if found, is recorded in
/// `meta().density_warning`.
pub fn affine_torus_field(a: &[f64], dense: bool) -> FieldHandle {
    let freq = a.to_vec();
    let n = a.len();
    FieldHandle::new("T", Chart::Product { k: 0, n }, move |_, out| {
        out.copy_from_slice(&freq)
    })
    .with_meta(frequency_meta(a, dense))
}

/// `X = xi + T` on `R^k x T^n`.
pub fn linear_model_field(k: usize, a: &[f64], dense: bool) -> FieldHandle {
    let freq = a.to_vec();
    let n = a.len();
    let mut meta = frequency_meta(a, dense);
    meta.features = vec![Feature::new(
        "origin",
        FeatureKind::Source,
        vec![0.0; k],
        None,
    )];
    meta.base_box = vec![(-1.0, 1.0); k];
    FieldHandle::new("xi+T", Chart::Product { k, n }, move |p, out| {
        out[..k].copy_from_slice(&p[..k]);
        out[k..].copy_from_slice(&freq);
    })
    .with_meta(meta)
}

/// `x_j d/dx_l` on `R^k x T^n` (zero-based indices).
pub fn coordinate_basis_field(k: usize, n: usize, j: usize, l: usize) -> FieldHandle {
    FieldHandle::new(
        &alloc::format!("x{}*d/dx{}", j + 1, l + 1),
        Chart::Product { k, n },
        move |p, out| {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[l] = p[j];
        },
    )
}

/// `d/dtheta_r` on `R^k x T^n` (zero-based index).
pub fn angle_basis_field(k: usize, n: usize, r: usize) -> FieldHandle {
    FieldHandle::new(
        &alloc::format!("d/dtheta{}", r + 1),
        Chart::Product { k, n },
        move |_, out| {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[k + r] = 1.0;
        },
    )
}

/// The `k^2 + n` fields `{x_j d/dx_l, d/dtheta_r}` that commute with `xi + T`.
pub fn commutant_basis(k: usize, n: usize) -> Vec<FieldHandle> {
    let mut out = Vec::with_capacity(k * k + n);
    for j in 0..k {
        for l in 0..k {
            out.push(coordinate_basis_field(k, n, j, l));
        }
    }
    for r in 0..n {
        out.push(angle_basis_field(k, n, r));
    }
    out
}

// ---------------------------------------------------------------------------
// S^5 with the T^3 action

/// The fundamental fields `U_j = -y_{2j} d/dy_{2j-1} + y_{2j-1} d/dy_{2j}`.
pub fn fundamental_fields_s5() -> [FieldHandle; 3] {
    [0, 1, 2].map(|j| {
        FieldHandle::new(
            &alloc::format!("U{}", j + 1),
            Chart::Sphere5,
            move |y, out| {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[2 * j] = -y[2 * j + 1];
                out[2 * j + 1] = y[2 * j];
            },
        )
        .with_meta(FieldMeta {
            invariant: true,
            ..FieldMeta::default()
        })
    })
}

fn connection_into(r: usize, y: &[f64], out: &mut [f64]) {
    let s = y[4] * y[4] + y[5] * y[5];
    let rr = y[2 * r] * y[2 * r] + y[2 * r + 1] * y[2 * r + 1];
    out.iter_mut().for_each(|v| *v = 0.0);
    out[2 * r] = s * y[2 * r];
    out[2 * r + 1] = s * y[2 * r + 1];
    out[4] = -rr * y[4];
    out[5] = -rr * y[5];
}

/// The horizontal fields `V_1, V_2` of the flat connection on `S^5 - S`.
///
/// `d pi (V_r) = 2 (1 - x_1 - x_2) x_r e_r`.
pub fn connection_fields_s5() -> [FieldHandle; 2] {
    [0, 1].map(|r| {
        FieldHandle::new(
            &alloc::format!("V{}", r + 1),
            Chart::Sphere5,
            move |y, out| connection_into(r, y, out),
        )
        .with_meta(FieldMeta {
            invariant: true,
            ..FieldMeta::default()
        })
    })
}

/// `Y = 2(1-x1-x2) x1 x2 [(x1 - 1/4) d/dx1 + (x2 - 1/4) d/dx2]` on the triangle.
pub fn base_gradient_field() -> FieldHandle {
    let meta = FieldMeta {
        features: vec![Feature::new(
            "source",
            FeatureKind::Source,
            vec![0.25, 0.25],
            Some(1),
        )],
        ..FieldMeta::default()
    };
    FieldHandle::new("Y", Chart::Triangle, |x, out| {
        let c = 2.0 * (1.0 - x[0] - x[1]) * x[0] * x[1];
        out[0] = c * (x[0] - 0.25);
        out[1] = c * (x[1] - 0.25);
    })
    .with_meta(meta)
}

/// Artificial zeros of the `S^5` damping factor with their orders.
pub const S5_ARTIFICIAL: [([f64; 2], u32); 3] =
    [([0.125, 0.125], 2), ([0.125, 0.25], 4), ([0.25, 0.125], 6)];

/// Damping factor on the triangle base: `rho(x)` times squared distances to
/// the artificial zeros raised to half their orders, with
/// `rho = x1^10 x2^10 (1 - x1 - x2)^10`.
pub fn tau_s5(x: &[f64]) -> f64 {
    let rho = (x[0] * x[1] * (1.0 - x[0] - x[1])).powi(10);
    let d = |c: [f64; 2]| (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
    rho * d([0.125, 0.125]) * d([0.125, 0.25]).powi(2) * d([0.25, 0.125]).powi(3)
}

fn lifted_into(y: &[f64], out: &mut [f64]) {
    let [x1, x2] = project_coords(y);
    let mut v = [0.0; 6];
    out.iter_mut().for_each(|o| *o = 0.0);
    connection_into(0, y, &mut v);
    let c1 = x2 * (x1 - 0.25);
    out.iter_mut().zip(&v).for_each(|(o, vi)| *o += c1 * vi);
    connection_into(1, y, &mut v);
    let c2 = x1 * (x2 - 0.25);
    out.iter_mut().zip(&v).for_each(|(o, vi)| *o += c2 * vi);
}

/// Horizontal lift `Y'` of the base field through the flat connection:
/// `Y' = x2 (x1 - 1/4) V1 + x1 (x2 - 1/4) V2` with `x = pi(y)`, so that
/// `d pi (Y') = Y`. It extends polynomially to all of `S^5` and vanishes on `S`.
pub fn lifted_field_s5() -> FieldHandle {
    FieldHandle::new("Y'", Chart::Sphere5, lifted_into).with_meta(FieldMeta {
        invariant: true,
        ..FieldMeta::default()
    })
}

fn describing_s5_into(y: &[f64], out: &mut [f64]) {
    let x = project_coords(y);
    let t = tau_s5(&x);
    lifted_into(y, out);
    for (j, a) in S5_FREQUENCIES.iter().enumerate() {
        out[2 * j] -= a * y[2 * j + 1];
        out[2 * j + 1] += a * y[2 * j];
    }
    out.iter_mut().for_each(|v| *v *= t);
}

/// Features of the `S^5` describing field: the source fiber, the three
/// artificial fibers and the singular set `S` (order at least ten).
pub fn s5_features() -> Vec<Feature> {
    let mut f = vec![Feature::new(
        "source",
        FeatureKind::Source,
        vec![0.25, 0.25],
        None,
    )];
    for (i, (base, order)) in S5_ARTIFICIAL.iter().enumerate() {
        f.push(Feature::new(
            &alloc::format!("p{}", i + 1),
            FeatureKind::Artificial,
            base.to_vec(),
            Some(*order),
        ));
    }
    let mut s = Feature::new("S", FeatureKind::SingularStratum, vec![0.5, 0.5], Some(10));
    s.order_is_lower_bound = true;
    f.push(s);
    f
}

/// `X' = (tau o pi)(Y' + U1 + e U2 + e^2 U3)` on `S^5`.
pub fn describing_field_s5() -> FieldHandle {
    let mut meta = frequency_meta(&S5_FREQUENCIES, true);
    meta.features = s5_features();
    FieldHandle::new("X'", Chart::Sphere5, describing_s5_into).with_meta(meta)
}

/// Orthogonal projection of an ambient vector onto `T_y S^5`.
pub fn project_to_sphere_tangent(y: &[f64], v: &mut [f64]) {
    let yy: f64 = y.iter().map(|c| c * c).sum();
    let vy: f64 = y.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(y).for_each(|(vi, yi)| *vi -= vy / yy * yi);
}

// ---------------------------------------------------------------------------
// one-dimensional bases

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Line,
    Circle,
}

impl core::str::FromStr for BaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(BaseKind::Line),
            "circle" => Ok(BaseKind::Circle),
            other => Err(Error::InvalidArgument(alloc::format!(
                "unknown base {other:?}"
            ))),
        }
    }
}

/// `q(x) = x(x-1)(x-2)(x-3)(x-4)`.
pub fn line_q(x: f64) -> f64 {
    x * (x - 1.0) * (x - 2.0) * (x - 3.0) * (x - 4.0)
}

/// Base field on the line, `q / (q^2 + 1)`.
pub fn line_y(x: f64) -> f64 {
    let q = line_q(x);
    q / (q * q + 1.0)
}

pub const LINE_SOURCES: [f64; 3] = [0.0, 2.0, 4.0];
pub const LINE_SINKS: [(f64, u32); 2] = [(1.0, 2), (3.0, 4)];
pub const CIRCLE_SOURCES: [f64; 3] = [0.0, TAU / 3.0, 2.0 * TAU / 3.0];
pub const CIRCLE_SINKS: [(f64, u32); 3] = [(PI / 3.0, 2), (PI, 4), (5.0 * PI / 3.0, 6)];

/// Bounded damping on the line: order two at 1, order four at 3.
pub fn line_tau(x: f64) -> f64 {
    LINE_SINKS
        .iter()
        .map(|&(p, order)| {
            let d = (x - p) * (x - p);
            (d / (1.0 + d)).powi(order as i32 / 2)
        })
        .product()
}

/// Damping on the circle: `prod (1 - cos(alpha - p))^(order/2)` over the sinks.
pub fn circle_tau(alpha: f64) -> f64 {
    CIRCLE_SINKS
        .iter()
        .map(|&(p, order)| (1.0 - (alpha - p).cos()).powi(order as i32 / 2))
        .product()
}

/// `sin(3 alpha)`, evaluated as `±sin(3 r)` with `r` the offset from the
/// nearest stored zero so the listed sources and sinks are exact zeros.
pub fn circle_y(alpha: f64) -> f64 {
    const ZEROS: [f64; 7] = [
        0.0,
        PI / 3.0,
        TAU / 3.0,
        PI,
        2.0 * TAU / 3.0,
        5.0 * PI / 3.0,
        TAU,
    ];
    let a = wrap_angle(alpha);
    let j = ((a * 3.0 / PI).round() as usize).min(6);
    let s = (3.0 * (a - ZEROS[j])).sin();
    if j.is_multiple_of(2) {
        s
    } else {
        -s
    }
}

/// The fields of the one-dimensional-base construction.
#[derive(Clone)]
pub struct LineModel {
    pub base: BaseKind,
    /// `Y` on the base.
    pub y: FieldHandle,
    /// The damping factor on the base coordinate.
    pub tau: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// `Z = tau Y` on the base.
    pub z: FieldHandle,
    /// `X' = tau (Y + T)` on `B x T^n`.
    pub x_prime: FieldHandle,
}

pub fn line_model_fields(base: BaseKind, a: &[f64], dense: bool) -> Result<LineModel> {
    let n = a.len();
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one frequency".into()));
    }
    let (y_fn, tau_fn): (fn(f64) -> f64, fn(f64) -> f64) = match base {
        BaseKind::Line => (line_y, line_tau),
        BaseKind::Circle => (circle_y, circle_tau),
    };
    let (sources, sinks): (&[f64], &[(f64, u32)]) = match base {
        BaseKind::Line => (&LINE_SOURCES, &LINE_SINKS),
        BaseKind::Circle => (&CIRCLE_SOURCES, &CIRCLE_SINKS),
    };
    let (base_chart, chart) = match base {
        BaseKind::Line => (Chart::Product { k: 1, n: 0 }, Chart::Product { k: 1, n }),
        BaseKind::Circle => (Chart::Circle { n: 0 }, Chart::Circle { n }),
    };
    let base_box = match base {
        BaseKind::Line => vec![(-1.0, 5.0)],
        BaseKind::Circle => Vec::new(),
    };
    let features = |sink_order: &dyn Fn(u32) -> Option<u32>| -> Vec<Feature> {
        let mut f: Vec<Feature> = sources
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                Feature::new(
                    &alloc::format!("source{}", i),
                    FeatureKind::Source,
                    vec![s],
                    None,
                )
            })
            .collect();
        f.extend(sinks.iter().enumerate().map(|(i, &(s, o))| {
            Feature::new(
                &alloc::format!("sink{}", i),
                FeatureKind::Sink,
                vec![s],
                sink_order(o),
            )
        }));
        f
    };

    let y =
        FieldHandle::new("Y", base_chart, move |p, out| out[0] = y_fn(p[0])).with_meta(FieldMeta {
            features: features(&|_| Some(1)),
            base_box: base_box.clone(),
            ..FieldMeta::default()
        });
    let z = FieldHandle::new("Z", base_chart, move |p, out| {
        out[0] = tau_fn(p[0]) * y_fn(p[0])
    })
    .with_meta(FieldMeta {
        features: features(&|o| Some(o + 1)),
        base_box: base_box.clone(),
        ..FieldMeta::default()
    });
    let freq = a.to_vec();
    let mut meta = frequency_meta(a, dense);
    meta.features = features(&Some);
    meta.base_box = base_box;
    let x_prime = FieldHandle::new("X'", chart, move |p, out| {
        let t = tau_fn(p[0]);
        out[0] = t * y_fn(p[0]);
        for (o, f) in out[1..].iter_mut().zip(&freq) {
            *o = t * f;
        }
    })
    .with_meta(meta);
    Ok(LineModel {
        base,
        y,
        tau: Arc::new(tau_fn),
        z,
        x_prime,
    })
}

// ---------------------------------------------------------------------------
// brackets and pushforwards

fn check_domain(chart: Chart, p: &[f64]) -> Result<()> {
    chart.check_len(p)?;
    if !chart.contains(p) {
        return Err(Error::OutsideDomain {
            chart: chart.name(),
            point: p.to_vec(),
        });
    }
    Ok(())
}

/// Central difference of `field` at `p` along `v`, stepping `h` along the
/// unit direction of `v`.
pub fn directional_derivative(field: &FieldHandle, p: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    let len = norm(v);
    if len == 0.0 {
        return vec![0.0; v.len()];
    }
    let shifted = |sign: f64| -> Vec<f64> {
        let q: Vec<f64> = p
            .iter()
            .zip(v)
            .map(|(pi, vi)| pi + sign * h * vi / len)
            .collect();
        field.eval(&q)
    };
    let (plus, minus) = (shifted(1.0), shifted(-1.0));
    plus.iter()
        .zip(&minus)
        .map(|(a, b)| (a - b) / (2.0 * h) * len)
        .collect()
}

/// `[A, B] = DB.A - DA.B` at `p` by central differences with step `h`.
pub fn lie_bracket(a: &FieldHandle, b: &FieldHandle, p: &[f64], h: f64) -> Result<Vec<f64>> {
    if a.chart() != b.chart() {
        return Err(Error::ChartMismatch(a.chart().name(), b.chart().name()));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(
            "finite-difference step must be positive".into(),
        ));
    }
    check_domain(a.chart(), p)?;
    let (av, bv) = (a.eval(p), b.eval(p));
    let db_a = directional_derivative(b, p, &av, h);
    let da_b = directional_derivative(a, p, &bv, h);
    Ok(db_a.iter().zip(&da_b).map(|(x, y)| x - y).collect())
}

/// Richardson-extrapolated bracket from steps `h` and `h/2`.
pub fn lie_bracket_refined(
    a: &FieldHandle,
    b: &FieldHandle,
    p: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let coarse = lie_bracket(a, b, p, h)?;
    let fine = lie_bracket(a, b, p, h / 2.0)?;
    Ok(fine
        .iter()
        .zip(&coarse)
        .map(|(f, c)| (4.0 * f - c) / 3.0)
        .collect())
}

/// Bracket norm, recomputed with Richardson extrapolation when the plain
/// estimate lands within a factor 10 of `tol`.
pub fn bracket_norm(a: &FieldHandle, b: &FieldHandle, p: &[f64], h: f64, tol: f64) -> Result<f64> {
    let plain = norm(&lie_bracket(a, b, p, h)?);
    if plain > tol / 10.0 && plain < tol * 10.0 {
        return Ok(norm(&lie_bracket_refined(a, b, p, h)?));
    }
    Ok(plain)
}

/// `DF(p).v` by central differences; output differences respect the chart's angles.
pub fn map_differential<F>(chart: Chart, map: &F, p: &[f64], v: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    let len = norm(v);
    if len == 0.0 {
        return vec![0.0; chart.dim()];
    }
    let shift = |sign: f64| -> Vec<f64> {
        let q: Vec<f64> = p
            .iter()
            .zip(v)
            .map(|(pi, vi)| pi + sign * h * vi / len)
            .collect();
        map(&q)
    };
    chart
        .difference(&shift(1.0), &shift(-1.0))
        .into_iter()
        .map(|d| d / (2.0 * h) * len)
        .collect()
}

/// `|DF(p) source(p) - target(F(p))|`: zero when `F` carries `source` to `target`.
pub fn pushforward_residual<F>(
    map: &F,
    source: &FieldHandle,
    target: &FieldHandle,
    p: &[f64],
    h: f64,
) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    let chart = source.chart();
    check_domain(chart, p)?;
    let image = map(p);
    check_domain(target.chart(), &image)?;
    let pushed = map_differential(chart, map, p, &source.eval(p), h);
    let expected = target.eval(&image);
    Ok(norm(
        &pushed
            .iter()
            .zip(&expected)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    ))
}

/// Automorphism test kernel: [`pushforward_residual`] with `target = source`.
pub fn automorphism_residual<F>(map: &F, field: &FieldHandle, p: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    pushforward_residual(map, field, field, p, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotate_pairs, SpherePoint};
    use crate::sampling;
    use core::f64::consts::SQRT_2;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// Central-difference `d pi (v)` at `y`, independent of the closed forms.
    fn dpi(y: &[f64], v: &[f64]) -> [f64; 2] {
        let len = norm(v);
        if len == 0.0 {
            return [0.0, 0.0];
        }
        let h = 1e-6;
        let plus: Vec<f64> = y.iter().zip(v).map(|(a, b)| a + h * b / len).collect();
        let minus: Vec<f64> = y.iter().zip(v).map(|(a, b)| a - h * b / len).collect();
        let (p, m) = (project_coords(&plus), project_coords(&minus));
        [
            (p[0] - m[0]) / (2.0 * h) * len,
            (p[1] - m[1]) / (2.0 * h) * len,
        ]
    }

    #[test]
    fn radial_field_rules() {
        let xi = radial_field(2).unwrap();
        assert_eq!(xi.eval(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(xi.eval(&[1.0, -3.0]), vec![1.0, -3.0]);
        assert!(radial_field(0).is_err());
        // Euler identity on g = x1^2 x2 (degree 3).
        let g = |p: &[f64]| p[0] * p[0] * p[1];
        let p = [0.7, -1.3];
        let v = xi.eval(&p);
        let h = 1e-5;
        let dg = (g(&[p[0] + h * v[0], p[1] + h * v[1]]) - g(&[p[0] - h * v[0], p[1] - h * v[1]]))
            / (2.0 * h);
        assert!((dg - 3.0 * g(&p)).abs() < 1e-8);
    }

    #[test]
    fn affine_field_and_density_flags() {
        let t = affine_torus_field(&[0.0, 0.0], false);
        assert_eq!(t.eval(&[1.0, 2.0]), vec![0.0, 0.0]);
        let dense = affine_torus_field(&S5_FREQUENCIES, true);
        assert_eq!(dense.meta().dense, Some(true));
        assert_eq!(dense.meta().density_warning, None);
        let resonant = affine_torus_field(&[1.0, 2.0], true);
        assert_eq!(resonant.meta().density_warning, Some(vec![2, -1]));
        assert_eq!(integer_relation(&[1.0, SQRT_2], 50, 1e-9), None);
        // pairwise continued-fraction path for more than three frequencies
        let rel = integer_relation(&[1.0, SQRT_2, E, 1.5], 50, 1e-9).unwrap();
        let s: f64 = rel
            .iter()
            .zip([1.0, SQRT_2, E, 1.5])
            .map(|(m, a)| *m as f64 * a)
            .sum();
        assert!(s.abs() < 1e-9);
    }

    #[test]
    fn fundamental_fields_are_tangent_and_commute() {
        let u = fundamental_fields_s5();
        assert_eq!(
            u[0].eval(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
        );
        let mut rng = sampling::rng(7);
        for _ in 0..1000 {
            let y = sampling::sphere_point(&mut rng, 6);
            for uj in &u {
                assert!(dot(&uj.eval(&y), &y).abs() <= 1e-15);
            }
        }
        for _ in 0..20 {
            let y = sampling::sphere_point(&mut rng, 6);
            let b = lie_bracket(&u[0], &u[1], &y, 1e-4).unwrap();
            assert!(norm(&b) < 1e-8);
        }
    }

    #[test]
    fn action_derivative_matches_fundamental_fields() {
        let u = fundamental_fields_s5();
        let y = SpherePoint::normalized([0.3, -0.2, 0.5, 0.1, -0.4, 0.6]).unwrap();
        for j in 0..3 {
            let eps = 1e-7;
            let mut l = [0.0; 3];
            l[j] = eps;
            let moved = rotate_pairs(&l, y.coords());
            let fd: Vec<f64> = moved
                .iter()
                .zip(y.coords())
                .map(|(a, b)| (a - b) / eps)
                .collect();
            let exact = u[j].eval(y.coords());
            assert!(
                norm(
                    &fd.iter()
                        .zip(&exact)
                        .map(|(a, b)| a - b)
                        .collect::<Vec<_>>()
                ) < 1e-6
            );
        }
    }

    #[test]
    fn connection_fields_project_with_pair_factor() {
        let v = connection_fields_s5();
        // Boundary point: y5 = y6 = 0 and x1 + x2 = 1 kill the projection.
        let e1 = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(dpi(&e1, &v[0].eval(&e1)), [0.0, 0.0]);
        // Pair norms (1/2, 1/4, 1/4): d pi (V1) = 2 * (1/4) * (1/2) e1.
        let y = [0.5f64.sqrt(), 0.0, 0.5, 0.0, 0.5, 0.0];
        let p = dpi(&y, &v[0].eval(&y));
        assert!((p[0] - 0.25).abs() < 1e-9 && p[1].abs() < 1e-9, "{p:?}");
        let mut rng = sampling::rng(11);
        for _ in 0..500 {
            let y = sampling::sphere_point(&mut rng, 6);
            let x = project_coords(&y);
            for (r, vr) in v.iter().enumerate() {
                let w = vr.eval(&y);
                assert!(dot(&w, &y).abs() <= 1e-14);
                let p = dpi(&y, &w);
                let expected = 2.0 * (1.0 - x[0] - x[1]) * x[r];
                assert!((p[r] - expected).abs() < 1e-8);
                assert!(p[1 - r].abs() < 1e-8);
            }
        }
    }

    #[test]
    fn base_gradient_field_values() {
        let y = base_gradient_field();
        assert_eq!(y.eval(&[0.25, 0.25]), vec![0.0, 0.0]);
        let v = y.eval(&[0.5, 0.25]);
        // independent arithmetic: 2 (1 - 3/4) (1/2)(1/4) (1/4) = 1/64
        assert!((v[0] - 1.0 / 64.0).abs() < 1e-16 && v[1] == 0.0);
        let h = 1e-6;
        for i in 0..2 {
            let mut p = [0.25, 0.25];
            let mut m = [0.25, 0.25];
            p[i] += h;
            m[i] -= h;
            let (fp, fm) = (y.eval(&p), y.eval(&m));
            for r in 0..2 {
                let jac = (fp[r] - fm[r]) / (2.0 * h);
                let expected = if r == i { 1.0 / 16.0 } else { 0.0 };
                assert!((jac - expected).abs() < 1e-8);
            }
        }
    }

    /// Least-squares slope of log|f| against log r.
    fn loglog_slope(f: impl Fn(f64) -> f64, radii: &[f64]) -> f64 {
        let pts: Vec<(f64, f64)> = radii.iter().map(|&r| (r.ln(), f(r).abs().ln())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn tau_s5_zeros_and_orders() {
        for (c, order) in S5_ARTIFICIAL {
            assert_eq!(tau_s5(&c), 0.0);
            let dir = [0.6, 0.8];
            let slope = loglog_slope(
                |r| tau_s5(&[c[0] + r * dir[0], c[1] + r * dir[1]]),
                &[1e-3, 3e-4, 1e-4, 3e-5, 1e-5],
            );
            assert!((slope - order as f64).abs() < 0.2, "{slope}");
        }
        assert_eq!(tau_s5(&[0.0, 0.4]), 0.0);
        assert_eq!(tau_s5(&[0.5, 0.5]), 0.0);
        assert!(tau_s5(&[0.3, 0.3]) > 0.0);
        let mut rng = sampling::rng(3);
        for _ in 0..1000 {
            let x = sampling::triangle_point(&mut rng);
            let t = tau_s5(&x);
            assert!((0.0..1e-10).contains(&t));
        }
    }

    #[test]
    fn describing_field_s5_properties() {
        let xp = describing_field_s5();
        let e1 = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(norm(&xp.eval(&e1)) <= 1e-12);
        let mut rng = sampling::rng(5);
        for _ in 0..300 {
            let y = sampling::sphere_point(&mut rng, 6);
            let w = xp.eval(&y);
            assert!(dot(&w, &y).abs() <= 1e-12 * (1.0 + norm(&w)));
            // projection identity d pi (X') = (tau o pi) Y, compared relative to the scale of X'
            let x = project_coords(&y);
            let t = tau_s5(&x);
            let c = 2.0 * (1.0 - x[0] - x[1]) * x[0] * x[1];
            let p = dpi(&y, &w);
            let scale = t.max(1e-300);
            assert!(((p[0] - t * c * (x[0] - 0.25)) / scale).abs() < 1e-6);
            assert!(((p[1] - t * c * (x[1] - 0.25)) / scale).abs() < 1e-6);
            // equivariance under the action
            let l = sampling::torus_angles(&mut rng, 3);
            let moved = rotate_pairs(&l, &y);
            let pushed = rotate_pairs(&l, &w);
            let at_moved = xp.eval(&moved);
            let diff: Vec<f64> = pushed.iter().zip(&at_moved).map(|(a, b)| a - b).collect();
            assert!(norm(&diff) <= 1e-10 * (1.0 + norm(&w)));
        }
        // boundary stratum y5 = y6 = 0
        for _ in 0..100 {
            let mut y = sampling::sphere_point(&mut rng, 6);
            y[4] = 0.0;
            y[5] = 0.0;
            let r = norm(&y);
            y.iter_mut().for_each(|v| *v /= r);
            assert!(norm(&xp.eval(&y)) <= 1e-12);
        }
        // the three artificial fibers, up to the rounding of the lift
        for (c, _) in S5_ARTIFICIAL {
            let y = SpherePoint::from_base(c, [0.3, 1.1, 2.0]).unwrap();
            assert!(norm(&xp.eval(y.coords())) < 1e-30);
        }
    }

    #[test]
    fn lifted_field_projects_to_base_field() {
        let yp = lifted_field_s5();
        let base = base_gradient_field();
        let mut rng = sampling::rng(9);
        for _ in 0..300 {
            let y = sampling::sphere_point(&mut rng, 6);
            let x = project_coords(&y);
            let p = dpi(&y, &yp.eval(&y));
            let b = base.eval(&x);
            assert!((p[0] - b[0]).abs() < 1e-8 && (p[1] - b[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn line_model_zeros_and_types() {
        let m = line_model_fields(BaseKind::Line, &[1.0], true).unwrap();
        for s in [0.0, 1.0, 2.0, 3.0, 4.0] {
            assert_eq!(m.y.eval(&[s]), vec![0.0]);
        }
        // q'(1) = -6: simple root, sink
        let h = 1e-6;
        let dq = (line_q(1.0 + h) - line_q(1.0 - h)) / (2.0 * h);
        assert!((dq + 6.0).abs() < 1e-6);
        for s in LINE_SOURCES {
            assert!((line_y(s + 1e-3) - line_y(s - 1e-3)) > 0.0);
            assert!((m.tau)(s) > 0.0);
        }
        for (s, _) in LINE_SINKS {
            assert!((line_y(s + 1e-3) - line_y(s - 1e-3)) < 0.0);
            assert_eq!((m.tau)(s), 0.0);
        }
        assert!("plane".parse::<BaseKind>().is_err());
        let c = line_model_fields(BaseKind::Circle, &[1.0, SQRT_2], true).unwrap();
        for s in CIRCLE_SOURCES {
            assert!(circle_y(s + 1e-3) > circle_y(s - 1e-3));
            assert_eq!(circle_y(s), 0.0);
        }
        for (s, _) in CIRCLE_SINKS {
            assert!(circle_y(s + 1e-3) < circle_y(s - 1e-3));
            assert!(circle_tau(s).abs() < 1e-30);
            assert_eq!(circle_y(s), 0.0);
        }
        for i in 0..100 {
            let a = -7.0 + 0.173 * i as f64;
            assert!((circle_y(a) - (3.0 * a).sin()).abs() < 1e-14);
        }
        assert_eq!(c.x_prime.chart(), Chart::Circle { n: 2 });
    }

    #[test]
    fn brackets_of_linear_model() {
        let x = linear_model_field(2, &[1.0, SQRT_2], true);
        let mut rng = sampling::rng(1);
        for b in commutant_basis(2, 2) {
            for _ in 0..50 {
                let p = sampling::chart_point(&mut rng, x.chart(), &[(-2.0, 2.0), (-2.0, 2.0)]);
                assert!(norm(&lie_bracket(&x, &b, &p, 1e-4).unwrap()) < 1e-8);
            }
        }
        let p = [0.5, -0.5, 1.0, 2.0];
        assert!(lie_bracket(&x, &radial_field(2).unwrap(), &p, 1e-4).is_err());
        assert!(lie_bracket(&x, &x, &p, 0.0).is_err());
    }

    #[test]
    fn bracket_detects_noncommuting_pair() {
        // [xi, x1^2 d/dx1] = x1^2 d/dx1 (degree-2 homogeneous coefficient)
        let xi = linear_model_field(1, &[1.0], true);
        let quad = FieldHandle::new("x1^2 d/dx1", xi.chart(), |p, out| {
            out[0] = p[0] * p[0];
            out[1] = 0.0;
        });
        let b = lie_bracket_refined(&xi, &quad, &[0.7, 1.0], 1e-4).unwrap();
        assert!((b[0] - 0.49).abs() < 1e-9 && b[1].abs() < 1e-12);
    }

    #[test]
    fn pushforward_examples() {
        let x = linear_model_field(2, &[1.0, SQRT_2], true);
        let p = [0.3, -0.4, 1.0, 5.0];
        let id = |q: &[f64]| q.to_vec();
        assert!(automorphism_residual(&id, &x, &p, 1e-4).unwrap() < 1e-10);
        let dilate = |q: &[f64]| vec![2.0 * q[0], 2.0 * q[1], q[2], q[3]];
        assert!(automorphism_residual(&dilate, &x, &p, 1e-4).unwrap() < 1e-10);
        let shear = |q: &[f64]| vec![q[0], q[1], crate::geometry::wrap_angle(q[2] + q[3]), q[3]];
        let r = automorphism_residual(&shear, &x, &p, 1e-4).unwrap();
        assert!((r - SQRT_2).abs() < 1e-8);
    }
}
