//! Assembly of describing fields: the one-dimensional-base models, the planar
//! demo with artificial singularities, damping by a flat invariant gauge,
//! Haar averaging over the torus, and the `S^5` example.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::fields::{
    describing_field_s5, line_model_fields, BaseKind, Feature, FeatureKind, FieldHandle, FieldMeta,
    ScalarFn, S5_FREQUENCIES,
};
use crate::geometry::{indicator_coords, Chart, SpherePoint};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use crate::math::Real;
use crate::{Error, Result};

/// A describing field together with the bookkeeping of its construction.
#[derive(Clone, Debug)]
pub struct ConstructionManifest {
    pub field: FieldHandle,
    /// Singular fibers of the field with their declared orders of nullity.
    pub inventory: Vec<Feature>,
    pub frequencies: Vec<f64>,
    /// Which recipe produced the field.
    pub recipe: String,
}

/// The serializable part of a manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSummary {
    pub name: String,
    pub chart: Chart,
    pub recipe: String,
    pub frequencies: Vec<f64>,
    pub dense: Option<bool>,
    pub density_warning: Option<Vec<i64>>,
    pub inventory: Vec<Feature>,
    pub features: Vec<Feature>,
}

impl ConstructionManifest {
    pub fn summary(&self) -> ManifestSummary {
        let meta = self.field.meta();
        ManifestSummary {
            name: self.field.name().to_string(),
            chart: self.field.chart(),
            recipe: self.recipe.clone(),
            frequencies: self.frequencies.clone(),
            dense: meta.dense,
            density_warning: meta.density_warning.clone(),
            inventory: self.inventory.clone(),
            features: meta.features.clone(),
        }
    }

    /// Declared orders of the inventory, in inventory order.
    pub fn declared_orders(&self) -> Vec<u32> {
        self.inventory.iter().filter_map(|f| f.order).collect()
    }
}

/// Rejects a repeated declared order among the exact (not lower-bound) orders.
pub fn check_distinct_orders(inventory: &[Feature]) -> Result<()> {
    let mut seen: Vec<u32> = Vec::new();
    for o in inventory
        .iter()
        .filter(|f| !f.order_is_lower_bound)
        .filter_map(|f| f.order)
    {
        if seen.contains(&o) {
            return Err(Error::RepeatedOrder(o));
        }
        seen.push(o);
    }
    Ok(())
}

/// A chart point on the fiber of `feature`, with fiber position taken from
/// `phases` (padded with zeros).
pub fn feature_point(chart: Chart, feature: &Feature, phases: &[f64]) -> Result<Vec<f64>> {
    let phase = |i: usize| phases.get(i).copied().unwrap_or(0.0);
    match chart {
        Chart::Product { k, n } => {
            let mut p = feature.base.clone();
            p.resize(k, 0.0);
            p.extend((0..n).map(phase));
            Ok(p)
        }
        Chart::Circle { n } => {
            let mut p = vec![feature.base[0]];
            p.extend((0..n).map(phase));
            Ok(chart.normalized(&p))
        }
        Chart::Sphere5 => Ok(SpherePoint::from_base(
            [feature.base[0], feature.base[1]],
            [phase(0), phase(1), phase(2)],
        )?
        .coords()
        .to_vec()),
        Chart::Triangle => Ok(feature.base.clone()),
    }
}

/// `X' = tau (Y + T)` over the line (sinks 1, 3 with orders 2, 4) or the
/// circle (sinks pi/3, pi, 5pi/3 with orders 2, 4, 6).
pub fn build_line_describing(
    base: BaseKind,
    a: &[f64],
    dense: bool,
) -> Result<ConstructionManifest> {
    let lm = line_model_fields(base, a, dense)?;
    let inventory: Vec<Feature> = lm
        .x_prime
        .meta()
        .features
        .iter()
        .filter(|f| f.order.is_some())
        .cloned()
        .collect();
    check_distinct_orders(&inventory)?;
    let recipe = match base {
        BaseKind::Line => "line base: X' = tau (Y + T), Y = q/(q^2+1)",
        BaseKind::Circle => "circle base: X' = tau (Y + T), Y = sin(3 alpha)",
    };
    Ok(ConstructionManifest {
        field: lm.x_prime,
        inventory,
        frequencies: a.to_vec(),
        recipe: recipe.to_string(),
    })
}

/// Directions of the artificial singularities in the planar demo.
pub const PLANAR_ANGLES: [f64; 3] = [0.0, TAU / 3.0, 2.0 * TAU / 3.0];

/// Planar demo on `R^2 x T^n`: base field `Y = xi` (a source at the origin),
/// damped by `tau(x) = prod (|x-p|^2 / (1+|x-p|^2))^(order/2)` over three points
/// `p` at distance `radius` on the rays [`PLANAR_ANGLES`], lifted through the
/// product connection: `X' = tau (xi + T)`.
pub fn build_planar_demo(
    orders: &[u32],
    radius: f64,
    a: &[f64],
    dense: bool,
) -> Result<ConstructionManifest> {
    if orders.len() != 3 {
        return Err(Error::InvalidArgument(
            "the planar demo needs three orders".into(),
        ));
    }
    if let Some(o) = orders.iter().find(|o| **o == 0 || **o % 2 == 1) {
        return Err(Error::InvalidArgument(alloc::format!(
            "order {o} is not a positive even integer"
        )));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidArgument(
            "placement radius must be positive".into(),
        ));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("need at least one frequency".into()));
    }
    let points: Vec<([f64; 2], u32)> = PLANAR_ANGLES
        .iter()
        .zip(orders)
        .map(|(th, &o)| ([radius * th.cos(), radius * th.sin()], o))
        .collect();
    let mut inventory = Vec::new();
    for (i, (p, o)) in points.iter().enumerate() {
        inventory.push(Feature::new(
            &alloc::format!("p{}", i + 1),
            FeatureKind::Artificial,
            p.to_vec(),
            Some(*o),
        ));
    }
    check_distinct_orders(&inventory)?;

    let n = a.len();
    let freq = a.to_vec();
    let pts = points.clone();
    let tau = move |x: &[f64]| -> f64 {
        pts.iter()
            .map(|(p, o)| {
                let d = (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2);
                (d / (1.0 + d)).powi(*o as i32 / 2)
            })
            .product()
    };
    let template = crate::fields::linear_model_field(2, a, dense);
    let mut meta: FieldMeta = template.meta().clone();
    meta.features = vec![Feature::new(
        "source",
        FeatureKind::Source,
        vec![0.0, 0.0],
        None,
    )];
    meta.features.extend(inventory.iter().cloned());
    meta.base_box = vec![(-1.5 * radius, 1.5 * radius); 2];
    let field = FieldHandle::new("X'", Chart::Product { k: 2, n }, move |p, out| {
        let t = tau(&p[..2]);
        out[0] = t * p[0];
        out[1] = t * p[1];
        for (o, f) in out[2..].iter_mut().zip(&freq) {
            *o = t * f;
        }
    })
    .with_meta(meta);
    Ok(ConstructionManifest {
        field,
        inventory,
        frequencies: a.to_vec(),
        recipe: "planar demo: X' = tau (xi + T), artificial zeros on three rays".to_string(),
    })
}

/// `h(t) = exp(-1/t)` for `t > 0`, `0` otherwise: flat at zero.
pub fn flat_cutoff(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Default gauge on `S^5`: the product of the squared pair norms, invariant
/// and zero exactly on the singular set.
pub fn s5_gauge() -> Arc<ScalarFn> {
    Arc::new(indicator_coords)
}

/// `(h o phi) field`, after checking `phi >= 0` at `check_points`.
pub fn apply_effective_damping(
    field: &FieldHandle,
    gauge: Arc<ScalarFn>,
    check_points: &[Vec<f64>],
) -> Result<FieldHandle> {
    for p in check_points {
        let v = gauge(p);
        if !(v >= 0.0) {
            return Err(Error::NegativeGauge {
                value: v,
                point: p.clone(),
            });
        }
    }
    let name = alloc::format!("h(phi) {}", field.name());
    Ok(field.scaled_by(&name, Arc::new(move |p: &[f64]| flat_cutoff(gauge(p)))))
}

/// Neumaier summation; the quadratures add up to `64^3` terms.
#[derive(Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

/// The `N^r` trapezoid nodes `2 pi i / N` of the torus acting on `chart`.
fn haar_nodes(chart: Chart, nodes: usize) -> Result<Vec<Vec<f64>>> {
    if nodes < 4 {
        return Err(Error::InvalidArgument(
            "Haar quadrature needs at least 4 nodes per circle".into(),
        ));
    }
    let r = chart.action_rank();
    let total = nodes.pow(r as u32);
    Ok((0..total)
        .map(|mut idx| {
            (0..r)
                .map(|_| {
                    let i = idx % nodes;
                    idx /= nodes;
                    TAU * i as f64 / nodes as f64
                })
                .collect()
        })
        .collect())
}

/// `theta_rho(p) = int_G rho(g . p) dg`, by the tensor trapezoid rule.
pub fn haar_average_function(
    rho: Arc<ScalarFn>,
    chart: Chart,
    nodes: usize,
) -> Result<Arc<ScalarFn>> {
    let lambdas = haar_nodes(chart, nodes)?;
    let weight = 1.0 / lambdas.len() as f64;
    Ok(Arc::new(move |p: &[f64]| {
        let mut acc = Compensated::default();
        lambdas.iter().for_each(|l| acc.add(rho(&chart.act(l, p))));
        acc.total() * weight
    }))
}

/// `Z'(p) = int_G (g^{-1})_* Z(g . p) dg`, by the tensor trapezoid rule.
pub fn haar_average_field(z: &FieldHandle, nodes: usize) -> Result<FieldHandle> {
    let chart = z.chart();
    let lambdas = haar_nodes(chart, nodes)?;
    let weight = 1.0 / lambdas.len() as f64;
    let inner = z.clone();
    let mut meta = z.meta().clone();
    meta.invariant = true;
    Ok(
        FieldHandle::new(&alloc::format!("avg {}", z.name()), chart, move |p, out| {
            let mut acc = vec![Compensated::default(); out.len()];
            for l in &lambdas {
                let v = inner.eval(&chart.act(l, p));
                let minus: Vec<f64> = l.iter().map(|a| -a).collect();
                for (a, w) in acc.iter_mut().zip(chart.act_vector(&minus, &v)) {
                    a.add(w);
                }
            }
            for (o, a) in out.iter_mut().zip(&acc) {
                *o = a.total() * weight;
            }
        })
        .with_meta(meta),
    )
}

/// `X' = (tau o pi)(Y' + U1 + e U2 + e^2 U3)` on `S^5`.
pub fn build_s5() -> Result<ConstructionManifest> {
    let field = describing_field_s5();
    let inventory: Vec<Feature> = field
        .meta()
        .features
        .iter()
        .filter(|f| f.order.is_some())
        .cloned()
        .collect();
    check_distinct_orders(&inventory)?;
    Ok(ConstructionManifest {
        field,
        inventory,
        frequencies: S5_FREQUENCIES.to_vec(),
        recipe: "S^5: X' = (tau o pi)(Y' + U1 + e U2 + e^2 U3), flat connection lift".to_string(),
    })
}
