//! Flows of fields: an adaptive Dormand-Prince 5(4) integrator with dense
//! output, limit-set classification, basin censuses, order-of-nullity
//! estimates and equidistribution on torus fibers.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use crate::fields::{Feature, FeatureKind, FieldHandle};
use crate::geometry::{angle_difference, norm, Chart};
use crate::linalg::fit_line;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use crate::math::Real;
use crate::sampling;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    /// Local error tolerance per accepted step.
    pub tol: f64,
    /// First trial step; chosen from the field's magnitude when absent.
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
    /// Cap on attempted steps for one integration.
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            initial_step: None,
            max_step: None,
            max_steps: 1_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_step.is_some_and(|h| !(h > 0.0)) {
            return Err(Error::InvalidArgument(
                "integrator tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Largest accepted local error estimate, in units of the error scale.
    pub max_local_error: f64,
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const BETA: f64 = 0.04;

/// One adaptive integration in progress.
///
/// The state is kept in unwrapped coordinates (angles are not reduced, so
/// the dense output is continuous); sphere points are renormalized after
/// every accepted step.
pub struct Stepper<'a> {
    field: &'a FieldHandle,
    chart: Chart,
    cfg: IntegratorConfig,
    t: f64,
    y: Vec<f64>,
    f: Vec<f64>,
    h: f64,
    fac_old: f64,
    attempts: usize,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    stats: StepStats,
}

impl<'a> Stepper<'a> {
    pub fn new(field: &'a FieldHandle, p0: &[f64], t0: f64, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let chart = field.chart();
        chart.check_len(p0)?;
        if !chart.contains(p0) {
            return Err(Error::OutsideDomain {
                chart: chart.name(),
                point: p0.to_vec(),
            });
        }
        let dim = chart.dim();
        let mut y = p0.to_vec();
        if chart == Chart::Sphere5 {
            chart.normalize(&mut y);
        }
        let mut s = Self {
            field,
            chart,
            cfg,
            t: t0,
            f: vec![0.0; dim],
            y,
            h: 0.0,
            fac_old: 1e-4,
            attempts: 0,
            k: core::array::from_fn(|_| vec![0.0; dim]),
            stage: vec![0.0; dim],
            stats: StepStats::default(),
        };
        let mut f = vec![0.0; dim];
        s.eval(&s.y.clone(), &mut f)?;
        s.f = f;
        s.h = match cfg.initial_step {
            Some(h) => h.abs(),
            None => {
                let speed = norm(&s.f);
                if speed > 0.0 {
                    0.01 * (1.0 + norm(&s.y)) / speed
                } else {
                    f64::INFINITY
                }
            }
        };
        Ok(s)
    }

    fn eval(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.field.eval_into(y, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Current state in unwrapped coordinates.
    pub fn state(&self) -> &[f64] {
        &self.y
    }

    /// Field value at the current state.
    pub fn derivative(&self) -> &[f64] {
        &self.f
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    pub fn set_max_step(&mut self, h: Option<f64>) {
        self.cfg.max_step = h;
    }

    /// Takes one accepted step towards `t_end`, never past it.
    pub fn step_towards(&mut self, t_end: f64) -> Result<()> {
        let remaining = t_end - self.t;
        if remaining == 0.0 {
            return Ok(());
        }
        let dir = remaining.signum();
        let dim = self.y.len();
        loop {
            self.attempts += 1;
            if self.attempts > self.cfg.max_steps {
                return Err(Error::StepBudget(self.cfg.max_steps));
            }
            let remaining = (t_end - self.t).abs();
            let mut h_abs = self.h.min(remaining);
            if let Some(hm) = self.cfg.max_step {
                h_abs = h_abs.min(hm);
            }
            let last = h_abs >= remaining;
            if h_abs < 16.0 * f64::EPSILON * self.t.abs().max(1.0) && !last {
                return Err(Error::StepUnderflow {
                    t: self.t,
                    point: self.y.clone(),
                });
            }
            let h = dir * h_abs;

            self.k[0].copy_from_slice(&self.f);
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = 0.0;
                    for (j, a) in A[s].iter().enumerate().take(s) {
                        acc += a * self.k[j][i];
                    }
                    self.stage[i] = self.y[i] + h * acc;
                }
                let stage = core::mem::take(&mut self.stage);
                let mut out = core::mem::take(&mut self.k[s]);
                let r = self.eval(&stage, &mut out);
                self.stage = stage;
                self.k[s] = out;
                r?;
            }
            // the last stage sits at the fifth-order solution (first same as last)
            let mut ynew = vec![0.0; dim];
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, a) in A[6].iter().enumerate() {
                    acc += a * self.k[j][i];
                }
                ynew[i] = self.y[i] + h * acc;
            }
            let mut err: f64 = 0.0;
            for i in 0..dim {
                let e: f64 = (0..7).map(|j| ERR[j] * self.k[j][i]).sum::<f64>() * h;
                let scale = if self.chart.is_angle(i) {
                    1.0
                } else {
                    1.0 + self.y[i].abs().max(ynew[i].abs())
                };
                err = err.max(e.abs() / (self.cfg.tol * scale));
            }
            if !err.is_finite() {
                err = f64::INFINITY;
            }

            let fac11 = err.max(1e-12).powf(0.2 - BETA * 0.75);
            if err <= 1.0 {
                let fac =
                    (fac11 / self.fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                self.fac_old = err.max(1e-4);
                self.h = h_abs / fac;
                self.t = if last { t_end } else { self.t + h };
                if self.chart == Chart::Sphere5 {
                    self.chart.normalize(&mut ynew);
                    let mut f = vec![0.0; dim];
                    self.eval(&ynew, &mut f)?;
                    self.f = f;
                } else {
                    self.f.copy_from_slice(&self.k[6]);
                }
                if !self.chart.contains(&ynew) {
                    return Err(Error::OutsideDomain {
                        chart: self.chart.name(),
                        point: ynew,
                    });
                }
                self.y = ynew;
                self.stats.accepted += 1;
                self.stats.max_local_error = self.stats.max_local_error.max(err * self.cfg.tol);
                return Ok(());
            }
            self.stats.rejected += 1;
            self.h = h_abs / (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }
}

/// An integrated trajectory with cubic Hermite dense output.
///
/// `times` are strictly monotone in the direction of integration; `points`
/// are canonical chart coordinates (angles wrapped, sphere normalized).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub chart: Chart,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub stats: StepStats,
    raw: Vec<Vec<f64>>,
    derivatives: Vec<Vec<f64>>,
}

impl Trajectory {
    fn start(chart: Chart, t0: f64, y: &[f64], f: &[f64]) -> Self {
        Self {
            chart,
            times: vec![t0],
            points: vec![chart.normalized(y)],
            stats: StepStats::default(),
            raw: vec![y.to_vec()],
            derivatives: vec![f.to_vec()],
        }
    }

    fn push(&mut self, t: f64, y: &[f64], f: &[f64]) {
        self.times.push(t);
        self.points.push(self.chart.normalized(y));
        self.raw.push(y.to_vec());
        self.derivatives.push(f.to_vec());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_point(&self) -> &[f64] {
        self.points.last().expect("trajectory has a start point")
    }

    /// Final state without angle reduction.
    pub fn final_raw(&self) -> &[f64] {
        self.raw.last().expect("trajectory has a start point")
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory has a start point")
    }

    /// Dense output at `t` (clamped to the integrated span), in unwrapped coordinates.
    pub fn sample_raw(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if n == 1 {
            return self.raw[0].clone();
        }
        let forward = self.times[n - 1] >= self.times[0];
        let key = |s: f64| if forward { s } else { -s };
        let tk = key(t);
        let idx = self.times.partition_point(|&s| key(s) <= tk);
        let i = idx.clamp(1, n - 1) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = ((t - t0) / h).clamp(0.0, 1.0);
        hermite(
            &self.raw[i],
            &self.derivatives[i],
            &self.raw[i + 1],
            &self.derivatives[i + 1],
            h,
            s,
        )
    }

    /// Dense output at `t` in canonical chart coordinates.
    pub fn sample(&self, t: f64) -> Vec<f64> {
        self.chart.normalized(&self.sample_raw(t))
    }

    /// `count + 1` equally spaced samples over the whole span, endpoints included.
    pub fn dense(&self, count: usize) -> Vec<(f64, Vec<f64>)> {
        let (a, b) = (self.start_time(), self.end_time());
        let count = count.max(1);
        (0..=count)
            .map(|i| {
                let t = if i == count {
                    b
                } else {
                    a + (b - a) * i as f64 / count as f64
                };
                (t, self.sample(t))
            })
            .collect()
    }
}

fn hermite(y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64], h: f64, s: f64) -> Vec<f64> {
    let s2 = s * s;
    let s3 = s2 * s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h10 = s3 - 2.0 * s2 + s;
    let h11 = s3 - s2;
    // Difference form: exact at stationary states.
    (0..y0.len())
        .map(|i| y0[i] + h01 * (y1[i] - y0[i]) + h * (h10 * f0[i] + h11 * f1[i]))
        .collect()
}

/// Integrates `field` from `p0` over `t_span = (t0, t1)`; `t1 < t0` runs backward.
pub fn integrate(
    field: &FieldHandle,
    p0: &[f64],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    if !t0.is_finite() || !t1.is_finite() {
        return Err(Error::NonFinite);
    }
    let mut stepper = Stepper::new(field, p0, t0, *cfg)?;
    let mut traj = Trajectory::start(field.chart(), t0, stepper.state(), stepper.derivative());
    while stepper.t() != t1 {
        stepper.step_towards(t1)?;
        traj.push(stepper.t(), stepper.state(), stepper.derivative());
    }
    traj.stats = stepper.stats();
    Ok(traj)
}

/// `Phi_t(p0)` in canonical coordinates.
pub fn flow_map(
    field: &FieldHandle,
    p0: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    Ok(integrate(field, p0, (0.0, t), cfg)?.final_point().to_vec())
}

/// `|Phi_t(lambda . p0) - lambda . Phi_t(p0)|` in the chart metric.
pub fn flow_commutation_residual(
    field: &FieldHandle,
    lambda: &[f64],
    p0: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let chart = field.chart();
    if lambda.len() != chart.action_rank() {
        return Err(Error::LengthMismatch {
            expected: chart.action_rank(),
            got: lambda.len(),
        });
    }
    let moved_then_flowed = flow_map(field, &chart.act(lambda, p0), t, cfg)?;
    let flowed_then_moved = chart.act(lambda, &flow_map(field, p0, t, cfg)?);
    Ok(chart.distance(&moved_then_flowed, &flowed_then_moved))
}

/// `-X`, keeping the metadata.
pub fn reversed(field: &FieldHandle) -> FieldHandle {
    let name = alloc::format!("-({})", field.name());
    field.scaled_by(&name, Arc::new(|_| -1.0))
}

// ---------------------------------------------------------------------------
// limit sets

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    FixedPoint,
    SingularFiber,
    TorusClosure,
    Escape,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitConfig {
    /// Time cap.
    pub horizon: f64,
    /// Cap on accepted steps; reaching it yields an inconclusive report.
    pub max_steps: usize,
    /// Base distance below which a feature counts as reached.
    pub capture_distance: f64,
    /// Fiber distance counted as a return to the start.
    pub recurrence_delta: f64,
    /// Base displacement below which the base counts as stationary.
    pub stationary_tol: f64,
    pub escape_radius: f64,
    pub integrator: IntegratorConfig,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self {
            horizon: 1e200,
            max_steps: 200_000,
            capture_distance: 1e-5,
            recurrence_delta: 1e-3,
            stationary_tol: 1e-6,
            escape_radius: 1e6,
            integrator: IntegratorConfig {
                tol: 1e-9,
                ..IntegratorConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSetReport {
    pub kind: LimitKind,
    /// Id of the reached feature, when there is one.
    pub target: Option<String>,
    pub final_distance: f64,
    /// Elapsed integration time.
    pub horizon_used: f64,
    pub steps: usize,
}

fn nearest_feature<'f>(
    chart: Chart,
    features: &'f [Feature],
    base: &[f64],
) -> (Option<&'f Feature>, f64) {
    features
        .iter()
        .filter(|f| f.base.len() == base.len())
        .map(|f| (Some(f), chart.base_distance(base, &f.base)))
        .fold((None, f64::INFINITY), |best, cur| {
            if cur.1 < best.1 {
                cur
            } else {
                best
            }
        })
}

fn fiber_distance(a: &[f64], b: &[f64]) -> f64 {
    norm(
        &a.iter()
            .zip(b)
            .map(|(x, y)| angle_difference(*x, *y))
            .collect::<Vec<_>>(),
    )
}

/// Distance to `target` nonincreasing over the final tenth of the elapsed time.
fn settled(chart: Chart, history: &[(f64, Vec<f64>)], target: &[f64]) -> bool {
    let t_end = history.last().map_or(0.0, |h| h.0);
    let start = history.partition_point(|h| h.0 < 0.9 * t_end);
    let tail: Vec<f64> = history[start..]
        .iter()
        .map(|h| chart.base_distance(&h.1, target))
        .collect();
    tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-15)
}

const RECURRENCE_SUBSAMPLES: usize = 8;

/// Classifies the forward or backward limit set of the trajectory through `p0`
/// against the features declared in the field's metadata.
pub fn classify_limit(
    field: &FieldHandle,
    p0: &[f64],
    direction: Direction,
    cfg: &LimitConfig,
) -> Result<LimitSetReport> {
    if !(cfg.horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let chart = field.chart();
    chart.check_len(p0)?;
    let features = &field.meta().features;
    let base0 = chart.base(p0);
    let (feat0, d0) = nearest_feature(chart, features, &base0);
    let report = |kind, feat: Option<&Feature>, d, t, steps| LimitSetReport {
        kind,
        target: feat.map(|f| f.id.clone()),
        final_distance: d,
        horizon_used: t,
        steps,
    };
    if norm(&field.eval(p0)) == 0.0 {
        return Ok(report(LimitKind::FixedPoint, feat0, d0, 0.0, 0));
    }

    let run = match direction {
        Direction::Forward => field.clone(),
        Direction::Backward => reversed(field),
    };
    let mut stepper = Stepper::new(&run, p0, 0.0, cfg.integrator)?;
    let fiber0 = chart.fiber_angles(&chart.normalized(p0));
    let mut history = vec![(0.0, base0.clone())];
    // step count of the last failed settling check
    let mut checked_at = 0usize;
    let mut base_drift: f64 = 0.0;
    let mut left_start = false;
    let mut last = (feat0, d0);

    // While the base is stationary the fiber motion must be resolved finely
    // enough to see a return within the recurrence radius.
    let recurrence_cap = |f: &[f64]| {
        let speed = norm(f);
        let cap = 4.0 * cfg.recurrence_delta / speed;
        Some(cfg.integrator.max_step.map_or(cap, |m| m.min(cap)))
    };
    if chart.action_rank() > 0 {
        let cap = recurrence_cap(stepper.derivative());
        stepper.set_max_step(cap);
    }

    // The field is autonomous, so the clock can be restarted from the current
    // state. Doing so when steps drop below the resolution of a large `t`
    // lets slow stretches (|X| ~ 1e-35 near high-order zeros) be followed by
    // faster ones. `offset` and `steps_before` carry the totals.
    let mut offset = 0.0;
    let mut steps_before = 0usize;
    while offset + stepper.t() < cfg.horizon
        && steps_before + stepper.stats().accepted < cfg.max_steps
    {
        let (t_prev, y_prev, f_prev) = (
            offset + stepper.t(),
            stepper.state().to_vec(),
            stepper.derivative().to_vec(),
        );
        match stepper.step_towards(cfg.horizon - offset) {
            Ok(()) => {}
            Err(Error::StepUnderflow { .. }) if stepper.t() > 1.0 => {
                offset += stepper.t();
                steps_before += stepper.stats().accepted;
                let state = stepper.state().to_vec();
                stepper = Stepper::new(&run, &state, 0.0, cfg.integrator)?;
                stepper.set_max_step(
                    if base_drift <= cfg.stationary_tol && chart.action_rank() > 0 {
                        recurrence_cap(stepper.derivative())
                    } else {
                        cfg.integrator.max_step
                    },
                );
                continue;
            }
            Err(Error::StepUnderflow { .. } | Error::StepBudget(_)) => break,
            Err(e) => return Err(e),
        }
        let t = offset + stepper.t();
        let steps = steps_before + stepper.stats().accepted;
        let p = chart.normalized(stepper.state());
        let b = chart.base(&p);
        if !chart.periodic_base() && norm(&b) > cfg.escape_radius {
            return Ok(report(LimitKind::Escape, None, norm(&b), t, steps));
        }
        let (feat, d) = nearest_feature(chart, features, &b);
        last = (feat, d);
        base_drift = base_drift.max(chart.base_distance(&b, &base0));
        history.push((t, b));

        if d0 > cfg.capture_distance && d < cfg.capture_distance && steps >= 2 * checked_at {
            let target = &feat.expect("a captured feature exists").base;
            if !settled(chart, &history, target) {
                checked_at = steps;
                continue;
            }
            let kind = if chart.action_rank() == 0 {
                LimitKind::FixedPoint
            } else {
                LimitKind::SingularFiber
            };
            return Ok(report(kind, feat, d, t, steps));
        }

        if base_drift <= cfg.stationary_tol && chart.action_rank() > 0 {
            let h = t - t_prev;
            for j in 1..=RECURRENCE_SUBSAMPLES {
                let s = j as f64 / RECURRENCE_SUBSAMPLES as f64;
                let q = hermite(
                    &y_prev,
                    &f_prev,
                    stepper.state(),
                    stepper.derivative(),
                    h,
                    s,
                );
                let fd = fiber_distance(&chart.fiber_angles(&chart.normalized(&q)), &fiber0);
                if fd > 2.0 * cfg.recurrence_delta {
                    left_start = true;
                } else if left_start && fd < cfg.recurrence_delta {
                    return Ok(report(
                        LimitKind::TorusClosure,
                        feat,
                        fd,
                        t_prev + s * h,
                        steps,
                    ));
                }
            }
            let cap = recurrence_cap(stepper.derivative());
            stepper.set_max_step(cap);
        } else {
            stepper.set_max_step(cfg.integrator.max_step);
        }
    }
    Ok(report(
        LimitKind::Inconclusive,
        last.0,
        last.1,
        offset + stepper.t(),
        steps_before + stepper.stats().accepted,
    ))
}

// ---------------------------------------------------------------------------
// basins

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinCensus {
    pub samples: usize,
    /// Source feature reached backward by each sample, if any.
    pub assignments: Vec<Option<String>>,
    pub counts: BTreeMap<String, usize>,
    pub classified_fraction: f64,
    pub unclassified_fraction: f64,
}

/// The `n` seeded sample points of a census, drawn from the chart's natural
/// measure (the metadata's base box for Euclidean bases).
pub fn census_samples(field: &FieldHandle, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = sampling::rng(seed);
    let chart = field.chart();
    let bx = &field.meta().base_box;
    (0..n)
        .map(|_| sampling::chart_point(&mut rng, chart, bx))
        .collect()
}

/// The source whose fiber is the backward limit of the trajectory through `p`.
pub fn source_assignment(
    field: &FieldHandle,
    p: &[f64],
    cfg: &LimitConfig,
) -> Result<Option<String>> {
    let rep = classify_limit(field, p, Direction::Backward, cfg)?;
    if !matches!(rep.kind, LimitKind::SingularFiber | LimitKind::FixedPoint) {
        return Ok(None);
    }
    let is_source = |id: &String| {
        field
            .meta()
            .features
            .iter()
            .any(|f| &f.id == id && f.kind == FeatureKind::Source)
    };
    Ok(rep.target.filter(is_source))
}

pub fn tally(assignments: Vec<Option<String>>) -> BasinCensus {
    let samples = assignments.len();
    let mut counts = BTreeMap::new();
    for id in assignments.iter().flatten() {
        *counts.entry(id.clone()).or_insert(0) += 1;
    }
    let classified = counts.values().sum::<usize>();
    let frac = if samples == 0 {
        0.0
    } else {
        classified as f64 / samples as f64
    };
    BasinCensus {
        samples,
        assignments,
        counts,
        classified_fraction: frac,
        unclassified_fraction: 1.0 - frac,
    }
}

/// Backward classification of `n` seeded samples. Integration failures count
/// as unclassified.
pub fn basin_census(
    field: &FieldHandle,
    n: usize,
    seed: u64,
    cfg: &LimitConfig,
) -> Result<BasinCensus> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "basin census needs at least one sample".into(),
        ));
    }
    let assignments = census_samples(field, n, seed)
        .iter()
        .map(|p| source_assignment(field, p, cfg).unwrap_or(None))
        .collect();
    Ok(tally(assignments))
}

// ---------------------------------------------------------------------------
// orders of nullity

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    pub location: Vec<f64>,
    /// Median log-log slope over the probe directions.
    pub estimated_order: f64,
    pub declared_order: Option<u32>,
    /// Smallest coefficient of determination over the directions used.
    pub r2: f64,
    pub radii: Vec<f64>,
    pub slopes: Vec<f64>,
    /// Set when the regression is degenerate (`r2 < 0.99`).
    pub flagged: bool,
}

/// Eight radii, logarithmically spaced from `r0` down to `r0 / 100`.
pub fn default_radii(r0: f64) -> Vec<f64> {
    (0..8)
        .map(|i| r0 * 10f64.powf(-2.0 * i as f64 / 7.0))
        .collect()
}

/// Unit base directions: four diagonals for a two-dimensional base, both
/// signs for a one-dimensional one.
pub fn default_directions(base_dim: usize) -> Vec<Vec<f64>> {
    match base_dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..4)
            .map(|j| {
                let a = FRAC_PI_4 + j as f64 * FRAC_PI_2;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        d => (0..d)
            .flat_map(|i| {
                [1.0, -1.0].map(|s| {
                    let mut v = vec![0.0; d];
                    v[i] = s;
                    v
                })
            })
            .collect(),
    }
}

/// Order of nullity of `field` along the fiber through `p`: the slope of
/// `log |X|` against `log` of the chart distance to `p`, at points displaced
/// from `p` in the base by `radii` along `directions`.
///
/// Directions that leave the chart or hit exact zeros are skipped.
pub fn estimate_order(
    field: &FieldHandle,
    p: &[f64],
    radii: &[f64],
    directions: Option<&[Vec<f64>]>,
    declared_order: Option<u32>,
) -> Result<SingularityReport> {
    let chart = field.chart();
    chart.check_len(p)?;
    if radii.len() < 2 || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument(
            "need at least two positive radii".into(),
        ));
    }
    let base = chart.base(p);
    let owned;
    let dirs = match directions {
        Some(d) => d,
        None => {
            owned = default_directions(base.len());
            &owned[..]
        }
    };
    let mut slopes = Vec::new();
    let mut r2: f64 = 1.0;
    'dir: for u in dirs {
        let len = norm(u);
        if u.len() != base.len() || len == 0.0 {
            return Err(Error::InvalidArgument(
                "probe direction does not match the base".into(),
            ));
        }
        let mut xs = Vec::with_capacity(radii.len());
        let mut ys = Vec::with_capacity(radii.len());
        for &r in radii {
            let b: Vec<f64> = base.iter().zip(u).map(|(b, ui)| b + r * ui / len).collect();
            let Ok(q) = chart.lift(&b, p) else {
                continue 'dir;
            };
            let value = norm(&field.eval(&q));
            let dist = chart.distance(&q, p);
            if !(value > 0.0) || !value.is_finite() || !(dist > 0.0) {
                continue 'dir;
            }
            xs.push(dist.ln());
            ys.push(value.ln());
        }
        if let Some(fit) = fit_line(&xs, &ys) {
            slopes.push(fit.slope);
            r2 = r2.min(fit.r2);
        }
    }
    if slopes.is_empty() {
        return Err(Error::InvalidArgument("no usable probe direction".into()));
    }
    let mut sorted = slopes.clone();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    };
    Ok(SingularityReport {
        location: p.to_vec(),
        estimated_order: median,
        declared_order,
        r2,
        radii: radii.to_vec(),
        slopes,
        flagged: r2 < 0.99,
    })
}

// ---------------------------------------------------------------------------
// equidistribution

/// Total-variation distance between the histogram of fiber angles along
/// `traj` (at `samples` equally spaced times) and the uniform measure on
/// `bins^n` boxes. Zero is perfect equidistribution.
pub fn equidistribution_discrepancy(traj: &Trajectory, bins: usize, samples: usize) -> Result<f64> {
    if bins == 0 || samples == 0 {
        return Err(Error::InvalidArgument(
            "bins and samples must be positive".into(),
        ));
    }
    let chart = traj.chart;
    let b0 = chart.base(&traj.points[0]);
    let drift = traj
        .points
        .iter()
        .map(|p| chart.base_distance(&chart.base(p), &b0))
        .fold(0.0, f64::max);
    if drift > 1e-6 {
        return Err(Error::NotFiberConfined(drift));
    }
    let n = chart.action_rank();
    let cells = bins.pow(n as u32);
    let mut counts = vec![0usize; cells];
    let (a, b) = (traj.start_time(), traj.end_time());
    for i in 0..samples {
        let t = a + (b - a) * i as f64 / samples as f64;
        let angles = chart.fiber_angles(&traj.sample(t));
        let mut cell = 0;
        for th in angles {
            let j = ((th / core::f64::consts::TAU * bins as f64) as usize).min(bins - 1);
            cell = cell * bins + j;
        }
        counts[cell] += 1;
    }
    let uniform = 1.0 / cells as f64;
    Ok(0.5
        * counts
            .iter()
            .map(|&c| (c as f64 / samples as f64 - uniform).abs())
            .sum::<f64>())
}

pub fn feature<'f>(field: &'f FieldHandle, id: &str) -> Option<&'f Feature> {
    field.meta().features.iter().find(|f| f.id == id)
}

pub fn describe_kind(kind: LimitKind) -> String {
    match kind {
        LimitKind::FixedPoint => "fixed_point",
        LimitKind::SingularFiber => "singular_fiber",
        LimitKind::TorusClosure => "torus_closure",
        LimitKind::Escape => "escape",
        LimitKind::Inconclusive => "inconclusive",
    }
    .to_string()
}
