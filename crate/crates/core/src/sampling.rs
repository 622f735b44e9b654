//! Seeded sampling of chart points.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{norm, Chart};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use crate::math::Real;

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut SampleRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn standard_normal(rng: &mut SampleRng) -> f64 {
    // Box-Muller; 1 - u keeps the logarithm finite.
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

pub fn torus_angles(rng: &mut SampleRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| uniform(rng, 0.0, TAU)).collect()
}

/// Uniform point on the unit sphere in `R^d`.
pub fn sphere_point(rng: &mut SampleRng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        let r = norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|c| c / r).collect();
        }
    }
}

/// Uniform point in the open triangle `x1, x2 > 0, x1 + x2 < 1`.
pub fn triangle_point(rng: &mut SampleRng) -> [f64; 2] {
    loop {
        let (a, b) = (rng.random::<f64>(), rng.random::<f64>());
        let (a, b) = if a + b > 1.0 {
            (1.0 - a, 1.0 - b)
        } else {
            (a, b)
        };
        if a > 0.0 && b > 0.0 && a + b < 1.0 {
            return [a, b];
        }
    }
}

/// Uniform point in the shell `r_min <= |x| <= r_max` of `R^k`.
pub fn shell_point(rng: &mut SampleRng, k: usize, r_min: f64, r_max: f64) -> Vec<f64> {
    let dir = sphere_point(rng, k);
    let kf = k as f64;
    let u = uniform(rng, r_min.powf(kf), r_max.powf(kf));
    let r = u.powf(1.0 / kf);
    dir.into_iter().map(|c| c * r).collect()
}

/// A chart point with base coordinates drawn from `base_box` (ignored for the
/// sphere, circle and triangle charts, which have canonical measures) and
/// uniform torus angles.
pub fn chart_point(rng: &mut SampleRng, chart: Chart, base_box: &[(f64, f64)]) -> Vec<f64> {
    match chart {
        Chart::Product { k, n } => {
            let mut p: Vec<f64> = (0..k)
                .map(|i| {
                    let (lo, hi) = base_box.get(i).copied().unwrap_or((-1.0, 1.0));
                    uniform(rng, lo, hi)
                })
                .collect();
            p.extend(torus_angles(rng, n));
            p
        }
        Chart::Circle { n } => torus_angles(rng, n + 1),
        Chart::Sphere5 => sphere_point(rng, 6),
        Chart::Triangle => triangle_point(rng).to_vec(),
    }
}
