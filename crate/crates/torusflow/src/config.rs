//! Run configuration: a versioned JSON document, optionally overridden from
//! the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use torusflow_core::fields::S5_FREQUENCIES;
use torusflow_core::flow::{IntegratorConfig, LimitConfig};

use crate::error::CliError;

pub const SCHEMA: &str = "torusflow.config/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// The describing field on S^5 with the T^3 action.
    S5,
    /// Line base `R x T^n`.
    Line,
    /// Circle base `S^1 x T^n`.
    Circle,
    /// Planar base with three tagged fibers.
    Planar,
    /// The linear model `xi + T` on `R^k x T^n`.
    Product,
    /// Affine fields on `T^n` versus coefficients depending on a base.
    #[serde(rename = "remark11")]
    #[value(name = "remark11")]
    Affine,
}

impl Scenario {
    pub fn id(self) -> &'static str {
        match self {
            Scenario::S5 => "s5",
            Scenario::Line => "line",
            Scenario::Circle => "circle",
            Scenario::Planar => "planar",
            Scenario::Product => "product",
            Scenario::Affine => "remark11",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    /// Starting point in chart coordinates; drawn from the seed when absent.
    pub p0: Option<Vec<f64>>,
    pub t0: f64,
    pub t1: f64,
    /// Number of equal intervals of dense output (rows are `samples + 1`).
    pub samples: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            p0: None,
            t0: 0.0,
            t1: 10.0,
            samples: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub commutation_samples: usize,
    pub commutation_time: f64,
    pub census_samples: usize,
    pub equidistribution_samples: usize,
    pub equidistribution_time: f64,
    /// Points for bracket checks (linear-model basis and S^5 fundamental fields).
    pub bracket_points: usize,
    pub sphere_commutation_time: f64,
    pub drift_trajectories: usize,
    pub drift_time: f64,
    pub conjugation_samples: usize,
    pub conjugation_time: f64,
    pub conjugation_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            commutation_samples: 100,
            commutation_time: 5.0,
            census_samples: 200,
            equidistribution_samples: 100_000,
            equidistribution_time: 2e4,
            bracket_points: 1000,
            sphere_commutation_time: 10.0,
            drift_trajectories: 4,
            drift_time: 100.0,
            conjugation_samples: 10,
            conjugation_time: 5.0,
            conjugation_tol: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    pub poly_degree: usize,
    pub fourier_degree: usize,
    pub points: usize,
    pub rank_cut: f64,
    pub min_gap: f64,
    pub annulus: (f64, f64),
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            poly_degree: 2,
            fourier_degree: 2,
            points: 500,
            rank_cut: 1e-8,
            min_gap: 1e3,
            annulus: (0.5, 1.5),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasinSettings {
    pub samples: usize,
}

impl Default for BasinSettings {
    fn default() -> Self {
        Self { samples: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    /// Fiber frequencies; each scenario has a default.
    #[serde(default)]
    pub frequencies: Option<Vec<f64>>,
    /// Declares the frequencies rationally independent.
    #[serde(default = "yes")]
    pub dense: bool,
    /// Base dimension of the product scenario.
    #[serde(default)]
    pub k: Option<usize>,
    /// Orders of the planar scenario's tagged fibers.
    #[serde(default)]
    pub orders: Option<Vec<u32>>,
    /// Distance of the planar scenario's tagged fibers from the origin.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub limits: LimitConfig,
    #[serde(default)]
    pub trace: TraceConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub probe: ProbeSettings,
    #[serde(default)]
    pub basin: BasinSettings,
    /// Output path; `--out` takes precedence, stdout when neither is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            scenario,
            seed: 0,
            frequencies: None,
            dense: true,
            k: None,
            orders: None,
            radius: None,
            integrator: IntegratorConfig::default(),
            limits: LimitConfig::default(),
            trace: TraceConfig::default(),
            verify: VerifyConfig::default(),
            probe: ProbeSettings::default(),
            basin: BasinSettings::default(),
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fills scenario defaults and checks the invariants.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        if self.schema != SCHEMA {
            return Err(CliError::Config(format!(
                "unsupported schema {:?}, expected {SCHEMA:?}",
                self.schema
            )));
        }
        let default_freq = match self.scenario {
            Scenario::S5 => S5_FREQUENCIES.to_vec(),
            Scenario::Line | Scenario::Circle | Scenario::Planar => vec![1.0],
            Scenario::Product | Scenario::Affine => vec![1.0, std::f64::consts::SQRT_2],
        };
        match (&self.frequencies, self.scenario) {
            (Some(f), Scenario::S5) if f.as_slice() != S5_FREQUENCIES.as_slice() => {
                return Err(CliError::Config(
                    "the s5 scenario has fixed frequencies (1, e, e^2)".into(),
                ))
            }
            (None, _) => self.frequencies = Some(default_freq),
            _ => {}
        }
        if self.scenario == Scenario::Product && self.k.is_none() {
            self.k = Some(2);
        }
        if self.scenario == Scenario::Planar {
            self.orders.get_or_insert_with(|| vec![2, 4, 6]);
            self.radius.get_or_insert(1.0);
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |what: &str| Err(CliError::Config(what.to_string()));
        let freq = self.frequencies.as_deref().unwrap_or_default();
        if freq.iter().any(|a| !a.is_finite()) {
            return bad("frequencies must be finite");
        }
        if freq.is_empty() && self.scenario != Scenario::Product {
            return bad("at least one frequency is required");
        }
        let positive = [
            ("integrator.tol", self.integrator.tol),
            ("limits.integrator.tol", self.limits.integrator.tol),
            ("limits.capture_distance", self.limits.capture_distance),
            ("limits.recurrence_delta", self.limits.recurrence_delta),
            ("limits.stationary_tol", self.limits.stationary_tol),
            ("limits.horizon", self.limits.horizon),
            ("limits.escape_radius", self.limits.escape_radius),
            ("verify.conjugation_tol", self.verify.conjugation_tol),
            ("probe.rank_cut", self.probe.rank_cut),
            ("probe.min_gap", self.probe.min_gap),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(CliError::Config(format!("{name} must be > 0")));
        }
        if !(self.trace.t0.is_finite() && self.trace.t1.is_finite()) || self.trace.samples == 0 {
            return bad("trace needs finite t0, t1 and samples >= 1");
        }
        if let Some(r) = self.radius {
            if !(r > 0.0 && r.is_finite()) {
                return bad("radius must be positive");
            }
        }
        let (lo, hi) = self.probe.annulus;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("probe.annulus must satisfy 0 < r_min <= r_max");
        }
        Ok(())
    }

    pub fn frequencies(&self) -> &[f64] {
        self.frequencies.as_deref().unwrap_or_default()
    }

    /// SHA-256 of the resolved configuration without its output path.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
