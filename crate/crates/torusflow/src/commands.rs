//! Subcommand implementations. Each returns whether its checks passed;
//! errors carry their exit code.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use torusflow_core::construction::{
    build_line_describing, build_planar_demo, build_s5, ConstructionManifest,
};
use torusflow_core::fields::{affine_torus_field, linear_model_field, BaseKind};
use torusflow_core::flow::{
    census_samples, integrate, source_assignment, tally, BasinCensus, IntegratorConfig,
};
use torusflow_core::sampling;
use torusflow_core::verify::{
    affine_torus_demo, census_report, commutant_basis_check, commutant_dimension_probe,
    linear_model_conjugations, s5_symmetry_checks, verify_manifest, CommutantProbeReport,
    ManifestChecks, ProbeConfig, SphereChecks, VerificationReport,
};
use torusflow_core::Chart;

use crate::config::{RunConfig, Scenario};
use crate::error::CliError;
use crate::output::{csv_preamble, csv_row, write_json, Envelope};

pub fn manifest(cfg: &RunConfig) -> Result<ConstructionManifest, CliError> {
    let a = cfg.frequencies();
    let m = match cfg.scenario {
        Scenario::S5 => build_s5()?,
        Scenario::Line => build_line_describing(BaseKind::Line, a, cfg.dense)?,
        Scenario::Circle => build_line_describing(BaseKind::Circle, a, cfg.dense)?,
        Scenario::Planar => build_planar_demo(
            cfg.orders.as_deref().unwrap_or(&[2, 4, 6]),
            cfg.radius.unwrap_or(1.0),
            a,
            cfg.dense,
        )?,
        Scenario::Product => ConstructionManifest {
            field: linear_model_field(cfg.k.unwrap_or(2), a, cfg.dense),
            inventory: Vec::new(),
            frequencies: a.to_vec(),
            recipe: "linear model: X = xi + T".into(),
        },
        Scenario::Affine => ConstructionManifest {
            field: affine_torus_field(a, cfg.dense),
            inventory: Vec::new(),
            frequencies: a.to_vec(),
            recipe: "affine field T on the torus".into(),
        },
    };
    Ok(m)
}

pub fn build(cfg: &RunConfig, out: Option<&Path>) -> Result<String, CliError> {
    let m = manifest(cfg)?;
    let summary = m.summary();
    write_json(out, &Envelope::new("build", cfg, &summary))?;
    Ok(format!(
        "build: {} with {} singular fibers",
        summary.name,
        summary.inventory.len()
    ))
}

pub fn trace(cfg: &RunConfig, out: Option<&Path>) -> Result<String, CliError> {
    let m = manifest(cfg)?;
    let field = &m.field;
    let chart = field.chart();
    let p0 = match &cfg.trace.p0 {
        Some(p) => {
            chart
                .check_len(p)
                .map_err(|e| CliError::Config(format!("trace.p0: {e}")))?;
            if !chart.contains(p) {
                return Err(CliError::Config(format!(
                    "trace.p0 is outside the {} chart",
                    chart.name()
                )));
            }
            chart.normalized(p)
        }
        None => sampling::chart_point(&mut sampling::rng(cfg.seed), chart, &field.meta().base_box),
    };
    let mut rows = 0;
    crate::output::write_output(out, |w| {
        csv_preamble(w, cfg, chart)?;
        let tr = integrate(field, &p0, (cfg.trace.t0, cfg.trace.t1), &cfg.integrator)?;
        for (t, p) in tr.dense(cfg.trace.samples) {
            csv_row(w, t, &p)?;
            rows += 1;
        }
        Ok(())
    })?;
    Ok(format!("trace: {rows} rows"))
}

#[derive(Serialize)]
pub struct VerifyResult {
    pub passed: bool,
    pub total: usize,
    pub failed: Vec<String>,
    pub reports: Vec<VerificationReport>,
}

fn parallel_census(
    m: &ConstructionManifest,
    samples: usize,
    cfg: &RunConfig,
) -> Result<BasinCensus, CliError> {
    let field = &m.field;
    let points = census_samples(field, samples, cfg.seed);
    let assignments = points
        .par_iter()
        .map(|p| source_assignment(field, p, &cfg.limits))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(tally(assignments))
}

fn probe_config(cfg: &RunConfig) -> ProbeConfig {
    ProbeConfig {
        rank_cut: cfg.probe.rank_cut,
        min_gap: cfg.probe.min_gap,
        annulus: cfg.probe.annulus,
    }
}

fn run_probe(cfg: &RunConfig, m: &ConstructionManifest) -> Result<CommutantProbeReport, CliError> {
    if !matches!(m.field.chart(), Chart::Product { .. }) {
        return Err(CliError::Usage(format!(
            "probe needs a product-chart scenario (product, remark11), not {}",
            cfg.scenario.id()
        )));
    }
    Ok(commutant_dimension_probe(
        &m.field,
        cfg.probe.poly_degree,
        cfg.probe.fourier_degree,
        cfg.probe.points,
        cfg.seed,
        &probe_config(cfg),
    )?)
}

fn scenario_reports(
    cfg: &RunConfig,
    m: &ConstructionManifest,
) -> Result<Vec<VerificationReport>, CliError> {
    let v = &cfg.verify;
    let manifest_checks = ManifestChecks {
        seed: cfg.seed,
        commutation_samples: v.commutation_samples,
        commutation_time: v.commutation_time,
        census_samples: 0,
        equidistribution_samples: v.equidistribution_samples,
        equidistribution_time: v.equidistribution_time,
        integrator: cfg.integrator,
        limits: cfg.limits,
    };
    let with_census =
        |extra: Vec<VerificationReport>| -> Result<Vec<VerificationReport>, CliError> {
            let (mut reports, census) = rayon::join(
                || verify_manifest(m, &manifest_checks),
                || parallel_census(m, v.census_samples, cfg),
            );
            if v.census_samples > 0 {
                reports.push(census_report(&census?));
            }
            reports.extend(extra);
            Ok(reports)
        };
    match cfg.scenario {
        Scenario::S5 => {
            let sym = s5_symmetry_checks(&SphereChecks {
                seed: cfg.seed,
                bracket_points: v.bracket_points,
                commutation_samples: v.commutation_samples,
                commutation_time: v.sphere_commutation_time,
                drift_trajectories: v.drift_trajectories,
                drift_time: v.drift_time,
                integrator: cfg.integrator,
            })?;
            with_census(sym)
        }
        Scenario::Line | Scenario::Circle | Scenario::Planar => with_census(Vec::new()),
        Scenario::Product => {
            let (k, n) = (cfg.k.unwrap_or(2), cfg.frequencies().len());
            let mut reports = vec![commutant_basis_check(&m.field, v.bracket_points, cfg.seed)?];
            let probe = run_probe(cfg, m)?;
            let expected = k * k + n;
            let dim = probe.estimated_dimension;
            let mut rep = VerificationReport::at_most(
                "commutant_probe",
                dim.abs_diff(expected) as f64,
                0.0,
                probe.collocation_points,
                "the ansatz commutant has dimension k^2 + n",
            )
            .with_note(format!(
                "estimated {dim}, expected {expected}, gap ratio {:e}",
                probe.gap_ratio
            ));
            rep.pass &= probe.gap_ok && cfg.dense;
            reports.push(rep);
            reports.extend(linear_model_conjugations(
                k,
                cfg.frequencies(),
                v.conjugation_samples,
                cfg.seed,
                v.conjugation_time,
                &IntegratorConfig {
                    tol: v.conjugation_tol,
                    ..cfg.integrator
                },
                false,
            )?);
            Ok(reports)
        }
        Scenario::Affine => Ok(affine_torus_demo(cfg.frequencies().len(), cfg.seed)?),
    }
}

/// Runs the scenario's suite. With `sabotage`, a shear of the fiber torus is
/// declared an automorphism of the linear model, which must make the run fail.
pub fn verify(
    cfg: &RunConfig,
    out: Option<&Path>,
    sabotage: bool,
) -> Result<(bool, String), CliError> {
    let m = manifest(cfg)?;
    let mut reports = scenario_reports(cfg, &m)?;
    if sabotage {
        let shear = linear_model_conjugations(
            1,
            &[1.0, std::f64::consts::SQRT_2],
            cfg.verify.conjugation_samples,
            cfg.seed,
            cfg.verify.conjugation_time,
            &IntegratorConfig {
                tol: cfg.verify.conjugation_tol,
                ..cfg.integrator
            },
            true,
        )?;
        reports.extend(
            shear
                .into_iter()
                .filter(|r| r.check.starts_with("conjugation/shear"))
                .map(|mut r| {
                    r.check = format!("sabotage/{}", r.check);
                    r
                }),
        );
    }
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.check.clone())
        .collect();
    let passed = failed.is_empty();
    let msg = format!(
        "verify: {}/{} checks passed{}",
        reports.len() - failed.len(),
        reports.len(),
        if passed {
            String::new()
        } else {
            format!("; failed: {}", failed.join(", "))
        }
    );
    let result = VerifyResult {
        passed,
        total: reports.len(),
        failed,
        reports,
    };
    write_json(out, &Envelope::new("verify", cfg, &result))?;
    Ok((passed, msg))
}

pub fn probe(cfg: &RunConfig, out: Option<&Path>) -> Result<(bool, String), CliError> {
    let m = manifest(cfg)?;
    let report = run_probe(cfg, &m)?;
    write_json(out, &Envelope::new("probe", cfg, &report))?;
    Ok((
        report.gap_ok,
        format!(
            "probe: estimated dimension {} (gap ratio {:e})",
            report.estimated_dimension, report.gap_ratio
        ),
    ))
}

pub fn basin(cfg: &RunConfig, out: Option<&Path>) -> Result<String, CliError> {
    let m = manifest(cfg)?;
    let census = parallel_census(&m, cfg.basin.samples, cfg)?;
    write_json(out, &Envelope::new("basin", cfg, &census))?;
    Ok(format!(
        "basin: {:.2}% of {} samples reach a source",
        100.0 * census.classified_fraction,
        census.samples
    ))
}
