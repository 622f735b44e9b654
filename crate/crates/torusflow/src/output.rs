//! Output files. Every file carries the tool version, the seed and the hash of
//! the resolved configuration, and nothing that varies between runs.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use torusflow_core::Chart;

use crate::config::{RunConfig, Scenario};
use crate::error::CliError;

pub const TOOL: &str = "torusflow";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub scenario: Scenario,
    pub seed: u64,
    pub config_sha256: String,
    pub config: &'a RunConfig,
    pub result: T,
}

impl<'a, T: Serialize> Envelope<'a, T> {
    pub fn new(command: &'a str, config: &'a RunConfig, result: T) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command,
            scenario: config.scenario,
            seed: config.seed,
            config_sha256: config.hash(),
            config,
            result,
        }
    }
}

/// Writes to `path`, or stdout when absent. A file that fails mid-write is
/// removed so no partial output survives.
pub fn write_output<F>(path: Option<&Path>, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    match path {
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            body(&mut w)?;
            w.flush()?;
            Ok(())
        }
        Some(p) => {
            let result = File::create(p).map_err(CliError::from).and_then(|f| {
                let mut w = BufWriter::new(f);
                body(&mut w)?;
                w.flush()?;
                Ok(())
            });
            if result.is_err() {
                let _ = std::fs::remove_file(p);
            }
            result
        }
    }
}

pub fn write_json<T: Serialize>(
    path: Option<&Path>,
    envelope: &Envelope<'_, T>,
) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(envelope)
        .map_err(|e| CliError::Runtime(format!("serializing output: {e}")))?;
    write_output(path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

/// Column names of a chart's coordinates.
pub fn coordinate_names(chart: Chart) -> Vec<String> {
    let thetas = |n: usize| (1..=n).map(|r| format!("theta{r}"));
    match chart {
        Chart::Product { k, n } => (1..=k).map(|j| format!("x{j}")).chain(thetas(n)).collect(),
        Chart::Circle { n } => std::iter::once("alpha".to_string())
            .chain(thetas(n))
            .collect(),
        Chart::Sphere5 => (1..=6).map(|j| format!("y{j}")).collect(),
        Chart::Triangle => vec!["x1".into(), "x2".into()],
    }
}

/// `# key=value` provenance lines, then the header `t,<coords>`.
pub fn csv_preamble(w: &mut dyn Write, config: &RunConfig, chart: Chart) -> io::Result<()> {
    writeln!(
        w,
        "# {TOOL} {VERSION} scenario={} seed={} config_sha256={}",
        config.scenario.id(),
        config.seed,
        config.hash()
    )?;
    let mut header = vec!["t".to_string()];
    header.extend(coordinate_names(chart));
    writeln!(w, "{}", header.join(","))
}

/// One row at 17 significant digits, enough to round-trip binary64.
pub fn csv_row(w: &mut dyn Write, t: f64, point: &[f64]) -> io::Result<()> {
    let mut line = format!("{t:.16e}");
    for v in point {
        line.push(',');
        line.push_str(&format!("{v:.16e}"));
    }
    writeln!(w, "{line}")
}
