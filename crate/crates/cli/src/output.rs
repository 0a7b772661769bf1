//! CSV and JSON emission. Every file starts with the resolved config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::CliError;

/// Shortest round-trip representation, switching to exponent form for very
/// small or large magnitudes.
pub fn num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

#[derive(Debug, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Trailing `# key,value` lines.
    pub footer: Vec<(String, String)>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Table { columns, ..Default::default() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

fn header(command: &str, config: &RunConfig) -> Result<String, CliError> {
    let mut out = format!("# cowqkd {command}\n# seed = {}\n", config.sim.seed);
    let resolved = toml::to_string(config).map_err(|e| CliError::Io(format!("serialising config: {e}")))?;
    for line in resolved.lines() {
        writeln!(out, "# {line}").unwrap();
    }
    Ok(out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(command: &str, config: &RunConfig, table: &Table) -> Result<String, CliError> {
    let mut out = header(command, config)?;
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        let fields: Vec<String> = row.iter().map(|f| csv_field(f)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    for (k, v) in &table.footer {
        writeln!(out, "# {k},{v}").unwrap();
    }
    Ok(out)
}

#[derive(Serialize)]
struct JsonDoc<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
    result: &'a T,
}

pub fn render_json<T: Serialize>(command: &str, config: &RunConfig, result: &T) -> Result<String, CliError> {
    let doc = JsonDoc { command, seed: config.sim.seed, config, result };
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(format!("serialising result: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write(dir: &Path, command: &str, format: Format, body: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;
    let path = dir.join(format!("{command}.{}", format.extension()));
    std::fs::write(&path, body).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
    Ok(path)
}
