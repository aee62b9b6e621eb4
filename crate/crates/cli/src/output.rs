//! Results, deterministic file emission and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::{Config, Format};
use crate::svg::{render, Plot};

#[derive(Debug, Clone)]
pub struct Table {
    /// `None` for the main table, otherwise a file-name suffix.
    pub name: Option<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { name: None, columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[i]).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, pass: value <= bound }
    }

    pub fn holds(name: &str, pass: bool) -> Self {
        Self { name: name.into(), value: f64::from(u8::from(pass)), bound: 1.0, pass }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
    pub checks: Vec<Check>,
    pub plots: Vec<Plot>,
    /// Raw little-endian field dumps, written regardless of `formats`.
    pub blobs: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    pub fn set(&mut self, key: &str, v: impl Serialize) {
        self.summary.insert(key.into(), serde_json::to_value(v).expect("serializable"));
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// First 12 hex digits of the SHA-256 of the resolved config.
pub fn config_hash(cfg: &Config) -> String {
    let text = serde_json::to_string(cfg).expect("serializable");
    hex::encode(Sha256::digest(text.as_bytes()))[..12].to_string()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

pub struct Manifest {
    path: PathBuf,
    body: Map<String, Value>,
}

impl Manifest {
    /// Writes the manifest with status `running` before any work starts.
    pub fn begin(dir: &Path, cfg: &Config) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let stem = format!("{}-{}", cfg.experiment.name(), config_hash(cfg));
        let body = json!({
            "experiment": cfg.experiment.name(),
            "id": stem,
            "config": cfg,
            "seed": cfg.seed,
            "rng": anderson_core::noise::RNG_IDENTITY,
            "code_version": env!("CARGO_PKG_VERSION"),
            "started": now(),
            "status": "running",
            "outputs": [],
        });
        let m = Self { path: dir.join(format!("{stem}.manifest.json")), body: body.as_object().cloned().expect("object") };
        m.write()?;
        Ok(m)
    }

    pub fn stem(&self) -> &str {
        self.body["id"].as_str().expect("string id")
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.body)?;
        fs::write(&self.path, text + "\n").with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn finish(mut self, status: &str, outputs: &[OutputFile], error: Option<String>) -> Result<()> {
        self.body.insert("finished".into(), json!(now()));
        self.body.insert("status".into(), json!(status));
        self.body.insert("outputs".into(), serde_json::to_value(outputs)?);
        if let Some(e) = error {
            self.body.insert("error".into(), json!(e));
        }
        self.write()
    }
}

fn write_file(dir: &Path, name: String, bytes: &[u8], out: &mut Vec<OutputFile>) -> Result<()> {
    let path = dir.join(&name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    out.push(OutputFile { file: name, sha256: sha256_hex(bytes), bytes: bytes.len() });
    Ok(())
}

/// Writes `{stem}.csv`, `{stem}.json` and `{stem}.svg` (extra tables and
/// plots get a suffix) and returns the inventory.
pub fn emit(dir: &Path, stem: &str, experiment: &str, formats: &[Format], outcome: &Outcome) -> Result<Vec<OutputFile>> {
    let mut out = Vec::new();
    if formats.contains(&Format::Csv) {
        for t in &outcome.tables {
            let name = match &t.name {
                None => format!("{stem}.csv"),
                Some(s) => format!("{stem}-{s}.csv"),
            };
            write_file(dir, name, t.to_csv().as_bytes(), &mut out)?;
        }
    }
    if formats.contains(&Format::Json) {
        let doc = json!({
            "experiment": experiment,
            "summary": outcome.summary,
            "checks": outcome.checks,
            "all_pass": outcome.all_pass(),
        });
        write_file(dir, format!("{stem}.json"), (serde_json::to_string_pretty(&doc)? + "\n").as_bytes(), &mut out)?;
    }
    if formats.contains(&Format::Svg) {
        for (i, p) in outcome.plots.iter().enumerate() {
            let name = if i == 0 { format!("{stem}.svg") } else { format!("{stem}-{i}.svg") };
            write_file(dir, name, render(p, &outcome.tables[p.table]).as_bytes(), &mut out)?;
        }
    }
    for (name, bytes) in &outcome.blobs {
        write_file(dir, format!("{stem}-{name}.bin"), bytes, &mut out)?;
    }
    Ok(out)
}
