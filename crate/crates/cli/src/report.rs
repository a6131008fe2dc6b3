//! JSON reports and CSV outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use benchcert_core::replay::sha256_hex;
use serde::Serialize;
use serde_json::Value;

/// Bumped whenever a report field changes meaning or disappears.
pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL: &str = "benchcert";

/// Effective parameters keyed by flag name, without the leading dashes.
///
/// Booleans appear only when set; lists are JSON arrays that map back to
/// comma-separated flag values.
#[derive(Debug, Clone, Default, Serialize)]
#[serde(transparent)]
pub struct Params(BTreeMap<String, Value>);

impl Params {
    pub fn set(&mut self, flag: &str, value: impl Into<Value>) {
        self.0.insert(flag.to_owned(), value.into());
    }

    pub fn set_opt<T: Into<Value>>(&mut self, flag: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(flag, v);
        }
    }

    pub fn flag(&mut self, flag: &str, on: bool) {
        if on {
            self.set(flag, true);
        }
    }

    pub fn path(&mut self, flag: &str, path: &Path) {
        self.set(flag, path.display().to_string());
    }

    pub fn list<T: Into<Value> + Clone>(&mut self, flag: &str, values: &[T]) {
        self.set(flag, Value::Array(values.iter().cloned().map(Into::into).collect()));
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub flag: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub inputs: Vec<InputDigest>,
    pub parameters: Params,
    pub metrics: Value,
    /// Files written next to `report.json`.
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_owned(),
            inputs: Vec::new(),
            parameters: Params::default(),
            metrics: Value::Null,
            outputs: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Records the SHA-256 of an input file and echoes its path as a parameter.
    pub fn input(&mut self, flag: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        self.inputs.push(InputDigest {
            flag: flag.to_owned(),
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        self.parameters.path(flag, path);
        Ok(())
    }
}

/// Serialized writer for one output directory.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_owned(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn record(&mut self, name: &str) {
        self.written.push(name.to_owned());
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.record(name);
        Ok(())
    }

    /// Writes `report.json` with its list of outputs and returns the JSON text.
    pub fn finish(mut self, mut report: Report) -> Result<String> {
        report.outputs = std::mem::take(&mut self.written);
        let text = to_json(&report)?;
        let path = self.path("report.json");
        fs::write(&path, &text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(text)
    }
}

/// Pretty JSON with sorted object keys and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

/// CSV cell for a number; shortest round-trip decimal.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn opt_count(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
