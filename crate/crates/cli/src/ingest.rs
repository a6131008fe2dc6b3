//! CSV ingestion with row- and column-level error messages.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{Context, Result};
use benchcert_core::{ActionAlphabet, CandidateTable, EvidenceColumn, EvidenceKind};
use serde::Deserialize;

use crate::error::data;

/// Header plus string cells. `rows[i]` is data row `i + 1`, file line `i + 2`.
#[derive(Debug, Clone)]
pub struct RawCsv {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn location(row: usize, column: &str) -> String {
    format!("row {} (line {}), column {column:?}", row + 1, row + 2)
}

impl RawCsv {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_path(path)
            .with_context(|| format!("cannot open {}", path.display()))?;
        let mut headers: Vec<String> = reader
            .headers()
            .map_err(|e| data(format!("{}: cannot read header: {e}", path.display())))?
            .iter()
            .map(|h| h.trim().to_owned())
            .collect();
        if let Some(first) = headers.first_mut() {
            *first = first.trim_start_matches('\u{feff}').to_owned();
        }
        let mut seen = BTreeSet::new();
        for h in &headers {
            if h.is_empty() {
                return Err(data(format!("{}: empty column name in header", path.display())));
            }
            if !seen.insert(h.as_str()) {
                return Err(data(format!("{}: duplicate column {h:?} in header", path.display())));
            }
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => data(format!(
                    "{}: row {} (line {}) has {len} fields, header has {expected_len}",
                    path.display(),
                    i + 1,
                    i + 2
                )),
                _ => data(format!("{}: row {} (line {}): {e}", path.display(), i + 1, i + 2)),
            })?;
            rows.push(record.iter().map(|c| c.trim().to_owned()).collect());
        }
        if rows.is_empty() {
            return Err(data(format!("{}: no data rows", path.display())));
        }
        Ok(Self { headers, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn require_column(&self, name: &str, path: &Path) -> Result<usize> {
        self.column(name)
            .ok_or_else(|| data(format!("{}: missing required column {name:?}", path.display())))
    }

    /// Parses a finite number; an empty cell is an error.
    pub fn number(&self, row: usize, col: usize, path: &Path) -> Result<f64> {
        self.optional_number(row, col, path)?.ok_or_else(|| {
            data(format!("{}: {}: empty value", path.display(), location(row, &self.headers[col])))
        })
    }

    /// Parses a finite number; an empty cell is `None`.
    pub fn optional_number(&self, row: usize, col: usize, path: &Path) -> Result<Option<f64>> {
        let cell = &self.rows[row][col];
        if cell.is_empty() {
            return Ok(None);
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(data(format!(
                "{}: {}: cannot parse {cell:?} as a finite number",
                path.display(),
                location(row, &self.headers[col])
            ))),
        }
    }

    /// Ids from `id`, rejecting empty and duplicate values.
    pub fn ids(&self, path: &Path) -> Result<Vec<String>> {
        let c = self.require_column("id", path)?;
        let mut first_seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (r, row) in self.rows.iter().enumerate() {
            let id = row[c].as_str();
            if id.is_empty() {
                return Err(data(format!("{}: {}: empty id", path.display(), location(r, "id"))));
            }
            if let Some(prev) = first_seen.insert(id, r) {
                return Err(data(format!(
                    "{}: {}: duplicate id {id:?} (first seen in row {})",
                    path.display(),
                    location(r, "id"),
                    prev + 1
                )));
            }
        }
        Ok(self.rows.iter().map(|row| row[c].clone()).collect())
    }
}

/// Optional overrides for candidate ingestion, read from `--schema`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    /// Maps source column names to the expected names (`id`, `e_*`, `d_label`, ...).
    #[serde(default)]
    pub rename: BTreeMap<String, String>,
    /// Forces an evidence column's kind instead of inferring it.
    #[serde(default)]
    pub kinds: BTreeMap<String, EvidenceKind>,
    /// Declares the action alphabet and its order; the second token of a
    /// binary alphabet is the positive action.
    #[serde(default)]
    pub alphabet: Option<Vec<String>>,
}

impl Schema {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| data(format!("{}: invalid schema: {e}", path.display())))
    }
}

/// A candidate table plus notes about ignored columns.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub table: CandidateTable,
    pub warnings: Vec<String>,
}

fn is_numeric(cell: &str) -> bool {
    !cell.is_empty() && cell.parse::<f64>().is_ok_and(f64::is_finite)
}

/// Reads a candidate CSV: `id`, evidence `e_*`, optional `d_label`, `y_star`
/// and `loss_<action>` columns.
pub fn ingest_candidates(path: &Path, schema: &Schema) -> Result<Ingested> {
    let mut raw = RawCsv::read(path)?;
    for h in raw.headers.iter_mut() {
        if let Some(new) = schema.rename.get(h) {
            *h = new.clone();
        }
    }
    if let Some(unknown) = schema.kinds.keys().find(|k| raw.column(k).is_none()) {
        return Err(data(format!("{}: schema declares a kind for unknown column {unknown:?}", path.display())));
    }
    let ids = raw.ids(path)?;
    let mut warnings = Vec::new();
    let mut evidence = Vec::new();
    let mut loss_cols = Vec::new();
    for (c, name) in raw.headers.iter().enumerate() {
        if name.starts_with("e_") {
            let kind = match schema.kinds.get(name) {
                Some(k) => *k,
                None if raw.rows.iter().all(|r| is_numeric(&r[c])) => EvidenceKind::Continuous,
                None => EvidenceKind::Discrete,
            };
            evidence.push(match kind {
                EvidenceKind::Discrete => EvidenceColumn::Discrete {
                    name: name.clone(),
                    values: raw.rows.iter().map(|r| r[c].clone()).collect(),
                },
                EvidenceKind::Continuous => EvidenceColumn::Continuous {
                    name: name.clone(),
                    values: (0..raw.rows.len()).map(|r| raw.number(r, c, path)).collect::<Result<_>>()?,
                },
            });
        } else if let Some(action) = name.strip_prefix("loss_") {
            loss_cols.push((action.to_owned(), c));
        } else if !matches!(name.as_str(), "id" | "d_label" | "y_star") {
            warnings.push(format!("ignored column {name:?}"));
        }
    }
    if evidence.is_empty() {
        return Err(data(format!("{}: no evidence columns (names must start with \"e_\")", path.display())));
    }
    let mut table = CandidateTable::new(ids, evidence)?;

    let declared = schema.alphabet.clone().map(ActionAlphabet::new).transpose()?;
    if let Some(c) = raw.column("d_label") {
        let labels: Vec<Option<String>> =
            raw.rows.iter().map(|r| (!r[c].is_empty()).then(|| r[c].clone())).collect();
        let alphabet = match &declared {
            Some(a) => a.clone(),
            None => ActionAlphabet::infer(labels.iter().flatten().map(String::as_str))?,
        };
        for (r, l) in labels.iter().enumerate() {
            if let Some(tok) = l {
                if alphabet.index_of(tok).is_none() {
                    return Err(data(format!(
                        "{}: {}: label {tok:?} is not in the alphabet {:?}",
                        path.display(),
                        location(r, "d_label"),
                        alphabet.tokens()
                    )));
                }
            }
        }
        table = table.with_labels(alphabet, labels)?;
    }
    if let Some(c) = raw.column("y_star") {
        let ys = (0..raw.rows.len()).map(|r| raw.optional_number(r, c, path)).collect::<Result<_>>()?;
        table = table.with_responses(ys)?;
    }
    if !loss_cols.is_empty() {
        let alphabet = match (table.alphabet(), &declared) {
            (Some(a), _) | (None, Some(a)) => a.clone(),
            (None, None) => ActionAlphabet::new(loss_cols.iter().map(|(a, _)| a.clone()).collect())?,
        };
        let by_action: BTreeMap<&str, usize> = loss_cols.iter().map(|(a, c)| (a.as_str(), *c)).collect();
        if by_action.len() != alphabet.len() || alphabet.tokens().iter().any(|t| !by_action.contains_key(t.as_str())) {
            return Err(data(format!(
                "{}: loss columns {:?} do not match the action alphabet {:?}",
                path.display(),
                by_action.keys().collect::<Vec<_>>(),
                alphabet.tokens()
            )));
        }
        let losses = (0..raw.rows.len())
            .map(|r| alphabet.tokens().iter().map(|t| raw.number(r, by_action[t.as_str()], path)).collect())
            .collect::<Result<Vec<Vec<f64>>>>()?;
        table = table.with_losses(alphabet, losses)?;
    }
    Ok(Ingested { table, warnings })
}

/// Per-candidate certificate inputs: `id`, `y_hat`, `delta`, optional
/// `radius` and `y_star`.
#[derive(Debug, Clone)]
pub struct BoundRows {
    pub ids: Vec<String>,
    pub y_hat: Vec<f64>,
    pub delta: Vec<f64>,
    pub radius: Vec<f64>,
    pub y_star: Option<Vec<Option<f64>>>,
}

pub fn ingest_bounds(path: &Path, default_radius: Option<f64>) -> Result<BoundRows> {
    let raw = RawCsv::read(path)?;
    let ids = raw.ids(path)?;
    let n = raw.rows.len();
    let col = |name: &str| -> Result<Vec<f64>> {
        let c = raw.require_column(name, path)?;
        (0..n).map(|r| raw.number(r, c, path)).collect()
    };
    let y_hat = col("y_hat")?;
    let delta = col("delta")?;
    let radius = match (raw.column("radius"), default_radius) {
        (Some(_), Some(_)) => {
            return Err(crate::error::usage(format!(
                "{} has a radius column; drop --radius or the column",
                path.display()
            )))
        }
        (Some(_), None) => col("radius")?,
        (None, Some(r)) => vec![r; n],
        (None, None) => {
            return Err(data(format!(
                "{}: missing required column \"radius\" (or pass --radius)",
                path.display()
            )))
        }
    };
    let y_star = match raw.column("y_star") {
        Some(c) => Some((0..n).map(|r| raw.optional_number(r, c, path)).collect::<Result<_>>()?),
        None => None,
    };
    Ok(BoundRows { ids, y_hat, delta, radius, y_star })
}

/// Named vectors: `id`, optional `cost`, and coordinate columns in header order.
#[derive(Debug, Clone)]
pub struct VectorFile {
    pub coordinates: Vec<String>,
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub costs: Option<Vec<f64>>,
}

pub fn ingest_vectors(path: &Path, with_cost: bool) -> Result<VectorFile> {
    let raw = RawCsv::read(path)?;
    let ids = raw.ids(path)?;
    let cost_col = if with_cost { Some(raw.require_column("cost", path)?) } else { None };
    if !with_cost && raw.column("cost").is_some() {
        return Err(data(format!("{}: unexpected \"cost\" column", path.display())));
    }
    let coord_cols: Vec<usize> = (0..raw.headers.len())
        .filter(|&c| raw.headers[c] != "id" && Some(c) != cost_col)
        .collect();
    if coord_cols.is_empty() {
        return Err(data(format!("{}: no coordinate columns", path.display())));
    }
    let vectors = (0..raw.rows.len())
        .map(|r| coord_cols.iter().map(|&c| raw.number(r, c, path)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let costs = cost_col
        .map(|c| (0..raw.rows.len()).map(|r| raw.number(r, c, path)).collect::<Result<Vec<f64>>>())
        .transpose()?;
    Ok(VectorFile {
        coordinates: coord_cols.iter().map(|&c| raw.headers[c].clone()).collect(),
        ids,
        vectors,
        costs,
    })
}
