//! Evidence fibers under declared finite-resolution rules.
//!
//! Exact patterns and quantile bins partition the candidates. Nearest-neighbour
//! and error-window rules give every candidate its own overlapping
//! neighbourhood instead.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{CoreError, Result};
use crate::table::{CandidateTable, EvidenceColumn, EvidenceKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum FiberRule {
    ExactPattern,
    Quantile { bins_per_dim: usize },
    NearestNeighbour { k: usize },
    ErrorWindow { tolerance: f64 },
}

impl FiberRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FiberRule::Quantile { bins_per_dim } if bins_per_dim == 0 => {
                Err(CoreError::validation("quantile rule needs at least one bin per dimension"))
            }
            FiberRule::NearestNeighbour { k } if k == 0 => {
                Err(CoreError::validation("nearest-neighbour rule needs k >= 1"))
            }
            FiberRule::ErrorWindow { tolerance } if !(tolerance >= 0.0 && tolerance.is_finite()) => {
                Err(CoreError::validation(format!(
                    "error-window tolerance must be a finite nonnegative number, got {tolerance}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Whether the rule partitions candidates (as opposed to overlapping neighbourhoods).
    pub fn is_partition(&self) -> bool {
        matches!(self, FiberRule::ExactPattern | FiberRule::Quantile { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            FiberRule::ExactPattern => "exact",
            FiberRule::Quantile { .. } => "quantile",
            FiberRule::NearestNeighbour { .. } => "knn",
            FiberRule::ErrorWindow { .. } => "window",
        }
    }
}

/// Key identifying one fiber of a partition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FiberKey {
    /// Exact evidence pattern, one token per coordinate.
    Tokens(Vec<String>),
    /// Quantile bin index per coordinate.
    Bins(Vec<usize>),
}

impl fmt::Display for FiberKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FiberKey::Tokens(t) => write!(f, "{}", t.join("|")),
            FiberKey::Bins(b) => {
                let parts: Vec<String> = b.iter().map(|x| x.to_string()).collect();
                write!(f, "q{}", parts.join(","))
            }
        }
    }
}

impl Serialize for FiberKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grouping {
    /// Fiber key to member indices; every candidate is in exactly one group.
    Partition(BTreeMap<FiberKey, Vec<usize>>),
    /// Neighbour indices per candidate; list `i` contains `i`.
    Neighbourhood(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberPartition {
    pub rule: FiberRule,
    pub n: usize,
    pub grouping: Grouping,
}

impl FiberPartition {
    /// Builds a partition directly from keys, one per candidate.
    pub fn from_keys(rule: FiberRule, keys: Vec<FiberKey>) -> Self {
        let n = keys.len();
        let mut groups: BTreeMap<FiberKey, Vec<usize>> = BTreeMap::new();
        for (i, k) in keys.into_iter().enumerate() {
            groups.entry(k).or_default().push(i);
        }
        Self {
            rule,
            n,
            grouping: Grouping::Partition(groups),
        }
    }

    pub fn is_partition(&self) -> bool {
        matches!(self.grouping, Grouping::Partition(_))
    }

    /// The partition groups, or an unsupported-rule error in neighbourhood mode.
    pub fn groups(&self) -> Result<&BTreeMap<FiberKey, Vec<usize>>> {
        match &self.grouping {
            Grouping::Partition(g) => Ok(g),
            Grouping::Neighbourhood(_) => Err(CoreError::UnsupportedRule(format!(
                "{} fibers overlap and do not partition candidates; use the neighbourhood decision risk",
                self.rule.name()
            ))),
        }
    }

    pub fn neighbourhoods(&self) -> Result<&[Vec<usize>]> {
        match &self.grouping {
            Grouping::Neighbourhood(n) => Ok(n),
            Grouping::Partition(_) => Err(CoreError::UnsupportedRule(format!(
                "{} fibers form a partition, not neighbourhoods",
                self.rule.name()
            ))),
        }
    }

    /// Fiber key of every candidate (partition mode).
    pub fn keys_by_candidate(&self) -> Result<Vec<FiberKey>> {
        let groups = self.groups()?;
        let mut keys: Vec<Option<FiberKey>> = vec![None; self.n];
        for (k, members) in groups {
            for &i in members {
                keys[i] = Some(k.clone());
            }
        }
        keys.into_iter()
            .enumerate()
            .map(|(i, k)| k.ok_or_else(|| CoreError::Internal(format!("candidate {i} has no fiber"))))
            .collect()
    }

    /// Number of groups (partition) or neighbourhoods.
    pub fn group_count(&self) -> usize {
        match &self.grouping {
            Grouping::Partition(g) => g.len(),
            Grouping::Neighbourhood(n) => n.len(),
        }
    }

    /// Lower median of the group sizes.
    pub fn median_group_size(&self) -> usize {
        let mut sizes: Vec<usize> = match &self.grouping {
            Grouping::Partition(g) => g.values().map(Vec::len).collect(),
            Grouping::Neighbourhood(n) => n.iter().map(Vec::len).collect(),
        };
        if sizes.is_empty() {
            return 0;
        }
        sizes.sort_unstable();
        sizes[(sizes.len() - 1) / 2]
    }
}

/// Equal-frequency bin edges for one coordinate.
///
/// With `n` sorted values and `b` bins, edge `j` (for `j = 1..b`) is the value
/// at sorted rank `ceil(j n / b) - 1`. Bins are right-closed: a value `v` falls
/// in the bin equal to the number of edges strictly below it. Sorting is
/// stable, so repeated values resolve the same way on every run.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileEdges {
    edges: Vec<f64>,
}

impl QuantileEdges {
    pub fn fit(values: &[f64], bins: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(CoreError::validation("cannot fit quantile edges on no values"));
        }
        if bins == 0 {
            return Err(CoreError::validation("quantile rule needs at least one bin"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let edges = (1..bins)
            .map(|j| {
                let rank = (j * n).div_ceil(bins);
                sorted[rank.saturating_sub(1)]
            })
            .collect();
        Ok(Self { edges })
    }

    pub fn bin(&self, v: f64) -> usize {
        self.edges.partition_point(|&e| e < v)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }
}

/// Groups candidates under `rule`.
pub fn build_fibers(table: &CandidateTable, rule: FiberRule) -> Result<FiberPartition> {
    rule.validate()?;
    let n = table.len();
    if n == 0 {
        return Err(CoreError::validation("candidate table is empty"));
    }
    if table.arity() == 0 {
        return Err(CoreError::validation("candidate table has no evidence columns"));
    }
    match rule {
        FiberRule::ExactPattern => {
            let kinds: Vec<EvidenceKind> = table.evidence().iter().map(|c| c.kind()).collect();
            if kinds.iter().any(|k| *k != kinds[0]) {
                return Err(CoreError::validation(
                    "exact-pattern fibers need evidence of a single kind; quantize continuous columns or declare them discrete",
                ));
            }
            let keys = (0..n)
                .map(|i| FiberKey::Tokens(table.evidence().iter().map(|c| c.token(i)).collect()))
                .collect();
            Ok(FiberPartition::from_keys(rule, keys))
        }
        FiberRule::Quantile { bins_per_dim } => {
            let mut per_dim = Vec::with_capacity(table.arity());
            for col in table.evidence() {
                let EvidenceColumn::Continuous { values, name } = col else {
                    return Err(CoreError::validation(format!(
                        "quantile fibers need continuous evidence; column {:?} is discrete",
                        col.name()
                    )));
                };
                let edges = QuantileEdges::fit(values, bins_per_dim).map_err(|e| {
                    CoreError::validation(format!("column {name:?}: {e}"))
                })?;
                per_dim.push(values.iter().map(|&v| edges.bin(v)).collect::<Vec<_>>());
            }
            let keys = (0..n)
                .map(|i| FiberKey::Bins(per_dim.iter().map(|d| d[i]).collect()))
                .collect();
            Ok(FiberPartition::from_keys(rule, keys))
        }
        FiberRule::NearestNeighbour { k } => {
            let rows = table.continuous_rows()?;
            if k >= n {
                return Err(CoreError::validation(format!(
                    "nearest-neighbour k = {k} must be smaller than the number of candidates ({n})"
                )));
            }
            let lists = if table.arity() == 1 {
                let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
                knn_1d(&xs, k)
            } else {
                (0..n).map(|i| knn_brute(&rows, i, k)).collect()
            };
            Ok(FiberPartition {
                rule,
                n,
                grouping: Grouping::Neighbourhood(lists),
            })
        }
        FiberRule::ErrorWindow { tolerance } => {
            if table.arity() != 1 {
                return Err(CoreError::validation(format!(
                    "error-window fibers need one-dimensional evidence, got {} columns",
                    table.arity()
                )));
            }
            let rows = table.continuous_rows()?;
            let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let order = sorted_order(&xs);
            let sorted: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
            let lists = xs
                .iter()
                .map(|&x| {
                    let mut members = window_members(&sorted, &order, x, tolerance);
                    members.sort_unstable();
                    members
                })
                .collect();
            Ok(FiberPartition {
                rule,
                n,
                grouping: Grouping::Neighbourhood(lists),
            })
        }
    }
}

fn sorted_order(xs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    order
}

/// Indices `j` (into the original array) with `|x_j - x| <= tol`.
fn window_members(sorted: &[f64], order: &[usize], x: f64, tol: f64) -> Vec<usize> {
    // Binary search narrows the range; the exact distance test decides membership
    // so that `x - tol` rounding never admits or drops a boundary value.
    let mut lo = sorted.partition_point(|&v| v < x - tol);
    while lo > 0 && (sorted[lo - 1] - x).abs() <= tol {
        lo -= 1;
    }
    let mut hi = sorted.partition_point(|&v| v <= x + tol);
    while hi < sorted.len() && (sorted[hi] - x).abs() <= tol {
        hi += 1;
    }
    (lo..hi)
        .filter(|&p| (sorted[p] - x).abs() <= tol)
        .map(|p| order[p])
        .collect()
}

fn knn_brute(rows: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut others: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, r)| {
            let d2: f64 = r.iter().zip(&rows[i]).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, j)
        })
        .collect();
    let take = k - 1;
    if take < others.len() {
        others.select_nth_unstable_by(take, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        others.truncate(take);
    }
    let mut out: Vec<usize> = others.into_iter().map(|(_, j)| j).collect();
    out.push(i);
    out.sort_unstable();
    out
}

/// k nearest neighbours in one dimension: the candidate itself plus the
/// `k - 1` others closest by (distance, index).
fn knn_1d(xs: &[f64], k: usize) -> Vec<Vec<usize>> {
    let order = sorted_order(xs);
    let mut pos = vec![0usize; xs.len()];
    for (p, &i) in order.iter().enumerate() {
        pos[i] = p;
    }
    let sorted: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let need = k - 1;
    (0..xs.len())
        .map(|i| {
            let x = xs[i];
            let p = pos[i];
            let mut members = vec![i];
            if need > 0 {
                // Distance of the need-th closest other point via a two-pointer walk.
                let (mut l, mut r) = (p as isize - 1, p + 1);
                let mut radius = 0.0f64;
                for _ in 0..need {
                    let dl = if l >= 0 { (x - sorted[l as usize]).abs() } else { f64::INFINITY };
                    let dr = if r < sorted.len() { (sorted[r] - x).abs() } else { f64::INFINITY };
                    if dl <= dr {
                        radius = dl;
                        l -= 1;
                    } else {
                        radius = dr;
                        r += 1;
                    }
                }
                let mut cands: Vec<(f64, usize)> = window_members(&sorted, &order, x, radius)
                    .into_iter()
                    .filter(|&j| j != i)
                    .map(|j| ((xs[j] - x).abs(), j))
                    .collect();
                cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                members.extend(cands.into_iter().take(need).map(|(_, j)| j));
            }
            members.sort_unstable();
            members
        })
        .collect()
}

/// Neighbours of an outside query point among `reference` points (1-D),
/// within `tolerance`. Used to apply calibration windows to held-out rows.
pub fn window_query(reference: &[f64], tolerance: f64) -> impl Fn(f64) -> Vec<usize> + '_ {
    let order = sorted_order(reference);
    let sorted: Vec<f64> = order.iter().map(|&i| reference[i]).collect();
    move |x| {
        let mut m = window_members(&sorted, &order, x, tolerance);
        m.sort_unstable();
        m
    }
}

/// The `k` reference rows nearest to `query` by (Euclidean distance, index).
pub fn knn_query(reference: &[Vec<f64>], query: &[f64], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = reference
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let d2: f64 = r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, j)
        })
        .collect();
    let k = k.min(d.len());
    if k < d.len() {
        d.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(k);
    }
    let mut out: Vec<usize> = d.into_iter().map(|(_, j)| j).collect();
    out.sort_unstable();
    out
}
