//! Synthetic response spaces with known geometry, and the experiments run on them.
//!
//! A population has orthonormal benchmark directions `B`, a deployment probe
//! `k★` whose benchmark-null part has a chosen norm `g`, and standard-normal
//! latent states. Responses are inner products with the states plus Gaussian
//! noise.

pub mod experiments;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{CoreError, Result};
use crate::geometry::ResponseGeometry;
use crate::linalg::{dot, norm, DEFAULT_RANK_TOLERANCE};
use crate::stats::{summarize, Summary};

pub use experiments::{
    run_completion_policy_experiment, run_constrained_fiber_experiment, run_leaderboard_experiment,
    run_residual_correlation, run_transfer_experiment, run_zero_error_control, CompletionPolicyConfig,
    ConstrainedConfig, CorrelationConfig, LeaderboardConfig, TransferConfig, ZeroErrorConfig,
};

/// How the deployment probe carries its benchmark-null mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeNormalization {
    /// `k★ = sqrt(1 - g²) a + g r̂`, so `‖k★‖ = 1` and `g ≤ 1`.
    Unit,
    /// `k★ = a + g r̂`: the visible part stays fixed while the residual grows.
    FixedVisible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticConfig {
    pub ambient_dim: usize,
    pub n_probes: usize,
    pub rank: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub g_grid: Vec<f64>,
    pub n_candidates: usize,
    pub n_seeds: usize,
    pub tau: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            ambient_dim: 8,
            n_probes: 4,
            rank: 3,
            sigma: 0.05,
            alpha: 0.05,
            g_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            n_candidates: 1000,
            n_seeds: 50,
            tau: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CoreError::validation(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(CoreError::validation(format!("sigma {} must be nonnegative", self.sigma)));
        }
        if self.rank == 0 || self.rank > self.n_probes || self.n_probes > self.ambient_dim {
            return Err(CoreError::validation(format!(
                "need 1 <= rank ({}) <= probes ({}) <= ambient dimension ({})",
                self.rank, self.n_probes, self.ambient_dim
            )));
        }
        if self.rank + 2 > self.ambient_dim {
            return Err(CoreError::validation(
                "ambient dimension must exceed the benchmark rank by at least two",
            ));
        }
        if self.n_seeds == 0 || self.n_candidates == 0 {
            return Err(CoreError::validation("need at least one seed and one candidate"));
        }
        if self.g_grid.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(CoreError::validation("residual grid values must be nonnegative"));
        }
        if !self.tau.is_finite() {
            return Err(CoreError::validation("tau must be finite"));
        }
        Ok(())
    }
}

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Random orthonormal basis of `ℝⁿ` (Gram–Schmidt on Gaussian vectors).
pub(crate) fn random_rotation(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
    while q.len() < n {
        let mut v = gaussian_vec(rng, n);
        for _ in 0..2 {
            for u in &q {
                let c = dot(u, &v);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
            }
        }
        let nv = norm(&v);
        if nv > 1e-8 {
            q.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    q
}

pub(crate) fn combine(coeffs: &[f64], vectors: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; vectors[0].len()];
    for (c, v) in coeffs.iter().zip(vectors) {
        out.iter_mut().zip(v).for_each(|(o, x)| *o += c * x);
    }
    out
}

/// The fixed part of a synthetic space: rotated frame, probes and directions.
#[derive(Debug, Clone)]
pub struct Frame {
    /// Orthonormal basis of the ambient space; the first `rank` columns span `B`.
    pub rotation: Vec<Vec<f64>>,
    pub rank: usize,
    pub probes: Vec<Vec<f64>>,
    /// Unit vector in `B` carrying the visible deployment component.
    pub visible: Vec<f64>,
    /// Unit vector orthogonal to `B` carrying the residual.
    pub null_dir: Vec<f64>,
}

impl Frame {
    pub fn draw(rng: &mut ChaCha8Rng, dim: usize, n_probes: usize, rank: usize) -> Result<Self> {
        let rotation = random_rotation(rng, dim);
        let span = &rotation[..rank];
        // A rank-deficient frame: probes are random mixtures of the span
        // directions; a generic n_probes × rank mixing matrix has full column rank.
        let probes = (0..n_probes)
            .map(|i| {
                if i < rank {
                    let mut c = gaussian_vec(rng, rank);
                    c[i] += 2.0;
                    combine(&c, span)
                } else {
                    combine(&gaussian_vec(rng, rank), span)
                }
            })
            .collect::<Vec<_>>();
        let a = combine(&gaussian_vec(rng, rank), span);
        let an = norm(&a);
        let visible = a.into_iter().map(|x| x / an).collect();
        let null_dir = rotation[rank].clone();
        Ok(Self {
            rotation,
            rank,
            probes,
            visible,
            null_dir,
        })
    }

    pub fn deployment_probe(&self, g: f64, normalization: ProbeNormalization) -> Result<Vec<f64>> {
        if !(g.is_finite() && g >= 0.0) {
            return Err(CoreError::validation(format!("residual size {g} must be nonnegative")));
        }
        let vis = match normalization {
            ProbeNormalization::Unit => {
                if g > 1.0 {
                    return Err(CoreError::validation(format!(
                        "a unit deployment probe cannot have residual {g} > 1"
                    )));
                }
                (1.0 - g * g).sqrt()
            }
            ProbeNormalization::FixedVisible => 1.0,
        };
        Ok(self
            .visible
            .iter()
            .zip(&self.null_dir)
            .map(|(a, r)| vis * a + g * r)
            .collect())
    }

    pub fn geometry(&self, g: f64, normalization: ProbeNormalization) -> Result<ResponseGeometry> {
        ResponseGeometry::build(&self.probes, &self.deployment_probe(g, normalization)?, DEFAULT_RANK_TOLERANCE)
    }
}

/// Generated candidates for one geometry.
#[derive(Debug, Clone)]
pub struct Population {
    pub geometry: ResponseGeometry,
    pub states: Vec<Vec<f64>>,
    /// Noisy benchmark-channel responses `⟨P_B k★, s⟩ + σε`.
    pub benchmark: Vec<f64>,
    /// Noisy deployment responses `⟨k★, s⟩ + σε`.
    pub deployment: Vec<f64>,
    /// Exact benchmark-channel centers `⟨P_B k★, s⟩`.
    pub centers: Vec<f64>,
}

pub fn draw_states(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| gaussian_vec(rng, dim)).collect()
}

/// Responses of `states` for a given frame and residual size.
pub fn populate(
    frame: &Frame,
    g: f64,
    normalization: ProbeNormalization,
    states: Vec<Vec<f64>>,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Population> {
    let geometry = frame.geometry(g, normalization)?;
    let visible = geometry.visible_deployment();
    let k = geometry.deployment_probe().to_vec();
    let mut benchmark = Vec::with_capacity(states.len());
    let mut deployment = Vec::with_capacity(states.len());
    let mut centers = Vec::with_capacity(states.len());
    for s in &states {
        let c = dot(&visible, s);
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        centers.push(c);
        benchmark.push(c + sigma * e1);
        deployment.push(dot(&k, s) + sigma * e2);
    }
    Ok(Population {
        geometry,
        states,
        benchmark,
        deployment,
        centers,
    })
}

/// Draws a frame and `config.n_candidates` candidates at residual size `g`.
pub fn gen_population(config: &SyntheticConfig, g: f64, normalization: ProbeNormalization, seed: u64) -> Result<Population> {
    config.validate()?;
    let mut rng = rng_for(seed);
    let frame = Frame::draw(&mut rng, config.ambient_dim, config.n_probes, config.rank)?;
    let states = draw_states(&mut rng, config.n_candidates, config.ambient_dim);
    populate(&frame, g, normalization, states, config.sigma, &mut rng)
}

/// Split-conformal half-width from calibration absolute residuals.
///
/// Uses the order statistic of rank `ceil((n + 1)(1 - α))`.
pub fn conformal_width(cal_pred: &[f64], cal_labels: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CoreError::validation(format!("alpha {alpha} must lie in (0, 1)")));
    }
    if cal_pred.len() != cal_labels.len() {
        return Err(CoreError::validation("calibration predictions and labels differ in length"));
    }
    let n = cal_pred.len();
    let rank = ((n as f64 + 1.0) * (1.0 - alpha) - 1e-9).ceil().max(1.0) as usize;
    if n == 0 || rank > n {
        return Err(CoreError::validation(format!(
            "calibration set of {n} is too small for alpha {alpha}; need at least {}",
            (1.0 / alpha - 1.0).ceil()
        )));
    }
    let mut scores: Vec<f64> = cal_pred.iter().zip(cal_labels).map(|(p, y)| (y - p).abs()).collect();
    scores.sort_by(f64::total_cmp);
    Ok(scores[rank - 1])
}

/// Symmetric split-conformal intervals around `test_pred`.
pub fn split_conformal(cal_pred: &[f64], cal_labels: &[f64], test_pred: &[f64], alpha: f64) -> Result<(f64, Vec<(f64, f64)>)> {
    let w = conformal_width(cal_pred, cal_labels, alpha)?;
    Ok((w, test_pred.iter().map(|p| (p - w, p + w)).collect()))
}

/// Two-sided standard-normal quantile `z_{1 - α/2}`.
pub fn normal_two_sided(alpha: f64) -> Result<f64> {
    let n = Normal::new(0.0, 1.0).map_err(|e| CoreError::Numerical(e.to_string()))?;
    Ok(n.inverse_cdf(1.0 - alpha / 2.0))
}

/// A CSV-ready table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRow {
    pub seed: u64,
    pub metrics: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub parameters: Value,
    pub per_seed: Vec<SeedRow>,
    /// Mean and 2.5–97.5 percentile band of each metric over seeds where it is defined.
    pub aggregate: BTreeMap<String, Option<Summary>>,
    pub tables: BTreeMap<String, Table>,
}

impl ExperimentResult {
    pub fn new(experiment: &str, parameters: Value, mut per_seed: Vec<SeedRow>, tables: BTreeMap<String, Table>) -> Self {
        per_seed.sort_by_key(|r| r.seed);
        let aggregate = aggregate_rows(&per_seed);
        Self {
            experiment: experiment.to_owned(),
            parameters,
            per_seed,
            aggregate,
            tables,
        }
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.aggregate.get(metric).copied().flatten().map(|s| s.mean)
    }

    /// Per-seed rows as a table, one column per metric.
    pub fn per_seed_table(&self) -> Table {
        let names: Vec<&String> = self.aggregate.keys().collect();
        let mut cols = vec!["seed"];
        cols.extend(names.iter().map(|s| s.as_str()));
        let mut t = Table::new(&cols);
        for r in &self.per_seed {
            let mut row = vec![Value::from(r.seed)];
            row.extend(names.iter().map(|n| json_num(r.metrics.get(*n).copied().flatten())));
            t.push(row);
        }
        t
    }
}

pub(crate) fn json_num(x: Option<f64>) -> Value {
    x.filter(|v| v.is_finite()).map(Value::from).unwrap_or(Value::Null)
}

pub fn aggregate_rows(rows: &[SeedRow]) -> BTreeMap<String, Option<Summary>> {
    let mut by_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows {
        for (k, v) in &r.metrics {
            let entry = by_metric.entry(k.clone()).or_default();
            if let Some(v) = v {
                entry.push(*v);
            }
        }
    }
    by_metric.into_iter().map(|(k, v)| (k, summarize(&v))).collect()
}

/// Runs `f` for seeds `master, master + 1, …` in parallel; results in seed order.
pub(crate) fn over_seeds<T: Send>(master: u64, n: usize, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..n as u64).into_par_iter().map(|i| f(master.wrapping_add(i))).collect()
}
