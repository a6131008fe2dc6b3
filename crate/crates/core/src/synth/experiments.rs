//! Experiment drivers over synthetic response spaces.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};

use super::{
    combine, conformal_width, draw_states, gaussian_vec, json_num, normal_two_sided, over_seeds, populate,
    rng_for, ExperimentResult, Frame, ProbeNormalization, SeedRow, SyntheticConfig, Table,
};
use crate::audit::ThresholdClass;
use crate::completion::{benchmark_alignment, completion_curve, delta_q, CompletionPolicy, Probe, ProbePool};
use crate::error::{CoreError, Result};
use crate::geometry::{certify_interval, CandidateBound, ResponseGeometry};
use crate::linalg::{dot, norm};
use crate::stats::{pearson, summarize};

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).unwrap_or(Value::Null)
}

fn fraction(hits: usize, n: usize) -> f64 {
    hits as f64 / n as f64
}

fn summary_cells(xs: &[f64]) -> Vec<Value> {
    match summarize(xs) {
        Some(s) => vec![json!(s.mean), json!(s.p2_5), json!(s.p97_5)],
        None => vec![Value::Null, Value::Null, Value::Null],
    }
}

fn metrics(pairs: impl IntoIterator<Item = (String, Option<f64>)>) -> BTreeMap<String, Option<f64>> {
    pairs.into_iter().collect()
}

fn g_label(g: f64) -> String {
    format!("{g:.2}")
}

// ---------------------------------------------------------------------------
// Benchmark-to-deployment transfer.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferConfig {
    #[serde(flatten)]
    pub base: SyntheticConfig,
    /// Residual size of the headline per-seed comparison.
    pub headline_g: f64,
    /// Fiber radius; `None` uses the two-sided normal quantile at `alpha`.
    pub radius: Option<f64>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            base: SyntheticConfig::default(),
            headline_g: 0.9,
            radius: None,
        }
    }
}

struct Coverages {
    benchmark: f64,
    transfer: f64,
    oracle: f64,
    response_rank: f64,
}

fn transfer_at(
    frame: &Frame,
    g: f64,
    cal: &[Vec<f64>],
    test: &[Vec<f64>],
    cfg: &SyntheticConfig,
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Coverages> {
    let c = populate(frame, g, ProbeNormalization::Unit, cal.to_vec(), cfg.sigma, rng)?;
    let t = populate(frame, g, ProbeNormalization::Unit, test.to_vec(), cfg.sigma, rng)?;
    let delta_b = conformal_width(&c.centers, &c.benchmark, cfg.alpha)?;
    let delta_star = conformal_width(&c.centers, &c.deployment, cfg.alpha)?;
    let g_geom = t.geometry.residual_norm();
    let n = test.len();
    let count = |ys: &[f64], w: f64| t.centers.iter().zip(ys).filter(|(p, y)| (*y - *p).abs() <= w).count();
    Ok(Coverages {
        benchmark: fraction(count(&t.benchmark, delta_b), n),
        transfer: fraction(count(&t.deployment, delta_b), n),
        oracle: fraction(count(&t.deployment, delta_star), n),
        response_rank: fraction(count(&t.deployment, delta_b + radius * g_geom), n),
    })
}

/// Coverage of benchmark-calibrated conformal intervals on both channels,
/// against deployment-calibrated conformal and response-rank intervals.
pub fn run_transfer_experiment(config: &TransferConfig) -> Result<ExperimentResult> {
    let cfg = &config.base;
    cfg.validate()?;
    if !(0.0..=1.0).contains(&config.headline_g) || cfg.g_grid.iter().any(|g| *g > 1.0) {
        return Err(CoreError::validation("unit deployment probes need residual sizes in [0, 1]"));
    }
    let radius = match config.radius {
        Some(r) if r >= 0.0 && r.is_finite() => r,
        Some(r) => return Err(CoreError::validation(format!("radius {r} must be nonnegative"))),
        None => normal_two_sided(cfg.alpha)?,
    };
    let per_seed = over_seeds(cfg.seed, cfg.n_seeds, |seed| {
        let mut rng = rng_for(seed);
        let frame = Frame::draw(&mut rng, cfg.ambient_dim, cfg.n_probes, cfg.rank)?;
        let cal = draw_states(&mut rng, cfg.n_candidates, cfg.ambient_dim);
        let test = draw_states(&mut rng, cfg.n_candidates, cfg.ambient_dim);
        let head = transfer_at(&frame, config.headline_g, &cal, &test, cfg, radius, &mut rng)?;
        let sweep = cfg
            .g_grid
            .iter()
            .map(|&g| transfer_at(&frame, g, &cal, &test, cfg, radius, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok((seed, head, sweep))
    })?;

    let mut rows = Vec::new();
    let mut sweep_cols: Vec<[Vec<f64>; 4]> = vec![Default::default(); cfg.g_grid.len()];
    for (seed, head, sweep) in &per_seed {
        rows.push(SeedRow {
            seed: *seed,
            metrics: metrics([
                ("benchmark_coverage".to_string(), Some(head.benchmark)),
                ("transfer_coverage".to_string(), Some(head.transfer)),
                ("oracle_coverage".to_string(), Some(head.oracle)),
                ("response_rank_coverage".to_string(), Some(head.response_rank)),
            ]),
        });
        for (i, c) in sweep.iter().enumerate() {
            sweep_cols[i][0].push(c.benchmark);
            sweep_cols[i][1].push(c.transfer);
            sweep_cols[i][2].push(c.oracle);
            sweep_cols[i][3].push(c.response_rank);
        }
    }
    let mut table = Table::new(&[
        "g",
        "channel",
        "coverage_mean",
        "coverage_p2_5",
        "coverage_p97_5",
    ]);
    let names = ["benchmark", "benchmark_transfer", "deployment_oracle", "response_rank"];
    for (g, cols) in cfg.g_grid.iter().zip(&sweep_cols) {
        for (name, xs) in names.iter().zip(cols) {
            let mut row = vec![json!(g), json!(name)];
            row.extend(summary_cells(xs));
            table.push(row);
        }
    }
    let mut params = to_value(config);
    params["radius_used"] = json!(radius);
    let mut tables = BTreeMap::new();
    tables.insert("transfer_coverage_sweep".to_string(), table);
    Ok(ExperimentResult::new("transfer", params, rows, tables))
}

// ---------------------------------------------------------------------------
// Zero benchmark-error control.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroErrorConfig {
    pub ambient_dim: usize,
    pub n_probes: usize,
    pub rank: usize,
    pub g_grid: Vec<f64>,
    /// Global fiber radius shared by every candidate.
    pub radius: f64,
    pub tau: f64,
    pub n_candidates: usize,
    pub n_seeds: usize,
    pub seed: u64,
}

impl Default for ZeroErrorConfig {
    fn default() -> Self {
        Self {
            ambient_dim: 8,
            n_probes: 4,
            rank: 3,
            g_grid: vec![0.0, 0.5, 1.0],
            radius: 0.75,
            tau: 0.0,
            n_candidates: 1000,
            n_seeds: 50,
            seed: 0,
        }
    }
}

/// Certified fraction with exact benchmark responses (`δ = 0`) as the
/// benchmark-null residual grows, and after completing the deployment probe.
///
/// The deployment probe is `a + g r̂` with a fixed unit visible part, so the
/// benchmark-channel response distribution does not change with `g`.
pub fn run_zero_error_control(config: &ZeroErrorConfig) -> Result<ExperimentResult> {
    let shape = SyntheticConfig {
        ambient_dim: config.ambient_dim,
        n_probes: config.n_probes,
        rank: config.rank,
        g_grid: config.g_grid.clone(),
        n_candidates: config.n_candidates,
        n_seeds: config.n_seeds,
        tau: config.tau,
        ..Default::default()
    };
    shape.validate()?;
    if !(config.radius >= 0.0 && config.radius.is_finite()) {
        return Err(CoreError::validation("radius must be nonnegative"));
    }
    let per_seed = over_seeds(config.seed, config.n_seeds, |seed| {
        let mut rng = rng_for(seed);
        let frame = Frame::draw(&mut rng, config.ambient_dim, config.n_probes, config.rank)?;
        let states = draw_states(&mut rng, config.n_candidates, config.ambient_dim);
        let mut m = BTreeMap::new();
        for &g in &config.g_grid {
            let pop = populate(&frame, g, ProbeNormalization::FixedVisible, states.clone(), 0.0, &mut rng)?;
            let geom = &pop.geometry;
            let completed = geom.with_probe(geom.deployment_probe())?;
            let (mut cert, mut false_cert, mut cert_done) = (0, 0, 0);
            for (i, s) in states.iter().enumerate() {
                let truth_pos = pop.deployment[i] > config.tau;
                let c = certify_interval(
                    CandidateBound::new(pop.centers[i], 0.0, config.radius)?,
                    geom.residual_norm(),
                    config.tau,
                );
                if c.class.is_certified() {
                    cert += 1;
                    if (c.class == ThresholdClass::CertifiedPositive) != truth_pos {
                        false_cert += 1;
                    }
                }
                let d = certify_interval(
                    CandidateBound::new(completed.center(s), 0.0, config.radius)?,
                    completed.residual_norm(),
                    config.tau,
                );
                if d.class.is_certified() {
                    cert_done += 1;
                }
            }
            let n = states.len();
            let l = g_label(g);
            m.insert(format!("certified_g{l}"), Some(fraction(cert, n)));
            m.insert(format!("false_certificate_g{l}"), Some(fraction(false_cert, n)));
            m.insert(format!("completed_certified_g{l}"), Some(fraction(cert_done, n)));
        }
        Ok(SeedRow { seed, metrics: m })
    })?;
    let mut table = Table::new(&[
        "g",
        "radius",
        "certified_mean",
        "certified_p2_5",
        "certified_p97_5",
        "completed_certified_mean",
        "false_certificate_mean",
    ]);
    for &g in &config.g_grid {
        let l = g_label(g);
        let col = |k: &str| -> Vec<f64> {
            per_seed.iter().filter_map(|r| r.metrics.get(&format!("{k}_g{l}")).copied().flatten()).collect()
        };
        let mut row = vec![json!(g), json!(config.radius)];
        row.extend(summary_cells(&col("certified")));
        row.push(json_num(crate::stats::mean(&col("completed_certified"))));
        row.push(json_num(crate::stats::mean(&col("false_certificate"))));
        table.push(row);
    }
    let mut tables = BTreeMap::new();
    tables.insert("zero_benchmark_error_control".to_string(), table);
    Ok(ExperimentResult::new("zero_error", to_value(config), per_seed, tables))
}

// ---------------------------------------------------------------------------
// Leaderboard inversion.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaderboardConfig {
    pub ambient_dim: usize,
    /// Model `m` spans the first `ranks[m]` coordinate axes.
    pub ranks: Vec<usize>,
    /// Benchmark noise per model in the structured variant.
    pub structured_noise: Vec<f64>,
    /// Shared benchmark noise in the equal-noise null.
    pub null_noise: f64,
    /// The deployment probe is the normalized sum of the first `deployment_support` axes.
    pub deployment_support: usize,
    pub alpha: f64,
    pub radius: f64,
    pub tau: f64,
    pub top_k: usize,
    pub n_candidates: usize,
    pub n_seeds: usize,
    pub seed: u64,
}

impl Default for LeaderboardConfig {
    fn default() -> Self {
        Self {
            ambient_dim: 10,
            ranks: vec![3, 4, 6, 7, 8],
            structured_noise: vec![0.05, 0.10, 0.15, 0.20, 0.25],
            null_noise: 0.15,
            deployment_support: 8,
            alpha: 0.05,
            radius: 2.0,
            tau: 0.5,
            top_k: 100,
            n_candidates: 1000,
            n_seeds: 50,
            seed: 0,
        }
    }
}

impl LeaderboardConfig {
    fn validate(&self) -> Result<()> {
        if self.ranks.is_empty() || self.ranks.len() != self.structured_noise.len() {
            return Err(CoreError::validation("need one structured noise level per model"));
        }
        if self.ranks.iter().any(|&r| r == 0 || r > self.ambient_dim) {
            return Err(CoreError::validation("model ranks must lie in 1..=ambient_dim"));
        }
        if self.deployment_support == 0 || self.deployment_support > self.ambient_dim {
            return Err(CoreError::validation("deployment support must lie in 1..=ambient_dim"));
        }
        if self.structured_noise.iter().chain([&self.null_noise]).any(|s| !(*s >= 0.0)) {
            return Err(CoreError::validation("noise levels must be nonnegative"));
        }
        if self.top_k == 0 || self.top_k > self.n_candidates {
            return Err(CoreError::validation("top_k must lie in 1..=n_candidates"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) || self.n_seeds == 0 {
            return Err(CoreError::validation("alpha must lie in (0, 1) and n_seeds >= 1"));
        }
        Ok(())
    }
}

struct ModelScore {
    mae: f64,
    certified: f64,
    false_certificates: usize,
}

fn leaderboard_models(config: &LeaderboardConfig, noise: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<ModelScore>> {
    let d = config.ambient_dim;
    let mut k = vec![0.0; d];
    let w = 1.0 / (config.deployment_support as f64).sqrt();
    k[..config.deployment_support].iter_mut().for_each(|x| *x = w);
    let cal = draw_states(rng, config.n_candidates, d);
    let test = draw_states(rng, config.n_candidates, d);
    let truth: Vec<f64> = test.iter().map(|s| dot(&k, s)).collect();
    config
        .ranks
        .iter()
        .zip(noise)
        .map(|(&r, &sd)| {
            let axes: Vec<Vec<f64>> = (0..r)
                .map(|i| {
                    let mut e = vec![0.0; d];
                    e[i] = 1.0;
                    e
                })
                .collect();
            let geom = ResponseGeometry::with_default_tolerance(&axes, &k)?;
            // Benchmark channel: the first axis, measured by each model with noise `sd`.
            let mut noisy = |s: &[f64]| s[0] + sd * rng.sample::<f64, _>(StandardNormal);
            let cal_pred: Vec<f64> = cal.iter().map(|s| noisy(s)).collect();
            let cal_truth: Vec<f64> = cal.iter().map(|s| s[0]).collect();
            let delta = conformal_width(&cal_pred, &cal_truth, config.alpha)?;
            let test_pred: Vec<f64> = test.iter().map(|s| noisy(s)).collect();
            let mae = test_pred.iter().zip(&test).map(|(p, s)| (p - s[0]).abs()).sum::<f64>() / test.len() as f64;
            let y_hat: Vec<f64> = test
                .iter()
                .map(|s| geom.center(s) + sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut order: Vec<usize> = (0..test.len()).collect();
            order.sort_by(|&a, &b| y_hat[b].total_cmp(&y_hat[a]).then(a.cmp(&b)));
            let (mut cert, mut false_cert) = (0, 0);
            for &i in &order[..config.top_k] {
                let c = certify_interval(CandidateBound::new(y_hat[i], delta, config.radius)?, geom.residual_norm(), config.tau);
                if c.class.is_certified() {
                    cert += 1;
                    if (c.class == ThresholdClass::CertifiedPositive) != (truth[i] > config.tau) {
                        false_cert += 1;
                    }
                }
            }
            Ok(ModelScore {
                mae,
                certified: fraction(cert, config.top_k),
                false_certificates: false_cert,
            })
        })
        .collect()
}

fn first_argmin(xs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, x) in xs.enumerate() {
        if x < best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Benchmark MAE against top-k certification for models with nested spans.
pub fn run_leaderboard_experiment(config: &LeaderboardConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let null_noise = vec![config.null_noise; config.ranks.len()];
    let per_seed = over_seeds(config.seed, config.n_seeds, |seed| {
        let mut m = BTreeMap::new();
        for (variant, noise, stream) in [
            ("structured", &config.structured_noise, seed),
            ("null", &null_noise, seed ^ 0x9E37_79B9_7F4A_7C15),
        ] {
            let mut rng = rng_for(stream);
            let scores = leaderboard_models(config, noise, &mut rng)?;
            let best_mae = first_argmin(scores.iter().map(|s| s.mae));
            let best_cert = first_argmin(scores.iter().map(|s| -s.certified));
            m.insert(format!("{variant}_inversion"), Some(f64::from(u8::from(best_mae != best_cert))));
            m.insert(format!("{variant}_best_mae_rank"), Some(config.ranks[best_mae] as f64));
            m.insert(format!("{variant}_best_certifier_rank"), Some(config.ranks[best_cert] as f64));
            for (r, s) in config.ranks.iter().zip(&scores) {
                m.insert(format!("{variant}_mae_r{r}"), Some(s.mae));
                m.insert(format!("{variant}_certified_r{r}"), Some(s.certified));
                m.insert(format!("{variant}_false_certificates_r{r}"), Some(s.false_certificates as f64));
            }
        }
        Ok(SeedRow { seed, metrics: m })
    })?;
    let mut table = Table::new(&[
        "variant",
        "model_rank",
        "benchmark_noise",
        "residual_g",
        "mae_mean",
        "certified_top_k_mean",
        "best_mae_share",
        "best_certifier_share",
        "inversion_rate",
    ]);
    for (variant, noise) in [("structured", &config.structured_noise), ("null", &null_noise)] {
        let inv = crate::stats::mean(
            &per_seed.iter().filter_map(|r| r.metrics[&format!("{variant}_inversion")]).collect::<Vec<_>>(),
        );
        for (&r, &sd) in config.ranks.iter().zip(noise.iter()) {
            let col = |k: String| per_seed.iter().filter_map(|row| row.metrics[&k]).collect::<Vec<f64>>();
            let share = |k: String| {
                per_seed.iter().filter(|row| row.metrics[&k] == Some(r as f64)).count() as f64 / per_seed.len() as f64
            };
            let g = ((config.deployment_support.saturating_sub(r)) as f64 / config.deployment_support as f64).sqrt();
            table.push(vec![
                json!(variant),
                json!(r),
                json!(sd),
                json!(g),
                json_num(crate::stats::mean(&col(format!("{variant}_mae_r{r}")))),
                json_num(crate::stats::mean(&col(format!("{variant}_certified_r{r}")))),
                json!(share(format!("{variant}_best_mae_rank"))),
                json!(share(format!("{variant}_best_certifier_rank"))),
                json_num(inv),
            ]);
        }
    }
    let mut tables = BTreeMap::new();
    tables.insert("leaderboard_summary".to_string(), table);
    Ok(ExperimentResult::new("leaderboard", to_value(config), per_seed, tables))
}

// ---------------------------------------------------------------------------
// Residual reduction against realized completion gain.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationConfig {
    pub ambient_dim: usize,
    pub n_probes: usize,
    pub rank: usize,
    pub g: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Fiber radius; `None` uses the two-sided normal quantile at `alpha`.
    pub radius: Option<f64>,
    pub tau: f64,
    pub pool_size: usize,
    pub n_candidates: usize,
    pub n_seeds: usize,
    pub seed: u64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            ambient_dim: 8,
            n_probes: 4,
            rank: 3,
            g: 0.8,
            sigma: 0.05,
            alpha: 0.05,
            radius: None,
            tau: 0.0,
            pool_size: 40,
            n_candidates: 1000,
            n_seeds: 50,
            seed: 0,
        }
    }
}

/// Certification rule shared by the completion experiments: exact centers
/// from the current geometry, benchmark error `δ`, global radius `R`.
#[derive(Debug, Clone, Copy)]
pub struct CenterCertifier<'a> {
    pub states: &'a [Vec<f64>],
    pub delta: f64,
    pub radius: f64,
    pub tau: f64,
}

impl CenterCertifier<'_> {
    pub fn fraction(&self, geometry: &ResponseGeometry) -> Result<f64> {
        let g = geometry.residual_norm();
        let mut hits = 0;
        for s in self.states {
            let c = certify_interval(CandidateBound::new(geometry.center(s), self.delta, self.radius)?, g, self.tau);
            hits += usize::from(c.class.is_certified());
        }
        Ok(fraction(hits, self.states.len()))
    }
}

/// Per-probe predicted reduction, benchmark alignment and realized gain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeGain {
    pub delta: f64,
    pub alignment: f64,
    pub gain: f64,
}

pub fn probe_gains(geometry: &ResponseGeometry, pool: &[Vec<f64>], certifier: &CenterCertifier<'_>) -> Result<Vec<ProbeGain>> {
    let base = certifier.fraction(geometry)?;
    pool.iter()
        .map(|q| {
            Ok(ProbeGain {
                delta: delta_q(geometry, q)?,
                alignment: benchmark_alignment(geometry, q)?,
                gain: certifier.fraction(&geometry.with_probe(q)?)? - base,
            })
        })
        .collect()
}

/// `(r(Δ, gain), r(alignment, gain))`; `None` for degenerate pools.
pub fn gain_correlations(gains: &[ProbeGain]) -> (Option<f64>, Option<f64>) {
    let d: Vec<f64> = gains.iter().map(|p| p.delta).collect();
    let a: Vec<f64> = gains.iter().map(|p| p.alignment).collect();
    let y: Vec<f64> = gains.iter().map(|p| p.gain).collect();
    (pearson(&d, &y), pearson(&a, &y))
}

/// A probe `a b̂ + sqrt(1 - a²)(c r̂ + sqrt(1 - c²) ŵ)` with `a, c ~ U[0, 1]`,
/// `b̂` a random unit vector in the benchmark span and `ŵ` a random unit
/// null-space direction orthogonal to `r̂`.
fn mixed_probe(frame: &Frame, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let rank = frame.rank;
    let unit = |v: Vec<f64>| {
        let n = norm(&v);
        v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let b = unit(combine(&gaussian_vec(rng, rank), &frame.rotation[..rank]));
    let rest = &frame.rotation[rank + 1..];
    let w = unit(combine(&gaussian_vec(rng, rest.len()), rest));
    let a: f64 = rng.random();
    let c: f64 = rng.random();
    let (sa, sc) = ((1.0 - a * a).sqrt(), (1.0 - c * c).sqrt());
    (0..b.len())
        .map(|i| a * b[i] + sa * (c * frame.null_dir[i] + sc * w[i]))
        .collect()
}

/// Correlation between predicted residual reduction and realized certified gain.
pub fn run_residual_correlation(config: &CorrelationConfig) -> Result<ExperimentResult> {
    let shape = SyntheticConfig {
        ambient_dim: config.ambient_dim,
        n_probes: config.n_probes,
        rank: config.rank,
        sigma: config.sigma,
        alpha: config.alpha,
        n_candidates: config.n_candidates,
        n_seeds: config.n_seeds,
        ..Default::default()
    };
    shape.validate()?;
    if !(0.0..=1.0).contains(&config.g) {
        return Err(CoreError::validation("residual size must lie in [0, 1]"));
    }
    if config.pool_size < 2 {
        return Err(CoreError::validation("probe pool needs at least two probes"));
    }
    let z = normal_two_sided(config.alpha)?;
    let radius = config.radius.unwrap_or(z);
    let per_seed = over_seeds(config.seed, config.n_seeds, |seed| {
        let mut rng = rng_for(seed);
        let frame = Frame::draw(&mut rng, config.ambient_dim, config.n_probes, config.rank)?;
        let geom = frame.geometry(config.g, ProbeNormalization::Unit)?;
        let states = draw_states(&mut rng, config.n_candidates, config.ambient_dim);
        let pool: Vec<Vec<f64>> = (0..config.pool_size).map(|_| mixed_probe(&frame, &mut rng)).collect();
        let certifier = CenterCertifier {
            states: &states,
            delta: z * config.sigma,
            radius,
            tau: config.tau,
        };
        let gains = probe_gains(&geom, &pool, &certifier)?;
        Ok((seed, gains))
    })?;
    let mut rows = Vec::new();
    let mut table = Table::new(&["seed", "probe", "predicted_delta", "benchmark_alignment", "realized_gain"]);
    for (seed, gains) in &per_seed {
        let (r_delta, r_align) = gain_correlations(gains);
        rows.push(SeedRow {
            seed: *seed,
            metrics: metrics([
                ("pearson_delta_gain".to_string(), r_delta),
                ("pearson_alignment_gain".to_string(), r_align),
            ]),
        });
        for (j, p) in gains.iter().enumerate() {
            table.push(vec![json!(seed), json!(format!("q{j:03}")), json!(p.delta), json!(p.alignment), json!(p.gain)]);
        }
    }
    let mut params = to_value(config);
    params["radius_used"] = json!(radius);
    let mut tables = BTreeMap::new();
    tables.insert("residual_reduction_completion_gain".to_string(), table);
    Ok(ExperimentResult::new("correlation", params, rows, tables))
}

// ---------------------------------------------------------------------------
// Constraint-refined fibers.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstrainedConfig {
    /// Coefficient of the hidden coordinate in the deployment response.
    pub coupling: f64,
    /// Half-width of the admissible band around `sin(π b)`.
    pub band: f64,
    /// Bound on `|h|` used by the ambient certificate.
    pub ambient_bound: f64,
    pub tau: f64,
    pub n_candidates: usize,
    pub n_seeds: usize,
    pub seed: u64,
}

impl Default for ConstrainedConfig {
    fn default() -> Self {
        Self {
            coupling: 0.9,
            band: 0.12,
            ambient_bound: 1.2,
            tau: 0.4,
            n_candidates: 1000,
            n_seeds: 100,
            seed: 0,
        }
    }
}

/// Benchmark-only decisions against ambient and constraint-refined certificates
/// for `y★ = b + c·h` with `h = sin(π b) + u`.
pub fn run_constrained_fiber_experiment(config: &ConstrainedConfig) -> Result<ExperimentResult> {
    for (name, v) in [("coupling", config.coupling), ("band", config.band), ("ambient bound", config.ambient_bound)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(CoreError::validation(format!("{name} must be nonnegative")));
        }
    }
    if config.n_candidates == 0 || config.n_seeds == 0 {
        return Err(CoreError::validation("need at least one seed and one candidate"));
    }
    let per_seed = over_seeds(config.seed, config.n_seeds, |seed| {
        let mut rng = rng_for(seed);
        let (mut bench_false, mut amb, mut amb_false, mut refined, mut refined_false) = (0, 0, 0, 0, 0);
        for _ in 0..config.n_candidates {
            let b: f64 = rng.random_range(-1.0..=1.0);
            let u: f64 = if config.band > 0.0 { rng.random_range(-config.band..=config.band) } else { 0.0 };
            let h = (PI * b).sin() + u;
            let y = b + config.coupling * h;
            let truth = y > config.tau;
            bench_false += usize::from((b > config.tau) != truth);
            let ambient = certify_interval(CandidateBound::new(b, 0.0, config.ambient_bound)?, config.coupling, config.tau);
            if ambient.class.is_certified() {
                amb += 1;
                amb_false += usize::from((ambient.class == ThresholdClass::CertifiedPositive) != truth);
            }
            let center = b + config.coupling * (PI * b).sin();
            let fine = certify_interval(CandidateBound::new(center, 0.0, config.band)?, config.coupling, config.tau);
            if fine.class.is_certified() {
                refined += 1;
                refined_false += usize::from((fine.class == ThresholdClass::CertifiedPositive) != truth);
            }
        }
        let n = config.n_candidates;
        Ok(SeedRow {
            seed,
            metrics: metrics([
                ("benchmark_false_fraction".to_string(), Some(fraction(bench_false, n))),
                ("ambient_certified_fraction".to_string(), Some(fraction(amb, n))),
                ("ambient_false_certificates".to_string(), Some(amb_false as f64)),
                ("refined_certified_fraction".to_string(), Some(fraction(refined, n))),
                ("refined_false_certificates".to_string(), Some(refined_false as f64)),
            ]),
        })
    })?;
    let mut table = Table::new(&["policy", "metric", "mean", "p2_5", "p97_5", "total"]);
    for (policy, metric, key) in [
        ("benchmark_only", "false_decision_fraction", "benchmark_false_fraction"),
        ("ambient_certificate", "certified_fraction", "ambient_certified_fraction"),
        ("ambient_certificate", "false_certificates", "ambient_false_certificates"),
        ("constraint_refined", "certified_fraction", "refined_certified_fraction"),
        ("constraint_refined", "false_certificates", "refined_false_certificates"),
    ] {
        let xs: Vec<f64> = per_seed.iter().filter_map(|r| r.metrics[key]).collect();
        let mut row = vec![json!(policy), json!(metric)];
        row.extend(summary_cells(&xs));
        row.push(if metric == "false_certificates" { json!(xs.iter().sum::<f64>()) } else { Value::Null });
        table.push(row);
    }
    let mut tables = BTreeMap::new();
    tables.insert("decision_sufficiency_summary".to_string(), table);
    Ok(ExperimentResult::new("constrained", to_value(config), per_seed, tables))
}

// ---------------------------------------------------------------------------
// Completion policies compared on one pool.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionPolicyConfig {
    #[serde(flatten)]
    pub correlation: CorrelationConfig,
    /// Unit-cost probes acquired per policy.
    pub steps: usize,
    /// Calibration states used to measure probes for the uncertainty policy.
    pub measurement_candidates: usize,
}

impl Default for CompletionPolicyConfig {
    fn default() -> Self {
        Self {
            correlation: CorrelationConfig {
                pool_size: 12,
                ..Default::default()
            },
            steps: 3,
            measurement_candidates: 200,
        }
    }
}

/// Certified fraction after a fixed number of acquisitions under each policy.
pub fn run_completion_policy_experiment(config: &CompletionPolicyConfig) -> Result<ExperimentResult> {
    let c = &config.correlation;
    let shape = SyntheticConfig {
        ambient_dim: c.ambient_dim,
        n_probes: c.n_probes,
        rank: c.rank,
        sigma: c.sigma,
        alpha: c.alpha,
        n_candidates: c.n_candidates,
        n_seeds: c.n_seeds,
        ..Default::default()
    };
    shape.validate()?;
    if config.steps == 0 || config.steps > c.pool_size || config.measurement_candidates < 2 {
        return Err(CoreError::validation("steps must lie in 1..=pool_size and measurements need >= 2 states"));
    }
    let z = normal_two_sided(c.alpha)?;
    let radius = c.radius.unwrap_or(z);
    let budgets: Vec<f64> = (0..=config.steps).map(|b| b as f64).collect();
    let per_seed = over_seeds(c.seed, c.n_seeds, |seed| {
        let mut rng = rng_for(seed);
        let frame = Frame::draw(&mut rng, c.ambient_dim, c.n_probes, c.rank)?;
        let geom = frame.geometry(c.g, ProbeNormalization::Unit)?;
        let states = draw_states(&mut rng, c.n_candidates, c.ambient_dim);
        let measure_states = draw_states(&mut rng, config.measurement_candidates, c.ambient_dim);
        let probes: Vec<Probe> = (0..c.pool_size)
            .map(|j| Probe {
                id: format!("q{j:03}"),
                vector: mixed_probe(&frame, &mut rng),
                cost: 1.0,
            })
            .collect();
        let mut measured = BTreeMap::new();
        for p in &probes {
            let vals: Vec<f64> = measure_states
                .iter()
                .map(|s| dot(&p.vector, s) + c.sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            measured.insert(p.id.clone(), vals);
        }
        let pool = ProbePool::new(probes)?;
        let cert = CenterCertifier {
            states: &states,
            delta: z * c.sigma,
            radius,
            tau: c.tau,
        };
        let certifier = |g: &ResponseGeometry| cert.fraction(g);
        let mut m = BTreeMap::new();
        for policy in [
            CompletionPolicy::ResidualGreedy,
            CompletionPolicy::Uncertainty,
            CompletionPolicy::Diversity,
            CompletionPolicy::BenchmarkAligned,
            CompletionPolicy::Random { seed },
            CompletionPolicy::OracleUpperBound,
        ] {
            let curve = completion_curve(&geom, &pool, policy, &certifier, &budgets, Some(&measured))?;
            m.insert("start_certified".to_string(), Some(curve.start_fraction));
            m.insert(
                format!("{}_certified", policy.name()),
                curve.points.last().map(|p| p.certified_fraction),
            );
        }
        Ok(SeedRow { seed, metrics: m })
    })?;
    let mut table = Table::new(&["policy", "certified_mean", "certified_p2_5", "certified_p97_5"]);
    for name in ["start", "residual_greedy", "uncertainty", "diversity", "benchmark_aligned", "random", "oracle_upper_bound"] {
        let xs: Vec<f64> = per_seed.iter().filter_map(|r| r.metrics[&format!("{name}_certified")]).collect();
        let mut row = vec![json!(name)];
        row.extend(summary_cells(&xs));
        table.push(row);
    }
    let mut params = to_value(config);
    params["radius_used"] = json!(radius);
    let mut tables = BTreeMap::new();
    tables.insert("completion_policy_comparison".to_string(), table);
    Ok(ExperimentResult::new("completion_policies", params, per_seed, tables))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_pool_has_no_correlation() {
        let mut rng = rng_for(1);
        let frame = Frame::draw(&mut rng, 8, 4, 3).unwrap();
        let geom = frame.geometry(0.8, ProbeNormalization::Unit).unwrap();
        let states = draw_states(&mut rng, 200, 8);
        let k = geom.deployment_probe().to_vec();
        let pool: Vec<Vec<f64>> = [1.0, 2.0, -0.5].iter().map(|c| k.iter().map(|x| c * x).collect()).collect();
        let cert = CenterCertifier {
            states: &states,
            delta: 0.1,
            radius: 1.96,
            tau: 0.0,
        };
        let gains = probe_gains(&geom, &pool, &cert).unwrap();
        assert_eq!(gain_correlations(&gains), (None, None));
    }

    #[test]
    fn zero_band_refines_to_near_exact() {
        let r = run_constrained_fiber_experiment(&ConstrainedConfig {
            band: 0.0,
            n_seeds: 3,
            ..Default::default()
        })
        .unwrap();
        assert!(r.mean("refined_certified_fraction").unwrap() > 0.999);
        assert_eq!(r.mean("refined_false_certificates"), Some(0.0));
    }

    #[test]
    fn zero_g_deployment_matches_visible_center() {
        let cfg = SyntheticConfig { sigma: 0.0, n_candidates: 200, ..Default::default() };
        let p = crate::synth::gen_population(&cfg, 0.0, ProbeNormalization::Unit, 7).unwrap();
        for (c, y) in p.centers.iter().zip(&p.deployment) {
            assert!((c - y).abs() < 1e-12, "{c} vs {y}");
        }
    }

    #[test]
    fn transfer_matches_benchmark_at_zero_g() {
        let cfg = TransferConfig {
            base: SyntheticConfig {
                g_grid: vec![0.0],
                n_seeds: 4,
                n_candidates: 2000,
                ..Default::default()
            },
            headline_g: 0.0,
            radius: None,
        };
        let r = run_transfer_experiment(&cfg).unwrap();
        let bench = r.mean("benchmark_coverage").unwrap();
        let transfer = r.mean("transfer_coverage").unwrap();
        assert!((bench - transfer).abs() < 0.03, "{bench} vs {transfer}");
        assert!(r.mean("response_rank_coverage").unwrap() >= transfer);
    }

    #[test]
    fn rank_eight_model_certifies_its_top_candidates() {
        let cfg = LeaderboardConfig {
            n_seeds: 2,
            ..Default::default()
        };
        let r = run_leaderboard_experiment(&cfg).unwrap();
        assert_eq!(r.mean("structured_certified_r8"), Some(1.0));
        assert_eq!(r.mean("structured_false_certificates_r8"), Some(0.0));
    }
}
