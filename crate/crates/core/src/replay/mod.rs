//! Calibration-certified held-out replays of certify-then-acquire policies.
//!
//! A replay fits fibers on calibration rows, certifies the fibers whose
//! calibration labels are sufficiently pure, and then walks the held-out rows:
//! rows in certified fibers get the certified action, all others are sent to
//! acquisition. The benchmark-only comparison decides every held-out row by
//! its calibration-fiber majority.
//!
//! Planning (certificates and per-row routes) never reads held-out labels, so a
//! plan can be locked before scoring.

pub mod bounds;
pub mod cost;
pub mod manifest;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::fiber::{FiberKey, FiberRule, QuantileEdges};
use crate::stats::percentile;
use crate::table::{ActionAlphabet, CandidateTable, EvidenceColumn};

pub use bounds::{clopper_pearson_upper, clopper_pearson_zero};
pub use cost::{asymmetric_sweep, break_even, log_ratio_grid, CostModel, SweepRow};
pub use manifest::{
    canonical_json, lock_manifest, sha256_hex, verify_manifest, verify_manifest_file, write_manifest,
    FileVerification, LockManifest,
};

pub const DEFAULT_MIN_SUPPORT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CalibrationMode {
    /// Every calibration label in the fiber agrees.
    Unanimity,
    /// The one-sided upper bound on the discordance rate, at level `delta / multiplicity`,
    /// is at most `tau_bound`.
    ClopperPearson {
        tau_bound: f64,
        delta: f64,
        multiplicity: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRule {
    pub min_support: usize,
    #[serde(flatten)]
    pub mode: CalibrationMode,
}

impl Default for CalibrationRule {
    fn default() -> Self {
        Self {
            min_support: DEFAULT_MIN_SUPPORT,
            mode: CalibrationMode::Unanimity,
        }
    }
}

impl CalibrationRule {
    pub fn validate(&self) -> Result<()> {
        if self.min_support == 0 {
            return Err(CoreError::validation("min_support must be at least 1"));
        }
        if let CalibrationMode::ClopperPearson {
            tau_bound,
            delta,
            multiplicity,
        } = self.mode
        {
            if !(tau_bound > 0.0 && tau_bound < 1.0) {
                return Err(CoreError::validation(format!("bound threshold {tau_bound} must lie in (0, 1)")));
            }
            if !(delta > 0.0 && delta < 1.0) {
                return Err(CoreError::validation(format!("delta {delta} must lie in (0, 1)")));
            }
            if multiplicity == 0 {
                return Err(CoreError::validation("multiplicity must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Calibration statistics for one fiber (or one held-out neighbourhood).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberCertificate {
    pub key: String,
    pub support: usize,
    pub counts: Vec<usize>,
    /// Majority action; ties go to the global majority, then to action 0.
    pub majority: usize,
    pub disagreements: usize,
    pub upper_bound: Option<f64>,
    /// Certified action, if the fiber passed the rule.
    pub action: Option<usize>,
}

fn tie_break_majority(counts: &[usize], fallback: usize) -> usize {
    let max = counts.iter().copied().max().unwrap_or(0);
    if counts.get(fallback) == Some(&max) {
        return fallback;
    }
    counts.iter().position(|&c| c == max).unwrap_or(0)
}

fn certify_counts(key: String, counts: Vec<usize>, global: usize, rule: &CalibrationRule) -> Result<FiberCertificate> {
    let support: usize = counts.iter().sum();
    let majority = tie_break_majority(&counts, global);
    let disagreements = support - counts[majority];
    let (certified, upper_bound) = if support < rule.min_support || support == 0 {
        (false, None)
    } else {
        match rule.mode {
            CalibrationMode::Unanimity => (disagreements == 0, None),
            CalibrationMode::ClopperPearson {
                tau_bound,
                delta,
                multiplicity,
            } => {
                let ub = clopper_pearson_upper(disagreements, support, delta / multiplicity as f64)?;
                (ub <= tau_bound, Some(ub))
            }
        }
    };
    Ok(FiberCertificate {
        key,
        support,
        counts,
        majority,
        disagreements,
        upper_bound,
        action: certified.then_some(majority),
    })
}

#[derive(Debug, Clone)]
enum Keying {
    Exact,
    Quantile(Vec<QuantileEdges>),
    /// Calibration values sorted ascending with their row indices.
    Window { sorted: Vec<(f64, usize)>, tolerance: f64 },
    Knn { reference: Vec<Vec<f64>>, k: usize },
}

/// Fitted calibration: fiber keying plus per-fiber certificates.
#[derive(Debug, Clone)]
pub struct CertificateMap {
    pub rule: FiberRule,
    pub cal_rule: CalibrationRule,
    pub alphabet: ActionAlphabet,
    pub global_majority: usize,
    pub n_calibration: usize,
    /// Certificates of partition fibers; empty for neighbourhood rules, where
    /// each held-out row gets its own neighbourhood certificate.
    pub fibers: BTreeMap<FiberKey, FiberCertificate>,
    columns: Vec<(String, bool)>,
    keying: Keying,
    labels: Vec<usize>,
}

fn column_signature(table: &CandidateTable) -> Vec<(String, bool)> {
    table
        .evidence()
        .iter()
        .map(|c| (c.name().to_owned(), matches!(c, EvidenceColumn::Continuous { .. })))
        .collect()
}

/// Mean absolute difference between a 1-D continuous evidence column and `y_star`.
pub fn calibration_mae(table: &CandidateTable) -> Result<f64> {
    let rows = table.continuous_rows()?;
    let ys = table.require_responses()?;
    if rows.is_empty() || rows[0].len() != 1 {
        return Err(CoreError::validation("calibration MAE needs exactly one continuous evidence column"));
    }
    Ok(rows.iter().zip(&ys).map(|(r, y)| (r[0] - y).abs()).sum::<f64>() / rows.len() as f64)
}

/// Fits fibers on the calibration rows and certifies them under `cal_rule`.
pub fn calibrate(calibration: &CandidateTable, rule: FiberRule, cal_rule: CalibrationRule) -> Result<CertificateMap> {
    rule.validate()?;
    cal_rule.validate()?;
    if calibration.is_empty() || !calibration.has_labels() {
        return Err(CoreError::validation("calibration needs labelled rows"));
    }
    if calibration.arity() == 0 {
        return Err(CoreError::validation("calibration table has no evidence columns"));
    }
    let labels = calibration.require_labels()?;
    let alphabet = calibration.alphabet().cloned().expect("labels imply an alphabet");
    let mut totals = vec![0usize; alphabet.len()];
    for &l in &labels {
        totals[l] += 1;
    }
    let global_majority = tie_break_majority(&totals, 0);
    let n = calibration.len();

    let keying = match rule {
        FiberRule::ExactPattern => Keying::Exact,
        FiberRule::Quantile { bins_per_dim } => {
            let mut edges = Vec::new();
            for col in calibration.evidence() {
                let EvidenceColumn::Continuous { values, .. } = col else {
                    return Err(CoreError::validation(format!(
                        "quantile fibers need continuous evidence; column {:?} is discrete",
                        col.name()
                    )));
                };
                edges.push(QuantileEdges::fit(values, bins_per_dim)?);
            }
            Keying::Quantile(edges)
        }
        FiberRule::ErrorWindow { tolerance } => {
            let rows = calibration.continuous_rows()?;
            if rows[0].len() != 1 {
                return Err(CoreError::validation("error-window fibers need one-dimensional evidence"));
            }
            let mut sorted: Vec<(f64, usize)> = rows.iter().enumerate().map(|(i, r)| (r[0], i)).collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            Keying::Window { sorted, tolerance }
        }
        FiberRule::NearestNeighbour { k } => {
            if k > n {
                return Err(CoreError::validation(format!(
                    "k = {k} exceeds the {n} calibration rows"
                )));
            }
            Keying::Knn {
                reference: calibration.continuous_rows()?,
                k,
            }
        }
    };

    let mut map = CertificateMap {
        rule,
        cal_rule,
        alphabet,
        global_majority,
        n_calibration: n,
        fibers: BTreeMap::new(),
        columns: column_signature(calibration),
        keying,
        labels,
    };
    if rule.is_partition() {
        let mut counts: BTreeMap<FiberKey, Vec<usize>> = BTreeMap::new();
        for row in 0..n {
            let key = map.partition_key(calibration, row).expect("partition rule");
            counts.entry(key).or_insert_with(|| vec![0; map.alphabet.len()])[map.labels[row]] += 1;
        }
        for (key, c) in counts {
            let cert = certify_counts(key.to_string(), c, global_majority, &cal_rule)?;
            map.fibers.insert(key, cert);
        }
    }
    Ok(map)
}

impl CertificateMap {
    fn partition_key(&self, table: &CandidateTable, row: usize) -> Option<FiberKey> {
        match &self.keying {
            Keying::Exact => Some(FiberKey::Tokens(table.evidence().iter().map(|c| c.token(row)).collect())),
            Keying::Quantile(edges) => Some(FiberKey::Bins(
                table
                    .evidence()
                    .iter()
                    .zip(edges)
                    .map(|(c, e)| match c {
                        EvidenceColumn::Continuous { values, .. } => e.bin(values[row]),
                        EvidenceColumn::Discrete { .. } => unreachable!("schema checked"),
                    })
                    .collect(),
            )),
            _ => None,
        }
    }

    fn neighbourhood(&self, query: &[f64]) -> Vec<usize> {
        match &self.keying {
            Keying::Window { sorted, tolerance } => {
                let x = query[0];
                let slack = 1e-12 * x.abs().max(*tolerance).max(1.0);
                let start = sorted.partition_point(|&(v, _)| v < x - tolerance - slack);
                let mut out: Vec<usize> = sorted[start..]
                    .iter()
                    .take_while(|&&(v, _)| v <= x + tolerance + slack)
                    .filter(|&&(v, _)| (v - x).abs() <= *tolerance)
                    .map(|&(_, i)| i)
                    .collect();
                out.sort_unstable();
                out
            }
            Keying::Knn { reference, k } => crate::fiber::knn_query(reference, query, *k),
            _ => Vec::new(),
        }
    }

    pub fn certified_fiber_count(&self) -> usize {
        self.fibers.values().filter(|c| c.action.is_some()).count()
    }

    /// Certificate governing held-out `row`, or `None` for an unseen fiber.
    pub fn lookup(&self, heldout: &CandidateTable, row: usize) -> Result<Option<FiberCertificate>> {
        if let Some(key) = self.partition_key(heldout, row) {
            return Ok(self.fibers.get(&key).cloned());
        }
        let query: Vec<f64> = heldout
            .evidence()
            .iter()
            .map(|c| match c {
                EvidenceColumn::Continuous { values, .. } => values[row],
                EvidenceColumn::Discrete { .. } => f64::NAN,
            })
            .collect();
        let members = self.neighbourhood(&query);
        if members.is_empty() {
            return Ok(None);
        }
        let mut counts = vec![0usize; self.alphabet.len()];
        for &j in &members {
            counts[self.labels[j]] += 1;
        }
        let key = format!("{}#{}", self.rule.name(), heldout.ids()[row]);
        certify_counts(key, counts, self.global_majority, &self.cal_rule).map(Some)
    }

    fn check_schema(&self, heldout: &CandidateTable) -> Result<()> {
        if column_signature(heldout) != self.columns {
            return Err(CoreError::validation(
                "held-out evidence columns differ from the calibration columns",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Certified,
    Acquire,
}

/// Decision plan for one held-out row, fixed before any held-out label is read.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedDecision {
    pub id: String,
    pub fiber: Option<String>,
    pub route: Route,
    /// Certified action token, when routed to `Certified`.
    pub action: Option<String>,
    pub benchmark_action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitPlan {
    pub split: usize,
    pub seed: Option<u64>,
    pub n_calibration: usize,
    pub certified_fibers: usize,
    pub decisions: Vec<PlannedDecision>,
}

/// Routes every held-out row. Reads only held-out evidence.
pub fn plan_split(map: &CertificateMap, heldout: &CandidateTable, split: usize, seed: Option<u64>) -> Result<SplitPlan> {
    map.check_schema(heldout)?;
    let mut decisions = Vec::with_capacity(heldout.len());
    let mut neighbourhood_certified = 0;
    for row in 0..heldout.len() {
        let cert = map.lookup(heldout, row)?;
        let (fiber, action, bench) = match &cert {
            Some(c) => (Some(c.key.clone()), c.action, c.majority),
            None => (None, None, map.global_majority),
        };
        if !map.rule.is_partition() && action.is_some() {
            neighbourhood_certified += 1;
        }
        decisions.push(PlannedDecision {
            id: heldout.ids()[row].clone(),
            fiber,
            route: if action.is_some() { Route::Certified } else { Route::Acquire },
            action: action.map(|a| map.alphabet.token(a).to_owned()),
            benchmark_action: map.alphabet.token(bench).to_owned(),
        });
    }
    Ok(SplitPlan {
        split,
        seed,
        n_calibration: map.n_calibration,
        certified_fibers: if map.rule.is_partition() {
            map.certified_fiber_count()
        } else {
            neighbourhood_certified
        },
        decisions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "oracle", rename_all = "snake_case")]
pub enum AcquisitionOracle {
    /// Acquisition reveals the true label.
    Exact,
    /// Acquisition returns a wrong label with probability `flip_rate`.
    Noisy { flip_rate: f64 },
}

impl AcquisitionOracle {
    pub fn validate(&self) -> Result<()> {
        if let AcquisitionOracle::Noisy { flip_rate } = self {
            if !(0.0..=1.0).contains(flip_rate) {
                return Err(CoreError::validation(format!("flip rate {flip_rate} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayOutcome {
    pub split: usize,
    pub n_calibration: usize,
    pub n_heldout: usize,
    pub certified_fibers: usize,
    pub decided_immediately: usize,
    pub deferred: usize,
    pub acquired: usize,
    pub unseen: usize,
    pub false_before: usize,
    pub false_after: usize,
    /// Part of `false_after` coming from certified rows.
    pub false_after_certified: usize,
    /// Binary alphabets only; the positive action is the alphabet's second token.
    pub fp_before: Option<usize>,
    pub fn_before: Option<usize>,
    pub fp_after: Option<usize>,
    pub fn_after: Option<usize>,
    pub false_before_rate: f64,
    pub false_after_rate: f64,
    pub deferred_rate: f64,
    pub break_even: Option<f64>,
}

/// Scores a plan against held-out truth, acquiring deferred rows from `oracle`.
pub fn score_split(
    plan: &SplitPlan,
    map: &CertificateMap,
    heldout: &CandidateTable,
    oracle: AcquisitionOracle,
    oracle_seed: u64,
) -> Result<ReplayOutcome> {
    oracle.validate()?;
    let truth = heldout.require_labels()?;
    let held_alphabet = heldout.alphabet().expect("labels imply an alphabet");
    // Held-out labels are compared by token, so alphabets may differ in order.
    let truth: Vec<usize> = truth
        .iter()
        .map(|&t| {
            map.alphabet.index_of(held_alphabet.token(t)).ok_or_else(|| {
                CoreError::validation(format!(
                    "held-out label {:?} is not in the calibration alphabet",
                    held_alphabet.token(t)
                ))
            })
        })
        .collect::<Result<_>>()?;
    if plan.decisions.len() != heldout.len() {
        return Err(CoreError::validation("plan does not cover the held-out rows"));
    }
    let binary = map.alphabet.len() == 2;
    let mut rng = ChaCha8Rng::seed_from_u64(oracle_seed);
    let n_actions = map.alphabet.len();
    let (mut decided, mut deferred, mut unseen) = (0, 0, 0);
    let (mut false_before, mut false_after, mut false_cert) = (0, 0, 0);
    let (mut fp_b, mut fn_b, mut fp_a, mut fn_a) = (0, 0, 0, 0);
    for (d, &t) in plan.decisions.iter().zip(&truth) {
        let bench = map.alphabet.index_of(&d.benchmark_action).expect("planned from alphabet");
        if bench != t {
            false_before += 1;
            if bench == 1 { fp_b += 1 } else { fn_b += 1 }
        }
        if d.fiber.is_none() {
            unseen += 1;
        }
        let after = match d.route {
            Route::Certified => {
                decided += 1;
                map.alphabet.index_of(d.action.as_deref().expect("certified")).expect("alphabet")
            }
            Route::Acquire => {
                deferred += 1;
                match oracle {
                    AcquisitionOracle::Exact => t,
                    AcquisitionOracle::Noisy { flip_rate } => {
                        if n_actions > 1 && rng.random::<f64>() < flip_rate {
                            let shift = rng.random_range(1..n_actions);
                            (t + shift) % n_actions
                        } else {
                            t
                        }
                    }
                }
            }
        };
        if after != t {
            false_after += 1;
            if d.route == Route::Certified {
                false_cert += 1;
            }
            if after == 1 { fp_a += 1 } else { fn_a += 1 }
        }
    }
    let n = heldout.len();
    let rate = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    Ok(ReplayOutcome {
        split: plan.split,
        n_calibration: plan.n_calibration,
        n_heldout: n,
        certified_fibers: plan.certified_fibers,
        decided_immediately: decided,
        deferred,
        acquired: deferred,
        unseen,
        false_before,
        false_after,
        false_after_certified: false_cert,
        fp_before: binary.then_some(fp_b),
        fn_before: binary.then_some(fn_b),
        fp_after: binary.then_some(fp_a),
        fn_after: binary.then_some(fn_a),
        false_before_rate: rate(false_before),
        false_after_rate: rate(false_after),
        deferred_rate: rate(deferred),
        break_even: break_even(false_before, false_after, deferred),
    })
}

/// Calibrates on `calibration` and replays on `heldout` in one step.
pub fn replay_split(
    calibration: &CandidateTable,
    heldout: &CandidateTable,
    rule: FiberRule,
    cal_rule: CalibrationRule,
    oracle: AcquisitionOracle,
    split: usize,
    seed: u64,
) -> Result<(SplitPlan, ReplayOutcome)> {
    let map = calibrate(calibration, rule, cal_rule)?;
    let plan = plan_split(&map, heldout, split, Some(seed))?;
    let outcome = score_split(&plan, &map, heldout, oracle, seed)?;
    Ok((plan, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Split {
    pub id: usize,
    pub seed: u64,
    pub calibration: Vec<usize>,
    pub heldout: Vec<usize>,
}

/// Random calibration/held-out partitions; split `i` uses seed `master_seed + i`.
pub fn generate_splits(n: usize, calibration_fraction: f64, n_splits: usize, master_seed: u64) -> Result<Vec<Split>> {
    if !(calibration_fraction > 0.0 && calibration_fraction < 1.0) {
        return Err(CoreError::validation(format!(
            "calibration fraction {calibration_fraction} must lie in (0, 1)"
        )));
    }
    if n < 2 {
        return Err(CoreError::validation("splitting needs at least two rows"));
    }
    if n_splits == 0 {
        return Err(CoreError::validation("need at least one split"));
    }
    let n_cal = ((n as f64 * calibration_fraction).round() as usize).clamp(1, n - 1);
    Ok((0..n_splits)
        .map(|id| {
            let seed = master_seed.wrapping_add(id as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut calibration = idx[..n_cal].to_vec();
            let mut heldout = idx[n_cal..].to_vec();
            calibration.sort_unstable();
            heldout.sort_unstable();
            Split {
                id,
                seed,
                calibration,
                heldout,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSummary {
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
}

fn rate_summary(xs: &[f64]) -> RateSummary {
    RateSummary {
        mean: xs.iter().sum::<f64>() / xs.len() as f64,
        p10: percentile(xs, 10.0).unwrap_or(f64::NAN),
        p90: percentile(xs, 90.0).unwrap_or(f64::NAN),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayAggregate {
    pub splits: usize,
    pub false_before_rate: RateSummary,
    pub false_after_rate: RateSummary,
    pub deferred_rate: RateSummary,
    pub splits_improved: usize,
    pub total_false_before: usize,
    pub total_false_after: usize,
    pub total_acquired: usize,
    /// Break-even over pooled counts.
    pub pooled_break_even: Option<f64>,
}

pub fn aggregate(outcomes: &[ReplayOutcome]) -> Result<ReplayAggregate> {
    if outcomes.is_empty() {
        return Err(CoreError::validation("no replay outcomes to aggregate"));
    }
    let mut sorted: Vec<&ReplayOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.split);
    let col = |f: fn(&ReplayOutcome) -> f64| sorted.iter().map(|o| f(o)).collect::<Vec<_>>();
    let fb: usize = sorted.iter().map(|o| o.false_before).sum();
    let fa: usize = sorted.iter().map(|o| o.false_after).sum();
    let acq: usize = sorted.iter().map(|o| o.acquired).sum();
    Ok(ReplayAggregate {
        splits: sorted.len(),
        false_before_rate: rate_summary(&col(|o| o.false_before_rate)),
        false_after_rate: rate_summary(&col(|o| o.false_after_rate)),
        deferred_rate: rate_summary(&col(|o| o.deferred_rate)),
        splits_improved: sorted.iter().filter(|o| o.false_after < o.false_before).count(),
        total_false_before: fb,
        total_false_after: fa,
        total_acquired: acq,
        pooled_break_even: break_even(fb, fa, acq),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayConfig {
    pub rule: FiberRule,
    pub cal_rule: CalibrationRule,
    pub oracle: AcquisitionOracle,
    pub calibration_fraction: f64,
    pub splits: usize,
    pub seed: u64,
    /// Replace an error-window tolerance by the calibration MAE of each split.
    pub window_from_mae: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayRun {
    pub plans: Vec<SplitPlan>,
    pub outcomes: Vec<ReplayOutcome>,
    pub aggregate: ReplayAggregate,
}

fn split_rule(config: &ReplayConfig, calibration: &CandidateTable) -> Result<FiberRule> {
    match config.rule {
        FiberRule::ErrorWindow { .. } if config.window_from_mae => Ok(FiberRule::ErrorWindow {
            tolerance: calibration_mae(calibration)?,
        }),
        r => Ok(r),
    }
}

/// Plans every split of `table` without reading held-out labels.
pub fn plan_splits(table: &CandidateTable, config: &ReplayConfig) -> Result<Vec<(Split, CertificateMap, SplitPlan)>> {
    let splits = generate_splits(table.len(), config.calibration_fraction, config.splits, config.seed)?;
    splits
        .into_par_iter()
        .map(|s| {
            let cal = table.select(&s.calibration);
            let held = table.select(&s.heldout);
            let map = calibrate(&cal, split_rule(config, &cal)?, config.cal_rule)?;
            let plan = plan_split(&map, &held, s.id, Some(s.seed))?;
            Ok((s, map, plan))
        })
        .collect()
}

/// Scores planned splits; outputs are ordered by split id.
pub fn score_splits(
    table: &CandidateTable,
    planned: &[(Split, CertificateMap, SplitPlan)],
    oracle: AcquisitionOracle,
) -> Result<ReplayRun> {
    let outcomes: Vec<ReplayOutcome> = planned
        .par_iter()
        .map(|(s, map, plan)| score_split(plan, map, &table.select(&s.heldout), oracle, s.seed))
        .collect::<Result<_>>()?;
    Ok(ReplayRun {
        plans: planned.iter().map(|(_, _, p)| p.clone()).collect(),
        aggregate: aggregate(&outcomes)?,
        outcomes,
    })
}

pub fn run_replay(table: &CandidateTable, config: &ReplayConfig) -> Result<ReplayRun> {
    let planned = plan_splits(table, config)?;
    score_splits(table, &planned, config.oracle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(evidence: &[&str], labels: &[&str]) -> CandidateTable {
        let ids = (0..evidence.len()).map(|i| format!("c{i}")).collect();
        CandidateTable::new(
            ids,
            vec![EvidenceColumn::Discrete {
                name: "e".into(),
                values: evidence.iter().map(|s| s.to_string()).collect(),
            }],
        )
        .unwrap()
        .with_labels(
            ActionAlphabet::binary(),
            labels.iter().map(|s| Some(s.to_string())).collect(),
        )
        .unwrap()
    }

    fn uniform(n: usize, ev: &str, label: &str) -> (Vec<&'static str>, Vec<&'static str>) {
        let ev: &'static str = Box::leak(ev.to_string().into_boxed_str());
        let label: &'static str = Box::leak(label.to_string().into_boxed_str());
        (vec![ev; n], vec![label; n])
    }

    #[test]
    fn unanimity_support_threshold() {
        let (e, l) = uniform(50, "a", "1");
        let map = calibrate(&table(&e, &l), FiberRule::ExactPattern, CalibrationRule::default()).unwrap();
        assert_eq!(map.certified_fiber_count(), 1);
        let (e, l) = uniform(49, "a", "1");
        let map = calibrate(&table(&e, &l), FiberRule::ExactPattern, CalibrationRule::default()).unwrap();
        assert_eq!(map.certified_fiber_count(), 0);
    }

    #[test]
    fn clopper_pearson_rule_both_ways() {
        let (e, l) = uniform(50, "a", "1");
        let t = table(&e, &l);
        let cp = |tau_bound| CalibrationRule {
            min_support: 50,
            mode: CalibrationMode::ClopperPearson {
                tau_bound,
                delta: 0.05,
                multiplicity: 1,
            },
        };
        assert_eq!(calibrate(&t, FiberRule::ExactPattern, cp(0.05)).unwrap().certified_fiber_count(), 0);
        assert_eq!(calibrate(&t, FiberRule::ExactPattern, cp(0.06)).unwrap().certified_fiber_count(), 1);
    }

    #[test]
    fn calibrate_needs_labels() {
        let t = CandidateTable::new(
            vec!["a".into()],
            vec![EvidenceColumn::Discrete {
                name: "e".into(),
                values: vec!["x".into()],
            }],
        )
        .unwrap();
        assert!(calibrate(&t, FiberRule::ExactPattern, CalibrationRule::default()).is_err());
    }

    #[test]
    fn replay_routes_and_scores() {
        let rule = CalibrationRule {
            min_support: 2,
            mode: CalibrationMode::Unanimity,
        };
        // Fiber a: pure 1; fiber b: mixed (majority 0); unseen fiber c.
        let cal = table(&["a", "a", "b", "b", "b"], &["1", "1", "0", "0", "1"]);
        let held = table(&["a", "b", "b", "c"], &["1", "0", "1", "1"]);
        let (plan, out) =
            replay_split(&cal, &held, FiberRule::ExactPattern, rule, AcquisitionOracle::Exact, 0, 1).unwrap();
        assert_eq!(plan.decisions[0].route, Route::Certified);
        assert_eq!(plan.decisions[3].fiber, None);
        assert_eq!(out.decided_immediately, 1);
        assert_eq!(out.deferred, 3);
        assert_eq!(out.unseen, 1);
        // Benchmark majority: a→1, b→0, b→0, c→global majority 1.
        assert_eq!(out.false_before, 1);
        assert_eq!(out.false_after, 0);
        assert_eq!(out.fn_before, Some(1));
        assert_eq!(out.break_even, Some(1.0 / 3.0));
    }

    #[test]
    fn majority_ties_prefer_global_then_zero() {
        assert_eq!(tie_break_majority(&[2, 2], 1), 1);
        assert_eq!(tie_break_majority(&[2, 2, 1], 2), 0);
        assert_eq!(tie_break_majority(&[1, 3], 0), 1);
    }

    #[test]
    fn noisy_oracle_is_seeded_and_bounded() {
        let cal = table(&["a", "b"], &["1", "0"]);
        let held = table(&["x"; 40], &["1"; 40]);
        let map = calibrate(&cal, FiberRule::ExactPattern, CalibrationRule::default()).unwrap();
        let plan = plan_split(&map, &held, 0, None).unwrap();
        let a = score_split(&plan, &map, &held, AcquisitionOracle::Noisy { flip_rate: 0.5 }, 3).unwrap();
        let b = score_split(&plan, &map, &held, AcquisitionOracle::Noisy { flip_rate: 0.5 }, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.false_after > 0 && a.false_after < 40);
        assert!(score_split(&plan, &map, &held, AcquisitionOracle::Noisy { flip_rate: 1.5 }, 3).is_err());
    }

    #[test]
    fn splits_are_disjoint_and_seeded() {
        let s = generate_splits(10, 0.5, 3, 7).unwrap();
        assert_eq!(s[1].seed, 8);
        for sp in &s {
            let mut all = sp.calibration.clone();
            all.extend(&sp.heldout);
            all.sort_unstable();
            assert_eq!(all, (0..10).collect::<Vec<_>>());
            assert_eq!(sp.calibration.len(), 5);
        }
        assert_eq!(s, generate_splits(10, 0.5, 3, 7).unwrap());
        assert!(generate_splits(10, 1.0, 3, 7).is_err());
    }

    #[test]
    fn window_lookup_uses_calibration_rows() {
        let cal = CandidateTable::new(
            (0..4).map(|i| format!("k{i}")).collect(),
            vec![EvidenceColumn::Continuous {
                name: "e_pred".into(),
                values: vec![0.0, 0.1, 1.0, 1.05],
            }],
        )
        .unwrap()
        .with_labels(ActionAlphabet::binary(), ["0", "0", "1", "1"].iter().map(|s| Some(s.to_string())).collect())
        .unwrap();
        let held = CandidateTable::new(
            vec!["h0".into(), "h1".into(), "h2".into()],
            vec![EvidenceColumn::Continuous {
                name: "e_pred".into(),
                values: vec![0.05, 0.55, 1.02],
            }],
        )
        .unwrap()
        .with_labels(ActionAlphabet::binary(), ["0", "1", "1"].iter().map(|s| Some(s.to_string())).collect())
        .unwrap();
        let rule = CalibrationRule {
            min_support: 2,
            mode: CalibrationMode::Unanimity,
        };
        let map = calibrate(&cal, FiberRule::ErrorWindow { tolerance: 0.1 }, rule).unwrap();
        let plan = plan_split(&map, &held, 0, None).unwrap();
        assert_eq!(plan.decisions[0].action.as_deref(), Some("0"));
        assert_eq!(plan.decisions[1].fiber, None);
        assert_eq!(plan.decisions[2].action.as_deref(), Some("1"));
    }
}
