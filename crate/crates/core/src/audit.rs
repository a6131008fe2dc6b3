//! Exact and loss-aware completeness diagnostics over evidence fibers.
//!
//! All counting is done in integers first; fractions are formed by a single
//! division at the end so that `cert + amb == 1` and the oracle comparisons in
//! the tests are exact.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::fiber::{build_fibers, FiberKey, FiberPartition, FiberRule};
use crate::table::CandidateTable;

/// Three-way classification of a fiber or interval against a threshold `τ`,
/// following `D_τ = 1{Y > τ}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdClass {
    CertifiedPositive,
    CertifiedNegative,
    Ambiguous,
}

impl ThresholdClass {
    /// Classifies the range `[lo, hi]`: positive iff `lo > τ`, negative iff `hi <= τ`.
    pub fn of_range(lo: f64, hi: f64, tau: f64) -> Self {
        if lo > tau {
            ThresholdClass::CertifiedPositive
        } else if hi <= tau {
            ThresholdClass::CertifiedNegative
        } else {
            ThresholdClass::Ambiguous
        }
    }

    pub fn is_certified(self) -> bool {
        self != ThresholdClass::Ambiguous
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ThresholdClass::CertifiedPositive => "certified_positive",
            ThresholdClass::CertifiedNegative => "certified_negative",
            ThresholdClass::Ambiguous => "ambiguous",
        }
    }
}

fn check_labels(partition: &FiberPartition, labels: &[usize]) -> Result<()> {
    if labels.len() != partition.n {
        return Err(CoreError::validation(format!(
            "{} labels for {} candidates",
            labels.len(),
            partition.n
        )));
    }
    Ok(())
}

fn check_binary(labels: &[usize]) -> Result<()> {
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(CoreError::validation(format!(
            "binary operation received action index {bad}; the alphabet is not binary"
        )));
    }
    Ok(())
}

/// Number of candidates lying in pure fibers.
pub fn certified_count(partition: &FiberPartition, labels: &[usize]) -> Result<usize> {
    let groups = partition.groups()?;
    check_labels(partition, labels)?;
    Ok(groups
        .values()
        .filter(|m| m.iter().all(|&i| labels[i] == labels[m[0]]))
        .map(Vec::len)
        .sum())
}

/// `(Cert, Amb)`: the fraction of candidates in label-pure fibers and its complement.
pub fn certifiable_fraction(partition: &FiberPartition, labels: &[usize]) -> Result<(f64, f64)> {
    let cert = certified_count(partition, labels)?;
    let n = partition.n as f64;
    Ok((cert as f64 / n, (partition.n - cert) as f64 / n))
}

/// `Σ_z min(#ones, #zeros)`: the error count of the best fiber-wise action.
pub fn bayes_error_count(partition: &FiberPartition, labels: &[usize]) -> Result<usize> {
    let groups = partition.groups()?;
    check_labels(partition, labels)?;
    check_binary(labels)?;
    Ok(groups
        .values()
        .map(|m| {
            let ones = m.iter().filter(|&&i| labels[i] == 1).count();
            ones.min(m.len() - ones)
        })
        .sum())
}

/// Fiber Bayes error `Err = (1/N) Σ_z |C_z| min(p_z, 1 - p_z)`.
pub fn bayes_error(partition: &FiberPartition, labels: &[usize]) -> Result<f64> {
    Ok(bayes_error_count(partition, labels)? as f64 / partition.n as f64)
}

/// Prevalence-normalized residual ambiguity `ρ = Err / min(Pr(D=1), Pr(D=0))`.
///
/// `None` when one action is absent: the minority prevalence is zero and ρ is undefined.
pub fn residual_ambiguity(partition: &FiberPartition, labels: &[usize]) -> Result<Option<f64>> {
    let err = bayes_error_count(partition, labels)?;
    let ones = labels.iter().filter(|&&l| l == 1).count();
    let minority = ones.min(labels.len() - ones);
    if minority == 0 {
        return Ok(None);
    }
    Ok(Some(err as f64 / minority as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeighbourhoodRisk {
    /// Mean local-majority error; ties count as 1/2.
    pub risk: f64,
    /// `risk` over the minority prevalence. Overlapping neighbourhoods can push
    /// this slightly above one.
    pub rho_local: Option<f64>,
}

/// Local-neighbourhood majority error for overlapping (kNN / window) fibers.
pub fn neighbourhood_decision_risk(
    partition: &FiberPartition,
    labels: &[usize],
) -> Result<NeighbourhoodRisk> {
    let hoods = partition.neighbourhoods()?;
    check_labels(partition, labels)?;
    check_binary(labels)?;
    // Twice the error count, so a tie contributes exactly 1.
    let mut doubled = 0usize;
    for (i, hood) in hoods.iter().enumerate() {
        if hood.is_empty() {
            return Err(CoreError::Internal(format!("candidate {i} has an empty neighbourhood")));
        }
        let ones = hood.iter().filter(|&&j| labels[j] == 1).count();
        let zeros = hood.len() - ones;
        doubled += match ones.cmp(&zeros) {
            std::cmp::Ordering::Equal => 1,
            std::cmp::Ordering::Greater => 2 * usize::from(labels[i] != 1),
            std::cmp::Ordering::Less => 2 * usize::from(labels[i] != 0),
        };
    }
    let n = labels.len();
    let risk = doubled as f64 / (2 * n) as f64;
    let ones = labels.iter().filter(|&&l| l == 1).count();
    let minority = ones.min(n - ones);
    let rho_local = (minority > 0).then(|| doubled as f64 / (2 * minority) as f64);
    Ok(NeighbourhoodRisk { risk, rho_local })
}

/// Count of candidates whose neighbourhood is label-pure.
pub fn neighbourhood_purity(partition: &FiberPartition, labels: &[usize]) -> Result<usize> {
    let hoods = partition.neighbourhoods()?;
    check_labels(partition, labels)?;
    Ok(hoods
        .iter()
        .filter(|h| h.iter().all(|&j| labels[j] == labels[h[0]]))
        .count())
}

/// Per-fiber threshold classification of the deployment response.
pub fn classify_threshold_fibers(
    partition: &FiberPartition,
    responses: &[f64],
    tau: f64,
) -> Result<BTreeMap<FiberKey, ThresholdClass>> {
    let groups = partition.groups()?;
    if responses.len() != partition.n {
        return Err(CoreError::validation(format!(
            "{} responses for {} candidates",
            responses.len(),
            partition.n
        )));
    }
    if !tau.is_finite() {
        return Err(CoreError::validation("threshold must be finite"));
    }
    Ok(groups
        .iter()
        .map(|(k, m)| {
            let (lo, hi) = m.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(responses[i]), hi.max(responses[i]))
            });
            (k.clone(), ThresholdClass::of_range(lo, hi, tau))
        })
        .collect())
}

/// Minimax regret per fiber: `min_a max_{s ∈ C_z} [L(a,s) - min_a' L(a',s)]`.
pub fn fiber_minimax_regret(
    partition: &FiberPartition,
    losses: &[Vec<f64>],
) -> Result<BTreeMap<FiberKey, f64>> {
    let groups = partition.groups()?;
    if losses.len() != partition.n {
        return Err(CoreError::validation("loss rows do not match candidates"));
    }
    let n_actions = losses.first().map_or(0, Vec::len);
    if n_actions == 0 {
        return Err(CoreError::validation("losses cover no actions"));
    }
    Ok(groups
        .iter()
        .map(|(k, members)| {
            let worst = (0..n_actions)
                .map(|a| {
                    members
                        .iter()
                        .map(|&s| {
                            let best = losses[s].iter().copied().fold(f64::INFINITY, f64::min);
                            losses[s][a] - best
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .fold(f64::INFINITY, f64::min);
            (k.clone(), worst)
        })
        .collect())
}

/// Flags fibers meeting the ε-robust condition on their members.
pub fn epsilon_robust_fibers(
    partition: &FiberPartition,
    losses: &[Vec<f64>],
    epsilon: f64,
) -> Result<BTreeMap<FiberKey, bool>> {
    if !(epsilon >= 0.0) {
        return Err(CoreError::validation("epsilon must be nonnegative"));
    }
    Ok(fiber_minimax_regret(partition, losses)?
        .into_iter()
        .map(|(k, r)| (k, r <= epsilon))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberSummary {
    pub key: FiberKey,
    pub size: usize,
    pub labels: BTreeMap<String, usize>,
    pub pure: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_class: Option<ThresholdClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimax_regret: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSummary {
    pub tau: f64,
    pub certified_positive_fibers: usize,
    pub certified_negative_fibers: usize,
    pub ambiguous_fibers: usize,
    /// Fraction of candidates lying in certified fibers.
    pub certified_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub rule: FiberRule,
    /// `partition` or `neighbourhood`.
    pub mode: &'static str,
    pub n: usize,
    /// Candidates in pure fibers (partition) or with pure neighbourhoods.
    pub cert_count: usize,
    pub cert_fraction: f64,
    pub amb_fraction: f64,
    /// Partition mode only.
    pub bayes_error: Option<f64>,
    /// ρ in partition mode; local ρ in neighbourhood mode.
    pub rho: Option<f64>,
    /// Local-majority error, neighbourhood mode only.
    pub decision_risk: Option<f64>,
    pub fiber_count: usize,
    pub median_fiber_size: usize,
    pub per_fiber: Vec<FiberSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robust_fraction: Option<f64>,
    pub warnings: Vec<String>,
}

/// Builds fibers and computes every diagnostic the table's columns allow.
///
/// Label diagnostics run when `d_label` is present; threshold classes when
/// `tau` is given (requires `y_star`); ε-robust flags when `epsilon` is given
/// (requires losses). Neighbourhood rules report local-majority risk.
pub fn run_audit(
    table: &CandidateTable,
    rule: FiberRule,
    tau: Option<f64>,
    epsilon: Option<f64>,
) -> Result<AuditReport> {
    if !table.has_labels() && tau.is_none() && epsilon.is_none() {
        return Err(CoreError::validation(
            "nothing to audit: label audits need a d_label column; threshold audits need y_star and a threshold",
        ));
    }
    let partition = build_fibers(table, rule)?;
    let n = partition.n;
    let mut warnings = Vec::new();
    let mut report = AuditReport {
        rule,
        mode: if partition.is_partition() { "partition" } else { "neighbourhood" },
        n,
        cert_count: 0,
        cert_fraction: 0.0,
        amb_fraction: 0.0,
        bayes_error: None,
        rho: None,
        decision_risk: None,
        fiber_count: partition.group_count(),
        median_fiber_size: partition.median_group_size(),
        per_fiber: Vec::new(),
        threshold: None,
        epsilon,
        robust_fraction: None,
        warnings: Vec::new(),
    };

    let labels = if table.has_labels() { Some(table.require_labels()?) } else { None };
    let binary = table.alphabet().is_some_and(|a| a.len() <= 2);
    let mut threshold_certified = None;

    if partition.is_partition() {
        let groups = partition.groups()?;
        let threshold_classes = match tau {
            Some(t) => Some(classify_threshold_fibers(&partition, &table.require_responses()?, t)?),
            None => None,
        };
        let regrets = match epsilon {
            Some(_) => Some(fiber_minimax_regret(&partition, table.require_losses()?)?),
            None => None,
        };
        if let Some(labels) = &labels {
            report.cert_count = certified_count(&partition, labels)?;
            if binary {
                report.bayes_error = Some(bayes_error(&partition, labels)?);
                report.rho = residual_ambiguity(&partition, labels)?;
                if report.rho.is_none() {
                    warnings.push("rho undefined: only one deployment action is present".to_owned());
                }
            } else {
                warnings.push(
                    "bayes error and rho are defined for binary actions only; skipped".to_owned(),
                );
            }
        }
        for (key, members) in groups {
            let (hist, pure) = match &labels {
                Some(l) => (
                    table.label_histogram(l, members),
                    members.iter().all(|&i| l[i] == l[members[0]]),
                ),
                None => (BTreeMap::new(), false),
            };
            report.per_fiber.push(FiberSummary {
                key: key.clone(),
                size: members.len(),
                labels: hist,
                pure,
                threshold_class: threshold_classes.as_ref().map(|c| c[key]),
                minimax_regret: regrets.as_ref().map(|r| r[key]),
            });
        }
        if let (Some(t), Some(classes)) = (tau, &threshold_classes) {
            let count = |c: ThresholdClass| classes.values().filter(|&&x| x == c).count();
            let certified: usize = groups
                .iter()
                .filter(|(k, _)| classes[*k].is_certified())
                .map(|(_, m)| m.len())
                .sum();
            threshold_certified = Some(certified);
            report.threshold = Some(ThresholdSummary {
                tau: t,
                certified_positive_fibers: count(ThresholdClass::CertifiedPositive),
                certified_negative_fibers: count(ThresholdClass::CertifiedNegative),
                ambiguous_fibers: count(ThresholdClass::Ambiguous),
                certified_fraction: certified as f64 / n as f64,
            });
        }
        if let (Some(eps), Some(regrets)) = (epsilon, &regrets) {
            let robust: usize = groups
                .iter()
                .filter(|(k, _)| regrets[*k] <= eps)
                .map(|(_, m)| m.len())
                .sum();
            report.robust_fraction = Some(robust as f64 / n as f64);
        }
    } else {
        warnings.push(
            "neighbourhoods overlap rather than partition candidates; decision risk is a local-majority error and rho may exceed one".to_owned(),
        );
        if tau.is_some() || epsilon.is_some() {
            warnings.push("threshold and epsilon diagnostics need a partition rule; skipped".to_owned());
        }
        let labels = labels.as_ref().ok_or_else(|| {
            CoreError::validation("neighbourhood audits need a d_label column")
        })?;
        report.cert_count = neighbourhood_purity(&partition, labels)?;
        if binary {
            let r = neighbourhood_decision_risk(&partition, labels)?;
            report.decision_risk = Some(r.risk);
            report.rho = r.rho_local;
        }
    }

    if labels.is_none() {
        // Threshold-only audit: certification refers to threshold classes.
        report.cert_count = threshold_certified.unwrap_or(0);
    }
    report.cert_fraction = report.cert_count as f64 / n as f64;
    report.amb_fraction = (n - report.cert_count) as f64 / n as f64;
    report.warnings = warnings;
    Ok(report)
}
