//! One-step response completion, probe policies and completion curves.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::ResponseGeometry;
use crate::linalg::{dot, norm};

/// A candidate measurement direction with its acquisition cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub id: String,
    pub vector: Vec<f64>,
    pub cost: f64,
}

/// Probes sorted by ascending id; ids unique, costs strictly positive.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbePool {
    probes: Vec<Probe>,
}

impl ProbePool {
    pub fn new(mut probes: Vec<Probe>) -> Result<Self> {
        probes.sort_by(|a, b| a.id.cmp(&b.id));
        for w in probes.windows(2) {
            if w[0].id == w[1].id {
                return Err(CoreError::validation(format!("duplicate probe id {:?}", w[0].id)));
            }
        }
        if let Some(first) = probes.first() {
            let dim = first.vector.len();
            for p in &probes {
                if !(p.cost > 0.0 && p.cost.is_finite()) {
                    return Err(CoreError::validation(format!(
                        "probe {:?} has cost {}; costs must be positive and finite",
                        p.id, p.cost
                    )));
                }
                if p.vector.len() != dim {
                    return Err(CoreError::validation(format!(
                        "probe {:?} has dimension {}, expected {dim}",
                        p.id,
                        p.vector.len()
                    )));
                }
                if p.vector.iter().any(|x| !x.is_finite()) {
                    return Err(CoreError::validation(format!("probe {:?} is not finite", p.id)));
                }
            }
        }
        Ok(Self { probes })
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Probe> {
        self.probes.iter().find(|p| p.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum CompletionPolicy {
    /// Largest squared residual reduction per unit cost.
    ResidualGreedy,
    Random { seed: u64 },
    /// Largest fraction of the probe inside the current benchmark span.
    BenchmarkAligned,
    /// Largest variance of the probe's measured values on calibration candidates.
    Uncertainty,
    /// Largest minimum principal angle to the probes already in the benchmark set.
    Diversity,
    /// Largest realized certified gain; an upper bound, not a deployable policy.
    OracleUpperBound,
}

impl CompletionPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            CompletionPolicy::ResidualGreedy => "residual_greedy",
            CompletionPolicy::Random { .. } => "random",
            CompletionPolicy::BenchmarkAligned => "benchmark_aligned",
            CompletionPolicy::Uncertainty => "uncertainty",
            CompletionPolicy::Diversity => "diversity",
            CompletionPolicy::OracleUpperBound => "oracle_upper_bound",
        }
    }

    pub fn is_upper_bound_only(&self) -> bool {
        matches!(self, CompletionPolicy::OracleUpperBound)
    }
}

/// Extra information some policies need.
#[derive(Default)]
pub struct SelectionContext<'a> {
    /// Measured values per probe id on calibration candidates (uncertainty policy).
    pub measured: Option<&'a BTreeMap<String, Vec<f64>>>,
    /// Realized certified gain of adding a probe (oracle policy).
    pub oracle_gain: Option<&'a dyn Fn(&Probe) -> Result<f64>>,
    /// Selection step, mixed into the random policy's seed.
    pub step: u64,
}

fn check_probe(geometry: &ResponseGeometry, q: &[f64]) -> Result<f64> {
    if q.len() != geometry.dim() {
        return Err(CoreError::validation(format!(
            "dimension mismatch: probe has {} coordinates, geometry has {}",
            q.len(),
            geometry.dim()
        )));
    }
    let qn = norm(q);
    if qn == 0.0 || !qn.is_finite() {
        return Err(CoreError::validation("probe vector is zero or not finite"));
    }
    Ok(qn)
}

/// Squared residual reduction `Δ(q) = ⟨r★, q⊥⟩² / ‖q⊥‖²` from adding probe `q`.
///
/// Zero when `q` lies in the benchmark span (within the rank tolerance).
pub fn delta_q(geometry: &ResponseGeometry, q: &[f64]) -> Result<f64> {
    let qn = check_probe(geometry, q)?;
    let q_perp = geometry.null_component(q);
    let pn = norm(&q_perp);
    if pn <= geometry.rank_tolerance() * qn {
        return Ok(0.0);
    }
    let c = dot(geometry.residual(), &q_perp) / pn;
    Ok((c * c).min(geometry.residual_norm().powi(2)))
}

/// Residual norm `g(q) = sqrt(g² - Δ(q))` after adding `q`.
pub fn updated_residual(geometry: &ResponseGeometry, q: &[f64]) -> Result<f64> {
    let g = geometry.residual_norm();
    let g2 = g * g - delta_q(geometry, q)?;
    Ok(if g2 <= 1e-12 { 0.0 } else { g2.sqrt() })
}

/// Fraction of `q` inside the benchmark span, `‖P_B q‖ / ‖q‖`.
pub fn benchmark_alignment(geometry: &ResponseGeometry, q: &[f64]) -> Result<f64> {
    let qn = check_probe(geometry, q)?;
    Ok((norm(&geometry.project(q)) / qn).min(1.0))
}

fn min_principal_angle(existing: &[Vec<f64>], q: &[f64]) -> f64 {
    let qn = norm(q);
    existing
        .iter()
        .filter_map(|p| {
            let pn = norm(p);
            (pn > 0.0).then(|| (dot(p, q).abs() / (pn * qn)).min(1.0).acos())
        })
        .fold(std::f64::consts::FRAC_PI_2, f64::min)
}

fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Score of one probe under a deterministic policy (larger is better).
pub fn policy_score(
    geometry: &ResponseGeometry,
    probe: &Probe,
    policy: CompletionPolicy,
    context: &SelectionContext<'_>,
) -> Result<f64> {
    match policy {
        CompletionPolicy::ResidualGreedy => Ok(delta_q(geometry, &probe.vector)? / probe.cost),
        CompletionPolicy::BenchmarkAligned => benchmark_alignment(geometry, &probe.vector),
        CompletionPolicy::Uncertainty => {
            let measured = context.measured.ok_or_else(|| {
                CoreError::validation("uncertainty policy needs measured probe values")
            })?;
            let values = measured.get(&probe.id).ok_or_else(|| {
                CoreError::validation(format!("no measured values for probe {:?}", probe.id))
            })?;
            Ok(sample_variance(values))
        }
        CompletionPolicy::Diversity => {
            check_probe(geometry, &probe.vector)?;
            Ok(min_principal_angle(geometry.probes(), &probe.vector))
        }
        CompletionPolicy::OracleUpperBound => {
            let gain = context.oracle_gain.ok_or_else(|| {
                CoreError::validation("oracle policy needs a realized-gain evaluator")
            })?;
            gain(probe)
        }
        CompletionPolicy::Random { .. } => Ok(0.0),
    }
}

fn select_among<'p>(
    geometry: &ResponseGeometry,
    candidates: &[&'p Probe],
    policy: CompletionPolicy,
    context: &SelectionContext<'_>,
) -> Result<&'p Probe> {
    if candidates.is_empty() {
        return Err(CoreError::validation("probe pool is empty"));
    }
    if let CompletionPolicy::Random { seed } = policy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(context.step));
        return Ok(candidates[rng.random_range(0..candidates.len())]);
    }
    let mut best: Option<(f64, &Probe)> = None;
    for &p in candidates {
        let s = policy_score(geometry, p, policy, context)?;
        // Candidates arrive in ascending id order; a later probe must win by
        // more than rounding noise to displace an earlier one.
        let better = match best {
            None => true,
            Some((b, _)) => s > b + 1e-12 * b.abs().max(1.0),
        };
        if better {
            best = Some((s, p));
        }
    }
    Ok(best.expect("nonempty").1)
}

/// Chooses one probe from `pool` under `policy`; ties go to the smallest id.
pub fn select_probe<'p>(
    geometry: &ResponseGeometry,
    pool: &'p ProbePool,
    policy: CompletionPolicy,
    context: &SelectionContext<'_>,
) -> Result<&'p Probe> {
    let candidates: Vec<&Probe> = pool.probes().iter().collect();
    select_among(geometry, &candidates, policy, context)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub budget: f64,
    pub spent: f64,
    pub probes: usize,
    pub residual_norm: f64,
    pub certified_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionStep {
    pub step: usize,
    pub probe_id: String,
    pub cost: f64,
    pub cumulative_cost: f64,
    pub residual_norm: f64,
    pub certified_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionCurve {
    pub policy: String,
    pub upper_bound_only: bool,
    pub start_fraction: f64,
    pub points: Vec<CurvePoint>,
    pub order: Vec<String>,
    pub steps: Vec<SelectionStep>,
}

/// Greedy completion curve under `policy`.
///
/// For each budget in ascending order, the policy keeps choosing among the
/// remaining probes that still fit the budget until none fit. Chosen probes are
/// appended to the benchmark set and never removed. `certifier` maps the
/// augmented geometry to a certified fraction in `[0, 1]`.
pub fn completion_curve(
    start: &ResponseGeometry,
    pool: &ProbePool,
    policy: CompletionPolicy,
    certifier: &dyn Fn(&ResponseGeometry) -> Result<f64>,
    budgets: &[f64],
    measured: Option<&BTreeMap<String, Vec<f64>>>,
) -> Result<CompletionCurve> {
    if budgets.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(CoreError::validation("budgets must be finite and nonnegative"));
    }
    if budgets.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CoreError::validation("budget grid must be strictly increasing"));
    }
    let mut geometry = start.clone();
    let mut current = certifier(&geometry)?;
    let start_fraction = current;
    let mut remaining: Vec<&Probe> = pool.probes().iter().collect();
    let mut spent = 0.0;
    let mut order = Vec::new();
    let mut steps = Vec::new();
    let mut points = Vec::with_capacity(budgets.len());

    for &budget in budgets {
        loop {
            let affordable: Vec<&Probe> = remaining
                .iter()
                .copied()
                .filter(|p| spent + p.cost <= budget + 1e-12 * budget.max(1.0))
                .collect();
            if affordable.is_empty() {
                break;
            }
            let base = current;
            let geo_ref = &geometry;
            let gain = move |p: &Probe| -> Result<f64> { Ok(certifier(&geo_ref.with_probe(&p.vector)?)? - base) };
            let context = SelectionContext {
                measured,
                oracle_gain: Some(&gain),
                step: order.len() as u64,
            };
            let chosen = select_among(&geometry, &affordable, policy, &context)?;
            let next = geometry.with_probe(&chosen.vector)?;
            current = certifier(&next)?;
            geometry = next;
            spent += chosen.cost;
            order.push(chosen.id.clone());
            steps.push(SelectionStep {
                step: order.len(),
                probe_id: chosen.id.clone(),
                cost: chosen.cost,
                cumulative_cost: spent,
                residual_norm: geometry.residual_norm(),
                certified_fraction: current,
            });
            let id = chosen.id.clone();
            remaining.retain(|p| p.id != id);
        }
        points.push(CurvePoint {
            budget,
            spent,
            probes: order.len(),
            residual_norm: geometry.residual_norm(),
            certified_fraction: current,
        });
    }
    Ok(CompletionCurve {
        policy: policy.name().to_owned(),
        upper_bound_only: policy.is_upper_bound_only(),
        start_fraction,
        points,
        order,
        steps,
    })
}

/// Smallest grid budget whose certified fraction reaches `1 - ε`, if any.
pub fn kappa_epsilon(curve: &CompletionCurve, epsilon: f64) -> Result<Option<f64>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(CoreError::validation(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    let target = 1.0 - epsilon;
    Ok(curve
        .points
        .iter()
        .find(|p| p.certified_fraction >= target - 1e-12)
        .map(|p| p.budget))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    fn probe(id: &str, v: Vec<f64>, cost: f64) -> Probe {
        Probe {
            id: id.into(),
            vector: v,
            cost,
        }
    }

    #[test]
    fn delta_cases() {
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 3)], &e(1, 3)).unwrap();
        assert_eq!(delta_q(&g, &[2.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((delta_q(&g, &e(1, 3)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(updated_residual(&g, &e(1, 3)).unwrap(), 0.0);
        assert_eq!(updated_residual(&g, &e(2, 3)).unwrap(), 1.0);
        assert!(delta_q(&g, &[0.0; 3]).is_err());
        assert!(delta_q(&g, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn greedy_prefers_residual_direction() {
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 3)], &e(1, 3)).unwrap();
        let pool = ProbePool::new(vec![probe("q1", e(1, 3), 1.0), probe("q2", e(2, 3), 1.0)]).unwrap();
        let p = select_probe(&g, &pool, CompletionPolicy::ResidualGreedy, &SelectionContext::default())
            .unwrap();
        assert_eq!(p.id, "q1");
    }

    #[test]
    fn greedy_is_cost_normalized() {
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 3)], &e(1, 3)).unwrap();
        // q2 recovers half of g²: its out-of-span part is at 45° to r★.
        let pool = ProbePool::new(vec![
            probe("q1", e(1, 3), 100.0),
            probe("q2", vec![0.0, 1.0, 1.0], 1.0),
        ])
        .unwrap();
        assert!((delta_q(&g, &pool.probes()[1].vector).unwrap() - 0.5).abs() < 1e-15);
        let p = select_probe(&g, &pool, CompletionPolicy::ResidualGreedy, &SelectionContext::default())
            .unwrap();
        assert_eq!(p.id, "q2");
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 3)], &[0.0, 1.0, 1.0]).unwrap();
        let pool = ProbePool::new(vec![
            probe("b", e(2, 3), 1.0),
            probe("a", e(1, 3), 1.0),
            probe("c", vec![0.0, 2.0, 0.0], 1.0),
        ])
        .unwrap();
        let p = select_probe(&g, &pool, CompletionPolicy::ResidualGreedy, &SelectionContext::default())
            .unwrap();
        assert_eq!(p.id, "a");
    }

    #[test]
    fn empty_pool_and_missing_context_error() {
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 2)], &e(1, 2)).unwrap();
        let empty = ProbePool::default();
        assert!(select_probe(&g, &empty, CompletionPolicy::ResidualGreedy, &SelectionContext::default())
            .is_err());
        let pool = ProbePool::new(vec![probe("a", e(1, 2), 1.0)]).unwrap();
        assert!(select_probe(&g, &pool, CompletionPolicy::Uncertainty, &SelectionContext::default())
            .is_err());
        assert!(ProbePool::new(vec![probe("a", e(1, 2), 0.0)]).is_err());
        assert!(ProbePool::new(vec![probe("a", e(1, 2), 1.0), probe("a", e(0, 2), 1.0)]).is_err());
    }

    #[test]
    fn uncertainty_and_alignment_and_diversity() {
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 3)], &e(2, 3)).unwrap();
        let pool = ProbePool::new(vec![
            probe("a", vec![1.0, 0.1, 0.0], 1.0),
            probe("b", vec![0.0, 1.0, 0.0], 1.0),
        ])
        .unwrap();
        let mut measured = BTreeMap::new();
        measured.insert("a".to_string(), vec![0.0, 0.1, 0.2]);
        measured.insert("b".to_string(), vec![0.0, 1.0, 2.0]);
        let ctx = SelectionContext {
            measured: Some(&measured),
            ..Default::default()
        };
        assert_eq!(select_probe(&g, &pool, CompletionPolicy::Uncertainty, &ctx).unwrap().id, "b");
        assert_eq!(
            select_probe(&g, &pool, CompletionPolicy::BenchmarkAligned, &ctx).unwrap().id,
            "a"
        );
        assert_eq!(select_probe(&g, &pool, CompletionPolicy::Diversity, &ctx).unwrap().id, "b");
    }

    #[test]
    fn random_policy_is_seeded() {
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 4)], &e(1, 4)).unwrap();
        let pool = ProbePool::new((0..4).map(|i| probe(&format!("p{i}"), e(i, 4), 1.0)).collect())
            .unwrap();
        let ctx = SelectionContext::default();
        let a = select_probe(&g, &pool, CompletionPolicy::Random { seed: 9 }, &ctx).unwrap();
        let b = select_probe(&g, &pool, CompletionPolicy::Random { seed: 9 }, &ctx).unwrap();
        assert_eq!(a.id, b.id);
    }

    fn point_certifier(geometry: &ResponseGeometry) -> Result<f64> {
        // Certified iff |center - τ| > δ + R g over a fixed set of centers.
        let centers = [-1.0, -0.5, -0.1, 0.05, 0.2, 0.8, 1.2, 2.0];
        let w = 0.1 + geometry.residual_norm();
        Ok(centers.iter().filter(|c| (*c - 0.0f64).abs() > w).count() as f64 / centers.len() as f64)
    }

    #[test]
    fn empty_pool_curve_is_flat() {
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 3)], &[0.0, 0.6, 0.8]).unwrap();
        let c = completion_curve(
            &g,
            &ProbePool::default(),
            CompletionPolicy::ResidualGreedy,
            &point_certifier,
            &[0.0, 1.0, 2.0],
            None,
        )
        .unwrap();
        assert!(c.points.iter().all(|p| p.certified_fraction == c.start_fraction));
    }

    #[test]
    fn completing_the_deployment_probe_reaches_delta_limit() {
        let k = vec![0.0, 0.6, 0.8];
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 3)], &k).unwrap();
        let pool = ProbePool::new(vec![probe("kstar", k.clone(), 1.0)]).unwrap();
        let c = completion_curve(
            &g,
            &pool,
            CompletionPolicy::ResidualGreedy,
            &point_certifier,
            &[0.0, 1.0],
            None,
        )
        .unwrap();
        assert_eq!(c.points[0].probes, 0);
        assert_eq!(c.points[1].residual_norm, 0.0);
        // With g = 0 only |center| > δ = 0.1 remains: 6 of 8.
        assert_eq!(c.points[1].certified_fraction, 0.75);
        assert_eq!(c.order, vec!["kstar"]);
    }

    #[test]
    fn oracle_curve_is_flagged() {
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 3)], &[0.0, 0.6, 0.8]).unwrap();
        let pool = ProbePool::new(vec![probe("a", e(1, 3), 1.0), probe("b", e(2, 3), 1.0)]).unwrap();
        let c = completion_curve(
            &g,
            &pool,
            CompletionPolicy::OracleUpperBound,
            &point_certifier,
            &[1.0],
            None,
        )
        .unwrap();
        assert!(c.upper_bound_only);
        assert_eq!(c.order, vec!["b"]);
    }

    #[test]
    fn kappa_examples() {
        let curve = |fr: &[(f64, f64)]| CompletionCurve {
            policy: "x".into(),
            upper_bound_only: false,
            start_fraction: fr[0].1,
            points: fr
                .iter()
                .map(|&(b, f)| CurvePoint {
                    budget: b,
                    spent: b,
                    probes: 0,
                    residual_norm: 0.0,
                    certified_fraction: f,
                })
                .collect(),
            order: vec![],
            steps: vec![],
        };
        let c = curve(&[(0.0, 0.4), (1.0, 0.9), (2.0, 1.0)]);
        assert_eq!(kappa_epsilon(&c, 1.0).unwrap(), Some(0.0));
        assert_eq!(kappa_epsilon(&c, 0.1).unwrap(), Some(1.0));
        let low = curve(&[(0.0, 0.2), (5.0, 0.7)]);
        assert_eq!(kappa_epsilon(&low, 0.1).unwrap(), None);
        assert!(kappa_epsilon(&c, 1.5).is_err());
    }

    #[test]
    fn budgets_must_increase() {
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 2)], &e(1, 2)).unwrap();
        assert!(completion_curve(
            &g,
            &ProbePool::default(),
            CompletionPolicy::ResidualGreedy,
            &point_certifier,
            &[1.0, 1.0],
            None
        )
        .is_err());
    }
}
