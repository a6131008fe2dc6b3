//! Loss-aware empirical Bayes risk and value of evidence over fiber partitions.

use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::fiber::FiberPartition;

/// Square loss matrix `ℓ(a, a')`: cost of taking action `a` when `a'` is right.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossMatrix {
    values: Vec<Vec<f64>>,
}

impl LossMatrix {
    /// Entries must be finite and nonnegative with a zero diagonal.
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(CoreError::validation("loss matrix is empty"));
        }
        for (a, row) in values.iter().enumerate() {
            if row.len() != n {
                return Err(CoreError::validation(format!(
                    "loss matrix row {a} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (b, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(CoreError::validation(format!(
                        "loss ({a}, {b}) = {v} must be finite and nonnegative"
                    )));
                }
                if a == b && v != 0.0 {
                    return Err(CoreError::validation(format!("loss diagonal ({a}, {a}) must be zero")));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn zero_one(actions: usize) -> Self {
        let values = (0..actions)
            .map(|a| (0..actions).map(|b| if a == b { 0.0 } else { 1.0 }).collect())
            .collect();
        Self { values }
    }

    pub fn actions(&self) -> usize {
        self.values.len()
    }

    pub fn loss(&self, action: usize, truth: usize) -> f64 {
        self.values[action][truth]
    }
}

fn check_labels(partition: &FiberPartition, labels: &[usize], loss: &LossMatrix) -> Result<()> {
    if labels.len() != partition.n {
        return Err(CoreError::validation(format!(
            "{} labels for {} candidates",
            labels.len(),
            partition.n
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= loss.actions()) {
        return Err(CoreError::validation(format!(
            "label index {bad} outside the {}-action loss matrix",
            loss.actions()
        )));
    }
    Ok(())
}

/// `R = (1/N) Σ_z min_a Σ_{s ∈ C_z} ℓ(a, label(s))`.
pub fn empirical_bayes_risk(partition: &FiberPartition, labels: &[usize], loss: &LossMatrix) -> Result<f64> {
    let groups = partition.groups()?;
    check_labels(partition, labels, loss)?;
    if partition.n == 0 {
        return Err(CoreError::validation("empty partition"));
    }
    let total: f64 = groups
        .values()
        .map(|members| {
            (0..loss.actions())
                .map(|a| members.iter().map(|&i| loss.loss(a, labels[i])).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / partition.n as f64)
}

/// True when every fiber of `after` lies inside a single fiber of `before`.
pub fn refines(before: &FiberPartition, after: &FiberPartition) -> Result<bool> {
    if before.n != after.n {
        return Err(CoreError::validation(format!(
            "partitions cover {} and {} candidates",
            before.n, after.n
        )));
    }
    let mut owner = vec![usize::MAX; before.n];
    for (g, members) in before.groups()?.values().enumerate() {
        for &i in members {
            owner[i] = g;
        }
    }
    Ok(after
        .groups()?
        .values()
        .all(|members| members.iter().all(|&i| owner[i] == owner[members[0]])))
}

/// `R(before) - R(after)`; `after` must refine `before`.
pub fn expected_value_of_information(
    before: &FiberPartition,
    after: &FiberPartition,
    labels: &[usize],
    loss: &LossMatrix,
) -> Result<f64> {
    if !refines(before, after)? {
        return Err(CoreError::validation(
            "the post-acquisition partition does not refine the current one",
        ));
    }
    let evi = empirical_bayes_risk(before, labels, loss)? - empirical_bayes_risk(after, labels, loss)?;
    // Refinement makes the difference nonnegative up to summation order.
    Ok(if evi.abs() < 1e-12 { 0.0 } else { evi })
}

/// Risk after acquisition, its cost, and their sum. Units are the caller's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostAwareObjective {
    pub risk: f64,
    pub cost: f64,
    pub total: f64,
}

pub fn cost_aware_objective(
    after: &FiberPartition,
    labels: &[usize],
    loss: &LossMatrix,
    cost: f64,
) -> Result<CostAwareObjective> {
    if !(cost.is_finite() && cost >= 0.0) {
        return Err(CoreError::validation(format!("acquisition cost {cost} must be nonnegative")));
    }
    let risk = empirical_bayes_risk(after, labels, loss)?;
    Ok(CostAwareObjective {
        risk,
        cost,
        total: risk + cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::{FiberKey, FiberRule};

    fn part(keys: &[&str]) -> FiberPartition {
        FiberPartition::from_keys(
            FiberRule::ExactPattern,
            keys.iter().map(|k| FiberKey::Tokens(vec![k.to_string()])).collect(),
        )
    }

    #[test]
    fn zero_one_matches_bayes_error() {
        let p = part(&["a", "a", "b", "b", "b"]);
        let labels = [1, 1, 1, 0, 0];
        let r = empirical_bayes_risk(&p, &labels, &LossMatrix::zero_one(2)).unwrap();
        assert!((r - 0.2).abs() < 1e-15);
        assert_eq!(r, crate::audit::bayes_error(&p, &labels).unwrap());
    }

    #[test]
    fn asymmetric_loss() {
        let p = part(&["a", "a", "b", "b", "b"]);
        let loss = LossMatrix::new(vec![vec![0.0, 10.0], vec![1.0, 0.0]]).unwrap();
        let r = empirical_bayes_risk(&p, &[1, 1, 1, 0, 0], &loss).unwrap();
        assert!((r - 0.4).abs() < 1e-15);
    }

    #[test]
    fn pure_fibers_have_zero_risk() {
        let p = part(&["a", "a", "b"]);
        let loss = LossMatrix::new(vec![vec![0.0, 3.0], vec![7.0, 0.0]]).unwrap();
        assert_eq!(empirical_bayes_risk(&p, &[0, 0, 1], &loss).unwrap(), 0.0);
    }

    #[test]
    fn evi_examples() {
        let before = part(&["a", "a", "b", "b", "b"]);
        let after = part(&["a", "a", "b1", "b2", "b3"]);
        let labels = [1, 1, 1, 0, 0];
        let l = LossMatrix::zero_one(2);
        assert_eq!(expected_value_of_information(&before, &before, &labels, &l).unwrap(), 0.0);
        let evi = expected_value_of_information(&before, &after, &labels, &l).unwrap();
        assert!((evi - 0.2).abs() < 1e-15);
        assert!(expected_value_of_information(&after, &before, &labels, &l).is_err());
        let v = cost_aware_objective(&after, &labels, &l, 1.5).unwrap();
        assert_eq!(v.total, v.risk + v.cost);
    }

    #[test]
    fn loss_matrix_validation() {
        assert!(LossMatrix::new(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).is_err());
        assert!(LossMatrix::new(vec![vec![0.0, -1.0], vec![0.0, 0.0]]).is_err());
        assert!(LossMatrix::new(vec![vec![0.0]]).is_ok());
        assert!(LossMatrix::new(vec![]).is_err());
    }
}
