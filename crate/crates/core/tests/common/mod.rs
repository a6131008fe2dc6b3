//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use benchcert_core::{ActionAlphabet, CandidateTable, EvidenceColumn};

/// Finite-fiber statistics computed by a naive double loop over candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveAudit {
    pub cert: f64,
    pub amb: f64,
    pub err: f64,
    pub rho: Option<f64>,
}

pub fn naive_audit(rows: &[Vec<String>], labels: &[usize]) -> NaiveAudit {
    let n = rows.len();
    let mut pure = 0usize;
    let mut err_mass = 0.0;
    for i in 0..n {
        let (mut same, mut ones) = (0usize, 0usize);
        for j in 0..n {
            if rows[j] == rows[i] {
                same += 1;
                ones += labels[j];
            }
        }
        if ones == 0 || ones == same {
            pure += 1;
        }
        // Each member carries its fiber's minority share.
        let p = ones as f64 / same as f64;
        err_mass += p.min(1.0 - p);
    }
    let err = err_mass / n as f64;
    let ones: usize = labels.iter().sum();
    let minority = ones.min(n - ones) as f64 / n as f64;
    NaiveAudit {
        cert: pure as f64 / n as f64,
        amb: (n - pure) as f64 / n as f64,
        err,
        rho: (minority > 0.0).then(|| err / minority),
    }
}

pub fn discrete_table(rows: &[Vec<String>], labels: &[usize]) -> CandidateTable {
    let arity = rows[0].len();
    let cols = (0..arity)
        .map(|c| EvidenceColumn::Discrete {
            name: format!("e_{c}"),
            values: rows.iter().map(|r| r[c].clone()).collect(),
        })
        .collect();
    CandidateTable::new((0..rows.len()).map(|i| format!("c{i:03}")).collect(), cols)
        .unwrap()
        .with_label_indices(ActionAlphabet::binary(), labels.to_vec())
        .unwrap()
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Projection onto span(`basis`) via the normal equations `(BᵀB) c = Bᵀ v`.
/// `basis` must be linearly independent.
pub fn normal_equation_projection(basis: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gram = basis.iter().map(|bi| basis.iter().map(|bj| dot(bi, bj)).collect()).collect();
    let rhs = basis.iter().map(|bi| dot(bi, v)).collect();
    let c = solve(gram, rhs);
    let mut out = vec![0.0; v.len()];
    for (ci, bi) in c.iter().zip(basis) {
        for (o, x) in out.iter_mut().zip(bi) {
            *o += ci * x;
        }
    }
    out
}
