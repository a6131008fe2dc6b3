//! Acquisition cost accounting for certify-then-acquire against benchmark-only decisions.

use serde::Serialize;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostModel {
    pub c_fp: f64,
    pub c_fn: f64,
    pub c_acq: f64,
}

impl CostModel {
    pub fn new(c_fp: f64, c_fn: f64, c_acq: f64) -> Result<Self> {
        for (name, v) in [("false-positive", c_fp), ("false-negative", c_fn), ("acquisition", c_acq)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CoreError::validation(format!("{name} cost {v} must be nonnegative")));
            }
        }
        Ok(Self { c_fp, c_fn, c_acq })
    }

    /// Benchmark-only cost `C_FP·FP + C_FN·FN`.
    pub fn benchmark_cost(&self, fp: usize, fn_: usize) -> f64 {
        self.c_fp * fp as f64 + self.c_fn * fn_ as f64
    }

    /// Certify-then-acquire cost, errors plus `C_acq` per deferred candidate.
    pub fn completion_cost(&self, fp: usize, fn_: usize, deferred: usize) -> f64 {
        self.benchmark_cost(fp, fn_) + self.c_acq * deferred as f64
    }
}

/// `(false_bench - false_comp) / acquired`: the per-acquisition price, in units
/// of one false decision, below which acquiring is worthwhile.
pub fn break_even(false_bench: usize, false_comp: usize, acquired: usize) -> Option<f64> {
    (acquired > 0).then(|| (false_bench as f64 - false_comp as f64) / acquired as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    /// `C_FP / C_FN`, with `C_FN = 1`.
    pub ratio: f64,
    pub c_fp: f64,
    pub c_fn: f64,
    pub break_even_acq: f64,
    /// False when the break-even price is negative: completion never pays.
    pub cost_effective: bool,
}

/// Log-spaced cost ratios from 0.1 to 10 inclusive; odd `points` include 1.
pub fn log_ratio_grid(points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![1.0],
        _ => (0..points)
            .map(|i| 10f64.powf(-1.0 + 2.0 * i as f64 / (points - 1) as f64))
            .collect(),
    }
}

/// Break-even acquisition price under asymmetric error costs.
pub fn asymmetric_sweep(
    fp_bench: usize,
    fn_bench: usize,
    fp_comp: usize,
    fn_comp: usize,
    n_defer: usize,
    ratios: &[f64],
) -> Result<Vec<SweepRow>> {
    if n_defer == 0 {
        return Err(CoreError::validation("asymmetric sweep needs at least one deferred candidate"));
    }
    let d_fp = fp_bench as f64 - fp_comp as f64;
    let d_fn = fn_bench as f64 - fn_comp as f64;
    ratios
        .iter()
        .map(|&ratio| {
            if !(ratio.is_finite() && ratio > 0.0) {
                return Err(CoreError::validation(format!("cost ratio {ratio} must be positive")));
            }
            let c = ratio * d_fp + d_fn;
            let break_even_acq = c / n_defer as f64;
            Ok(SweepRow {
                ratio,
                c_fp: ratio,
                c_fn: 1.0,
                break_even_acq,
                cost_effective: break_even_acq >= 0.0,
            })
        })
        .collect()
}
