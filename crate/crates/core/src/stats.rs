//! Small summary statistics used by the experiment and replay drivers.

use serde::Serialize;

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Percentile with linear interpolation between order statistics, `p ∈ [0, 100]`.
pub fn percentile(xs: &[f64], p: f64) -> Option<f64> {
    if xs.is_empty() || !(0.0..=100.0).contains(&p) {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Pearson correlation; `None` when either input has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let scale = (sxx * syy).sqrt();
    if scale <= 1e-300 || sxx <= 1e-24 * xs.len() as f64 || syy <= 1e-24 * ys.len() as f64 {
        return None;
    }
    Some((sxy / scale).clamp(-1.0, 1.0))
}

/// Mean and central 95% percentile band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub p2_5: f64,
    pub p97_5: f64,
    pub n: usize,
}

pub fn summarize(xs: &[f64]) -> Option<Summary> {
    Some(Summary {
        mean: mean(xs)?,
        p2_5: percentile(xs, 2.5)?,
        p97_5: percentile(xs, 97.5)?,
        n: xs.len(),
    })
}
