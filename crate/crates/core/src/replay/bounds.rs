//! One-sided Clopper–Pearson upper bounds on a fiber's discordance rate.

use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{CoreError, Result};

fn check(n: usize, delta: f64) -> Result<()> {
    if n == 0 {
        return Err(CoreError::validation("Clopper-Pearson bound needs n >= 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CoreError::validation(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Upper `1 - δ` bound when none of `n` observations disagree: `1 - δ^{1/n}`.
pub fn clopper_pearson_zero(n: usize, delta: f64) -> Result<f64> {
    check(n, delta)?;
    // -expm1(ln δ / n) keeps precision for large n.
    Ok(-(delta.ln() / n as f64).exp_m1())
}

/// Upper `1 - δ` bound on the rate after `k` disagreements in `n` observations.
pub fn clopper_pearson_upper(k: usize, n: usize, delta: f64) -> Result<f64> {
    check(n, delta)?;
    if k > n {
        return Err(CoreError::validation(format!("{k} disagreements exceed support {n}")));
    }
    if k == 0 {
        return clopper_pearson_zero(n, delta);
    }
    if k == n {
        return Ok(1.0);
    }
    let beta = Beta::new((k + 1) as f64, (n - k) as f64)
        .map_err(|e| CoreError::Numerical(format!("beta distribution: {e}")))?;
    let p = beta.inverse_cdf(1.0 - delta);
    if !p.is_finite() {
        return Err(CoreError::Numerical("beta quantile is not finite".into()));
    }
    Ok(p.clamp(0.0, 1.0))
}
