//! Linear response-rank geometry.
//!
//! Benchmark probes `k_1..k_m` span a subspace `B`. The deployment probe `k★`
//! splits into a benchmark-visible part `P_B k★` and the benchmark-null
//! residual `r★ = (I - P_B) k★` with norm `g`. Any two states differing by a
//! multiple of `r★` produce identical benchmark evidence, and a declared
//! benchmark-null radius `R` bounds the deployment ambiguity by `R g`.

use serde::Serialize;

use crate::audit::ThresholdClass;
use crate::error::{CoreError, Result};
use crate::linalg::{dot, norm, scale, SpanBasis, DEFAULT_RANK_TOLERANCE};

/// Immutable response geometry with cached span basis and residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseGeometry {
    probes: Vec<Vec<f64>>,
    deployment: Vec<f64>,
    basis: SpanBasis,
    residual: Vec<f64>,
    g: f64,
}

impl ResponseGeometry {
    /// Builds the span basis of `probes` and the residual of `deployment`.
    ///
    /// A residual with norm at most `rank_tolerance * ‖k★‖` is snapped to zero,
    /// so `g == 0.0` exactly when the deployment probe is in the span.
    pub fn build(probes: &[Vec<f64>], deployment: &[f64], rank_tolerance: f64) -> Result<Self> {
        let dim = deployment.len();
        if dim == 0 {
            return Err(CoreError::validation("deployment probe has dimension zero"));
        }
        for (j, p) in probes.iter().enumerate() {
            if p.len() != dim {
                return Err(CoreError::validation(format!(
                    "dimension mismatch: probe {j} has {} coordinates, deployment probe has {dim}",
                    p.len()
                )));
            }
        }
        if deployment.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::validation("deployment probe has non-finite coordinates"));
        }
        let kn = norm(deployment);
        if kn == 0.0 {
            return Err(CoreError::validation("deployment probe has zero norm"));
        }
        let basis = SpanBasis::from_vectors(dim, probes, rank_tolerance)?;
        let mut residual = basis.residual(deployment);
        let mut g = norm(&residual);
        if g <= rank_tolerance * kn {
            residual.iter_mut().for_each(|x| *x = 0.0);
            g = 0.0;
        }
        Ok(Self {
            probes: probes.to_vec(),
            deployment: deployment.to_vec(),
            basis,
            residual,
            g,
        })
    }

    pub fn with_default_tolerance(probes: &[Vec<f64>], deployment: &[f64]) -> Result<Self> {
        Self::build(probes, deployment, DEFAULT_RANK_TOLERANCE)
    }

    /// A new geometry with `probe` appended to the benchmark set.
    pub fn with_probe(&self, probe: &[f64]) -> Result<Self> {
        let mut probes = self.probes.clone();
        probes.push(probe.to_vec());
        Self::build(&probes, &self.deployment, self.rank_tolerance())
    }

    pub fn dim(&self) -> usize {
        self.deployment.len()
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn rank_tolerance(&self) -> f64 {
        self.basis.rank_tolerance()
    }

    pub fn probes(&self) -> &[Vec<f64>] {
        &self.probes
    }

    pub fn deployment_probe(&self) -> &[f64] {
        &self.deployment
    }

    pub fn basis(&self) -> &SpanBasis {
        &self.basis
    }

    /// `r★ = (I - P_B) k★`.
    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    /// `g = ‖r★‖`.
    pub fn residual_norm(&self) -> f64 {
        self.g
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.basis.project(v)
    }

    pub fn null_component(&self, v: &[f64]) -> Vec<f64> {
        self.basis.residual(v)
    }

    /// `P_B k★`, the benchmark-visible part of the deployment probe.
    pub fn visible_deployment(&self) -> Vec<f64> {
        self.basis.project(&self.deployment)
    }

    /// Benchmark-based center `⟨P_B k★, s⟩` for a latent state. This depends on
    /// `s` only through the benchmark evidence `⟨k_j, s⟩`.
    pub fn center(&self, state: &[f64]) -> f64 {
        let coords_k = self.basis.coordinates(&self.deployment);
        let coords_s = self.basis.coordinates(state);
        dot(&coords_k, &coords_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessPair {
    pub s0: Vec<f64>,
    pub s1: Vec<f64>,
    /// `max_j |⟨k_j, s1 - s0⟩|`; zero up to rounding.
    pub benchmark_gap: f64,
    /// `Y★(s1) - Y★(s0) = t g²`.
    pub deployment_gap: f64,
}

/// Two states with identical benchmark evidence but different deployment response.
pub fn witness_pair(geometry: &ResponseGeometry, t: f64) -> Result<WitnessPair> {
    if t == 0.0 || !t.is_finite() {
        return Err(CoreError::validation("witness scale t must be a nonzero finite number"));
    }
    let g = geometry.residual_norm();
    let kn = norm(geometry.deployment_probe());
    if g <= geometry.rank_tolerance() * kn {
        return Err(CoreError::NoWitness { residual: g });
    }
    let s0 = vec![0.0; geometry.dim()];
    let s1 = scale(t, geometry.residual());
    let benchmark_gap = geometry
        .probes()
        .iter()
        .map(|k| dot(k, &s1).abs())
        .fold(0.0, f64::max);
    Ok(WitnessPair {
        s0,
        s1,
        benchmark_gap,
        deployment_gap: t * g * g,
    })
}

/// Per-candidate inputs of an interval certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CandidateBound {
    /// Benchmark-based predicted deployment response `ŷ_c`.
    pub center: f64,
    /// Benchmark-channel error bound `δ_c`.
    pub delta: f64,
    /// Declared benchmark-null radius `R_c`.
    pub radius: f64,
}

impl CandidateBound {
    pub fn new(center: f64, delta: f64, radius: f64) -> Result<Self> {
        if !center.is_finite() {
            return Err(CoreError::validation("center must be finite"));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(CoreError::validation(format!("delta must be finite and >= 0, got {delta}")));
        }
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(CoreError::validation(format!("radius must be finite and >= 0, got {radius}")));
        }
        Ok(Self { center, delta, radius })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalCertificate {
    pub lo: f64,
    pub hi: f64,
    pub tau: f64,
    pub class: ThresholdClass,
}

impl IntervalCertificate {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }
}

/// Interval `ŷ ± (δ + R g)` classified against `τ`.
pub fn certify_interval(bound: CandidateBound, g: f64, tau: f64) -> IntervalCertificate {
    debug_assert!(g >= 0.0);
    let w = bound.delta + bound.radius * g;
    let lo = bound.center - w;
    let hi = bound.center + w;
    IntervalCertificate {
        lo,
        hi,
        tau,
        class: ThresholdClass::of_range(lo, hi, tau),
    }
}

/// Bound `g ‖s' - s‖` on the deployment change along a benchmark-null step.
pub fn fiber_variation_bound(g: f64, step_norm: f64) -> f64 {
    g * step_norm
}

/// The radius multipliers used for sensitivity tables.
pub const RADIUS_SENSITIVITY_FACTORS: [f64; 6] = [0.5, 0.75, 1.0, 1.25, 1.5, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusSensitivityRow {
    pub factor: f64,
    pub certified: usize,
    pub certified_fraction: f64,
}

/// Certified counts with every `R_c` multiplied by each sensitivity factor.
pub fn radius_sensitivity(bounds: &[CandidateBound], g: f64, tau: f64) -> Vec<RadiusSensitivityRow> {
    RADIUS_SENSITIVITY_FACTORS
        .iter()
        .map(|&factor| {
            let certified = bounds
                .iter()
                .filter(|b| {
                    let scaled = CandidateBound {
                        radius: b.radius * factor,
                        ..**b
                    };
                    certify_interval(scaled, g, tau).class.is_certified()
                })
                .count();
            RadiusSensitivityRow {
                factor,
                certified,
                certified_fraction: if bounds.is_empty() {
                    0.0
                } else {
                    certified as f64 / bounds.len() as f64
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearizedBound {
    /// `g_J = ‖(I - P_{J_B}) ∇y★‖`.
    pub g_j: f64,
    /// `R_c g_J + L★ R_c² / 2`.
    pub bound: f64,
}

/// Local bound for a differentiable response from supplied benchmark gradients.
pub fn linearized_residual(
    benchmark_gradients: &[Vec<f64>],
    deployment_gradient: &[f64],
    radius: f64,
    curvature: f64,
) -> Result<LinearizedBound> {
    if !(radius >= 0.0) || !(curvature >= 0.0) {
        return Err(CoreError::validation("radius and curvature bound must be nonnegative"));
    }
    let dim = deployment_gradient.len();
    if dim == 0 {
        return Err(CoreError::validation("deployment gradient has dimension zero"));
    }
    for (j, row) in benchmark_gradients.iter().enumerate() {
        if row.len() != dim {
            return Err(CoreError::validation(format!(
                "dimension mismatch: gradient row {j} has {} entries, deployment gradient has {dim}",
                row.len()
            )));
        }
    }
    let g_j = if norm(deployment_gradient) == 0.0 {
        0.0
    } else {
        ResponseGeometry::with_default_tolerance(benchmark_gradients, deployment_gradient)?
            .residual_norm()
    };
    Ok(LinearizedBound {
        g_j,
        bound: radius * g_j + 0.5 * curvature * radius * radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    #[test]
    fn orthogonal_deployment_has_unit_residual() {
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 3), e(1, 3)], &e(2, 3)).unwrap();
        assert_eq!(g.residual_norm(), 1.0);
    }

    #[test]
    fn diagonal_deployment_residual() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 3), e(1, 3)], &[s, 0.0, s]).unwrap();
        assert!((g.residual_norm() - 0.707107).abs() < 1e-6);
    }

    #[test]
    fn in_span_deployment_snaps_to_zero() {
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 3), e(1, 3)], &[0.3, -2.0, 1e-14])
            .unwrap();
        assert_eq!(g.residual_norm(), 0.0);
        assert!(matches!(witness_pair(&g, 1.0), Err(CoreError::NoWitness { .. })));
    }

    #[test]
    fn build_errors() {
        assert!(ResponseGeometry::with_default_tolerance(&[e(0, 3)], &[0.0; 3]).is_err());
        assert!(ResponseGeometry::with_default_tolerance(&[e(0, 2)], &e(0, 3)).is_err());
    }

    #[test]
    fn witness_pair_gaps() {
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 2)], &e(1, 2)).unwrap();
        let w = witness_pair(&g, 1.0).unwrap();
        assert_eq!(w.deployment_gap, 1.0);
        assert!(w.benchmark_gap <= 1e-12);
        // t = 2, g = 0.5
        let g = ResponseGeometry::with_default_tolerance(&[e(0, 2)], &[1.0, 0.5]).unwrap();
        assert_eq!(witness_pair(&g, 2.0).unwrap().deployment_gap, 0.5);
    }

    #[test]
    fn interval_certificate_examples() {
        let c = certify_interval(CandidateBound::new(1.0, 0.0, 0.0).unwrap(), 0.7, 0.5);
        assert_eq!((c.lo, c.hi, c.class), (1.0, 1.0, ThresholdClass::CertifiedPositive));

        let c = certify_interval(CandidateBound::new(0.5, 0.1, 0.2).unwrap(), 0.5, 0.3);
        assert!((c.lo - 0.3).abs() < 1e-15 && (c.hi - 0.7).abs() < 1e-15);
        assert_eq!(c.class, ThresholdClass::Ambiguous);

        let c = certify_interval(CandidateBound::new(0.0, 0.0, 1.0).unwrap(), 0.3, 0.5);
        assert_eq!((c.lo, c.hi, c.class), (-0.3, 0.3, ThresholdClass::CertifiedNegative));
    }

    #[test]
    fn exact_lower_boundary_is_not_positive() {
        let c = certify_interval(CandidateBound::new(0.75, 0.25, 0.0).unwrap(), 0.0, 0.5);
        assert_eq!(c.lo, 0.5);
        assert_eq!(c.class, ThresholdClass::Ambiguous);
    }

    #[test]
    fn bound_validation() {
        assert!(CandidateBound::new(0.0, -0.1, 0.0).is_err());
        assert!(CandidateBound::new(0.0, 0.0, -1.0).is_err());
        assert!(CandidateBound::new(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn variation_bound() {
        assert_eq!(fiber_variation_bound(0.0, 123.0), 0.0);
        assert_eq!(fiber_variation_bound(0.5, 2.0), 1.0);
    }

    #[test]
    fn linearized_examples() {
        let b = linearized_residual(&[e(0, 3), e(1, 3)], &[1.0, 2.0, 0.0], 2.0, 3.0).unwrap();
        assert_eq!(b.g_j, 0.0);
        assert_eq!(b.bound, 0.5 * 3.0 * 4.0);
        let b = linearized_residual(&[e(0, 2)], &e(1, 2), 1.0, 0.0).unwrap();
        assert_eq!(b.bound, 1.0);
        assert!(linearized_residual(&[e(0, 2)], &e(1, 2), -1.0, 0.0).is_err());
    }

    #[test]
    fn radius_sweep_is_monotone() {
        let bounds: Vec<CandidateBound> = (0..20)
            .map(|i| CandidateBound::new(i as f64 * 0.1, 0.05, 1.0).unwrap())
            .collect();
        let rows = radius_sensitivity(&bounds, 0.3, 1.0);
        assert_eq!(rows.len(), 6);
        for w in rows.windows(2) {
            assert!(w[1].certified <= w[0].certified);
        }
    }
}
