//! Dense vector helpers and an incrementally built orthonormal span basis.

use crate::error::{CoreError, Result};

/// Relative tolerance below which a direction is treated as lying in a span.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-10;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| alpha * v).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Orthonormal basis of the span of a sequence of vectors.
///
/// Vectors are orthogonalized with modified Gram–Schmidt followed by one
/// re-orthogonalization pass. A vector whose remaining component is at most
/// `rank_tolerance * ‖v‖` is treated as dependent and not added.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanBasis {
    dim: usize,
    rank_tolerance: f64,
    columns: Vec<Vec<f64>>,
}

impl SpanBasis {
    pub fn new(dim: usize, rank_tolerance: f64) -> Result<Self> {
        if dim == 0 {
            return Err(CoreError::validation("ambient dimension must be positive"));
        }
        if !(rank_tolerance > 0.0 && rank_tolerance.is_finite()) {
            return Err(CoreError::validation(format!(
                "rank tolerance must be a positive finite number, got {rank_tolerance}"
            )));
        }
        Ok(Self {
            dim,
            rank_tolerance,
            columns: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    pub fn rank_tolerance(&self) -> f64 {
        self.rank_tolerance
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(CoreError::validation(format!(
                "dimension mismatch: expected {}, got {}",
                self.dim,
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::validation("vector has non-finite coordinates"));
        }
        Ok(())
    }

    /// Component of `v` orthogonal to the span, `(I - P) v`.
    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        for _ in 0..2 {
            for q in &self.columns {
                let c = dot(q, &r);
                axpy(-c, q, &mut r);
            }
        }
        r
    }

    /// Orthogonal projection `P v` onto the span.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let r = self.residual(v);
        sub(v, &r)
    }

    /// Coordinates `Qᵀ v` in the orthonormal basis.
    pub fn coordinates(&self, v: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|q| dot(q, v)).collect()
    }

    /// Adds `v` to the span. Returns `false` if it was numerically dependent.
    pub fn push(&mut self, v: &[f64]) -> Result<bool> {
        self.check_dim(v)?;
        let scale_ref = norm(v);
        if scale_ref == 0.0 {
            return Ok(false);
        }
        let r = self.residual(v);
        let rn = norm(&r);
        if rn <= self.rank_tolerance * scale_ref {
            return Ok(false);
        }
        self.columns.push(r.iter().map(|x| x / rn).collect());
        Ok(true)
    }

    /// Basis of the span of `vectors`; dependent directions are skipped.
    pub fn from_vectors(dim: usize, vectors: &[Vec<f64>], rank_tolerance: f64) -> Result<Self> {
        let mut basis = Self::new(dim, rank_tolerance)?;
        for v in vectors {
            basis.push(v)?;
        }
        Ok(basis)
    }
}
