//! Nonnegative feature vectors describing items.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A k-dimensional vector of nonnegative feature weights.
///
/// Construction rejects negative or non-finite components; an all-zero
/// vector is representable (some operations reject it where it is
/// meaningless, e.g. normalization and belief updates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("feature vector", "must have dimension >= 1"));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(
                    "feature vector",
                    format!("component {i} is {v}; components must be finite and >= 0"),
                ));
            }
        }
        Ok(Self { values })
    }

    /// Unit basis vector `e_j` of dimension `k`.
    pub fn basis(k: usize, j: usize) -> Self {
        assert!(j < k, "basis index out of range");
        let mut values = vec![0.0; k];
        values[j] = 1.0;
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Count of components strictly greater than zero.
    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    /// Indices and values of the strictly positive components.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v > 0.0)
            .map(|(i, &v)| (i, v))
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        debug_assert_eq!(self.values.len(), other.len());
        self.nonzeros().map(|(i, v)| v * other[i]).sum()
    }

    /// True when the L1 norm is 1 within `tol` (all-zero vectors are not
    /// normalized).
    pub fn is_l1_normalized(&self, tol: f64) -> bool {
        (self.l1_norm() - 1.0).abs() <= tol
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        FeatureVector::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.values
    }
}

/// Scale `v` so its components sum to 1, preserving order.
///
/// Fails on an all-zero vector: such items have undefined observation
/// variance and zero reward, so they are surfaced rather than dropped.
pub fn l1_normalize(v: &FeatureVector) -> Result<FeatureVector> {
    let norm = v.l1_norm();
    if norm <= 0.0 {
        return Err(Error::ZeroVector {
            context: None,
            reason: "cannot L1-normalize a vector with no positive component",
        });
    }
    Ok(FeatureVector {
        values: v.values.iter().map(|&x| x / norm).collect(),
    })
}

/// Count of strictly positive components of `v`.
pub fn nonzero_count(v: &FeatureVector) -> usize {
    v.nonzero_count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normalize_binary_category_vector() {
        let v = FeatureVector::new(vec![1.0, 1.0, 0.0]).unwrap();
        let n = l1_normalize(&v).unwrap();
        assert_eq!(n.values(), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn normalize_is_identity_on_normalized_input() {
        let v = FeatureVector::new(vec![0.2, 0.8]).unwrap();
        let n = l1_normalize(&v).unwrap();
        assert_abs_diff_eq!(n.values()[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(n.values()[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn normalize_divides_by_component_sum() {
        let v = FeatureVector::new(vec![2.0, 0.0, 6.0]).unwrap();
        let n = l1_normalize(&v).unwrap();
        assert_eq!(n.values(), &[0.25, 0.0, 0.75]);
    }

    #[test]
    fn normalize_rejects_zero_vector() {
        let v = FeatureVector::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(l1_normalize(&v), Err(Error::ZeroVector { .. })));
    }

    #[test]
    fn nonzero_counts() {
        let count = |vals: Vec<f64>| nonzero_count(&FeatureVector::new(vals).unwrap());
        assert_eq!(count(vec![0.5, 0.0, 0.5]), 2);
        assert_eq!(count(vec![0.0, 0.0, 0.0]), 0);
        assert_eq!(count(vec![0.1, 0.2, 0.3, 0.4]), 4);
    }

    #[test]
    fn rejects_negative_components() {
        assert!(FeatureVector::new(vec![0.5, -0.1]).is_err());
        assert!(FeatureVector::new(vec![f64::NAN]).is_err());
    }
}
