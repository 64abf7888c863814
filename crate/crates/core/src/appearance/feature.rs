use std::sync::Arc;

use crate::error::{Error, Result};

/// L2-normalized appearance descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Arc<[f64]>);

impl FeatureVector {
    /// Normalizes `values` to unit length.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !values.iter().all(|v| v.is_finite()) {
            return Err(Error::DegenerateFeature);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateFeature);
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }
}

/// `1 - fᵀg`, clamped to `[0, 2]`.
pub fn cosine_distance(f: &FeatureVector, g: &FeatureVector) -> f64 {
    (1.0 - f.dot(g)).clamp(0.0, 2.0)
}
