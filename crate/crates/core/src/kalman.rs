//! Constant-velocity Kalman filter over bounding-box centres.
//!
//! The state is `(x, y, vx, vy)` with a fixed step of one frame. Box area and
//! aspect ratio are deliberately absent: swimming strokes make both oscillate,
//! so only the centre of a box ever reaches the filter.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::Serialize;

use crate::error::{Error, Result};

/// Height-relative noise scales. Absolute standard deviations are these
/// factors times the current box height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseFactors {
    pub process_position: f64,
    pub process_velocity: f64,
    pub measurement: f64,
    /// Height used when no box is known.
    pub fallback_height: f64,
}

impl Default for NoiseFactors {
    fn default() -> Self {
        Self {
            process_position: 1.0 / 20.0,
            process_velocity: 1.0 / 160.0,
            measurement: 1.0 / 20.0,
            fallback_height: 100.0,
        }
    }
}

impl NoiseFactors {
    pub fn model_for_height(&self, height: Option<f64>) -> NoiseModel {
        let h = height.filter(|h| *h > 0.0).unwrap_or(self.fallback_height);
        NoiseModel {
            process_position_std: self.process_position * h,
            process_velocity_std: self.process_velocity * h,
            measurement_std: self.measurement * h,
        }
    }
}

/// Absolute noise standard deviations in pixels (per frame where applicable).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub process_position_std: f64,
    pub process_velocity_std: f64,
    pub measurement_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionState {
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

impl MotionState {
    pub fn position(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.mean[2], self.mean[3])
    }
}

fn transition() -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = 1.0;
    f[(1, 3)] = 1.0;
    f
}

fn observation() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

fn symmetrize(p: Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

impl NoiseModel {
    fn measurement_covariance(&self) -> Matrix2<f64> {
        Matrix2::identity() * self.measurement_std.powi(2)
    }

    pub fn initiate(&self, center: (f64, f64)) -> Result<MotionState> {
        if !(center.0.is_finite() && center.1.is_finite()) {
            return Err(Error::Numerical("non-finite initial position"));
        }
        let pos_var = (2.0 * self.measurement_std).powi(2);
        let vel_var = (10.0 * self.measurement_std).powi(2);
        Ok(MotionState {
            mean: Vector4::new(center.0, center.1, 0.0, 0.0),
            covariance: Matrix4::from_diagonal(&Vector4::new(pos_var, pos_var, vel_var, vel_var)),
        })
    }

    pub fn predict(&self, state: &MotionState) -> MotionState {
        let f = transition();
        let qp = self.process_position_std.powi(2);
        let qv = self.process_velocity_std.powi(2);
        let q = Matrix4::from_diagonal(&Vector4::new(qp, qp, qv, qv));
        MotionState {
            mean: f * state.mean,
            covariance: symmetrize(f * state.covariance * f.transpose() + q),
        }
    }

    /// Innovation covariance `H P Hᵀ + R`.
    fn innovation_covariance(&self, state: &MotionState) -> Matrix2<f64> {
        let h = observation();
        h * state.covariance * h.transpose() + self.measurement_covariance()
    }

    pub fn update(&self, state: &MotionState, measurement: (f64, f64)) -> Result<MotionState> {
        if !(measurement.0.is_finite() && measurement.1.is_finite()) {
            return Err(Error::Numerical("non-finite measurement"));
        }
        let h = observation();
        let s = self.innovation_covariance(state);
        let s_inv = s
            .try_inverse()
            .ok_or(Error::Numerical("singular innovation covariance"))?;
        let gain = state.covariance * h.transpose() * s_inv;
        let residual = Vector2::new(measurement.0, measurement.1) - h * state.mean;
        let mean = state.mean + gain * residual;
        let covariance = symmetrize((Matrix4::identity() - gain * h) * state.covariance);
        Ok(MotionState { mean, covariance })
    }

    /// `dᵀ S⁻¹ d` between a measured centre and the state's projected position.
    pub fn squared_mahalanobis(&self, state: &MotionState, measurement: (f64, f64)) -> Result<f64> {
        let s = self.innovation_covariance(state);
        let chol = s.cholesky().ok_or(Error::Numerical(
            "innovation covariance is not positive definite",
        ))?;
        let d = Vector2::new(measurement.0 - state.mean[0], measurement.1 - state.mean[1]);
        let z = chol
            .l()
            .solve_lower_triangular(&d)
            .ok_or(Error::Numerical("singular factor"))?;
        Ok(z.norm_squared())
    }
}
