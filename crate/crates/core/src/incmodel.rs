//! Sensor-based incremental model: the one-step-delayed anchor, the
//! incremental output controller, error bookkeeping and the corrupting sensor.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::cbf::ErrorBounds;
use crate::numerics::{norm2, Mat, NumericsError};

pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IncError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("input matrix is singular or ill-conditioned (condition estimate {cond:.3e}); use the allocation path")]
    Singular { cond: f64 },
    #[error("sensor {channel} error {norm:.6e} exceeds its bound {bound:.6e} at t = {t}")]
    BoundViolation { channel: &'static str, t: f64, norm: f64, bound: f64 },
}

/// Anchor of the expansion, one sample in the past.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementState {
    pub y0: Vec<f64>,
    pub u0: Vec<f64>,
    pub y0_dot_meas: Vec<f64>,
    pub b0: Mat,
    pub dt: f64,
}

impl IncrementState {
    pub fn new(y0: Vec<f64>, u0: Vec<f64>, y0_dot_meas: Vec<f64>, b0: Mat, dt: f64) -> Result<Self, IncError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(IncError::InvalidParameter(format!("dt must be > 0, got {dt}")));
        }
        if b0.rows() != y0.len() || b0.cols() != u0.len() || y0_dot_meas.len() != y0.len() {
            return Err(IncError::Dimension(format!(
                "y0 {}, u0 {}, y0_dot {}, B0 {}x{}",
                y0.len(),
                u0.len(),
                y0_dot_meas.len(),
                b0.rows(),
                b0.cols()
            )));
        }
        Ok(Self { y0, u0, y0_dot_meas, b0, dt })
    }

    pub fn zeros(outputs: usize, inputs: usize, dt: f64) -> Result<Self, IncError> {
        Self::new(vec![0.0; outputs], vec![0.0; inputs], vec![0.0; outputs], Mat::zeros(outputs, inputs), dt)
    }

    pub fn outputs(&self) -> usize {
        self.y0.len()
    }

    pub fn inputs(&self) -> usize {
        self.u0.len()
    }
}

/// Replaces the anchor with the latest measured sample.
pub fn advance_anchor(
    prev: &IncrementState,
    y_meas: &[f64],
    u_applied: &[f64],
    y_dot_meas: &[f64],
    g_at_y0: &Mat,
) -> Result<IncrementState, IncError> {
    if y_meas.len() != prev.outputs() || u_applied.len() != prev.inputs() {
        return Err(IncError::Dimension(format!(
            "anchor holds {} outputs/{} inputs, got {}/{}",
            prev.outputs(),
            prev.inputs(),
            y_meas.len(),
            u_applied.len()
        )));
    }
    IncrementState::new(y_meas.to_vec(), u_applied.to_vec(), y_dot_meas.to_vec(), g_at_y0.clone(), prev.dt)
}

/// `Δu = B₀⁻¹(ν − ŷ̇₀)`; the total command is `u₀ + Δu`.
pub fn incremental_controller(nu: &[f64], inc: &IncrementState) -> Result<Vec<f64>, IncError> {
    if nu.len() != inc.outputs() {
        return Err(IncError::Dimension(format!("ν has {} entries, model {}", nu.len(), inc.outputs())));
    }
    if !inc.b0.is_square() {
        return Err(IncError::Dimension(format!(
            "B0 is {}x{}; non-square input maps need allocation",
            inc.b0.rows(),
            inc.b0.cols()
        )));
    }
    let singular = |_| IncError::Singular { cond: f64::INFINITY };
    let inv = inc.b0.inverse().map_err(singular)?;
    let cond = inc.b0.norm_inf() * inv.norm_inf();
    if !(cond <= MAX_CONDITION) {
        return Err(IncError::Singular { cond });
    }
    let rhs: Vec<f64> = nu.iter().zip(&inc.y0_dot_meas).map(|(n, y)| n - y).collect();
    let lu = inc.b0.lu().map_err(|e: NumericsError| singular(e))?;
    Ok(lu.solve_vec(&rhs))
}

/// Order-`k` Taylor remainder bound `M/(k+1)! · ‖dy‖^(k+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationSpec {
    pub derivative_bound: f64,
    pub order: u32,
}

impl TruncationSpec {
    pub fn new(derivative_bound: f64, order: u32) -> Result<Self, IncError> {
        if !(derivative_bound >= 0.0 && derivative_bound.is_finite()) {
            return Err(IncError::InvalidParameter(format!("derivative bound must be ≥ 0, got {derivative_bound}")));
        }
        Ok(Self { derivative_bound, order })
    }
}

pub fn truncation_bound(spec: &TruncationSpec, dy: &[f64]) -> f64 {
    let k1 = spec.order + 1;
    let factorial: f64 = (1..=k1).map(f64::from).product();
    spec.derivative_bound / factorial * norm2(dy).powi(k1 as i32)
}

/// Triangle bound `‖A₀·dy‖ + δ` on the lumped model error.
pub fn sigma_residual(a0: &Mat, dy: &[f64], delta: f64) -> Result<f64, IncError> {
    if a0.cols() != dy.len() {
        return Err(IncError::Dimension(format!("A0 has {} columns, dy {}", a0.cols(), dy.len())));
    }
    Ok(norm2(&a0.mul_vec(dy)) + delta)
}

/// Conservative disturbance magnitude `K·ε + θ + σ̄` for the ultimate bound.
pub fn disturbance_magnitude(k_norm: f64, bounds: &ErrorBounds) -> f64 {
    k_norm * bounds.eps + bounds.theta + bounds.sigma_bar
}

pub type ErrorFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Additive output and derivative measurement errors with declared bounds.
/// Every evaluation is audited against the bounds.
#[derive(Clone)]
pub struct SensorModel {
    e_fn: ErrorFn,
    w_fn: ErrorFn,
    pub eps: f64,
    pub theta: f64,
    max_e: f64,
    max_w: f64,
}

impl fmt::Debug for SensorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SensorModel")
            .field("eps", &self.eps)
            .field("theta", &self.theta)
            .field("max_e", &self.max_e)
            .field("max_w", &self.max_w)
            .finish()
    }
}

impl SensorModel {
    pub fn new(e_fn: ErrorFn, w_fn: ErrorFn, eps: f64, theta: f64) -> Result<Self, IncError> {
        for (name, v) in [("eps", eps), ("theta", theta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(IncError::InvalidParameter(format!("{name} must be ≥ 0, got {v}")));
            }
        }
        Ok(Self { e_fn, w_fn, eps, theta, max_e: 0.0, max_w: 0.0 })
    }

    pub fn exact() -> Self {
        let zero: ErrorFn = Arc::new(|_, y: &[f64]| vec![0.0; y.len()]);
        Self { e_fn: zero.clone(), w_fn: zero, eps: 0.0, theta: 0.0, max_e: 0.0, max_w: 0.0 }
    }

    pub fn max_output_error(&self) -> f64 {
        self.max_e
    }

    pub fn max_derivative_error(&self) -> f64 {
        self.max_w
    }

    pub fn output_error(&self, t: f64, y: &[f64]) -> Vec<f64> {
        (self.e_fn)(t, y)
    }

    pub fn derivative_error(&self, t: f64, y: &[f64]) -> Vec<f64> {
        (self.w_fn)(t, y)
    }
}

fn audit(channel: &'static str, t: f64, err: &[f64], len: usize, bound: f64) -> Result<f64, IncError> {
    if err.len() != len {
        return Err(IncError::Dimension(format!("{channel} error has {} entries, signal {len}", err.len())));
    }
    let norm = norm2(err);
    // sin-type errors hit their amplitude up to rounding
    if !(norm <= bound * (1.0 + 1e-12) + 1e-15) {
        return Err(IncError::BoundViolation { channel, t, norm, bound });
    }
    Ok(norm)
}

impl SensorModel {
    /// `y + e`, audited.
    pub fn measure_output(&mut self, y_true: &[f64], t: f64) -> Result<Vec<f64>, IncError> {
        let e = self.output_error(t, y_true);
        let n = audit("output", t, &e, y_true.len(), self.eps)?;
        self.max_e = self.max_e.max(n);
        Ok(y_true.iter().zip(&e).map(|(a, b)| a + b).collect())
    }

    /// `ẏ + w`, audited.
    pub fn measure_derivative(&mut self, y_true: &[f64], y_dot_true: &[f64], t: f64) -> Result<Vec<f64>, IncError> {
        let w = self.derivative_error(t, y_true);
        let n = audit("derivative", t, &w, y_dot_true.len(), self.theta)?;
        self.max_w = self.max_w.max(n);
        Ok(y_dot_true.iter().zip(&w).map(|(a, b)| a + b).collect())
    }
}

/// `(y + e, ẏ + w)`, recording the largest error norms seen.
pub fn corrupt_measurements(
    sensor: &mut SensorModel,
    y_true: &[f64],
    y_dot_true: &[f64],
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>), IncError> {
    let y_hat = sensor.measure_output(y_true, t)?;
    let y_dot_hat = sensor.measure_derivative(y_true, y_dot_true, t)?;
    Ok((y_hat, y_dot_hat))
}
