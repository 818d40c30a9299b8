//! Simulated plants and sensors: the uncertain first-order SISO system, the
//! isolated pitch-rate model with four redundant effectors, sinusoidal bias
//! sensors and a first-order low-pass filter.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::numerics::{lqr_gain, Mat, NumericsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// `ẋ = Λ·a·x + b·u`, `y = c·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SisoPlant {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub lambda: f64,
}

impl SisoPlant {
    pub fn new(a: f64, b: f64, c: f64, lambda: f64) -> Result<Self, PlantError> {
        if ![a, b, c, lambda].iter().all(|v| v.is_finite()) {
            return Err(PlantError::InvalidParameter("SISO coefficients must be finite".into()));
        }
        if b == 0.0 || c == 0.0 {
            return Err(PlantError::InvalidParameter("b and c must be nonzero".into()));
        }
        Ok(Self { a, b, c, lambda })
    }

    /// Same coefficients without the uncertainty factor.
    pub fn nominal(&self) -> Self {
        Self { lambda: 1.0, ..*self }
    }

    pub fn dynamics(&self, x: f64, u: f64) -> f64 {
        siso_dynamics(self, x, u)
    }

    pub fn output(&self, x: f64) -> f64 {
        self.c * x
    }

    /// Output-space drift `ẏ = f(y) + g·u` with `f(y) = Λ·a·y`.
    pub fn output_drift(&self, y: f64) -> f64 {
        self.lambda * self.a * y
    }

    /// Output-space input gain `g = c·b`.
    pub fn output_gain(&self) -> f64 {
        self.c * self.b
    }
}

pub fn siso_dynamics(p: &SisoPlant, x: f64, u: f64) -> f64 {
    p.lambda * p.a * x + p.b * u
}

pub type AeroFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Isolated pitch-rate dynamics at a fixed flight condition.
#[derive(Clone)]
pub struct PitchPlant {
    pub iyy: f64,
    pub qbar: f64,
    pub s_ref: f64,
    pub l_ref: f64,
    pub v: f64,
    pub mach: f64,
    pub alpha: f64,
    pub cm0: AeroFn,
    pub cmq: AeroFn,
    pub bp: Mat,
    pub mismatch: f64,
}

impl fmt::Debug for PitchPlant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PitchPlant")
            .field("iyy", &self.iyy)
            .field("qbar", &self.qbar)
            .field("s_ref", &self.s_ref)
            .field("l_ref", &self.l_ref)
            .field("v", &self.v)
            .field("mach", &self.mach)
            .field("alpha", &self.alpha)
            .field("cm0", &(self.cm0)(self.mach, self.alpha))
            .field("cmq", &(self.cmq)(self.mach, self.alpha))
            .field("bp", &self.bp)
            .field("mismatch", &self.mismatch)
            .finish()
    }
}

impl PitchPlant {
    /// Synthetic vehicle: `Iyy = 500`, `q̄ = 5e4`, `S = 1`, `l = 2`,
    /// `V = 2000`, `Cm0 = −0.005·α`, `Cmq = −0.2`, `Bp = [−50, −50, 30, 30]`,
    /// flown at Mach 7 and 2° angle of attack.
    pub fn synthetic() -> Self {
        Self {
            iyy: 500.0,
            qbar: 5e4,
            s_ref: 1.0,
            l_ref: 2.0,
            v: 2000.0,
            mach: 7.0,
            alpha: 2f64.to_radians(),
            cm0: Arc::new(|_, alpha| -0.005 * alpha),
            cmq: Arc::new(|_, _| -0.2),
            bp: Mat::row_vector(&[-50.0, -50.0, 30.0, 30.0]),
            mismatch: 0.3,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.iyy > 0.0 && self.iyy.is_finite()) {
            return Err(PlantError::InvalidParameter(format!("Iyy must be > 0, got {}", self.iyy)));
        }
        if !(self.v > 0.0 && self.v.is_finite()) {
            return Err(PlantError::InvalidParameter(format!("V must be > 0, got {}", self.v)));
        }
        if self.bp.rows() != 1 || self.bp.cols() != 4 {
            return Err(PlantError::Dimension(format!("Bp must be 1x4, got {}x{}", self.bp.rows(), self.bp.cols())));
        }
        for (name, v) in [("qbar", self.qbar), ("S", self.s_ref), ("l_ref", self.l_ref), ("mismatch", self.mismatch)] {
            if !v.is_finite() {
                return Err(PlantError::InvalidParameter(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.bp.cols()
    }

    fn moment_scale(&self) -> f64 {
        self.qbar * self.s_ref * self.l_ref
    }

    /// Unforced pitch acceleration at rate `q`.
    pub fn drift(&self, q: f64) -> f64 {
        let cm0 = (self.cm0)(self.mach, self.alpha);
        let cmq = (self.cmq)(self.mach, self.alpha);
        self.moment_scale() * (cm0 + cmq / (2.0 * self.v) * q) / self.iyy
    }

    /// `∂q̇/∂q` of the unforced dynamics.
    pub fn damping(&self) -> f64 {
        self.moment_scale() * (self.cmq)(self.mach, self.alpha) / (2.0 * self.v) / self.iyy
    }

    /// Input effectiveness `Bp / Iyy` in rate-derivative units.
    pub fn effectiveness(&self) -> Mat {
        self.bp.scale(1.0 / self.iyy)
    }

    pub fn dynamics(&self, q: f64, u: &[f64]) -> f64 {
        pitch_dynamics(self, q, self.mach, self.alpha, u)
    }
}

pub fn pitch_dynamics(p: &PitchPlant, q: f64, mach: f64, alpha: f64, u: &[f64]) -> f64 {
    let cm0 = (p.cm0)(mach, alpha);
    let cmq = (p.cmq)(mach, alpha);
    let control: f64 = p.bp.row(0).iter().zip(u).map(|(b, u)| b * u).sum();
    (p.moment_scale() * (cm0 + cmq / (2.0 * p.v) * q) + control) / p.iyy
}

/// Controller-side model: aerodynamic moments scaled by `1 + mismatch`,
/// input path unchanged.
pub fn nominal_pitch_model(p: &PitchPlant) -> PitchPlant {
    let k = 1.0 + p.mismatch;
    let cm0 = p.cm0.clone();
    let cmq = p.cmq.clone();
    PitchPlant {
        cm0: Arc::new(move |m, a| k * cm0(m, a)),
        cmq: Arc::new(move |m, a| k * cmq(m, a)),
        mismatch: 0.0,
        bp: p.bp.clone(),
        ..*p
    }
}

/// `Γ·sin(ξt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasSensor {
    pub gamma: f64,
    pub xi: f64,
}

impl BiasSensor {
    pub fn new(gamma: f64, xi: f64) -> Result<Self, PlantError> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(PlantError::InvalidParameter(format!("bias amplitude must be ≥ 0, got {gamma}")));
        }
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(PlantError::InvalidParameter(format!("bias frequency must be > 0, got {xi}")));
        }
        Ok(Self { gamma, xi })
    }

    pub fn bias(&self, t: f64) -> f64 {
        bias(self, t)
    }
}

pub fn bias(s: &BiasSensor, t: f64) -> f64 {
    s.gamma * (s.xi * t).sin()
}

/// First-order low-pass filter, discretized exactly for a held sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Lpf {
    pub cutoff: f64,
    pub state: Vec<f64>,
}

impl Lpf {
    pub fn new(cutoff: f64, initial: Vec<f64>) -> Result<Self, PlantError> {
        if !(cutoff > 0.0) {
            return Err(PlantError::InvalidParameter(format!("cutoff must be > 0, got {cutoff}")));
        }
        Ok(Self { cutoff, state: initial })
    }

    pub fn step(&mut self, sample: &[f64], dt: f64) -> Result<&[f64], PlantError> {
        lpf_step(self, sample, dt)
    }
}

pub fn lpf_step<'a>(f: &'a mut Lpf, sample: &[f64], dt: f64) -> Result<&'a [f64], PlantError> {
    if !(dt > 0.0) {
        return Err(PlantError::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    if sample.len() != f.state.len() {
        return Err(PlantError::Dimension(format!("filter width {}, sample {}", f.state.len(), sample.len())));
    }
    let k = -(-f.cutoff * dt).exp_m1();
    for (s, x) in f.state.iter_mut().zip(sample) {
        *s += k * (x - *s);
    }
    Ok(&f.state)
}

/// `ū = k_y·y + k_r·r`.
pub fn performance_controller(k_y: f64, k_r: f64, y_meas: f64, r: f64) -> f64 {
    k_y * y_meas + k_r * r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SisoGains {
    pub lqr: f64,
    pub k_y: f64,
    pub k_r: f64,
}

/// LQR output gain on the nominal plant plus the feedforward gain giving
/// unit DC tracking.
pub fn siso_gains(nominal: &SisoPlant, q: f64, r: f64) -> Result<SisoGains, PlantError> {
    let k = lqr_gain(&Mat::scalar(nominal.a), &Mat::scalar(nominal.b), &Mat::scalar(q), &Mat::scalar(r))?[(0, 0)];
    let k_y = -k / nominal.c;
    let k_r = -(nominal.a + nominal.b * k_y * nominal.c) / (nominal.c * nominal.b);
    Ok(SisoGains { lqr: k, k_y, k_r })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn siso_examples() {
        let p = SisoPlant::new(-1.0, 1.0, 1.0, 0.6).unwrap();
        assert_eq!(siso_dynamics(&p, 0.0, 0.0), 0.0);
        assert!((siso_dynamics(&p, 1.0, 0.0) + 0.6).abs() < 1e-15);
        assert_eq!(siso_dynamics(&p.nominal(), 1.0, 0.5), -0.5);
        assert!(SisoPlant::new(-1.0, 0.0, 1.0, 0.6).is_err());
    }

    #[test]
    fn gains_from_lqr() {
        let g = siso_gains(&SisoPlant::new(-1.0, 1.0, 1.0, 1.0).unwrap(), 3.0, 0.2).unwrap();
        assert!((g.lqr - 3.0).abs() < 1e-12);
        assert!((g.k_y + 3.0).abs() < 1e-12);
        assert!((g.k_r - 4.0).abs() < 1e-12);
        assert!((performance_controller(g.k_y, g.k_r, 0.0, 1.0) - 4.0).abs() < 1e-12);
        assert_eq!(performance_controller(-3.0, 4.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn pitch_examples() {
        let mut p = PitchPlant::synthetic();
        p.validate().unwrap();
        let expected = p.qbar * p.s_ref * p.l_ref * (p.cm0)(p.mach, p.alpha) / p.iyy;
        assert!((p.dynamics(0.0, &[0.0; 4]) - expected).abs() < 1e-15);

        p.iyy = 1.0;
        p.cm0 = Arc::new(|_, _| 0.0);
        p.cmq = Arc::new(|_, _| 0.0);
        p.bp = Mat::row_vector(&[1.0; 4]);
        assert!((p.dynamics(0.3, &[0.1; 4]) - 0.4).abs() < 1e-15);
        p.bp = Mat::row_vector(&[1.0; 3]);
        assert!(p.validate().is_err());
    }

    #[test]
    fn nominal_model_scaling() {
        let mut p = PitchPlant::synthetic();
        p.cm0 = Arc::new(|_, _| -0.01);
        let n = nominal_pitch_model(&p);
        assert!(((n.cm0)(7.0, 0.0) + 0.013).abs() < 1e-15);
        assert!(((n.cmq)(7.0, 0.0) + 0.26).abs() < 1e-15);
        assert_eq!(n.bp, p.bp);
        p.mismatch = -0.3;
        assert!(((nominal_pitch_model(&p).cm0)(7.0, 0.0) + 0.007).abs() < 1e-15);
        p.mismatch = 0.0;
        assert_eq!(nominal_pitch_model(&p).drift(0.1), p.drift(0.1));
    }

    #[test]
    fn bias_examples() {
        let s = BiasSensor::new(0.1, 2.0).unwrap();
        assert_eq!(s.bias(0.0), 0.0);
        assert!((s.bias(std::f64::consts::FRAC_PI_4) - 0.1).abs() < 1e-15);
        assert!(BiasSensor::new(0.1, 0.0).is_err());
    }

    #[test]
    fn lpf_examples() {
        let mut f = Lpf::new(10.0, vec![0.7]).unwrap();
        assert_eq!(f.step(&[0.7], 1e-3).unwrap(), &[0.7]);
        let mut f = Lpf::new(1e6, vec![0.0]).unwrap();
        assert!((f.step(&[1.0], 1.0).unwrap()[0] - 1.0).abs() < 1e-15);
        let mut f = Lpf::new(10.0, vec![0.0]).unwrap();
        for _ in 0..100 {
            f.step(&[1.0], 1e-3).unwrap();
        }
        assert!((f.state[0] - (1.0 - (-1f64).exp())).abs() < 1e-12);
        assert!(f.step(&[1.0, 2.0], 1e-3).is_err());
    }
}
