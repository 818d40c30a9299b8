use super::NumericsError;

/// Time-stamped state of an integrated system.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeState {
    pub t: f64,
    pub x: Vec<f64>,
}

impl OdeState {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self { t, x }
    }
}

/// One classical fourth-order Runge–Kutta step of `ẋ = f(x, u)` with `u` held
/// constant over `[t, t + dt]`.
pub fn rk4_step<F>(f: F, s: &OdeState, u: &[f64], dt: f64) -> Result<OdeState, NumericsError>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(NumericsError::InvalidArgument(format!("step size must be positive, got {dt}")));
    }
    let eval = |x: &[f64]| -> Result<Vec<f64>, NumericsError> {
        let d = f(x, u);
        if d.len() != x.len() {
            return Err(NumericsError::Dimension(format!(
                "vector field returned {} components for a {}-state",
                d.len(),
                x.len()
            )));
        }
        if d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(NumericsError::IntegrationFailure { t: s.t, x: s.x.clone() })
        }
    };
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { s.x.iter().zip(k).map(|(x, k)| x + a * k).collect() };

    let k1 = eval(&s.x)?;
    let k2 = eval(&axpy(0.5 * dt, &k1))?;
    let k3 = eval(&axpy(0.5 * dt, &k2))?;
    let k4 = eval(&axpy(dt, &k3))?;
    let x: Vec<f64> = s
        .x
        .iter()
        .enumerate()
        .map(|(i, x)| x + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::IntegrationFailure { t: s.t, x: s.x.clone() });
    }
    Ok(OdeState { t: s.t + dt, x })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_is_stationary() {
        let s = OdeState::new(0.0, vec![1.0]);
        let n = rk4_step(|x, _| vec![0.0; x.len()], &s, &[], 0.01).unwrap();
        assert_eq!(n.x, vec![1.0]);
        assert!((n.t - 0.01).abs() < 1e-15);
    }

    #[test]
    fn blowup_is_reported_with_state() {
        let s = OdeState::new(2.5, vec![1.0]);
        let err = rk4_step(|_, _| vec![f64::INFINITY], &s, &[], 0.01).unwrap_err();
        match err {
            NumericsError::IntegrationFailure { t, x } => {
                assert_eq!(t, 2.5);
                assert_eq!(x, vec![1.0]);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(rk4_step(|x, _| x.to_vec(), &s, &[], 0.0).is_err());
    }
}
