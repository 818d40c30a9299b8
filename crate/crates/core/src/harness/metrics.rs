use super::config::{PlantKind, ScenarioConfig};
use super::sim::{scenario_bounds, siso_controller_gains, SimError, SimTrace};
use crate::incmodel::disturbance_magnitude;
use crate::numerics::{lyapunov_solve, norm2, ultimate_bound, Mat};

/// Asymptotic output bound against the observed post-transient peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UltimateBoundCheck {
    pub bound: f64,
    pub disturbance: f64,
    pub max_y_after_transient: f64,
}

impl UltimateBoundCheck {
    pub fn holds(&self) -> bool {
        self.max_y_after_transient <= self.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub min_h: Vec<f64>,
    pub violation_duration: f64,
    pub tracking_rmse: f64,
    pub max_delta_u: f64,
    pub ultimate_bound: Option<UltimateBoundCheck>,
    pub infeasible_steps: usize,
    pub fixed_point_fallbacks: usize,
    pub max_fixed_point_iters: usize,
    pub total_variation: f64,
    pub max_sigma: f64,
    pub max_abs_y: f64,
    pub max_alloc_slack: f64,
    pub max_output_error: f64,
    pub max_derivative_error: f64,
}

impl Metrics {
    pub fn min_h_overall(&self) -> f64 {
        self.min_h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// One-line `key=value` summary.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "min_h={:.6} violation_duration={:.3} tracking_rmse={:.6} max_delta_u={:.6} total_variation={:.6} \
             infeasible_steps={} max_sigma={:.3e} max_abs_y={:.6}",
            self.min_h_overall(),
            self.violation_duration,
            self.tracking_rmse,
            self.max_delta_u,
            self.total_variation,
            self.infeasible_steps,
            self.max_sigma,
            self.max_abs_y,
        );
        if let Some(b) = &self.ultimate_bound {
            s.push_str(&format!(" ultimate_bound={:.6} max_y_after_transient={:.6}", b.bound, b.max_y_after_transient));
        }
        s
    }
}

pub fn compute_metrics(trace: &SimTrace, cfg: &ScenarioConfig) -> Result<Metrics, SimError> {
    let nb = trace.barrier_names.len();
    let mut min_h = vec![f64::INFINITY; nb];
    let mut violating = 0usize;
    let mut sq_err = 0.0;
    let mut max_du: f64 = 0.0;
    let mut tv = 0.0;
    let mut max_sigma: f64 = 0.0;
    let mut max_abs_y: f64 = 0.0;
    let mut max_alloc: f64 = 0.0;
    let mut max_y_late: f64 = 0.0;
    let mut max_fp = 0usize;
    let (mut infeasible, mut fallbacks) = (0usize, 0usize);
    let mut prev_u: Option<&[f64]> = None;
    for rec in &trace.records {
        for (m, h) in min_h.iter_mut().zip(&rec.h) {
            *m = m.min(*h);
        }
        if rec.h.iter().any(|h| *h < 0.0) {
            violating += 1;
        }
        let e: Vec<f64> = rec.y_true.iter().zip(&rec.r).map(|(y, r)| y - r).collect();
        sq_err += e.iter().map(|v| v * v).sum::<f64>();
        max_du = max_du.max(norm2(&rec.delta_u));
        if let Some(p) = prev_u {
            tv += rec.u.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
        prev_u = Some(&rec.u);
        max_sigma = max_sigma.max(rec.sigma);
        let ny = norm2(&rec.y_true);
        max_abs_y = max_abs_y.max(ny);
        if rec.t >= cfg.transient {
            max_y_late = max_y_late.max(ny);
        }
        max_alloc = max_alloc.max(rec.alloc_slack);
        max_fp = max_fp.max(rec.fixed_point_iters);
        infeasible += usize::from(rec.infeasible);
        fallbacks += usize::from(rec.fixed_point_fallback);
    }
    let n = trace.records.len().max(1) as f64;

    let ultimate = match cfg.plant {
        PlantKind::Siso => Some(siso_ultimate_bound(trace, cfg, max_y_late)?),
        PlantKind::Pitch => None,
    };

    Ok(Metrics {
        min_h,
        violation_duration: trace.dt * violating as f64,
        tracking_rmse: (sq_err / n).sqrt(),
        max_delta_u: max_du,
        ultimate_bound: ultimate,
        infeasible_steps: infeasible,
        fixed_point_fallbacks: fallbacks,
        max_fixed_point_iters: max_fp,
        total_variation: tv,
        max_sigma,
        max_abs_y,
        max_alloc_slack: max_alloc,
        max_output_error: trace.max_output_error,
        max_derivative_error: trace.max_derivative_error,
    })
}

/// Lyapunov bound of the nominal output loop `ẏ = (a + b·k_y·c)y + …`. The
/// disturbance lumps the measurement and model-error bounds with the
/// reference feedforward `|c·b·k_r|·max|r|`.
fn siso_ultimate_bound(trace: &SimTrace, cfg: &ScenarioConfig, max_y_late: f64) -> Result<UltimateBoundCheck, SimError> {
    let s = &cfg.siso;
    let (k_y, k_r) = siso_controller_gains(cfg)?;
    let acl = Mat::scalar(s.a + s.b * k_y * s.c);
    let q = Mat::identity(1);
    let config_err = |e: crate::numerics::NumericsError| {
        SimError::Config(super::config::ConfigError::new("controller", format!("ultimate bound: {e}")))
    };
    let p = lyapunov_solve(&acl, &q).map_err(config_err)?;
    let r_max = trace.records.iter().flat_map(|r| r.r.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
    let d = disturbance_magnitude(k_y.abs(), &scenario_bounds(cfg)) + (s.c * s.b * k_r).abs() * r_max;
    let bound = ultimate_bound(&p, &q, d).map_err(config_err)?;
    Ok(UltimateBoundCheck { bound, disturbance: d, max_y_after_transient: max_y_late })
}
