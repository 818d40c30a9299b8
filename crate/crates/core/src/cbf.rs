//! Barrier functions and the constraint rows each safety filter feeds to the QP.
//!
//! All rows are written in the QP's convention `aᵀv ≥ b`, where `v` is the
//! total input for the standard filter and the input increment for the
//! incremental filters.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use thiserror::Error;

use crate::numerics::{dot, norm2, Mat};
use crate::qp::{BoxBounds, LinearConstraint, QpError, QpSolution};

pub const FIXED_POINT_TOL: f64 = 1e-6;
pub const FIXED_POINT_MAX_ITER: usize = 10;
pub const LIPSCHITZ_SAMPLES: usize = 10_000;
pub const LIPSCHITZ_INFLATION: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CbfError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("norm fixed point did not settle and no box bounds are available for the fallback")]
    NoFallback,
    #[error(transparent)]
    Qp(#[from] QpError),
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Barrier `h` with its gradient and linear class-K slope `γ`.
#[derive(Clone)]
pub struct BarrierSpec {
    pub name: String,
    h: ScalarFn,
    grad: GradientFn,
    pub gamma: f64,
}

impl fmt::Debug for BarrierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BarrierSpec").field("name", &self.name).field("gamma", &self.gamma).finish()
    }
}

impl BarrierSpec {
    pub fn new(name: impl Into<String>, h: ScalarFn, grad: GradientFn, gamma: f64) -> Result<Self, CbfError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(CbfError::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
        }
        Ok(Self { name: name.into(), h, grad, gamma })
    }

    /// `h(y) = max − y[index]`.
    pub fn upper(index: usize, dim: usize, max: f64, gamma: f64) -> Result<Self, CbfError> {
        Self::box_side(index, dim, max, -1.0, gamma, "upper")
    }

    /// `h(y) = y[index] − min`.
    pub fn lower(index: usize, dim: usize, min: f64, gamma: f64) -> Result<Self, CbfError> {
        Self::box_side(index, dim, min, 1.0, gamma, "lower")
    }

    fn box_side(index: usize, dim: usize, limit: f64, sign: f64, gamma: f64, tag: &str) -> Result<Self, CbfError> {
        if index >= dim {
            return Err(CbfError::Dimension(format!("index {index} out of range for dimension {dim}")));
        }
        if !limit.is_finite() {
            return Err(CbfError::InvalidParameter(format!("{tag} limit must be finite")));
        }
        let mut g = vec![0.0; dim];
        g[index] = sign;
        Self::new(
            format!("{tag}[{index}]"),
            Arc::new(move |y: &[f64]| sign * (y[index] - limit)),
            Arc::new(move |_: &[f64]| g.clone()),
            gamma,
        )
    }

    pub fn h(&self, y: &[f64]) -> f64 {
        (self.h)(y)
    }

    pub fn grad(&self, y: &[f64]) -> Vec<f64> {
        (self.grad)(y)
    }

    pub fn alpha(&self, r: f64) -> f64 {
        self.gamma * r
    }
}

/// Bounds on the modelling error and the two measurement errors, plus the
/// Lipschitz constants of `∇h·ẏ₀`, `∇h·B₀`, `∇h·φ` and `α∘h`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorBounds {
    pub sigma_bar: f64,
    pub eps: f64,
    pub theta: f64,
    pub kappa: [f64; 4],
}

impl ErrorBounds {
    pub fn new(sigma_bar: f64, eps: f64, theta: f64, kappa: [f64; 4]) -> Result<Self, CbfError> {
        let b = Self { sigma_bar, eps, theta, kappa };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), CbfError> {
        let named = [("sigma_bar", self.sigma_bar), ("eps", self.eps), ("theta", self.theta)];
        let kappas = self.kappa.iter().enumerate().map(|(i, k)| (["kappa1", "kappa2", "kappa3", "kappa4"][i], *k));
        for (name, v) in named.into_iter().chain(kappas) {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CbfError::InvalidParameter(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    None,
    Standard,
    Icbf,
    Ricbf,
    Mricbf,
}

impl FilterKind {
    pub const ALL: [FilterKind; 5] =
        [FilterKind::None, FilterKind::Standard, FilterKind::Icbf, FilterKind::Ricbf, FilterKind::Mricbf];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::None => "none",
            FilterKind::Standard => "standard",
            FilterKind::Icbf => "icbf",
            FilterKind::Ricbf => "ricbf",
            FilterKind::Mricbf => "mricbf",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown filter kind '{s}' (expected none|standard|icbf|ricbf|mricbf)"))
    }
}

/// How the measurement-error terms enter the robust margin.
///
/// `Additive`: `φ + a + b‖Δu‖`; the output-error term is charged even when
/// the increment is small. `Product`: `φ + (a + b)‖Δu‖`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarginForm {
    #[default]
    Additive,
    Product,
}

impl MarginForm {
    pub fn as_str(self) -> &'static str {
        match self {
            MarginForm::Additive => "additive",
            MarginForm::Product => "product",
        }
    }

    /// Margin on top of `φ` for an increment of norm `du_norm`.
    pub fn margin(self, a: f64, b: f64, du_norm: f64) -> f64 {
        match self {
            MarginForm::Additive => a + b * du_norm,
            MarginForm::Product => (a + b) * du_norm,
        }
    }

    /// Coefficient multiplying `‖Δu‖`; zero means no fixed point is needed.
    pub fn norm_coefficient(self, a: f64, b: f64) -> f64 {
        match self {
            MarginForm::Additive => b,
            MarginForm::Product => a + b,
        }
    }
}

impl fmt::Display for MarginForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MarginForm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "additive" => Ok(MarginForm::Additive),
            "product" => Ok(MarginForm::Product),
            _ => Err(format!("unknown margin form '{s}' (expected additive|product)")),
        }
    }
}

/// `aᵀv ≥ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct CbfConstraint {
    pub a: Vec<f64>,
    pub b: f64,
    pub kind: FilterKind,
}

impl CbfConstraint {
    pub fn to_linear(&self) -> LinearConstraint {
        LinearConstraint::new(self.a.clone(), self.b)
    }

    pub fn tightened(&self, extra: f64, kind: FilterKind) -> Self {
        Self { a: self.a.clone(), b: self.b + extra, kind }
    }
}

fn grad_checked(spec: &BarrierSpec, y: &[f64], rows: usize) -> Result<Vec<f64>, CbfError> {
    let g = spec.grad(y);
    if g.len() != y.len() || g.len() != rows {
        return Err(CbfError::Dimension(format!(
            "barrier '{}': gradient has {} entries, state {}, model rows {}",
            spec.name,
            g.len(),
            y.len(),
            rows
        )));
    }
    Ok(g)
}

/// Row for `L_f h + L_g h·u + γh ≥ 0` on the full model.
pub fn standard_cbf_constraint(spec: &BarrierSpec, f_x: &[f64], g_x: &Mat, x: &[f64]) -> Result<CbfConstraint, CbfError> {
    if f_x.len() != g_x.rows() {
        return Err(CbfError::Dimension(format!("f has {} entries, g has {} rows", f_x.len(), g_x.rows())));
    }
    let grad = grad_checked(spec, x, g_x.rows())?;
    Ok(CbfConstraint {
        a: g_x.tr_mul_vec(&grad),
        b: -dot(&grad, f_x) - spec.alpha(spec.h(x)),
        kind: FilterKind::Standard,
    })
}

/// Row for `∇h·(ŷ̇₀ + B₀Δu) + γh ≥ 0`, the incremental condition with the
/// model error left out.
pub fn icbf_constraint(spec: &BarrierSpec, y0_dot: &[f64], b0: &Mat, y: &[f64]) -> Result<CbfConstraint, CbfError> {
    if y0_dot.len() != b0.rows() {
        return Err(CbfError::Dimension(format!("ẏ₀ has {} entries, B₀ has {} rows", y0_dot.len(), b0.rows())));
    }
    let grad = grad_checked(spec, y, b0.rows())?;
    Ok(CbfConstraint {
        a: b0.tr_mul_vec(&grad),
        b: -dot(&grad, y0_dot) - spec.alpha(spec.h(y)),
        kind: FilterKind::Icbf,
    })
}

/// ICBF row tightened by the compensation `φ ≥ 0`.
pub fn ricbf_constraint(
    spec: &BarrierSpec,
    y0_dot: &[f64],
    b0: &Mat,
    y: &[f64],
    phi: f64,
) -> Result<CbfConstraint, CbfError> {
    if !(phi >= 0.0 && phi.is_finite()) {
        return Err(CbfError::InvalidParameter(format!("phi must be finite and ≥ 0, got {phi}")));
    }
    Ok(icbf_constraint(spec, y0_dot, b0, y)?.tightened(phi, FilterKind::Ricbf))
}

/// `sup‖∇h‖ · σ̄`.
pub fn worst_case_phi(bounds: &ErrorBounds, grad_norm_sup: f64) -> f64 {
    grad_norm_sup * bounds.sigma_bar
}

/// `((κ₁+κ₃+κ₄)ε, κ₂ε)`.
pub fn mricbf_terms(bounds: &ErrorBounds) -> (f64, f64) {
    let [k1, k2, k3, k4] = bounds.kappa;
    ((k1 + k3 + k4) * bounds.eps, k2 * bounds.eps)
}

/// `h(y)`; non-negative inside the safe set.
pub fn barrier_margin(spec: &BarrierSpec, y: &[f64]) -> f64 {
    spec.h(y)
}

/// Result of one measurement-robust filtering step.
#[derive(Debug, Clone, PartialEq)]
pub struct MricbfOutcome {
    pub constraints: Vec<CbfConstraint>,
    pub solution: QpSolution,
    pub iterations: usize,
    pub fallback: bool,
    /// Increment norm the returned constraints were tightened with.
    pub norm_used: f64,
}

/// Resolves the increment norm appearing inside its own constraint by
/// fixed-point iteration, warm-started from the previous control step.
#[derive(Debug, Clone)]
pub struct MricbfFilter {
    pub margin_form: MarginForm,
    pub tol: f64,
    pub max_iter: usize,
    warm_norm: f64,
}

impl Default for MricbfFilter {
    fn default() -> Self {
        Self::new(MarginForm::default())
    }
}

impl MricbfFilter {
    pub fn new(margin_form: MarginForm) -> Self {
        Self { margin_form, tol: FIXED_POINT_TOL, max_iter: FIXED_POINT_MAX_ITER, warm_norm: 0.0 }
    }

    pub fn warm_norm(&self) -> f64 {
        self.warm_norm
    }

    pub fn reset(&mut self) {
        self.warm_norm = 0.0;
    }

    /// `base` holds the RICBF rows (already carrying `φ`); `solve_qp` builds
    /// and solves the program for a given constraint set.
    pub fn solve<F>(
        &mut self,
        base: &[CbfConstraint],
        bounds: &ErrorBounds,
        box_bounds: Option<&BoxBounds>,
        mut solve_qp: F,
    ) -> Result<MricbfOutcome, CbfError>
    where
        F: FnMut(&[CbfConstraint]) -> Result<QpSolution, QpError>,
    {
        let (a, b) = mricbf_terms(bounds);
        let form = self.margin_form;
        let tighten = |n: f64| -> Vec<CbfConstraint> {
            let extra = form.margin(a, b, n);
            base.iter().map(|c| c.tightened(extra, FilterKind::Mricbf)).collect()
        };

        let coef = form.norm_coefficient(a, b);
        let mut norm = self.warm_norm;
        for it in 1..=self.max_iter {
            let constraints = tighten(norm);
            let solution = solve_qp(&constraints)?;
            let next = norm2(&solution.delta_u);
            if coef == 0.0 || (next - norm).abs() < self.tol {
                self.warm_norm = next;
                return Ok(MricbfOutcome { constraints, solution, iterations: it, fallback: false, norm_used: norm });
            }
            norm = next;
        }

        let cap = box_bounds.ok_or(CbfError::NoFallback)?.max_norm();
        let constraints = tighten(cap);
        let solution = solve_qp(&constraints)?;
        self.warm_norm = norm2(&solution.delta_u);
        Ok(MricbfOutcome { constraints, solution, iterations: self.max_iter + 1, fallback: true, norm_used: cap })
    }
}

fn sample_box(rng: &mut SplitMix64, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter().zip(hi).map(|(l, h)| if l < h { rng.random_range(*l..=*h) } else { *l }).collect()
}

fn check_box(lo: &[f64], hi: &[f64]) -> Result<(), CbfError> {
    if lo.len() != hi.len() || lo.is_empty() {
        return Err(CbfError::Dimension("state box bounds".into()));
    }
    if lo.iter().zip(hi).any(|(l, h)| !(l.is_finite() && h.is_finite()) || l > h) {
        return Err(CbfError::InvalidParameter("state box must satisfy lo ≤ hi with finite entries".into()));
    }
    Ok(())
}

/// Sampled supremum of `‖∇h‖` over a state box (corners plus random points).
pub fn grad_norm_sup(spec: &BarrierSpec, lo: &[f64], hi: &[f64], samples: usize, seed: u64) -> Result<f64, CbfError> {
    check_box(lo, hi)?;
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut sup = norm2(&spec.grad(lo)).max(norm2(&spec.grad(hi)));
    for _ in 0..samples {
        sup = sup.max(norm2(&spec.grad(&sample_box(&mut rng, lo, hi))));
    }
    Ok(sup)
}

/// Lipschitz constant of a scalar map over a state box, estimated from local
/// finite-difference slopes at random points and inflated by 10%.
pub fn estimate_lipschitz<F>(f: F, lo: &[f64], hi: &[f64], samples: usize, seed: u64) -> Result<f64, CbfError>
where
    F: Fn(&[f64]) -> f64,
{
    check_box(lo, hi)?;
    let mut rng = SplitMix64::seed_from_u64(seed);
    let width = lo.iter().zip(hi).map(|(l, h)| h - l).fold(0.0, f64::max).max(1e-12);
    let step = 1e-4 * width;
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let x = sample_box(&mut rng, lo, hi);
        let mut dir: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = norm2(&dir);
        if n < 1e-12 {
            continue;
        }
        dir.iter_mut().for_each(|d| *d *= step / n);
        let xp: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + d).collect();
        let xm: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a - d).collect();
        let slope = (f(&xp) - f(&xm)).abs() / (2.0 * step);
        if slope.is_finite() {
            best = best.max(slope);
        }
    }
    Ok(best * LIPSCHITZ_INFLATION)
}

/// Largest relative error between the analytic gradient and central finite
/// differences of `h` at random points of the box.
pub fn gradient_check(spec: &BarrierSpec, lo: &[f64], hi: &[f64], points: usize, seed: u64) -> Result<f64, CbfError> {
    check_box(lo, hi)?;
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let y = sample_box(&mut rng, lo, hi);
        let g = spec.grad(&y);
        let mut fd = vec![0.0; y.len()];
        for i in 0..y.len() {
            let step = 1e-6 * (1.0 + y[i].abs());
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += step;
            ym[i] -= step;
            fd[i] = (spec.h(&yp) - spec.h(&ym)) / (2.0 * step);
        }
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        worst = worst.max(norm2(&diff) / norm2(&fd).max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_barrier(h: fn(f64) -> f64, dh: fn(f64) -> f64, gamma: f64) -> BarrierSpec {
        BarrierSpec::new("test", Arc::new(move |y| h(y[0])), Arc::new(move |y| vec![dh(y[0])]), gamma).unwrap()
    }

    #[test]
    fn standard_rows() {
        let s = scalar_barrier(|x| 1.0 - x, |_| -1.0, 1.0);
        let c = standard_cbf_constraint(&s, &[0.0], &Mat::scalar(1.0), &[0.0]).unwrap();
        assert_eq!((c.a.clone(), c.b), (vec![-1.0], -1.0));

        let s = scalar_barrier(|x| x, |_| 1.0, 1.0);
        let c = standard_cbf_constraint(&s, &[-2.0], &Mat::scalar(1.0), &[2.0]).unwrap();
        assert_eq!((c.a.clone(), c.b), (vec![1.0], 0.0));

        let s = scalar_barrier(|x| 1.0 - x, |_| -1.0, 2.0);
        let c = standard_cbf_constraint(&s, &[0.0], &Mat::scalar(0.0), &[0.5]).unwrap();
        assert_eq!(c.a, vec![0.0]);
        assert!(c.b <= 0.0);
    }

    #[test]
    fn incremental_rows() {
        let s = scalar_barrier(|x| 0.5 - x, |_| -1.0, 2.0);
        let c = icbf_constraint(&s, &[0.2], &Mat::scalar(1.0), &[0.0]).unwrap();
        assert_eq!(c.a, vec![-1.0]);
        assert!((c.b + 0.8).abs() < 1e-15);
        let r = ricbf_constraint(&s, &[0.2], &Mat::scalar(1.0), &[0.0], 0.3).unwrap();
        assert!((r.b + 0.5).abs() < 1e-15);
        assert_eq!(r.kind, FilterKind::Ricbf);
        assert!(ricbf_constraint(&s, &[0.2], &Mat::scalar(1.0), &[0.0], -0.1).is_err());
    }

    #[test]
    fn phi_and_terms() {
        let b = ErrorBounds::new(0.1, 0.0, 0.0, [0.0; 4]).unwrap();
        assert!((worst_case_phi(&b, 1.0) - 0.1).abs() < 1e-15);
        let b = ErrorBounds::new(0.05, 0.0, 0.0, [0.0; 4]).unwrap();
        assert!((worst_case_phi(&b, 2.0) - 0.1).abs() < 1e-15);
        let b = ErrorBounds::new(0.0, 0.1, 0.0, [1.0, 2.0, 0.5, 1.5]).unwrap();
        let (a, bb) = mricbf_terms(&b);
        assert!((a - 0.3).abs() < 1e-15 && (bb - 0.2).abs() < 1e-15);
        assert!(ErrorBounds::new(-1.0, 0.0, 0.0, [0.0; 4]).is_err());
        assert!(ErrorBounds::new(0.0, 0.0, 0.0, [0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn box_barriers() {
        let up = BarrierSpec::upper(0, 1, 0.5, 2.0).unwrap();
        assert_eq!(barrier_margin(&up, &[0.5]), 0.0);
        let lo = BarrierSpec::lower(0, 1, -1.0, 2.0).unwrap();
        assert_eq!(barrier_margin(&lo, &[0.0]), 1.0);
        let q = BarrierSpec::upper(0, 1, 10.0, 2.0).unwrap();
        assert_eq!(barrier_margin(&q, &[4.0]), 6.0);
        assert!(BarrierSpec::upper(1, 1, 0.5, 2.0).is_err());
        assert!(BarrierSpec::upper(0, 1, 0.5, 0.0).is_err());
    }

    #[test]
    fn product_fallback_uses_box_norm() {
        // a + b = 0.5 with the product form never settles when every solve
        // grows the norm; the fallback charges 0.5 · 0.8
        let bounds = ErrorBounds::new(0.0, 0.25, 0.0, [1.0, 1.0, 0.0, 0.0]).unwrap();
        let base = vec![CbfConstraint { a: vec![1.0], b: 0.0, kind: FilterKind::Ricbf }];
        let bx = BoxBounds::symmetric(1, 0.8);
        let mut calls = 0;
        let mut f = MricbfFilter::new(MarginForm::Product);
        let out = f
            .solve(&base, &bounds, Some(&bx), |c| {
                calls += 1;
                Ok(QpSolution {
                    delta_u: vec![c[0].b + calls as f64],
                    slack: None,
                    active_set: vec![],
                    objective: 0.0,
                    iterations: 0,
                })
            })
            .unwrap();
        assert!(out.fallback);
        assert!((out.constraints[0].b - 0.4).abs() < 1e-15);
    }

    #[test]
    fn zero_bounds_single_pass() {
        let base = vec![CbfConstraint { a: vec![1.0], b: 0.3, kind: FilterKind::Ricbf }];
        let mut f = MricbfFilter::default();
        let mut calls = 0;
        let out = f
            .solve(&base, &ErrorBounds::default(), None, |c| {
                calls += 1;
                Ok(QpSolution { delta_u: vec![c[0].b], slack: None, active_set: vec![], objective: 0.0, iterations: 0 })
            })
            .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.constraints[0].b, 0.3);
    }

    #[test]
    fn lipschitz_of_linear_map() {
        let k = estimate_lipschitz(|y| 3.0 * y[0] - 4.0 * y[1], &[-1.0, -1.0], &[1.0, 1.0], 2000, 1).unwrap();
        assert!(k <= 5.0 * 1.1 + 1e-9 && k > 4.5 * 1.1);
        let s = BarrierSpec::upper(0, 2, 1.0, 1.0).unwrap();
        assert_eq!(grad_norm_sup(&s, &[-1.0, -1.0], &[1.0, 1.0], 10, 1).unwrap(), 1.0);
    }

    #[test]
    fn parse_kinds() {
        for k in FilterKind::ALL {
            assert_eq!(k.as_str().parse::<FilterKind>().unwrap(), k);
        }
        assert!("cbf".parse::<FilterKind>().is_err());
        assert_eq!("product".parse::<MarginForm>().unwrap(), MarginForm::Product);
    }
}
