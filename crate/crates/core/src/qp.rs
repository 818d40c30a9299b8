//! Minimum-norm quadratic programs for safety filters.
//!
//! Every program here has the shape
//!
//! ```text
//!     minimize    ‖Δu − Δū‖² + w‖δ‖²
//!     subject to  aᵢᵀΔu ≥ bᵢ              (barrier rows)
//!                 lo ≤ Δu ≤ hi            (optional box)
//!                 Bp Δu + δ = target      (optional allocation, δ free)
//! ```
//!
//! The allocation slack is eliminated analytically, leaving a strictly convex
//! problem in `Δu` alone with Hessian `I + w BpᵀBp`. That problem is solved with
//! a dual active-set method (Goldfarb–Idnani): it starts at the unconstrained
//! minimizer, so a command that already satisfies every row is returned
//! unchanged, and infeasibility shows up as a dual ray with the offending rows
//! attached.

use std::fmt;

use thiserror::Error;

use crate::numerics::{dot, norm2, Cholesky, Mat, NumericsError};

pub const MAX_ITERATIONS: usize = 1000;
pub const DEFAULT_SLACK_WEIGHT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("infeasible program; conflicting constraints: {}", fmt_ids(.conflicting))]
    Infeasible { conflicting: Vec<ConstraintId> },
    #[error("barrier row cannot be enforced: zero input gradient with ψ = {psi}")]
    Undefendable { psi: f64 },
    #[error("active-set iteration cap ({0}) reached")]
    IterationCap(usize),
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn fmt_ids(ids: &[ConstraintId]) -> String {
    ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Identifies one row of the stacked constraint set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintId {
    Inequality(usize),
    Lower(usize),
    Upper(usize),
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintId::Inequality(i) => write!(f, "ineq[{i}]"),
            ConstraintId::Lower(i) => write!(f, "lower[{i}]"),
            ConstraintId::Upper(i) => write!(f, "upper[{i}]"),
        }
    }
}

/// `rowᵀ x ≥ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub row: Vec<f64>,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(row: Vec<f64>, rhs: f64) -> Self {
        Self { row, rhs }
    }

    pub fn slack(&self, x: &[f64]) -> f64 {
        dot(&self.row, x) - self.rhs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self { lo, hi }
    }

    pub fn symmetric(dim: usize, limit: f64) -> Self {
        Self { lo: vec![-limit; dim], hi: vec![limit; dim] }
    }

    /// Largest Euclidean norm reachable inside the box.
    pub fn max_norm(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| l.abs().max(h.abs()).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }
}

/// Slack-penalized allocation equality `effectiveness · Δu + δ = target`.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub effectiveness: Mat,
    pub target: Vec<f64>,
    pub slack_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub reference: Vec<f64>,
    pub ineq: Vec<LinearConstraint>,
    pub bounds: Option<BoxBounds>,
    pub alloc: Option<Allocation>,
}

impl QpProblem {
    pub fn new(reference: Vec<f64>) -> Self {
        Self { reference, ineq: Vec::new(), bounds: None, alloc: None }
    }

    pub fn dim(&self) -> usize {
        self.reference.len()
    }

    pub fn with_ineq(mut self, c: LinearConstraint) -> Self {
        self.ineq.push(c);
        self
    }

    pub fn with_bounds(mut self, b: BoxBounds) -> Self {
        self.bounds = Some(b);
        self
    }

    pub fn with_alloc(mut self, a: Allocation) -> Self {
        self.alloc = Some(a);
        self
    }

    fn validate(&self) -> Result<(), QpError> {
        let m = self.dim();
        if m == 0 {
            return Err(QpError::Malformed("zero-dimensional program".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.reference) {
            return Err(QpError::Malformed("non-finite reference".into()));
        }
        for (i, c) in self.ineq.iter().enumerate() {
            if c.row.len() != m || !finite(&c.row) || !c.rhs.is_finite() {
                return Err(QpError::Malformed(format!("inequality {i} malformed")));
            }
        }
        if let Some(b) = &self.bounds {
            if b.lo.len() != m || b.hi.len() != m {
                return Err(QpError::Malformed("box dimension".into()));
            }
            for (i, (l, h)) in b.lo.iter().zip(&b.hi).enumerate() {
                if !(l.is_finite() && h.is_finite()) || l > h {
                    return Err(QpError::Malformed(format!("box entry {i}: [{l}, {h}]")));
                }
            }
        }
        if let Some(a) = &self.alloc {
            if a.effectiveness.cols() != m || a.effectiveness.rows() != a.target.len() || !finite(&a.target) {
                return Err(QpError::Malformed("allocation dimensions".into()));
            }
            if !(a.slack_weight > 0.0 && a.slack_weight.is_finite()) {
                return Err(QpError::Malformed(format!("slack weight {} must be > 0", a.slack_weight)));
            }
        }
        Ok(())
    }

    /// Stacked rows in reporting order: inequalities, then lower, then upper bounds.
    fn stacked_rows(&self) -> Vec<(ConstraintId, LinearConstraint)> {
        let m = self.dim();
        let mut rows: Vec<(ConstraintId, LinearConstraint)> = self
            .ineq
            .iter()
            .enumerate()
            .map(|(i, c)| (ConstraintId::Inequality(i), c.clone()))
            .collect();
        if let Some(b) = &self.bounds {
            for (i, l) in b.lo.iter().enumerate() {
                let mut row = vec![0.0; m];
                row[i] = 1.0;
                rows.push((ConstraintId::Lower(i), LinearConstraint::new(row, *l)));
            }
            for (i, h) in b.hi.iter().enumerate() {
                let mut row = vec![0.0; m];
                row[i] = -1.0;
                rows.push((ConstraintId::Upper(i), LinearConstraint::new(row, -h)));
            }
        }
        rows
    }

    pub fn constraint(&self, id: ConstraintId) -> Option<LinearConstraint> {
        self.stacked_rows().into_iter().find(|(i, _)| *i == id).map(|(_, c)| c)
    }

    /// Objective value at `x`, slack penalty included.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let dev: f64 = x.iter().zip(&self.reference).map(|(a, b)| (a - b).powi(2)).sum();
        dev + self.alloc.as_ref().map_or(0.0, |a| {
            let slack = allocation_slack(a, x);
            a.slack_weight * dot(&slack, &slack)
        })
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.stacked_rows().iter().all(|(_, c)| c.slack(x) >= -tol)
    }
}

fn allocation_slack(a: &Allocation, x: &[f64]) -> Vec<f64> {
    let bx = a.effectiveness.mul_vec(x);
    a.target.iter().zip(bx).map(|(t, b)| t - b).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub delta_u: Vec<f64>,
    pub slack: Option<Vec<f64>>,
    pub active_set: Vec<ConstraintId>,
    pub objective: f64,
    pub iterations: usize,
}

/// Closed-form minimizer of `‖Δu‖²` subject to the single row
/// `A + BᵀΔu − Θ ≥ −α(h)`.
///
/// With `ψ = A − Θ + α(h)` the row is inactive for `ψ ≥ 0`; otherwise the
/// minimizer is `−ψ B / (BᵀB)`, which meets the row with equality.
pub fn solve_min_norm_closed_form(a: f64, b: &[f64], theta: f64, alpha_h: f64) -> Result<Vec<f64>, QpError> {
    let psi = a - theta + alpha_h;
    if !psi.is_finite() || b.iter().any(|v| !v.is_finite()) {
        return Err(QpError::Malformed("non-finite closed-form inputs".into()));
    }
    if psi >= 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    let bb = dot(b, b);
    if bb == 0.0 {
        return Err(QpError::Undefendable { psi });
    }
    Ok(b.iter().map(|v| -psi * v / bb).collect())
}

/// Dense dual active-set solver.
#[derive(Debug, Clone)]
pub struct ActiveSetSolver {
    pub max_iterations: usize,
}

impl Default for ActiveSetSolver {
    fn default() -> Self {
        Self { max_iterations: MAX_ITERATIONS }
    }
}

/// `G⁻¹` for `G = I + wBᵀB`, applied as `I − Bᵀ(I/w + BBᵀ)⁻¹B`. Inputs that
/// are symmetric under a permutation of identical columns of `B` map to
/// outputs with exactly the same symmetry.
enum Factored {
    Identity,
    LowRank { b: Mat, inner: Cholesky },
}

impl Factored {
    fn new(alloc: Option<&Allocation>) -> Result<Self, QpError> {
        let Some(a) = alloc else { return Ok(Factored::Identity) };
        let b = a.effectiveness.clone();
        let mut inner = &b * &b.transpose();
        for i in 0..inner.rows() {
            inner[(i, i)] += 1.0 / a.slack_weight;
        }
        Ok(Factored::LowRank { inner: inner.symmetrize().cholesky()?, b })
    }

    fn ginv(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Factored::Identity => v.to_vec(),
            Factored::LowRank { b, inner } => {
                let c = inner.solve_vec(&b.mul_vec(v));
                let mut out = v.to_vec();
                for (o, corr) in out.iter_mut().zip(b.tr_mul_vec(&c)) {
                    *o -= corr;
                }
                out
            }
        }
    }
}

impl ActiveSetSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, p: &QpProblem) -> Result<QpSolution, QpError> {
        p.validate()?;

        // ½xᵀGx + gᵀx with G = I + wBᵀB, g = −(Δū + wBᵀt)
        let mut linear: Vec<f64> = p.reference.iter().map(|v| -v).collect();
        if let Some(a) = &p.alloc {
            for (l, v) in linear.iter_mut().zip(a.effectiveness.tr_mul_vec(&a.target)) {
                *l -= a.slack_weight * v;
            }
        }
        let g = Factored::new(p.alloc.as_ref())?;
        let rows = p.stacked_rows();

        let mut x: Vec<f64> = g.ginv(&linear).into_iter().map(|v| -v).collect();
        let mut active: Vec<usize> = Vec::new();
        let mut lambda: Vec<f64> = Vec::new();
        let mut iterations = 0usize;

        loop {
            // most violated row, lowest index on ties
            let mut pick: Option<(usize, f64)> = None;
            for (k, (_, c)) in rows.iter().enumerate() {
                if active.contains(&k) {
                    continue;
                }
                let s = c.slack(&x);
                let tol = 1e-12 * (1.0 + c.rhs.abs() + norm2(&c.row) * norm2(&x));
                if s < -tol && pick.is_none_or(|(_, best)| s < best) {
                    pick = Some((k, s));
                }
            }
            let Some((pk, _)) = pick else { break };
            let np = &rows[pk].1.row;
            let mut lambda_p = 0.0;

            loop {
                iterations += 1;
                if iterations > self.max_iterations {
                    return Err(QpError::IterationCap(self.max_iterations));
                }
                let (z, r) = self.directions(&g, &rows, &active, np)?;
                let blocking = r
                    .iter()
                    .enumerate()
                    .filter(|(_, rj)| **rj > 1e-14)
                    .map(|(j, rj)| (j, lambda[j] / rj))
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                let znp = dot(&z, np);
                let scale = dot(np, &g.ginv(np)).max(f64::MIN_POSITIVE);

                if znp <= 1e-12 * scale {
                    // np is dependent on the working set: only a dual step is possible
                    let Some((j, t)) = blocking else {
                        let mut conflicting: Vec<ConstraintId> = active
                            .iter()
                            .zip(&r)
                            .filter(|(_, rj)| rj.abs() > 1e-14)
                            .map(|(k, _)| rows[*k].0)
                            .collect();
                        conflicting.push(rows[pk].0);
                        conflicting.sort();
                        return Err(QpError::Infeasible { conflicting });
                    };
                    for (l, rj) in lambda.iter_mut().zip(&r) {
                        *l -= t * rj;
                    }
                    lambda_p += t;
                    active.remove(j);
                    lambda.remove(j);
                    continue;
                }

                let t2 = -rows[pk].1.slack(&x) / znp;
                let (t, drop) = match blocking {
                    Some((j, t1)) if t1 < t2 => (t1, Some(j)),
                    _ => (t2, None),
                };
                for (xi, zi) in x.iter_mut().zip(&z) {
                    *xi += t * zi;
                }
                for (l, rj) in lambda.iter_mut().zip(&r) {
                    *l -= t * rj;
                }
                lambda_p += t;
                match drop {
                    None => {
                        active.push(pk);
                        lambda.push(lambda_p);
                        break;
                    }
                    Some(j) => {
                        active.remove(j);
                        lambda.remove(j);
                    }
                }
            }
        }

        if let Some(refined) = refine_on_active(&g, &linear, &rows, &active) {
            let drift = refined.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            // same working set, so the two differ only by roundoff
            if drift <= 1e-6 * (1.0 + norm2(&x)) {
                x = refined;
            }
        }
        polish_onto_active(&mut x, &rows, &active);
        let slack = p.alloc.as_ref().map(|a| allocation_slack(a, &x));
        let mut active_set: Vec<ConstraintId> = active.iter().map(|k| rows[*k].0).collect();
        active_set.sort();
        Ok(QpSolution { objective: p.objective(&x), delta_u: x, slack, active_set, iterations })
    }

    /// Primal step `z = G⁻¹np − G⁻¹N r` and dual step `r = (NᵀG⁻¹N)⁻¹NᵀG⁻¹np`
    /// for the current working set `N`.
    fn directions(
        &self,
        g: &Factored,
        rows: &[(ConstraintId, LinearConstraint)],
        active: &[usize],
        np: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), QpError> {
        let ginv_np = g.ginv(np);
        if active.is_empty() {
            return Ok((ginv_np, Vec::new()));
        }
        let q = active.len();
        let ginv_n: Vec<Vec<f64>> = active.iter().map(|k| g.ginv(&rows[*k].1.row)).collect();
        let mut gram = Mat::zeros(q, q);
        for i in 0..q {
            for j in 0..q {
                gram[(i, j)] = dot(&rows[active[i]].1.row, &ginv_n[j]);
            }
        }
        let gram = gram.symmetrize();
        let rhs: Vec<f64> = active.iter().map(|k| dot(&rows[*k].1.row, &ginv_np)).collect();
        let r = gram.cholesky()?.solve_vec(&rhs);
        let mut z = ginv_np;
        for (col, rj) in ginv_n.iter().zip(&r) {
            for (zi, ci) in z.iter_mut().zip(col) {
                *zi -= rj * ci;
            }
        }
        Ok((z, r))
    }
}

/// Re-solves the equality-constrained program on the final working set in one
/// range-space step, `x = x₀ + G⁻¹N(NᵀG⁻¹N)⁻¹(b − Nᵀx₀)` with `x₀ = −G⁻¹g`.
/// The incremental updates carry roundoff of order cond(G)·ε per change of
/// working set; the direct solve does not accumulate it. Returns `None` when
/// the working-set Gram matrix is not numerically positive definite.
fn refine_on_active(
    g: &Factored,
    linear: &[f64],
    rows: &[(ConstraintId, LinearConstraint)],
    active: &[usize],
) -> Option<Vec<f64>> {
    let mut x: Vec<f64> = g.ginv(linear).into_iter().map(|v| -v).collect();
    if active.is_empty() {
        return Some(x);
    }
    let q = active.len();
    let ginv_n: Vec<Vec<f64>> = active.iter().map(|k| g.ginv(&rows[*k].1.row)).collect();
    let mut gram = Mat::zeros(q, q);
    for i in 0..q {
        for j in 0..q {
            gram[(i, j)] = dot(&rows[active[i]].1.row, &ginv_n[j]);
        }
    }
    let resid: Vec<f64> = active.iter().map(|k| -rows[*k].1.slack(&x)).collect();
    let mu = gram.symmetrize().cholesky().ok()?.solve_vec(&resid);
    for (col, m) in ginv_n.iter().zip(&mu) {
        for (xi, ci) in x.iter_mut().zip(col) {
            *xi += m * ci;
        }
    }
    Some(x)
}

/// Projects `x` onto the active rows' equality manifold so they hold to
/// machine precision; the step is of the order of the roundoff.
fn polish_onto_active(x: &mut [f64], rows: &[(ConstraintId, LinearConstraint)], active: &[usize]) {
    if active.is_empty() {
        return;
    }
    let q = active.len();
    let mut gram = Mat::zeros(q, q);
    for i in 0..q {
        for j in 0..q {
            gram[(i, j)] = dot(&rows[active[i]].1.row, &rows[active[j]].1.row);
        }
    }
    let resid: Vec<f64> = active.iter().map(|k| -rows[*k].1.slack(x)).collect();
    let Ok(chol) = gram.cholesky() else { return };
    let mu = chol.solve_vec(&resid);
    for (k, m) in active.iter().zip(&mu) {
        for (xi, ai) in x.iter_mut().zip(&rows[*k].1.row) {
            *xi += m * ai;
        }
    }
}

/// One-shot solve of a min-norm program (no allocation term expected).
pub fn solve_active_set(p: &QpProblem) -> Result<QpSolution, QpError> {
    ActiveSetSolver::new().solve(p)
}

/// One-shot solve of a slack-penalized allocation program.
pub fn solve_allocation(p: &QpProblem) -> Result<QpSolution, QpError> {
    if p.alloc.is_none() {
        return Err(QpError::Malformed("allocation program without an allocation term".into()));
    }
    ActiveSetSolver::new().solve(p)
}
