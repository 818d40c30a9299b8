//! Continuous-time Lyapunov and algebraic Riccati equations, LQR gains, and the
//! Lyapunov ultimate bound.

use super::eigen::{is_hurwitz, sym_eigenvalues};
use super::{Mat, NumericsError};

const KLEINMAN_MAX_ITER: usize = 100;
pub const CARE_RESIDUAL_TOL: f64 = 1e-9;

/// Solves `Aclᵀ P + P Acl = −Q` by a Kronecker-vectorized linear solve.
///
/// `Acl` must be Hurwitz; the result is symmetrized.
pub fn lyapunov_solve(acl: &Mat, q: &Mat) -> Result<Mat, NumericsError> {
    if !acl.is_square() || !q.is_square() || acl.rows() != q.rows() {
        return Err(NumericsError::Dimension(format!(
            "lyapunov: A is {}x{}, Q is {}x{}",
            acl.rows(),
            acl.cols(),
            q.rows(),
            q.cols()
        )));
    }
    if !is_hurwitz(acl)? {
        return Err(NumericsError::Infeasible("closed-loop matrix is not Hurwitz".into()));
    }
    let n = acl.rows();
    let at = acl.transpose();
    let eye = Mat::identity(n);
    // column-major vec: vec(AᵀP) = (I⊗Aᵀ)vec(P), vec(PA) = (Aᵀ⊗I)vec(P)
    let lhs = &eye.kron(&at) + &at.kron(&eye);
    let mut rhs = Mat::zeros(n * n, 1);
    for j in 0..n {
        for i in 0..n {
            rhs[(j * n + i, 0)] = -q[(i, j)];
        }
    }
    let v = lhs.solve(&rhs)?;
    let mut p = Mat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            p[(i, j)] = v[(j * n + i, 0)];
        }
    }
    Ok(p.symmetrize())
}

pub fn lyapunov_residual(acl: &Mat, p: &Mat, q: &Mat) -> f64 {
    let r = &(&(&acl.transpose() * p) + &(p * acl)) + q;
    r.norm_inf()
}

pub fn care_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<f64, NumericsError> {
    let rinv_bt = r.solve(&b.transpose())?;
    let quad = &(p * b) * &(&rinv_bt * p);
    let res = &(&(&(&a.transpose() * p) + &(p * a)) - &quad) + q;
    Ok(res.norm_inf())
}

fn check_care_shapes(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<(), NumericsError> {
    let n = a.rows();
    let m = b.cols();
    if !a.is_square() || b.rows() != n || q.rows() != n || !q.is_square() || !r.is_square() || r.rows() != m {
        return Err(NumericsError::Dimension(format!(
            "care: A {}x{}, B {}x{}, Q {}x{}, R {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols(),
            q.rows(),
            q.cols(),
            r.rows(),
            r.cols()
        )));
    }
    if !q.is_symmetric(1e-12 * q.max_abs().max(1.0)) || !r.is_symmetric(1e-12 * r.max_abs().max(1.0)) {
        return Err(NumericsError::NotSymmetric);
    }
    r.cholesky()?;
    if sym_eigenvalues(q)?.first().is_some_and(|&ev| ev < -1e-12 * q.max_abs().max(1.0)) {
        return Err(NumericsError::NotPositiveDefinite("Q must be positive semidefinite".into()));
    }
    Ok(())
}

/// Positive root of the scalar Riccati equation `2ap − b²p²/r + q = 0`.
fn scalar_care(a: f64, b: f64, q: f64, r: f64) -> Result<f64, NumericsError> {
    let disc = (a * a + b * b * q / r).sqrt();
    if b != 0.0 {
        // rationalized branch avoids cancellation when a < 0
        if a >= 0.0 {
            Ok(r * (a + disc) / (b * b))
        } else {
            Ok(q / (disc - a))
        }
    } else if a < 0.0 {
        Ok(-q / (2.0 * a))
    } else {
        Err(NumericsError::Infeasible("(A, B) is not stabilizable".into()))
    }
}

/// Stabilizing seed gain via the Bass construction: with β above the spectral
/// spread of A, `Z` solving `(A+βI)Z + Z(A+βI)ᵀ = 2BBᵀ` gives `A − BBᵀZ⁻¹`
/// with every eigenvalue at real part `−β`.
fn stabilizing_seed(a: &Mat, b: &Mat) -> Result<Mat, NumericsError> {
    let n = a.rows();
    if is_hurwitz(a)? {
        return Ok(Mat::zeros(b.cols(), n));
    }
    let beta = a.norm_fro() + 1.0;
    let shifted = (&a.transpose() + &Mat::identity(n).scale(beta)).scale(-1.0);
    let bbt = (b * &b.transpose()).scale(2.0);
    let z = lyapunov_solve(&shifted, &bbt)?;
    let k = z
        .solve(b)
        .map_err(|_| NumericsError::Infeasible("(A, B) is not controllable; no stabilizing seed".into()))?
        .transpose();
    if !is_hurwitz(&(a - &(b * &k)))? {
        return Err(NumericsError::Infeasible("seed gain failed to stabilize (A, B)".into()));
    }
    Ok(k)
}

/// Stabilizing solution of `AᵀP + PA − PBR⁻¹BᵀP + Q = 0`.
///
/// Scalar problems use the closed-form root; larger ones run Kleinman–Newton
/// iteration from a stabilizing seed gain.
pub fn care_solve(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat, NumericsError> {
    check_care_shapes(a, b, q, r)?;
    let n = a.rows();
    if n == 1 && b.cols() == 1 {
        let p = scalar_care(a[(0, 0)], b[(0, 0)], q[(0, 0)], r[(0, 0)])?;
        return Ok(Mat::scalar(p));
    }
    let mut k = stabilizing_seed(a, b)?;
    let mut p = Mat::zeros(n, n);
    for _ in 0..KLEINMAN_MAX_ITER {
        let acl = a - &(b * &k);
        let rhs = q + &(&(&k.transpose() * r) * &k);
        let next = lyapunov_solve(&acl, &rhs)?;
        let step = (&next - &p).max_abs();
        p = next;
        k = r.solve(&(&b.transpose() * &p))?;
        if step <= 1e-14 * p.max_abs().max(1.0) {
            break;
        }
    }
    let residual = care_residual(a, b, q, r, &p)?;
    if residual > CARE_RESIDUAL_TOL * q.max_abs().max(1.0) {
        return Err(NumericsError::NoConvergence { what: "Kleinman iteration".into(), residual });
    }
    Ok(p)
}

/// LQR state-feedback gain `K = R⁻¹BᵀP` for `u = −Kx`.
pub fn lqr_gain(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat, NumericsError> {
    let p = care_solve(a, b, q, r)?;
    r.solve(&(&b.transpose() * &p))
}

/// Ultimate bound `√(2 λmax(P) / λmin(Q)) · D` for a Lyapunov pair under a
/// disturbance of magnitude `D`.
pub fn ultimate_bound(p: &Mat, q: &Mat, disturbance: f64) -> Result<f64, NumericsError> {
    if !(disturbance >= 0.0 && disturbance.is_finite()) {
        return Err(NumericsError::Domain(format!("disturbance magnitude {disturbance} must be ≥ 0")));
    }
    let ep = sym_eigenvalues(p)?;
    let eq = sym_eigenvalues(q)?;
    match (ep.first(), ep.last(), eq.first()) {
        (Some(&pmin), Some(&pmax), Some(&qmin)) if pmin > 0.0 && qmin > 0.0 => {
            Ok((2.0 * pmax / qmin).sqrt() * disturbance)
        }
        _ => Err(NumericsError::Domain("P and Q must be positive definite".into())),
    }
}
