//! Eigenvalues of small dense real matrices.
//!
//! General matrices go through Householder reduction to upper Hessenberg form
//! followed by Francis double-shift QR sweeps (the EISPACK `hqr` scheme).
//! Symmetric matrices use cyclic Jacobi rotations, which are slower but give
//! accurate small eigenvalues for the definiteness checks.

use num_complex::Complex64;

use super::{Mat, NumericsError};

/// Imaginary-axis tolerance for hyperbolicity.
pub const HYPERBOLIC_TOL: f64 = 1e-9;

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

// column sweeps over row-major storage read clearer with explicit indices
#[allow(clippy::needless_range_loop)]
fn hessenberg(a: &Mat) -> Vec<Vec<f64>> {
    let n = a.rows();
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    if n < 3 {
        return h;
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];
    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[i][m - 1].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[i][m - 1] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;
        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[i][j];
            }
            f /= hh;
            for i in m..=high {
                h[i][j] -= f * ort[i];
            }
        }
        for row in h.iter_mut().take(high + 1) {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * row[j];
            }
            f /= hh;
            for j in m..=high {
                row[j] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[m][m - 1] = scale * g;
    }
    h
}

/// All eigenvalues of a square matrix, in no particular order.
#[allow(clippy::needless_range_loop)]
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex64>, NumericsError> {
    if !a.is_square() {
        return Err(NumericsError::Dimension(format!(
            "eigenvalues of non-square {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(NumericsError::NonFinite("eigenvalue input".into()));
    }
    let nn = a.rows();
    if nn == 0 {
        return Ok(Vec::new());
    }
    let mut h = hessenberg(a);
    let mut d = vec![0.0; nn];
    let mut e = vec![0.0; nn];
    let eps = f64::EPSILON;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z): (f64, f64, f64, f64, f64);
    let (mut w, mut x, mut y);

    let mut norm = 0.0;
    for (i, row) in h.iter().enumerate() {
        for v in &row[i.saturating_sub(1)..] {
            norm += v.abs();
        }
    }

    let mut n = nn as isize - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    while n >= 0 {
        let nu = n as usize;
        let mut l = nu;
        while l > 0 {
            s = h[l - 1][l - 1].abs() + h[l][l].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[l][l - 1].abs() < eps * s {
                break;
            }
            l -= 1;
        }

        if l == nu {
            h[nu][nu] += exshift;
            d[nu] = h[nu][nu];
            e[nu] = 0.0;
            n -= 1;
            iter = 0;
        } else if l + 1 == nu {
            w = h[nu][nu - 1] * h[nu - 1][nu];
            p = (h[nu - 1][nu - 1] - h[nu][nu]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[nu][nu] += exshift;
            h[nu - 1][nu - 1] += exshift;
            x = h[nu][nu];
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                d[nu - 1] = x + z;
                d[nu] = d[nu - 1];
                if z != 0.0 {
                    d[nu] = x - w / z;
                }
                e[nu - 1] = 0.0;
                e[nu] = 0.0;
            } else {
                d[nu - 1] = x + p;
                d[nu] = x + p;
                e[nu - 1] = z;
                e[nu] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = h[nu][nu];
            y = 0.0;
            w = 0.0;
            if l < nu {
                y = h[nu - 1][nu - 1];
                w = h[nu][nu - 1] * h[nu - 1][nu];
            }
            // exceptional shifts
            if iter == 10 {
                exshift += x;
                for (i, row) in h.iter_mut().enumerate().take(nu + 1) {
                    row[i] -= x;
                }
                s = h[nu][nu - 1].abs() + h[nu - 1][nu - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for (i, row) in h.iter_mut().enumerate().take(nu + 1) {
                        row[i] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total += 1;
            if total > MAX_SWEEPS_PER_EIGENVALUE * nn {
                return Err(NumericsError::NoConvergence {
                    what: "Hessenberg QR".into(),
                    residual: h[nu][nu - 1].abs(),
                });
            }

            let mut m = nu - 2;
            loop {
                z = h[m][m];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[m + 1][m] + h[m][m + 1];
                q = h[m + 1][m + 1] - z - r - s;
                r = h[m + 2][m + 1];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[m][m - 1].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[m - 1][m - 1].abs() + z.abs() + h[m + 1][m + 1].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                h[i][i - 2] = 0.0;
                if i > m + 2 {
                    h[i][i - 3] = 0.0;
                }
            }

            let mut k = m;
            while k < nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[k][k - 1];
                    q = h[k + 1][k - 1];
                    r = if notlast { h[k + 2][k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        k += 1;
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[k][k - 1] = -s * x;
                    } else if l != m {
                        h[k][k - 1] = -h[k][k - 1];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..nn {
                        p = h[k][j] + q * h[k + 1][j];
                        if notlast {
                            p += r * h[k + 2][j];
                            h[k + 2][j] -= p * z;
                        }
                        h[k][j] -= p * x;
                        h[k + 1][j] -= p * y;
                    }
                    for row in h.iter_mut().take(nu.min(k + 3) + 1) {
                        p = x * row[k] + y * row[k + 1];
                        if notlast {
                            p += z * row[k + 2];
                            row[k + 2] -= p * r;
                        }
                        row[k] -= p;
                        row[k + 1] -= p * q;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(d.into_iter().zip(e).map(|(re, im)| Complex64::new(re, im)).collect())
}

pub fn eig_real_parts(a: &Mat) -> Result<Vec<f64>, NumericsError> {
    Ok(eigenvalues(a)?.into_iter().map(|c| c.re).collect())
}

/// True when no eigenvalue lies within [`HYPERBOLIC_TOL`] of the imaginary axis.
pub fn check_hyperbolic(a: &Mat) -> Result<bool, NumericsError> {
    Ok(eig_real_parts(a)?.iter().all(|re| re.abs() > HYPERBOLIC_TOL))
}

pub fn is_hurwitz(a: &Mat) -> Result<bool, NumericsError> {
    Ok(eig_real_parts(a)?.iter().all(|re| *re < 0.0))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi, ascending.
pub fn sym_eigenvalues(a: &Mat) -> Result<Vec<f64>, NumericsError> {
    if !a.is_square() {
        return Err(NumericsError::Dimension("symmetric eigenvalues of non-square matrix".into()));
    }
    let scale = a.max_abs().max(1.0);
    if !a.is_symmetric(1e-9 * scale) {
        return Err(NumericsError::NotSymmetric);
    }
    let n = a.rows();
    let mut m = a.symmetrize();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
            ev.sort_by(f64::total_cmp);
            return Ok(ev);
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    Err(NumericsError::NoConvergence { what: "Jacobi sweeps".into(), residual: f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn diagonal_real_parts() {
        let ev = sorted(eig_real_parts(&Mat::diag(&[-1.0, -2.0])).unwrap());
        assert_eq!(ev, vec![-2.0, -1.0]);
    }

    #[test]
    fn rotation_is_not_hyperbolic() {
        let a = Mat::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let ev = eigenvalues(&a).unwrap();
        for c in &ev {
            assert!(c.re.abs() < 1e-15);
            assert!((c.im.abs() - 1.0).abs() < 1e-14);
        }
        assert!(!check_hyperbolic(&a).unwrap());
        assert!(check_hyperbolic(&Mat::identity(3).scale(-1.0)).unwrap());
    }

    #[test]
    fn companion_matrix_roots() {
        // λ² + 3λ + 2
        let a = Mat::from_rows(&[&[0.0, 1.0], &[-2.0, -3.0]]);
        let ev = sorted(eig_real_parts(&a).unwrap());
        assert!((ev[0] + 2.0).abs() < 1e-12 && (ev[1] + 1.0).abs() < 1e-12);
        assert!(check_hyperbolic(&a).unwrap());
    }

    #[test]
    fn larger_companion_matrix() {
        // roots 1..=6: product form expanded
        let coeffs = [720.0, -1764.0, 1624.0, -735.0, 175.0, -21.0];
        let n = 6;
        let mut a = Mat::zeros(n, n);
        for i in 0..n - 1 {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = -coeffs[j];
        }
        let ev = sorted(eig_real_parts(&a).unwrap());
        for (k, v) in ev.iter().enumerate() {
            assert!((v - (k as f64 + 1.0)).abs() < 1e-7, "{ev:?}");
        }
    }

    #[test]
    fn complex_pair_with_real_root() {
        // block diag([[1, -2],[2, 1]], -3) under a similarity
        let b = Mat::from_rows(&[&[1.0, -2.0, 0.0], &[2.0, 1.0, 0.0], &[0.0, 0.0, -3.0]]);
        let t = Mat::from_rows(&[&[1.0, 0.5, 0.2], &[0.0, 1.0, -0.3], &[0.1, 0.0, 1.0]]);
        let a = &(&t * &b) * &t.inverse().unwrap();
        let mut ev = eigenvalues(&a).unwrap();
        ev.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
        assert!((ev[0].re + 3.0).abs() < 1e-10 && ev[0].im.abs() < 1e-10);
        assert!((ev[1].re - 1.0).abs() < 1e-10 && (ev[1].im + 2.0).abs() < 1e-10);
        assert!((ev[2].re - 1.0).abs() < 1e-10 && (ev[2].im - 2.0).abs() < 1e-10);
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        let a = Mat::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let ev = sym_eigenvalues(&a).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
        assert!(matches!(
            sym_eigenvalues(&Mat::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]])),
            Err(NumericsError::NotSymmetric)
        ));
    }
}
