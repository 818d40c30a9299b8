use std::sync::Arc;

use icbf_core::cbf::{
    gradient_check, grad_norm_sup, icbf_constraint, mricbf_terms, ricbf_constraint, worst_case_phi, BarrierSpec,
    CbfConstraint, ErrorBounds, MarginForm, MricbfFilter,
};
use icbf_core::numerics::{dot, norm2, Mat};
use icbf_core::qp::{solve_active_set, BoxBounds, QpProblem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

const RADIUS: f64 = 1.5;

/// `h(y) = R² − ‖y‖²`, safe inside a disk.
fn disk() -> BarrierSpec {
    BarrierSpec::new(
        "disk",
        Arc::new(|y: &[f64]| RADIUS * RADIUS - dot(y, y)),
        Arc::new(|y: &[f64]| y.iter().map(|v| -2.0 * v).collect()),
        1.5,
    )
    .unwrap()
}

fn random_vec(rng: &mut SplitMix64, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..r)).collect()
}

fn random_mat(rng: &mut SplitMix64, rows: usize, cols: usize) -> Mat {
    Mat::new(rows, cols, random_vec(rng, rows * cols, 1.0)).unwrap()
}

fn same_row(x: &CbfConstraint, y: &CbfConstraint, tol: f64) -> bool {
    x.a.len() == y.a.len() && x.a.iter().zip(&y.a).all(|(p, q)| (p - q).abs() <= tol) && (x.b - y.b).abs() <= tol
}

fn solve_with(problem: &QpProblem) -> impl FnMut(&[CbfConstraint]) -> Result<icbf_core::qp::QpSolution, icbf_core::qp::QpError> + '_ {
    move |rows| {
        let mut p = problem.clone();
        p.ineq = rows.iter().map(CbfConstraint::to_linear).collect();
        solve_active_set(&p)
    }
}

#[test]
fn reduction_chain_at_sampled_states() {
    let spec = disk();
    let gns = grad_norm_sup(&spec, &[-2.0, -2.0], &[2.0, 2.0], 1000, 3).unwrap();
    let mut rng = SplitMix64::seed_from_u64(11);
    for form in [MarginForm::Additive, MarginForm::Product] {
        for _ in 0..1000 {
            let y = random_vec(&mut rng, 2, 2.0);
            let yd = random_vec(&mut rng, 2, 3.0);
            let b0 = random_mat(&mut rng, 2, 3);
            let kappa = [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0), rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)];
            let sigma_bar = rng.random_range(0.0..0.1);
            let theta = rng.random_range(0.0..0.1);
            // unboxed: a single row with a nonzero gradient is always feasible
            let problem = QpProblem::new(random_vec(&mut rng, 3, 1.0));

            // ε = 0: the measurement-robust row is the robust row
            let no_eps = ErrorBounds::new(sigma_bar, 0.0, theta, kappa).unwrap();
            let phi = worst_case_phi(&no_eps, gns);
            let robust = ricbf_constraint(&spec, &yd, &b0, &y, phi).unwrap();
            let mut filter = MricbfFilter::new(form);
            let out = filter.solve(std::slice::from_ref(&robust), &no_eps, problem.bounds.as_ref(), solve_with(&problem)).unwrap();
            assert!(same_row(&out.constraints[0], &robust, 1e-12), "{:?} vs {robust:?}", out.constraints[0]);

            // φ = 0 as well: the robust row is the plain incremental row
            let none = ErrorBounds::new(0.0, 0.0, theta, kappa).unwrap();
            let robust0 = ricbf_constraint(&spec, &yd, &b0, &y, worst_case_phi(&none, gns)).unwrap();
            let plain = icbf_constraint(&spec, &yd, &b0, &y).unwrap();
            assert!(same_row(&robust0, &plain, 1e-12));
            let out0 = filter.solve(std::slice::from_ref(&robust0), &none, problem.bounds.as_ref(), solve_with(&problem)).unwrap();
            assert!(same_row(&out0.constraints[0], &plain, 1e-12));
        }
    }
}

fn tightened_rhs(spec: &BarrierSpec, y: &[f64], yd: &[f64], b0: &Mat, bounds: &ErrorBounds, form: MarginForm, du_norm: f64) -> f64 {
    let base = icbf_constraint(spec, yd, b0, y).unwrap();
    let (a, b) = mricbf_terms(bounds);
    base.b + worst_case_phi(bounds, 4.0) + form.margin(a, b, du_norm)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn tightening_is_monotone_in_every_bound(
        y in prop::collection::vec(-2.0f64..2.0, 2),
        yd in prop::collection::vec(-3.0f64..3.0, 2),
        b0 in prop::collection::vec(-1.0f64..1.0, 4),
        base in prop::collection::vec(0.0f64..1.0, 7),
        bump in 0.0f64..1.0,
        which in 0usize..7,
        du_norm in 0.0f64..2.0,
        product in any::<bool>(),
    ) {
        let spec = disk();
        let b0 = Mat::new(2, 2, b0).unwrap();
        let form = if product { MarginForm::Product } else { MarginForm::Additive };
        let make = |v: &[f64]| ErrorBounds::new(v[0], v[1], v[2], [v[3], v[4], v[5], v[6]]).unwrap();
        let mut bigger = base.clone();
        bigger[which] += bump;
        let lo = tightened_rhs(&spec, &y, &yd, &b0, &make(&base), form, du_norm);
        let hi = tightened_rhs(&spec, &y, &yd, &b0, &make(&bigger), form, du_norm);
        prop_assert!(hi >= lo, "raising component {which} lowered rhs: {lo} -> {hi}");
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let lo = [-3.0, -3.0];
    let hi = [3.0, 3.0];
    assert!(gradient_check(&disk(), &lo, &hi, 100, 1).unwrap() <= 1e-4);
    assert!(gradient_check(&BarrierSpec::upper(0, 2, 0.5, 2.0).unwrap(), &lo, &hi, 100, 2).unwrap() <= 1e-4);
    assert!(gradient_check(&BarrierSpec::lower(1, 2, -0.5, 2.0).unwrap(), &lo, &hi, 100, 3).unwrap() <= 1e-4);
}

#[test]
fn boundary_states_keep_h_non_decreasing_under_admitted_error() {
    let spec = disk();
    let gns = grad_norm_sup(&spec, &[-2.0, -2.0], &[2.0, 2.0], 1000, 5).unwrap();
    let bounds = ErrorBounds::new(0.02, 0.05, 0.03, [1.0, 0.5, 0.2, 2.0]).unwrap();
    let phi = worst_case_phi(&bounds, gns);
    let (a, b) = mricbf_terms(&bounds);
    let mut rng = SplitMix64::seed_from_u64(21);
    let mut checked = 0;
    for _ in 0..500 {
        let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let y = [RADIUS * angle.cos(), RADIUS * angle.sin()];
        assert!(spec.h(&y).abs() < 1e-12);
        let yd = random_vec(&mut rng, 2, 2.0);
        let b0 = random_mat(&mut rng, 2, 2);
        let problem = QpProblem::new(random_vec(&mut rng, 2, 1.0)).with_bounds(BoxBounds::symmetric(2, 20.0));
        let base = ricbf_constraint(&spec, &yd, &b0, &y, phi).unwrap();
        for form in [MarginForm::Additive, MarginForm::Product] {
            let mut filter = MricbfFilter::new(form);
            // conditioning of random B₀ can make the tightened row unreachable
            let Ok(out) = filter.solve(std::slice::from_ref(&base), &bounds, problem.bounds.as_ref(), solve_with(&problem)) else {
                continue;
            };
            let du = &out.solution.delta_u;
            let admitted = phi + form.margin(a, b, out.norm_used);
            let grad = spec.grad(&y);
            let h_dot = dot(&grad, &yd) + dot(&grad, &b0.mul_vec(du));
            assert!(h_dot - admitted >= -1e-8, "ḣ {h_dot} below admitted error {admitted}");
            // the norm the row was tightened with covers the returned increment
            assert!(out.fallback || (out.norm_used - norm2(du)).abs() < filter.tol);
            checked += 1;
        }
    }
    assert!(checked > 900, "only {checked} feasible boundary cases");
}
