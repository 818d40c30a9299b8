use icbf_core::numerics::Mat;
use icbf_core::qp::{
    solve_active_set, solve_allocation, solve_min_norm_closed_form, Allocation, BoxBounds, ConstraintId,
    LinearConstraint, QpError, QpProblem,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

fn random_instance(rng: &mut SplitMix64, m: usize) -> QpProblem {
    let half: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..0.5)).collect();
    let lo: Vec<f64> = half.iter().map(|h| -h).collect();
    let hi = half.clone();
    // constraints built around an interior point so the instance is feasible
    let anchor: Vec<f64> = half.iter().map(|h| rng.random_range(-0.8 * h..0.8 * h)).collect();
    let reference: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n_ineq = rng.random_range(0..=3);
    let mut p = QpProblem::new(reference).with_bounds(BoxBounds::new(lo, hi));
    for _ in 0..n_ineq {
        let row: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let at: f64 = row.iter().zip(&anchor).map(|(a, x)| a * x).sum();
        p = p.with_ineq(LinearConstraint::new(row, at - rng.random_range(0.0..0.2)));
    }
    p
}

/// Best feasible objective over a uniform grid of spacing `h` covering the box.
fn grid_best(p: &QpProblem, h: f64) -> Option<f64> {
    let b = p.bounds.as_ref().unwrap();
    let m = p.dim();
    let counts: Vec<usize> = (0..m).map(|i| ((b.hi[i] - b.lo[i]) / h).floor() as usize + 1).collect();
    let mut idx = vec![0usize; m];
    let mut x = vec![0.0; m];
    let mut best: Option<f64> = None;
    loop {
        for i in 0..m {
            x[i] = b.lo[i] + idx[i] as f64 * h;
        }
        if p.ineq.iter().all(|c| c.slack(&x) >= 0.0) {
            let f = p.objective(&x);
            if best.is_none_or(|v| f < v) {
                best = Some(f);
            }
        }
        let mut k = 0;
        loop {
            if k == m {
                return best;
            }
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Exhaustive oracle: every subset of rows taken as equalities, projected
/// reference, keep the best feasible candidate.
fn enumeration_best(p: &QpProblem) -> Option<f64> {
    let m = p.dim();
    let b = p.bounds.as_ref().unwrap();
    let mut rows: Vec<LinearConstraint> = p.ineq.clone();
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        rows.push(LinearConstraint::new(e.clone(), b.lo[i]));
        e[i] = -1.0;
        rows.push(LinearConstraint::new(e, -b.hi[i]));
    }
    let n = rows.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let set: Vec<&LinearConstraint> = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| &rows[k]).collect();
        if set.len() > m {
            continue;
        }
        let mut x = p.reference.clone();
        if !set.is_empty() {
            let q = set.len();
            let mut gram = Mat::zeros(q, q);
            for i in 0..q {
                for j in 0..q {
                    gram[(i, j)] = set[i].row.iter().zip(&set[j].row).map(|(a, b)| a * b).sum();
                }
            }
            let resid: Vec<f64> = set.iter().map(|c| -c.slack(&x)).collect();
            let Ok(lu) = gram.lu() else { continue };
            let mu = lu.solve_vec(&resid);
            for (c, mu) in set.iter().zip(&mu) {
                for (xi, ai) in x.iter_mut().zip(&c.row) {
                    *xi += mu * ai;
                }
            }
        }
        if p.is_feasible(&x, 1e-10) {
            let f = p.objective(&x);
            if best.is_none_or(|v| f < v) {
                best = Some(f);
            }
        }
    }
    best
}

fn check_kkt_bookkeeping(p: &QpProblem, s: &icbf_core::qp::QpSolution) {
    for id in &s.active_set {
        let c = p.constraint(*id).unwrap();
        assert!(c.slack(&s.delta_u).abs() <= 1e-8, "active {id} residual {}", c.slack(&s.delta_u));
    }
    let mut all: Vec<ConstraintId> = (0..p.ineq.len()).map(ConstraintId::Inequality).collect();
    if p.bounds.is_some() {
        all.extend((0..p.dim()).map(ConstraintId::Lower));
        all.extend((0..p.dim()).map(ConstraintId::Upper));
    }
    for id in all.iter().filter(|id| !s.active_set.contains(id)) {
        let c = p.constraint(*id).unwrap();
        assert!(c.slack(&s.delta_u) >= -1e-10, "inactive {id} violated by {}", c.slack(&s.delta_u));
    }
    assert!((s.objective - p.objective(&s.delta_u)).abs() <= 1e-10);
}

#[test]
fn randomized_instances_match_oracles() {
    let mut rng = SplitMix64::seed_from_u64(0x5eed);
    let dims = [1usize, 2, 4];
    for n in 0..200 {
        let m = dims[n % 3];
        let p = random_instance(&mut rng, m);
        let s = solve_active_set(&p).unwrap_or_else(|e| panic!("instance {n}: {e}"));
        check_kkt_bookkeeping(&p, &s);
        let exact = enumeration_best(&p).expect("feasible by construction");
        assert!((s.objective - exact).abs() <= 1e-9, "instance {n}: {} vs {exact}", s.objective);
        if m <= 2 {
            let grid = grid_best(&p, 1e-3).expect("grid hits the feasible set");
            assert!(s.objective <= grid + 1e-6, "instance {n}: {} vs grid {grid}", s.objective);
        } else {
            // a 1e-3 grid in four dimensions is out of reach; sample instead
            for _ in 0..20_000 {
                let b = p.bounds.as_ref().unwrap();
                let x: Vec<f64> = (0..m).map(|i| rng.random_range(b.lo[i]..=b.hi[i])).collect();
                if p.is_feasible(&x, 0.0) {
                    assert!(s.objective <= p.objective(&x) + 1e-6);
                }
            }
        }
    }
}

#[test]
fn single_row_agrees_with_grid_oracle() {
    let p = QpProblem::new(vec![0.0])
        .with_ineq(LinearConstraint::new(vec![1.0], 0.25))
        .with_bounds(BoxBounds::symmetric(1, 0.8));
    let s = solve_active_set(&p).unwrap();
    // grid at 1e-4 resolution
    let best = (0..=16_000)
        .map(|k| -0.8 + k as f64 * 1e-4)
        .filter(|x| *x >= 0.25 - 1e-12)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap();
    assert!((s.delta_u[0] - best).abs() <= 1e-3);
}

#[test]
fn infeasible_instances_are_detected() {
    let mut rng = SplitMix64::seed_from_u64(7);
    for _ in 0..50 {
        let m = rng.random_range(1..=3);
        let row: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rhs = row.iter().map(|a| a.abs()).sum::<f64>() * 0.5 + 0.1;
        let p = QpProblem::new(vec![0.0; m])
            .with_ineq(LinearConstraint::new(row, rhs))
            .with_bounds(BoxBounds::symmetric(m, 0.5));
        match solve_active_set(&p) {
            Err(QpError::Infeasible { conflicting }) => {
                assert!(conflicting.contains(&ConstraintId::Inequality(0)));
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }
}

#[test]
fn pseudo_inverse_oracle_for_allocation() {
    // minimum-norm solution of Bp x = t is Bpᵀ(BpBpᵀ)⁻¹t
    let bp = Mat::from_rows(&[&[1.0, 2.0, -1.0], &[0.5, 0.0, 1.0]]);
    let t = vec![1.0, -0.5];
    let bbt = &bp * &bp.transpose();
    let pinv = bp.transpose().mul_vec(&bbt.lu().unwrap().solve_vec(&t));
    let p = QpProblem::new(vec![0.0; 3]).with_alloc(Allocation {
        effectiveness: bp,
        target: t,
        slack_weight: 1e8,
    });
    let s = solve_allocation(&p).unwrap();
    for (a, b) in s.delta_u.iter().zip(&pinv) {
        assert!((a - b).abs() < 1e-6);
    }
}

proptest! {
    #[test]
    fn closed_form_agrees_with_active_set(
        a in -2.0f64..2.0,
        theta in 0.0f64..1.0,
        alpha_h in -1.0f64..2.0,
        b in prop::collection::vec(-2.0f64..2.0, 1..4),
    ) {
        prop_assume!(b.iter().map(|v| v * v).sum::<f64>() > 1e-6);
        let closed = solve_min_norm_closed_form(a, &b, theta, alpha_h).unwrap();
        let p = QpProblem::new(vec![0.0; b.len()]).with_ineq(LinearConstraint::new(b.clone(), theta - alpha_h - a));
        let s = solve_active_set(&p).unwrap();
        let diff: f64 = closed.iter().zip(&s.delta_u).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assert!(diff <= 1e-8);
    }

    #[test]
    fn slack_shrinks_as_weight_grows(
        row in prop::collection::vec(-2.0f64..2.0, 2),
        target in -3.0f64..3.0,
        limit in 0.1f64..1.0,
    ) {
        let mut last = f64::INFINITY;
        for k in 0..7 {
            let w = 10f64.powi(k);
            let p = QpProblem::new(vec![0.0, 0.0])
                .with_bounds(BoxBounds::symmetric(2, limit))
                .with_alloc(Allocation {
                    effectiveness: Mat::row_vector(&row),
                    target: vec![target],
                    slack_weight: w,
                });
            let s = solve_allocation(&p).unwrap();
            let d = s.slack.unwrap()[0].abs();
            prop_assert!(d <= last + 1e-9, "weight {w}: {d} > {last}");
            last = d;
        }
    }
}
