mod common;

use common::preset;
use icbf_core::cbf::FilterKind;
use icbf_core::cli::trace_table;
use icbf_core::harness::{run_pitch_scenario, run_scenario, simulate, SimError};
use icbf_core::qp::{solve_active_set, BoxBounds, LinearConstraint, QpProblem};
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

#[test]
fn identical_configs_give_identical_traces() {
    for name in ["siso-biased", "pitch-hgv"] {
        let cfg = preset(name, &["timing.t_end=3"]);
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        let (ta, tb) = (trace_table(&a), trace_table(&b));
        assert_eq!(ta.header, tb.header);
        for (ra, rb) in ta.rows.iter().zip(&tb.rows) {
            assert!(ra.iter().zip(rb).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn applied_input_never_leaves_the_box() {
    for name in ["siso-biased", "siso-biased-lpf", "pitch-hgv"] {
        for kind in FilterKind::ALL {
            let cfg = preset(name, &[&format!("filter.kind={kind}"), "timing.t_end=8"]);
            let scale = icbf_core::harness::angle_scale(&cfg);
            let (lo, hi) = (cfg.u_min * scale, cfg.u_max * scale);
            let trace = simulate(&cfg).unwrap();
            for r in &trace.records {
                assert!(r.u.iter().all(|u| (lo..=hi).contains(u)), "{name}/{kind} t = {}: {:?}", r.t, r.u);
            }
        }
    }
}

#[test]
fn strictly_feasible_reference_passes_through_unchanged() {
    let mut rng = SplitMix64::seed_from_u64(17);
    for _ in 0..500 {
        let m = rng.random_range(1..=4);
        let reference: Vec<f64> = (0..m).map(|_| rng.random_range(-0.5..0.5)).collect();
        let mut p = QpProblem::new(reference.clone()).with_bounds(BoxBounds::symmetric(m, 1.0));
        for _ in 0..rng.random_range(0..=3) {
            let row: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let at: f64 = row.iter().zip(&reference).map(|(a, x)| a * x).sum();
            p = p.with_ineq(LinearConstraint::new(row, at - rng.random_range(1e-9..0.5)));
        }
        let s = solve_active_set(&p).unwrap();
        assert_eq!(s.delta_u, reference);
        assert!(s.active_set.is_empty());
    }
}

#[test]
fn idle_filter_applies_the_performance_command() {
    for name in ["siso-biased", "pitch-hgv"] {
        for kind in [FilterKind::Standard, FilterKind::Mricbf] {
            let cfg = preset(name, &[&format!("filter.kind={kind}")]);
            let trace = simulate(&cfg).unwrap();
            let mut idle = 0;
            for r in trace.records.iter().filter(|r| !r.filter_active && !r.infeasible) {
                if cfg.plant == icbf_core::harness::PlantKind::Siso {
                    let scale = icbf_core::harness::angle_scale(&cfg);
                    let want = r.u_bar[0].clamp(cfg.u_min * scale, cfg.u_max * scale);
                    // incremental path reassembles u₀ + (ū − u₀)
                    assert!((r.u[0] - want).abs() <= 1e-15, "{name}/{kind} t = {}", r.t);
                }
                assert!(r.slack.iter().all(|s| *s >= -1e-9), "{name}/{kind} t = {}", r.t);
                idle += 1;
            }
            assert!(idle > 0, "{name}/{kind} never idle");
        }
    }
}

#[test]
fn exact_model_keeps_the_safe_set_forward_invariant() {
    let mut rng = SplitMix64::seed_from_u64(2024);
    for _ in 0..20 {
        let x0: f64 = rng.random_range(-0.5..=0.5);
        let cfg = preset(
            "siso-biased",
            &["filter.kind=standard", "plant.lambda=1", "sensor.gamma=0", &format!("plant.x0={x0}"), "timing.t_end=15"],
        );
        let (_, m) = run_scenario(&cfg).unwrap();
        assert!(m.min_h_overall() >= -1e-9, "x0 = {x0}: {}", m.min_h_overall());
    }
}

#[test]
fn strict_mode_surfaces_infeasibility() {
    // limits too tight for the barrier to be defended from an unsafe start
    let over = ["filter.kind=standard", "plant.x0=2", "limits.u_min=-0.01", "limits.u_max=0.01", "timing.t_end=1"];
    let mut strict: Vec<&str> = over.to_vec();
    strict.push("filter.strict=true");
    match simulate(&preset("siso-biased", &strict)) {
        Err(SimError::Infeasible { t, .. }) => assert_eq!(t, 0.0),
        other => panic!("expected infeasibility, got {:?}", other.map(|t| t.len())),
    }
    let (trace, m) = run_scenario(&preset("siso-biased", &over)).unwrap();
    assert!(m.infeasible_steps > 0);
    // fallback holds the previous input
    for w in trace.records.windows(2) {
        if w[1].infeasible {
            assert_eq!(w[1].u, w[0].u.iter().map(|u| u.clamp(-0.01, 0.01)).collect::<Vec<_>>());
        }
    }
}

#[test]
fn pitch_runner_rejects_other_plants() {
    assert!(run_pitch_scenario(&preset("siso-biased", &[])).unwrap_err().is_config());
}

#[test]
fn metrics_agree_with_the_trace() {
    let cfg = preset("siso-biased", &["filter.kind=standard"]);
    let (trace, m) = run_scenario(&cfg).unwrap();
    let min_h = trace.records.iter().flat_map(|r| r.h.iter().copied()).fold(f64::INFINITY, f64::min);
    assert_eq!(m.min_h_overall(), min_h);
    let violating = trace.records.iter().filter(|r| r.h.iter().any(|h| *h < 0.0)).count();
    assert!((m.violation_duration - violating as f64 * cfg.dt).abs() < 1e-12);
    assert!(m.summary().starts_with("min_h="));
}
