//! Python bindings: scenario runs, the QP solver and LQR design.
//!
//! Matrices cross the boundary as lists of rows, traces as a dict of
//! column name to list of floats.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use icbf_core::cli::{layered_config, presets as core_presets, trace_table, CliError};
use icbf_core::harness::{run_scenario as core_run, Metrics};
use icbf_core::numerics::{lqr_gain as core_lqr, Mat};
use icbf_core::qp::{solve_active_set, solve_min_norm_closed_form, BoxBounds, LinearConstraint, QpError, QpProblem};

fn to_mat(rows: Vec<Vec<f64>>) -> PyResult<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Mat::new(r, c, rows.into_iter().flatten().collect()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn qp_err(e: QpError) -> PyErr {
    match e {
        QpError::Malformed(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn cli_err(e: CliError) -> PyErr {
    if e.exit_code() == 1 {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// `(name, description)` of every bundled scenario.
#[pyfunction]
fn presets() -> Vec<(String, String)> {
    core_presets().into_iter().map(|p| (p.name.to_string(), p.description.to_string())).collect()
}

fn metrics_dict<'py>(py: Python<'py>, m: &Metrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("min_h", m.min_h_overall())?;
    d.set_item("min_h_per_barrier", m.min_h.clone())?;
    d.set_item("violation_duration", m.violation_duration)?;
    d.set_item("tracking_rmse", m.tracking_rmse)?;
    d.set_item("max_delta_u", m.max_delta_u)?;
    d.set_item("total_variation", m.total_variation)?;
    d.set_item("infeasible_steps", m.infeasible_steps)?;
    d.set_item("fixed_point_fallbacks", m.fixed_point_fallbacks)?;
    d.set_item("max_sigma", m.max_sigma)?;
    d.set_item("max_abs_y", m.max_abs_y)?;
    if let Some(b) = &m.ultimate_bound {
        d.set_item("ultimate_bound", b.bound)?;
        d.set_item("max_y_after_transient", b.max_y_after_transient)?;
    }
    d.set_item("summary", m.summary())?;
    Ok(d)
}

/// Runs a scenario built from an optional preset, optional `key = value`
/// text and `key=value` overrides (later layers win). Returns
/// `(trace, metrics)`; angles in the trace are radians.
#[pyfunction]
#[pyo3(signature = (preset=None, config=None, overrides=Vec::new()))]
fn run_scenario<'py>(
    py: Python<'py>,
    preset: Option<&str>,
    config: Option<&str>,
    overrides: Vec<String>,
) -> PyResult<(Bound<'py, PyDict>, Bound<'py, PyDict>)> {
    let cfg = layered_config(preset, config.map(|t| ("<config>", t)), &overrides).map_err(cli_err)?;
    let (trace, metrics) = py
        .detach(|| core_run(&cfg))
        .map_err(|e| if e.is_config() { PyValueError::new_err(e.to_string()) } else { PyRuntimeError::new_err(e.to_string()) })?;
    let table = trace_table(&trace);
    let columns = PyDict::new(py);
    for (i, name) in table.header.iter().enumerate() {
        columns.set_item(name, table.rows.iter().map(|r| r[i]).collect::<Vec<f64>>())?;
    }
    Ok((columns, metrics_dict(py, &metrics)?))
}

/// Minimum-norm correction `min ‖x − reference‖²` subject to
/// `row·x ≥ rhs` for each `(row, rhs)` and an optional box.
#[pyfunction]
#[pyo3(signature = (reference, constraints=Vec::new(), lower=None, upper=None))]
fn solve_qp<'py>(
    py: Python<'py>,
    reference: Vec<f64>,
    constraints: Vec<(Vec<f64>, f64)>,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut p = QpProblem::new(reference);
    for (row, rhs) in constraints {
        p = p.with_ineq(LinearConstraint::new(row, rhs));
    }
    match (lower, upper) {
        (Some(lo), Some(hi)) => p = p.with_bounds(BoxBounds::new(lo, hi)),
        (None, None) => {}
        _ => return Err(PyValueError::new_err("lower and upper must be given together")),
    }
    let s = solve_active_set(&p).map_err(qp_err)?;
    let d = PyDict::new(py);
    d.set_item("x", s.delta_u)?;
    d.set_item("objective", s.objective)?;
    d.set_item("iterations", s.iterations)?;
    d.set_item("active_set", s.active_set.iter().map(ToString::to_string).collect::<Vec<_>>())?;
    Ok(d)
}

/// Closed-form minimum-norm increment for a single barrier row.
#[pyfunction]
fn min_norm_increment(a: f64, b: Vec<f64>, theta: f64, alpha_h: f64) -> PyResult<Vec<f64>> {
    solve_min_norm_closed_form(a, &b, theta, alpha_h).map_err(qp_err)
}

/// LQR gain `K` (for `u = −Kx`) from matrices given as lists of rows.
#[pyfunction]
fn lqr_gain(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, q: Vec<Vec<f64>>, r: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let k = core_lqr(&to_mat(a)?, &to_mat(b)?, &to_mat(q)?, &to_mat(r)?).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((0..k.rows()).map(|i| k.row(i).to_vec()).collect())
}

/// Adds every binding to `m`; shared by the extension entry point and
/// embedded interpreters.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(solve_qp, m)?)?;
    m.add_function(wrap_pyfunction!(min_norm_increment, m)?)?;
    m.add_function(wrap_pyfunction!(lqr_gain, m)?)?;
    Ok(())
}

#[pymodule]
fn icbf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_become_row_major_matrix() {
        let m = to_mat(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m[(1, 0)], 3.0);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(to_mat(vec![vec![1.0, 2.0], vec![3.0]]).is_err());
    }
}
