//! Python bindings. Structured results come back as plain dicts and lists.

use cowqkd::attack::{run_attack_sim, AttackParams};
use cowqkd::discrimination::{med_measurement, usd_failure_probability, DiscriminationProblem};
use cowqkd::optimize::{self, Budget, Objective, OptimizationTarget};
use cowqkd::states::ProtocolParams;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: cowqkd::Error) -> PyErr {
    match e {
        cowqkd::Error::NonConvergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Round-trips through JSON so nested results arrive as native objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn problem(alpha2: f64, f: f64, t_b: f64) -> PyResult<DiscriminationProblem> {
    let p = ProtocolParams::new(alpha2, f, t_b, 1.0).map_err(err)?;
    DiscriminationProblem::from_params(&p).map_err(err)
}

fn target(objective: &str, q_th: f64, v_th: f64) -> PyResult<OptimizationTarget> {
    let objective = match objective {
        "min" => Objective::MaxMinVisibility,
        "average" => Objective::MaxAverageVisibility,
        other => return Err(PyValueError::new_err(format!("objective must be \"min\" or \"average\", got {other:?}"))),
    };
    OptimizationTarget::new(objective, q_th, v_th).map_err(err)
}

/// Minimal average inconclusive probability of unambiguous discrimination.
#[pyfunction]
#[pyo3(signature = (alpha2, f, t_b = 0.5))]
fn q_usd(alpha2: f64, f: f64, t_b: f64) -> PyResult<f64> {
    usd_failure_probability(&problem(alpha2, f, t_b)?).map_err(err)
}

/// Minimum average error of a measurement that always answers.
#[pyfunction]
#[pyo3(signature = (alpha2, f, t_b = 0.5))]
fn med_error(alpha2: f64, f: f64, t_b: f64) -> PyResult<f64> {
    Ok(med_measurement(&problem(alpha2, f, t_b)?).map_err(err)?.avg_error)
}

/// Statistics Bob observes under one fixed sequential attack.
#[pyfunction]
#[pyo3(signature = (alpha2, f, eta, q_inc, q_p, m_min, beta2, n_signals = 200_000, seed = 0, t_b = 0.5))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    alpha2: f64,
    f: f64,
    eta: f64,
    q_inc: f64,
    q_p: f64,
    m_min: u32,
    beta2: f64,
    n_signals: usize,
    seed: u64,
    t_b: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let p = ProtocolParams::new(alpha2, f, t_b, eta).map_err(err)?;
    let a = AttackParams { q_inc, q_p, m_min, beta2 };
    let s = py.detach(|| run_attack_sim(&p, &a, n_signals, seed)).map_err(err)?;
    to_py(py, &s)
}

/// Largest `|α|²` at which the attack fails to reproduce Bob's statistics.
#[pyfunction]
#[pyo3(signature = (f, eta, q_th = 0.0, v_th = 1.0, objective = "min", t_b = 0.5, budget = 2, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn alpha_max<'py>(
    py: Python<'py>,
    f: f64,
    eta: f64,
    q_th: f64,
    v_th: f64,
    objective: &str,
    t_b: f64,
    budget: u32,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let t = target(objective, q_th, v_th)?;
    let a = py.detach(|| optimize::alpha_max(f, eta, t_b, &t, Budget(budget), seed)).map_err(err)?;
    to_py(py, &a)
}

/// Key-rate bound over a strictly decreasing transmittance grid.
#[pyfunction]
#[pyo3(signature = (f, eta_grid, q_th = 0.0, v_th = 1.0, objective = "min", t_b = 0.5, budget = 2, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn bound_sweep<'py>(
    py: Python<'py>,
    f: f64,
    eta_grid: Vec<f64>,
    q_th: f64,
    v_th: f64,
    objective: &str,
    t_b: f64,
    budget: u32,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let t = target(objective, q_th, v_th)?;
    let s = py.detach(|| optimize::bound_sweep(f, t_b, &eta_grid, &t, Budget(budget), seed)).map_err(err)?;
    to_py(py, &s)
}

#[pymodule]
fn cowqkd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(q_usd, m)?)?;
    m.add_function(wrap_pyfunction!(med_error, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_max, m)?)?;
    m.add_function(wrap_pyfunction!(bound_sweep, m)?)?;
    Ok(())
}
