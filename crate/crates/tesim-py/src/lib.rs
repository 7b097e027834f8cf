//! Python bindings for the [`tesim`] simulator.
//!
//! The module mirrors the command-line workflow at function granularity:
//! fetch a preset (`scenario_names`, `scenario_toml`), march a run from a
//! TOML document or a preset name (`run_toml`, `run_scenario`), or print the
//! quantitative-constants report (`constants_report`). Run results come back
//! as plain dicts/lists so they drop straight into numpy or pandas, and the
//! recomputed global energy ledger rides along with every run.

use pyo3::conversion::IntoPyObjectExt;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::{json, Value};

use tesim::config::{build_run, parse_config, RunConfig, SchemeChoice};
use tesim::constants::check_smallness;
use tesim::report::{constants_rows, constants_text};
use tesim::rothe::run_rothe;
use tesim::scenario::{scenario, SCENARIO_NAMES};
use tesim::verifier::global_ledger;
use tesim::SimError;

fn err(e: SimError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Recursively convert a JSON value into native Python objects.
fn json_to_py(py: Python<'_>, value: &Value) -> PyResult<Py<PyAny>> {
    match value {
        Value::Null => Ok(py.None()),
        Value::Bool(b) => b.into_py_any(py),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_py_any(py)
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_py_any(py)
            }
        }
        Value::String(s) => s.into_py_any(py),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_py_any(py)
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_py_any(py)
        }
    }
}

fn apply_overrides(
    cfg: &mut RunConfig,
    scheme: Option<&str>,
    steps: Option<usize>,
) -> PyResult<()> {
    if let Some(s) = scheme {
        cfg.scheme = match s {
            "a" | "A" => SchemeChoice::A,
            "b" | "B" => SchemeChoice::B,
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown scheme '{other}' (expected 'a' or 'b')"
                )))
            }
        };
    }
    if let Some(m) = steps {
        cfg.time.steps = m;
    }
    Ok(())
}

/// March one validated config and summarize the run as a JSON value.
fn execute(cfg: &RunConfig, strict: bool) -> Result<Value, SimError> {
    let built = build_run(cfg, strict)?;
    let traj = run_rothe(&built.problem, &built.rothe)?;
    let ledger =
        global_ledger(&traj, &built.problem.bundle, &traj.constants, &traj.pair)?;

    let mesh = &built.problem.theta_space.mesh;
    let last = traj.grid.steps;
    let steps: Vec<Value> = traj
        .steps
        .iter()
        .map(|r| {
            json!({
                "m": r.m,
                "t": r.t,
                "outer_iterations": r.outer_iterations,
                "newton_iterations_total": r.newton_iterations_total,
                "energy_lhs": r.energy.lhs,
                "energy_rhs": r.energy.rhs,
                "ball_norm": r.ball_norm,
                "ball_radius": r.ball_radius,
                "in_ball": r.in_ball,
            })
        })
        .collect();

    Ok(json!({
        "name": cfg.name,
        "scheme": format!("{:?}", traj.scheme),
        "steps": traj.grid.steps,
        "tau": traj.grid.tau,
        "t_final": traj.grid.t_final,
        "nodes": mesh.n_vertices(),
        "x": mesh.vertices.iter().map(|v| v[0]).collect::<Vec<_>>(),
        "y": mesh.vertices.iter().map(|v| v[1]).collect::<Vec<_>>(),
        "theta_final": traj.theta_at(last).values.as_slice().to_vec(),
        "phi_final": traj.phi_at(last).values.as_slice().to_vec(),
        "ledger": {
            "pass": ledger.pass,
            "min_margin": ledger.min_margin,
            "slack": ledger.slack,
            "phi_interpolant": ledger.phi_interpolant,
        },
        "smallness": built.verdict,
        "pair": traj.pair,
        "step_records": steps,
        "warnings": built.warnings,
    }))
}

/// Names of the built-in scenario presets.
#[pyfunction]
fn scenario_names() -> Vec<String> {
    SCENARIO_NAMES.iter().map(|s| s.to_string()).collect()
}

/// The TOML document of a preset, ready to tweak and feed to `run_toml`.
#[pyfunction]
fn scenario_toml(name: &str) -> PyResult<String> {
    let cfg = scenario(name).map_err(err)?;
    toml::to_string(&cfg).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Run a TOML config document and return the verified run summary.
#[pyfunction]
#[pyo3(signature = (text, scheme=None, steps=None, strict=false))]
fn run_toml(
    py: Python<'_>,
    text: &str,
    scheme: Option<&str>,
    steps: Option<usize>,
    strict: bool,
) -> PyResult<Py<PyAny>> {
    let mut cfg = parse_config(text).map_err(err)?;
    apply_overrides(&mut cfg, scheme, steps)?;
    cfg.validate().map_err(err)?;
    json_to_py(py, &execute(&cfg, strict).map_err(err)?)
}

/// Run a named preset and return the verified run summary.
#[pyfunction]
#[pyo3(signature = (name, scheme=None, steps=None, strict=false))]
fn run_scenario(
    py: Python<'_>,
    name: &str,
    scheme: Option<&str>,
    steps: Option<usize>,
    strict: bool,
) -> PyResult<Py<PyAny>> {
    let mut cfg = scenario(name).map_err(err)?;
    apply_overrides(&mut cfg, scheme, steps)?;
    cfg.validate().map_err(err)?;
    json_to_py(py, &execute(&cfg, strict).map_err(err)?)
}

/// Human-readable constants report (bounds, embedding constants, coercivity
/// pair, smallness verdicts) for a TOML config document.
#[pyfunction]
fn constants_report(text: &str) -> PyResult<String> {
    let cfg = parse_config(text).map_err(err)?;
    let built = build_run(&cfg, false).map_err(err)?;
    let bounds = built.problem.bundle.bounds();
    let verdict = check_smallness(&bounds, None);
    let rows =
        constants_rows(&bounds, &built.problem.constants, &built.problem.pair, &verdict, None);
    Ok(constants_text(&rows))
}

#[pymodule]
fn tesim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(scenario_names, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_toml, m)?)?;
    m.add_function(wrap_pyfunction!(run_toml, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(constants_report, m)?)?;
    Ok(())
}
