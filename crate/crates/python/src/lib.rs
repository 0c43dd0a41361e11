//! Python bindings: scenario loading, staged runs and the gap sweep.
//! Structured results cross the boundary as JSON and come back as dicts.

use std::path::PathBuf;

use lamlab::diagnostics::{gap_sweep, GapSweepSpec};
use lamlab::lab::{self, LabError, RunOptions, Stage};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(err: LabError) -> PyErr {
    match err.exit_code() {
        2 => PyValueError::new_err(err.to_string()),
        1 => PyOSError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = lab::finite_json(value).map_err(to_py)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_stage(stage: &str, refine: usize) -> PyResult<Stage> {
    Ok(match stage {
        "verify-geometry" => Stage::VerifyGeometry,
        "mesh" => Stage::Mesh,
        "solve" => Stage::Solve,
        "diagnose" => Stage::Diagnose,
        "sweep" => Stage::Sweep,
        "run" => Stage::Run,
        "convergence" => Stage::Convergence { refine },
        other => return Err(PyValueError::new_err(format!("unknown stage `{other}`"))),
    })
}

/// Validated scenario with defaults applied, as a dict.
#[pyfunction]
fn load_scenario<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let config = lab::load_scenario(&path).map_err(to_py)?;
    json_to_py(py, &config)
}

/// Key-order independent SHA-256 of scenario text.
#[pyfunction]
fn scenario_hash(text: &str) -> PyResult<String> {
    lab::scenario_hash(text).map_err(to_py)
}

/// Runs one stage of a scenario file and returns the run manifest.
#[pyfunction]
#[pyo3(signature = (scenario, out, stage = "run", refine = 3, force = false, seed = None))]
fn run<'py>(
    py: Python<'py>,
    scenario: PathBuf,
    out: PathBuf,
    stage: &str,
    refine: usize,
    force: bool,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let stage = parse_stage(stage, refine)?;
    let config = lab::load_scenario(&scenario).map_err(to_py)?;
    let manifest = py
        .detach(|| lab::run_stage(&config, &out, stage, &RunOptions { force, seed }))
        .map_err(to_py)?;
    json_to_py(py, &manifest)
}

/// Gap sweep over the neck-layers family; returns the sweep table.
#[pyfunction]
#[pyo3(signature = (eps, a0, nx = 128, ny = 8, seed = 0xC0FFEE))]
fn sweep<'py>(py: Python<'py>, eps: Vec<f64>, a0: f64, nx: usize, ny: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let spec = GapSweepSpec { eps, a0, nx, ny, seed, ..Default::default() };
    let table = py.detach(|| gap_sweep(&spec));
    json_to_py(py, &table)
}

#[pymodule]
fn pylamlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(load_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_hash, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
