//! Python bindings: thin wrappers over the core types and pipelines. Configs
//! travel as JSON strings (the same schema the CLI consumes); matrices cross
//! the boundary as nested lists of Python complex numbers.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use xlmimo::channel::{self, LosModel, SteeringParams};
use xlmimo::geometry::{self, SceneGeometry, Side};
use xlmimo::harness::{self, ExperimentConfig};
use xlmimo::numerics::CMat;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_config(config_json: &str) -> PyResult<ExperimentConfig> {
    if config_json.trim().is_empty() {
        Ok(ExperimentConfig::desk_scale())
    } else {
        ExperimentConfig::from_json(config_json).map_err(err)
    }
}

fn parse_side(side: &str) -> PyResult<Side> {
    match side {
        "rx" => Ok(Side::Rx),
        "tx" => Ok(Side::Tx),
        other => Err(PyValueError::new_err(format!("unknown side '{other}'"))),
    }
}

fn to_rows(m: &CMat) -> Vec<Vec<Complex64>> {
    (0..m.rows())
        .map(|r| (0..m.cols()).map(|c| m[(r, c)]).collect())
        .collect()
}

fn from_rows(rows: Vec<Vec<Complex64>>) -> PyResult<CMat> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(PyValueError::new_err("matrix must be nonempty"));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Ok(CMat::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

/// Default experiment config as pretty JSON; `paper_scale` switches to the
/// headline 128-antenna setup.
#[pyfunction]
#[pyo3(signature = (paper_scale = false))]
fn default_config(paper_scale: bool) -> String {
    if paper_scale {
        ExperimentConfig::paper_scale().to_json_pretty()
    } else {
        ExperimentConfig::desk_scale().to_json_pretty()
    }
}

/// Near-field distance criteria as CSV for the config's array.
#[pyfunction]
#[pyo3(signature = (config_json = "", threshold = 0.9))]
fn criteria(config_json: &str, threshold: f64) -> PyResult<String> {
    let cfg = parse_config(config_json)?;
    let array = cfg.array.to_config().map_err(err)?;
    harness::criteria_csv(&array, threshold).map_err(err)
}

/// Brute-force worst-case subarray-model phase error at one range:
/// returns (closed_form_bound, brute_force_max, structure_ok).
#[pyfunction]
#[pyo3(signature = (config_json = "", range_m = 50.0, grid = 64))]
fn verify_lemma1(config_json: &str, range_m: f64, grid: usize) -> PyResult<(f64, f64, bool)> {
    let cfg = parse_config(config_json)?;
    let array = cfg.array.to_config().map_err(err)?;
    let rep = geometry::lemma1_bruteforce(&array, range_m, grid);
    Ok((
        rep.analytic_bound_rad,
        rep.max_error_rad,
        rep.matches_expected_structure(&array, 0.2),
    ))
}

/// Run one deterministic trial; returns the per-estimator record as JSON.
#[pyfunction]
#[pyo3(signature = (config_json = "", sweep_value = 10.0, trial_index = 0))]
fn run_trial(config_json: &str, sweep_value: f64, trial_index: u64) -> PyResult<String> {
    let cfg = parse_config(config_json)?;
    let record = harness::run_trial(&cfg, sweep_value, trial_index).map_err(err)?;
    Ok(record.to_json_pretty())
}

/// Run the configured sweep; returns the contract CSV.
#[pyfunction]
#[pyo3(signature = (config_json = ""))]
fn run_sweep(config_json: &str) -> PyResult<String> {
    let cfg = parse_config(config_json)?;
    let rows = harness::run_sweep(&cfg).map_err(err)?;
    Ok(harness::sweep_csv(&cfg, &rows))
}

/// Analytical complexity figures plus measured growth ratios as CSV.
#[pyfunction]
#[pyo3(signature = (config_json = ""))]
fn complexity_report(config_json: &str) -> PyResult<String> {
    let cfg = parse_config(config_json)?;
    harness::complexity_csv(&cfg).map_err(err)
}

/// Near-field steering vector for the config's array.
#[pyfunction]
#[pyo3(signature = (config_json, side, linear, quadratic))]
fn steering_vector(
    config_json: &str,
    side: &str,
    linear: f64,
    quadratic: f64,
) -> PyResult<Vec<Complex64>> {
    let cfg = parse_config(config_json)?;
    let array = cfg.array.to_config().map_err(err)?;
    Ok(channel::steering_vector(
        &array,
        parse_side(side)?,
        SteeringParams::new(linear, quadratic),
    ))
}

/// LoS channel matrix under one wavefront model
/// (nuswm | uswm | parabolic | sopm), as a list of rows.
#[pyfunction]
#[pyo3(signature = (config_json, model, range_m, elev_rx, elev_tx, azim_rx, gain = None))]
#[allow(clippy::too_many_arguments)]
fn los_channel(
    config_json: &str,
    model: &str,
    range_m: f64,
    elev_rx: f64,
    elev_tx: f64,
    azim_rx: f64,
    gain: Option<Complex64>,
) -> PyResult<Vec<Vec<Complex64>>> {
    let cfg = parse_config(config_json)?;
    let array = cfg.array.to_config().map_err(err)?;
    let model = match model {
        "nuswm" => LosModel::Nuswm,
        "uswm" => LosModel::Uswm,
        "parabolic" => LosModel::Parabolic,
        "sopm" => LosModel::Sopm,
        other => return Err(PyValueError::new_err(format!("unknown model '{other}'"))),
    };
    let geom = SceneGeometry::new(
        range_m,
        elev_rx,
        elev_tx,
        azim_rx,
        gain.unwrap_or(Complex64::ONE),
    );
    Ok(to_rows(&channel::los_channel(&array, &geom, model)))
}

/// Normalized mean square error between two matrices given as lists of rows.
#[pyfunction]
fn nmse(estimate: Vec<Vec<Complex64>>, truth: Vec<Vec<Complex64>>) -> PyResult<f64> {
    harness::nmse(&from_rows(estimate)?, &from_rows(truth)?).map_err(err)
}

#[pymodule]
fn xlmimo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(criteria, m)?)?;
    m.add_function(wrap_pyfunction!(verify_lemma1, m)?)?;
    m.add_function(wrap_pyfunction!(run_trial, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(complexity_report, m)?)?;
    m.add_function(wrap_pyfunction!(steering_vector, m)?)?;
    m.add_function(wrap_pyfunction!(los_channel, m)?)?;
    m.add_function(wrap_pyfunction!(nmse, m)?)?;
    Ok(())
}
