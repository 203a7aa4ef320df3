//! Python bindings. Matrices cross the boundary as lists of rows; numpy
//! arrays convert via `.tolist()`.

use obfair::datagen::{gen_loan, LoanParams};
use obfair::experiment::run_loan;
use obfair::ob::{orthogonality_residual, transform};
use obfair::sob::SobConfig;
use obfair::{standardize, DataMatrix, ExperimentConfig, LowRankFactors, Method, ObConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: obfair::Error) -> PyErr {
    PyValueError::new_err(format!("{}: {e}", e.kind()))
}

fn matrix(rows: Vec<Vec<f64>>, prefix: &str) -> PyResult<DataMatrix> {
    let q = rows.first().map_or(0, Vec::len);
    let names = (1..=q).map(|j| format!("{prefix}{j}")).collect();
    DataMatrix::from_rows(&rows, names).map_err(py_err)
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Standardizes both inputs unless told they already are.
fn prepare(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, standardized: bool) -> PyResult<(DataMatrix, DataMatrix)> {
    let (a, b) = (matrix(a, "a")?, matrix(b, "b")?);
    if standardized {
        return Ok((a, b));
    }
    Ok((standardize(&a).map_err(py_err)?.0, standardize(&b).map_err(py_err)?.0))
}

fn factors_dict<'py, F: LowRankFactors>(
    py: Python<'py>,
    a: &DataMatrix,
    b: &DataMatrix,
    f: &F,
) -> PyResult<Bound<'py, PyDict>> {
    let at = transform(a, f).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("a_tilde", rows(at.values()))?;
    d.set_item("basis", rows(f.basis()))?;
    d.set_item("scores", rows(&f.scores()))?;
    d.set_item("recon_error", (a.values() - at.values()).norm())?;
    d.set_item("orthogonality_residual", orthogonality_residual(&at, b))?;
    Ok(d)
}

/// OB transform of `a` against `b`. Returns a dict with `a_tilde`, `basis`,
/// `scores`, `multipliers`, `recon_error`, `svd_error` and
/// `orthogonality_residual`.
#[pyfunction]
#[pyo3(signature = (a, b, k=None, standardized=false))]
fn fit_ob<'py>(
    py: Python<'py>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    k: Option<usize>,
    standardized: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let (a, b) = prepare(a, b, standardized)?;
    let fp = obfair::fit_ob(&a, &b, &ObConfig::new(k.unwrap_or(a.ncols()))).map_err(py_err)?;
    let d = factors_dict(py, &a, &b, &fp)?;
    d.set_item("multipliers", rows(&fp.multipliers))?;
    d.set_item("svd_error", fp.svd_error)?;
    Ok(d)
}

/// Sparse OB with `l1` budget `h` per basis vector.
#[pyfunction]
#[pyo3(signature = (a, b, k, h, eta=1e-6, max_iters=500, seed=0, standardized=false))]
#[allow(clippy::too_many_arguments)]
fn fit_sob<'py>(
    py: Python<'py>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    k: usize,
    h: f64,
    eta: f64,
    max_iters: usize,
    seed: u64,
    standardized: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let (a, b) = prepare(a, b, standardized)?;
    let cfg = SobConfig {
        eta,
        max_iters,
        ..SobConfig::new(k, h).with_seed(seed)
    };
    let res = obfair::fit_sob(&a, &b, &cfg).map_err(py_err)?;
    let d = factors_dict(py, &a, &b, &res)?;
    d.set_item("converged", res.converged.clone())?;
    d.set_item("support_sizes", res.support_sizes())?;
    Ok(d)
}

/// Loan dataset as a dict of columns (`B`, `E`, `I`, `Y`).
#[pyfunction]
#[pyo3(signature = (n=5000, seed=0))]
fn generate_loan<'py>(py: Python<'py>, n: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let ds = gen_loan(&LoanParams {
        n,
        seed,
        ..Default::default()
    })
    .map_err(py_err)?;
    let d = PyDict::new(py);
    for m in [&ds.b, &ds.a] {
        for (j, name) in m.col_names().iter().enumerate() {
            d.set_item(name, m.column(j))?;
        }
    }
    d.set_item("Y", ds.y.clone())?;
    Ok(d)
}

/// Runs the loan experiment and returns the metrics report as JSON text.
#[pyfunction]
#[pyo3(signature = (n=5000, seed=0, methods=None))]
fn evaluate_loan(n: usize, seed: u64, methods: Option<Vec<String>>) -> PyResult<String> {
    let mut cfg = ExperimentConfig::default();
    if let Some(ms) = methods {
        cfg.methods = ms
            .iter()
            .map(|m| m.parse::<Method>())
            .collect::<Result<_, _>>()
            .map_err(py_err)?;
    }
    let params = LoanParams {
        n,
        seed,
        ..Default::default()
    };
    let ev = run_loan(&params, &cfg).map_err(py_err)?;
    serde_json::to_string(&ev).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "obfair")]
pub fn obfair_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(fit_ob, m)?)?;
    m.add_function(wrap_pyfunction!(fit_sob, m)?)?;
    m.add_function(wrap_pyfunction!(generate_loan, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_loan, m)?)?;
    Ok(())
}
