//! Python module `waveop2d_py`: S-matrix fibers, bound states and the Levinson winding
//! for Gaussian wells -g·exp(-|x|²/a²).

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use waveop2d::birman_schwinger::TOL_SING;
use waveop2d::grid::make_grid;
use waveop2d::potential::{sample_potential, support_for, Potential, Shape, SupportQuadrature};
use waveop2d::smatrix::solve_fiber;
use waveop2d::theorem_lab::{
    bound_states, levinson_check, phase_curve, radial_shooting_oracle, PhaseCurveConfig,
};
use waveop2d::C64;

fn err(e: waveop2d::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn well(g: f64, width: f64) -> PyResult<Potential> {
    Potential::new(Shape::Gaussian { width }, g, 20.0).map_err(err)
}

fn quad(
    g: f64,
    width: f64,
    n: usize,
    half_width: f64,
    v_cut: f64,
) -> PyResult<Arc<SupportQuadrature>> {
    let grid = make_grid(n, half_width).map_err(err)?;
    Ok(Arc::new(
        support_for(&well(g, width)?, &grid, v_cut, 4000).map_err(err)?,
    ))
}

/// S(λ) as a list of rows of complex numbers, with its unitarity defect.
#[pyfunction]
#[pyo3(signature = (lam, g, width=1.0, n=64, half_width=8.0, n_omega=32, v_cut=1e-3))]
fn smatrix(
    lam: f64,
    g: f64,
    width: f64,
    n: usize,
    half_width: f64,
    n_omega: usize,
    v_cut: f64,
) -> PyResult<(Vec<Vec<C64>>, f64)> {
    let q = quad(g, width, n, half_width, v_cut)?;
    let f = solve_fiber(lam, &q, n_omega, TOL_SING).map_err(err)?;
    let m = &f.s.matrix;
    let rows = (0..n_omega)
        .map(|i| (0..n_omega).map(|j| m[(i, j)]).collect())
        .collect();
    Ok((rows, f.s.unitarity_defect))
}

/// Bound-state energies of the grid Hamiltonian (ascending).
#[pyfunction]
#[pyo3(signature = (g, width=1.0, n=128, half_width=16.0, k_max=6))]
fn grid_bound_states(
    g: f64,
    width: f64,
    n: usize,
    half_width: f64,
    k_max: usize,
) -> PyResult<Vec<f64>> {
    let grid = make_grid(n, half_width).map_err(err)?;
    let v = sample_potential(&well(g, width)?, &grid).map_err(err)?;
    Ok(bound_states(&grid, &v, k_max).map_err(err)?.energies)
}

/// Bound-state energies from radial shooting, ±ℓ levels listed twice.
#[pyfunction]
#[pyo3(signature = (g, width=1.0, ell_max=4))]
fn oracle_bound_states(g: f64, width: f64, ell_max: u32) -> PyResult<Vec<f64>> {
    Ok(radial_shooting_oracle(&well(g, width)?, ell_max)
        .map_err(err)?
        .energies())
}

/// Winding of arg det S over (0, ∞) against the oracle bound-state count.
#[pyfunction]
#[pyo3(signature = (g, width=1.0, n=64, half_width=8.0, v_cut=1e-3))]
fn levinson<'py>(
    py: Python<'py>,
    g: f64,
    width: f64,
    n: usize,
    half_width: f64,
    v_cut: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let q = quad(g, width, n, half_width, v_cut)?;
    let n_bound = radial_shooting_oracle(&well(g, width)?, 4)
        .map_err(err)?
        .count;
    let curve = py
        .allow_threads(|| phase_curve(&q, &PhaseCurveConfig::default()))
        .map_err(err)?;
    let rep = levinson_check(&curve, n_bound).map_err(err)?;
    let d = PyDict::new_bound(py);
    d.set_item("winding", rep.winding)?;
    d.set_item("nearest", rep.nearest)?;
    d.set_item("distance", rep.distance)?;
    d.set_item("n_bound", rep.n_bound)?;
    d.set_item("born_offset", rep.born_offset)?;
    Ok(d)
}

#[pymodule]
fn waveop2d_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(smatrix, m)?)?;
    m.add_function(wrap_pyfunction!(grid_bound_states, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_bound_states, m)?)?;
    m.add_function(wrap_pyfunction!(levinson, m)?)?;
    Ok(())
}
