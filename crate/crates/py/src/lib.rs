//! Python bindings: thin wrappers over the core grid, field, kernel,
//! solver and rate-function layers. Values cross the boundary as plain
//! lists of floats.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dkw_core::kernel::{self, FourierMode};
use dkw_core::noise::NoiseSpec;
use dkw_core::rate::{rate_forward, rate_par};
use dkw_core::reg::{self, RegParams};
use dkw_core::solver::{
    solve_controlled, solve_skeleton, solve_spde, ControlMode, SolveOutput, SolverConfig,
};
use dkw_core::{DkwError, ScalarField, TorusGrid};

fn err(e: DkwError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Periodic lattice on the unit torus.
#[pyclass(frozen)]
struct Grid {
    inner: Arc<TorusGrid>,
}

#[pymethods]
impl Grid {
    #[new]
    fn new(d: usize, n: usize) -> PyResult<Self> {
        Ok(Grid {
            inner: TorusGrid::new(d, n).map_err(err)?,
        })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Grid(d={}, n={})", self.inner.dim(), self.inner.n())
    }
}

/// Scalar density field sampled on a grid.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Field {
    inner: ScalarField,
}

#[pymethods]
impl Field {
    #[new]
    fn new(grid: &Grid, values: Vec<f64>) -> PyResult<Self> {
        if values.len() != grid.inner.len() {
            return Err(PyValueError::new_err(format!(
                "expected {} values, got {}",
                grid.inner.len(),
                values.len()
            )));
        }
        Ok(Field {
            inner: ScalarField {
                grid: grid.inner.clone(),
                values,
            },
        })
    }

    #[staticmethod]
    fn constant(grid: &Grid, c: f64) -> Self {
        Field {
            inner: ScalarField::constant(&grid.inner, c),
        }
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    fn mass(&self) -> f64 {
        self.inner.mass()
    }

    fn min(&self) -> f64 {
        self.inner.min()
    }

    fn max(&self) -> f64 {
        self.inner.max()
    }

    fn l2_norm(&self) -> f64 {
        self.inner.l2_norm()
    }

    fn lp_norm(&self, p: f64) -> f64 {
        self.inner.lp_norm(p)
    }

    fn l1_distance(&self, other: &Field) -> f64 {
        self.inner.l1_distance(&other.inner)
    }

    #[pyo3(signature = (floor = 1e-12))]
    fn entropy(&self, floor: f64) -> f64 {
        reg::entropy(&self.inner, floor)
    }

    fn __len__(&self) -> usize {
        self.inner.values.len()
    }
}

/// Interaction kernel (vector field V with its assumption exponents).
#[pyclass]
struct Kernel {
    inner: kernel::Kernel,
}

#[pymethods]
impl Kernel {
    #[staticmethod]
    fn zero(grid: &Grid) -> Self {
        Kernel {
            inner: kernel::kernel_zero(&grid.inner),
        }
    }

    /// modes: list of (k, sin_amp, cos_amp) with one entry per component.
    #[staticmethod]
    fn smooth(grid: &Grid, modes: Vec<(Vec<i64>, Vec<f64>, Vec<f64>)>) -> PyResult<Self> {
        let modes = modes
            .into_iter()
            .map(|(k, sin_amp, cos_amp)| FourierMode {
                k,
                sin_amp,
                cos_amp,
            })
            .collect();
        Ok(Kernel {
            inner: kernel::kernel_smooth_fourier(&grid.inner, modes).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (grid, alpha, sign = 1.0, gamma = 0.0))]
    fn power_law(grid: &Grid, alpha: f64, sign: f64, gamma: f64) -> PyResult<Self> {
        let k = kernel::kernel_power_law(&grid.inner, alpha, sign).map_err(err)?;
        let k = if gamma > 0.0 {
            kernel::mollify_kernel(&k, gamma).map_err(err)?
        } else {
            k
        };
        Ok(Kernel { inner: k })
    }

    /// Assumption report as a dict.
    fn check<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = kernel::check_lps(&self.inner, self.inner.grid()).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("lp_norm_v", r.lp_norm_v)?;
        d.set_item("lq_norm_div_v", r.lq_norm_div_v)?;
        d.set_item("growth_factor_v", r.growth_factor_v)?;
        d.set_item("growth_factor_div", r.growth_factor_div)?;
        d.set_item("a1_exponents_ok", r.a1_exponents_ok)?;
        d.set_item("a2_exponents_ok", r.a2_exponents_ok)?;
        d.set_item("trend_ok", r.trend_ok)?;
        d.set_item("pass", r.pass)?;
        Ok(d)
    }

    /// Convolution V * rho, returned per component.
    fn convolve(&self, rho: &Field) -> PyResult<Vec<Vec<f64>>> {
        let out = dkw_core::periodic_convolve(&self.inner.field, &rho.inner).map_err(err)?;
        Ok(out.components)
    }
}

/// Trajectory summary returned by the solver entry points.
#[pyclass]
struct SolveResult {
    #[pyo3(get)]
    records: Vec<(f64, f64, f64, f64, f64, f64, f64)>,
    #[pyo3(get)]
    warnings: Vec<String>,
    #[pyo3(get)]
    mass_drift: f64,
    final_density: Field,
}

#[pymethods]
impl SolveResult {
    fn final_density(&self) -> Field {
        self.final_density.clone()
    }
}

fn wrap_output(out: SolveOutput) -> SolveResult {
    SolveResult {
        records: out
            .trajectory
            .records
            .iter()
            .map(|r| (r.t, r.mass, r.min, r.max, r.entropy, r.dissipation_cum, r.l2))
            .collect(),
        warnings: out.warnings,
        mass_drift: out.trajectory.mass_drift(),
        final_density: Field {
            inner: out.trajectory.final_snapshot().clone(),
        },
    }
}

fn base_config(t_final: f64, dt: f64, eta: f64, stride: usize) -> SolverConfig {
    let mut cfg = SolverConfig::deterministic(t_final, dt);
    cfg.reg = RegParams {
        eta,
        ..RegParams::default()
    };
    cfg.snapshot_stride = stride;
    cfg
}

/// One sample path of the noisy dynamics with noise cutoff k and scale eps.
#[pyfunction]
#[pyo3(signature = (rho0, kernel, t_final, dt, eps, k, seed, eta = 0.01, stride = 1))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    rho0: &Field,
    kernel: &Kernel,
    t_final: f64,
    dt: f64,
    eps: f64,
    k: u32,
    seed: u64,
    eta: f64,
    stride: usize,
) -> PyResult<SolveResult> {
    let mut cfg = base_config(t_final, dt, eta, stride);
    cfg.eps = eps;
    cfg.noise = Some(NoiseSpec::new(rho0.inner.grid.dim(), k, seed));
    let out = solve_spde(&rho0.inner, &kernel.inner, &cfg).map_err(err)?;
    Ok(wrap_output(out))
}

/// Deterministic run; with phi it follows the gradient-controlled dynamics.
#[pyfunction]
#[pyo3(signature = (rho0, kernel, t_final, dt, eta = 0.01, stride = 1, phi = None))]
fn skeleton(
    rho0: &Field,
    kernel: &Kernel,
    t_final: f64,
    dt: f64,
    eta: f64,
    stride: usize,
    phi: Option<&Field>,
) -> PyResult<SolveResult> {
    let cfg = base_config(t_final, dt, eta, stride);
    let control = match phi {
        Some(p) => ControlMode::DriftGradient(p.inner.clone()),
        None => ControlMode::None,
    };
    let out = solve_skeleton(&rho0.inner, &control, &kernel.inner, &cfg).map_err(err)?;
    Ok(wrap_output(out))
}

/// Forward cost of the gradient control phi and the rate recovered from
/// the resulting path; returns (i_forward, i_par).
#[pyfunction]
#[pyo3(signature = (rho0, kernel, phi, t_final, dt, eta = 0.01))]
fn rate_drift_gradient(
    rho0: &Field,
    kernel: &Kernel,
    phi: &Field,
    t_final: f64,
    dt: f64,
    eta: f64,
) -> PyResult<(f64, f64)> {
    let cfg = base_config(t_final, dt, eta, 1);
    let control = ControlMode::DriftGradient(phi.inner.clone());
    let out = solve_controlled(&rho0.inner, &kernel.inner, &control, &cfg).map_err(err)?;
    let fwd = rate_forward(&out.control);
    let par = rate_par(&out.trajectory, &kernel.inner, &cfg).map_err(err)?;
    Ok((fwd, par.total))
}

#[pyfunction]
fn sigma_half(eta: f64, zeta: f64) -> f64 {
    reg::sigma_half(eta, zeta)
}

#[pyfunction]
fn sigma(eta: f64, zeta: f64) -> f64 {
    reg::sigma(eta, zeta)
}

/// Noise cutoff K(eps) = max(1, floor(eps^-beta)) and eps * K^(d+2).
#[pyfunction]
fn scaling_k(eps: f64, beta: f64, d: usize) -> PyResult<(u32, f64)> {
    dkw_core::scaling_k(eps, beta, d).map_err(err)
}


#[pymodule]
fn dkw_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<Field>()?;
    m.add_class::<Kernel>()?;
    m.add_class::<SolveResult>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(skeleton, m)?)?;
    m.add_function(wrap_pyfunction!(rate_drift_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_half, m)?)?;
    m.add_function(wrap_pyfunction!(sigma, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_k, m)?)?;
    Ok(())
}
