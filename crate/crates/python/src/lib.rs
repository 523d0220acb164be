//! Python bindings.

use std::sync::Arc;

use magnls::config::RunConfig;
use magnls::evolve::{evolve, global_existence_gate, EvolveConfig, Integrator, Status};
use magnls::groundstate::{gaussian_guess, solve, GroundStateConfig, InitialGuess};
use magnls::magnetic::PotentialSet;
use magnls::verify::{dispersive_decay, run_suite, DecayConfig, VerifyConfig};
use magnls::{make_grid, Diagnostics, Error, LocalSpec, NonlocalSpec, Sign, C64};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::SolverFailure { .. }
        | Error::Krylov(_)
        | Error::SlabTooLong { .. }
        | Error::PicardExhausted { .. }
        | Error::Stagnation { .. }
        | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_sign(sign: &str) -> PyResult<Sign> {
    match sign {
        "focusing" => Ok(Sign::Focusing),
        "defocusing" => Ok(Sign::Defocusing),
        other => Err(PyValueError::new_err(format!(
            "sign must be 'focusing' or 'defocusing', got {other:?}"
        ))),
    }
}

fn parse_integrator(kind: &str, n: u64, slab_steps: usize) -> PyResult<Integrator> {
    match kind {
        "strang" => Ok(Integrator::Strang),
        "picard" => Ok(Integrator::PicardYosida {
            n,
            slab_steps,
            picard_tol: 1e-10,
            picard_max_iter: 50,
        }),
        other => Err(PyValueError::new_err(format!(
            "integrator must be 'strang' or 'picard', got {other:?}"
        ))),
    }
}

/// Periodic grid `[-L, L)^N` with `n_axis` points per axis.
#[pyclass(name = "Grid", module = "magnls_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: Arc<magnls::Grid>,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(dim: usize, n_axis: usize, half_width: f64) -> PyResult<Self> {
        let inner = make_grid(magnls::GridSpec::new(dim, n_axis, half_width)).map_err(to_py)?;
        Ok(PyGrid { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n_axis(&self) -> usize {
        self.inner.n_axis()
    }

    #[getter]
    fn half_width(&self) -> f64 {
        self.inner.half_width()
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.inner.dx()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Grid coordinates along one axis.
    fn axis_coords(&self) -> Vec<f64> {
        self.inner.axis_coords().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(dim={}, n_axis={}, half_width={})",
            self.inner.dim(),
            self.inner.n_axis(),
            self.inner.half_width()
        )
    }
}

/// An m-component complex field on a grid, stored in row-major order.
#[pyclass(name = "Field", module = "magnls_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyField {
    inner: magnls::Field,
}

#[pymethods]
impl PyField {
    #[new]
    fn new(grid: &PyGrid, components: Vec<Vec<C64>>) -> PyResult<Self> {
        let inner = magnls::Field::from_components(grid.inner.clone(), components).map_err(to_py)?;
        Ok(PyField { inner })
    }

    /// `a_j exp(−|x|²/(2w²) + i k·x)` per component.
    #[staticmethod]
    #[pyo3(signature = (grid, amplitudes, width, momentum=None))]
    fn gaussian(grid: &PyGrid, amplitudes: Vec<f64>, width: f64, momentum: Option<Vec<f64>>) -> PyResult<Self> {
        if !(width > 0.0) {
            return Err(PyValueError::new_err("width must be positive"));
        }
        let k = momentum.unwrap_or_default();
        if !k.is_empty() && k.len() != grid.inner.dim() {
            return Err(PyValueError::new_err("momentum needs one entry per dimension"));
        }
        let inner = magnls::Field::from_fn(grid.inner.clone(), amplitudes.len(), |j, x| {
            let r2: f64 = x.iter().map(|c| c * c).sum();
            let phase: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum();
            C64::from_polar(amplitudes[j] * (-r2 / (2.0 * width * width)).exp(), phase)
        });
        Ok(PyField { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyField {
            inner: magnls::snapshot::load(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        magnls::snapshot::save(path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid {
            inner: self.inner.grid().clone(),
        }
    }

    fn components(&self) -> Vec<Vec<C64>> {
        self.inner.components().to_vec()
    }

    /// `‖Φ_j‖²` per component.
    fn charges(&self) -> Vec<f64> {
        self.inner.charges()
    }

    fn norm(&self) -> f64 {
        self.inner.norm()
    }

    fn distance(&self, other: &PyField) -> PyResult<f64> {
        self.inner.same_shape(&other.inner).map_err(to_py)?;
        Ok(self.inner.distance(&other.inner))
    }

    fn max_modulus(&self) -> f64 {
        self.inner.max_modulus()
    }
}

/// Potentials plus local and nonlocal nonlinearities.
#[pyclass(name = "System", module = "magnls_py", frozen)]
struct PySystem {
    inner: magnls::System,
}

fn diagnostics_dict<'py>(py: Python<'py>, d: &Diagnostics) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("t", d.t)?;
    out.set_item("charge", d.charge.clone())?;
    out.set_item("E_kin", d.e_kin)?;
    out.set_item("E_V", d.e_v)?;
    out.set_item("E_loc", d.e_loc)?;
    out.set_item("E_nonloc", d.e_nonloc)?;
    out.set_item("F_A", d.f_a)?;
    out.set_item("H1A_norm", d.h1a_norm)?;
    Ok(out)
}

#[pymethods]
impl PySystem {
    /// `v` is a constant or one value per grid point; `vector_potential`
    /// holds one list per axis; `nonlocal` is `(w, gamma, r0, mu)`.
    #[new]
    #[pyo3(signature = (grid, a, beta, l, sign="focusing", v=None, vector_potential=None, nonlocal=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        grid: &PyGrid,
        a: Vec<f64>,
        beta: Vec<Vec<f64>>,
        l: Vec<f64>,
        sign: &str,
        v: Option<Bound<'_, PyAny>>,
        vector_potential: Option<Vec<Vec<f64>>>,
        nonlocal: Option<(Vec<Vec<f64>>, f64, f64, f64)>,
    ) -> PyResult<Self> {
        let g = grid.inner.clone();
        let v = match v {
            None => vec![0.0; g.len()],
            Some(obj) => match obj.extract::<f64>() {
                Ok(c) => vec![c; g.len()],
                Err(_) => obj.extract::<Vec<f64>>()?,
            },
        };
        let avec = vector_potential.unwrap_or_else(|| vec![vec![0.0; g.len()]; g.dim()]);
        let pot = PotentialSet::new(g, avec, v).map_err(to_py)?;
        let local = LocalSpec {
            a,
            beta,
            l,
            sign: parse_sign(sign)?,
        };
        let nonlocal = nonlocal.map(|(w, gamma, r0, mu)| NonlocalSpec { w, gamma, r0, mu });
        Ok(PySystem {
            inner: magnls::System::new(pot, local, nonlocal).map_err(to_py)?,
        })
    }

    /// System and initial data from a TOML run configuration.
    #[staticmethod]
    fn from_config(path: &str) -> PyResult<(PySystem, PyField)> {
        let cfg = RunConfig::load(path).map_err(to_py)?;
        let sys = cfg.build_system().map_err(to_py)?;
        cfg.validate(&sys).map_err(to_py)?;
        let phi0 = cfg.initial_field(&sys).map_err(to_py)?;
        Ok((PySystem { inner: sys }, PyField { inner: phi0 }))
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid {
            inner: self.inner.grid().clone(),
        }
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    fn energy<'py>(&self, py: Python<'py>, field: &PyField) -> PyResult<Bound<'py, PyDict>> {
        let d = self.inner.energy(&field.inner).map_err(to_py)?;
        diagnostics_dict(py, &d)
    }

    /// `F_A'(Φ)` with respect to the real inner product.
    fn gradient(&self, field: &PyField) -> PyResult<PyField> {
        Ok(PyField {
            inner: self.inner.gradient(&field.inner).map_err(to_py)?,
        })
    }

    /// `(global, verdict)` of the global-existence conditions.
    fn global_gate(&self) -> (bool, String) {
        let gate = global_existence_gate(
            &self.inner.local,
            self.inner.nonlocal_spec(),
            self.inner.potentials.inf_v,
            self.inner.grid().dim(),
        );
        (gate.global, gate.verdict())
    }

    #[pyo3(signature = (field, dt, t_end, integrator="strang", blowup_threshold=f64::INFINITY, snapshot_stride=0, diagnostics_stride=1, n=10_000, slab_steps=16))]
    #[allow(clippy::too_many_arguments)]
    fn evolve<'py>(
        &self,
        py: Python<'py>,
        field: &PyField,
        dt: f64,
        t_end: f64,
        integrator: &str,
        blowup_threshold: f64,
        snapshot_stride: usize,
        diagnostics_stride: usize,
        n: u64,
        slab_steps: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = EvolveConfig {
            dt,
            t_end,
            integrator: parse_integrator(integrator, n, slab_steps)?,
            blowup_threshold,
            snapshot_stride,
            diagnostics_stride,
        };
        let rec = py
            .detach(|| evolve(&self.inner, &field.inner, &cfg))
            .map_err(to_py)?;
        let out = PyDict::new(py);
        let diags = rec
            .diagnostics
            .iter()
            .map(|d| diagnostics_dict(py, d))
            .collect::<PyResult<Vec<_>>>()?;
        out.set_item("diagnostics", diags)?;
        let (status, t_star, message) = match &rec.status {
            Status::Completed => ("completed", None, None),
            Status::BlowupDetected { t_star } => ("blowup_detected", Some(*t_star), None),
            Status::SolverFailure { t, message } => ("solver_failure", Some(*t), Some(message.clone())),
        };
        out.set_item("status", status)?;
        out.set_item("t_star", t_star)?;
        out.set_item("message", message)?;
        let snaps: Vec<(f64, PyField)> = rec
            .snapshots
            .iter()
            .map(|(t, f)| (*t, PyField { inner: f.clone() }))
            .collect();
        out.set_item("snapshots", snaps)?;
        out.set_item("final", PyField { inner: rec.final_field })?;
        Ok(out)
    }

    #[pyo3(signature = (masses, tau=1e-3, tol=1e-8, max_iter=100_000, width=1.0))]
    fn groundstate<'py>(
        &self,
        py: Python<'py>,
        masses: Vec<f64>,
        tau: f64,
        tol: f64,
        max_iter: usize,
        width: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = GroundStateConfig {
            masses,
            tau,
            tol,
            max_iter,
            initial: InitialGuess::Gaussian { width },
        };
        cfg.validate().map_err(to_py)?;
        let u0 = gaussian_guess(self.inner.grid(), &cfg.masses, width).map_err(to_py)?;
        let gs = py.detach(|| solve(&self.inner, &u0, &cfg)).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("lambda", gs.lambda)?;
        out.set_item("residual", gs.residual)?;
        out.set_item("F_A", gs.energy)?;
        out.set_item("iterations", gs.iterations)?;
        out.set_item("status", format!("{:?}", gs.status).to_lowercase())?;
        out.set_item("field", PyField { inner: gs.field })?;
        Ok(out)
    }
}

/// Runs the randomized inequality audit; one dict per check.
#[pyfunction]
#[pyo3(signature = (seed=0, samples=100, decay=true))]
fn verify<'py>(py: Python<'py>, seed: u64, samples: usize, decay: bool) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = VerifyConfig {
        samples,
        decay,
        ..VerifyConfig::default()
    };
    let reports = py.detach(|| run_suite(&cfg, seed)).map_err(to_py)?;
    reports
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("name", r.name)?;
            d.set_item("samples", r.samples)?;
            d.set_item("worst_margin", r.worst_margin)?;
            d.set_item("witness_seed", r.witness_seed)?;
            d.set_item("tolerance", r.tolerance)?;
            d.set_item("pass", r.pass)?;
            d.set_item("detail", r.detail)?;
            Ok(d)
        })
        .collect()
}

/// Free dispersive decay of a Gaussian: `(t, ‖T(t)v‖_∞)` table and fitted slope.
#[pyfunction]
#[pyo3(signature = (dim=1))]
fn decay<'py>(py: Python<'py>, dim: usize) -> PyResult<Bound<'py, PyDict>> {
    let cfg = DecayConfig::standard(dim);
    let res = py.detach(|| dispersive_decay(&cfg, None)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("table", res.table)?;
    out.set_item("slope", res.slope)?;
    out.set_item("expected", res.expected)?;
    out.set_item("boundary_mass", res.boundary_mass)?;
    Ok(out)
}

#[pymodule]
fn magnls_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PySystem>()?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(decay, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_choices() {
        assert_eq!(parse_sign("defocusing").unwrap(), Sign::Defocusing);
        assert!(parse_sign("attractive").is_err());
        assert!(matches!(
            parse_integrator("picard", 100, 4).unwrap(),
            Integrator::PicardYosida { n: 100, slab_steps: 4, .. }
        ));
        assert!(parse_integrator("rk4", 1, 1).is_err());
    }
}
