//! Python bindings: grids, state vectors, the split-operator propagator,
//! bundled scenarios and resource estimates.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use soqft::grid::{discretize, AnalyticState};
use soqft::hamiltonian::{Nucleus, ParticleSpec};
use soqft::observables;
use soqft::resources::{MoleculeSpec, ResourceReport};
use soqft::scenario::{self, RunOptions};
use soqft::{Convention, HamiltonianSpec, RegisterLayout, SoStepPlan, C64};
use std::path::PathBuf;
use std::sync::Arc;

fn err(e: soqft::Error) -> PyErr {
    match e {
        soqft::Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "SimulationBox", frozen, from_py_object)]
#[derive(Clone)]
struct PySimulationBox {
    inner: soqft::SimulationBox,
}

#[pymethods]
impl PySimulationBox {
    #[new]
    #[pyo3(signature = (dims, width, n_r, origin_offset = 0.5))]
    fn new(dims: usize, width: f64, n_r: usize, origin_offset: f64) -> PyResult<Self> {
        Ok(PySimulationBox {
            inner: soqft::SimulationBox::new(dims, width, n_r, origin_offset).map_err(err)?,
        })
    }

    #[getter]
    fn dims(&self) -> usize {
        self.inner.dims()
    }

    #[getter]
    fn n_r(&self) -> usize {
        self.inner.n_r
    }

    #[getter]
    fn pixels(&self) -> usize {
        self.inner.pixels()
    }

    fn dr(&self, d: usize) -> PyResult<f64> {
        if d >= self.inner.dims() {
            return Err(PyValueError::new_err(format!("dimension {d} out of range")));
        }
        Ok(self.inner.dr(d))
    }

    fn coordinate(&self, d: usize, n: i64) -> f64 {
        self.inner.coordinate(d, n)
    }

    fn __repr__(&self) -> String {
        format!(
            "SimulationBox(dims={}, widths={:?}, n_r={}, origin_offset={})",
            self.inner.dims(),
            self.inner.widths,
            self.inner.n_r,
            self.inner.origin_offset
        )
    }
}

#[pyclass(name = "StateVector", skip_from_py_object)]
#[derive(Clone)]
struct PyStateVector {
    inner: soqft::StateVector,
}

fn grid_layout(bx: &soqft::SimulationBox, particles: usize) -> PyResult<Arc<RegisterLayout>> {
    Ok(Arc::new(RegisterLayout::grid(particles, bx.dims(), bx.n_r).map_err(err)?))
}

fn single(bx: &soqft::SimulationBox, state: AnalyticState) -> PyResult<PyStateVector> {
    let d = discretize(&state, bx, Convention::TwosComplement).map_err(err)?;
    let inner = soqft::StateVector::from_amplitudes(grid_layout(bx, 1)?, d.amplitudes).map_err(err)?;
    Ok(PyStateVector { inner })
}

#[pymethods]
impl PyStateVector {
    /// Amplitudes in basis order (qubit q is bit q, particle 0 lowest).
    #[staticmethod]
    fn from_amplitudes(bx: &PySimulationBox, particles: usize, amplitudes: Vec<C64>) -> PyResult<Self> {
        let inner = soqft::StateVector::from_amplitudes(grid_layout(&bx.inner, particles)?, amplitudes).map_err(err)?;
        Ok(PyStateVector { inner })
    }

    #[staticmethod]
    fn basis(bx: &PySimulationBox, particles: usize, index: usize) -> PyResult<Self> {
        let inner = soqft::StateVector::basis(grid_layout(&bx.inner, particles)?, index).map_err(err)?;
        Ok(PyStateVector { inner })
    }

    /// Discretised 2D hydrogen-like eigenstate (n, m) for one particle.
    #[staticmethod]
    fn hydrogen2d(bx: &PySimulationBox, n: u32, m: i32) -> PyResult<Self> {
        single(&bx.inner, AnalyticState::Hydrogen2D { n, m })
    }

    #[staticmethod]
    #[pyo3(signature = (bx, n, l, m, z = 1.0))]
    fn hydrogen3d(bx: &PySimulationBox, n: u32, l: u32, m: i32, z: f64) -> PyResult<Self> {
        single(&bx.inner, AnalyticState::Hydrogen3D { n, l, m, z })
    }

    fn amplitudes(&self) -> Vec<C64> {
        self.inner.amplitudes().to_vec()
    }

    #[getter]
    fn num_qubits(&self) -> usize {
        self.inner.num_qubits()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn norm_sqr(&self) -> f64 {
        self.inner.norm_sqr()
    }

    fn inner_product(&self, other: &PyStateVector) -> PyResult<C64> {
        self.inner.inner(&other.inner).map_err(err)
    }

    fn fidelity(&self, other: &PyStateVector) -> PyResult<f64> {
        self.inner.fidelity(&other.inner).map_err(err)
    }

    /// Marginal probability density of one particle, indexed like its register.
    fn density(&self, particle: usize) -> PyResult<Vec<f64>> {
        observables::probability_density(&self.inner, particle).map_err(err)
    }
}

#[pyclass(name = "Propagator")]
struct PyPropagator {
    inner: soqft::Propagator,
}

#[pymethods]
impl PyPropagator {
    /// `particles` holds (mass, charge) pairs and `nuclei` (position, charge)
    /// pairs. Pair couplings default to the product of charges.
    #[new]
    #[pyo3(signature = (bx, particles, dt, nuclei = Vec::new(), field = Vec::new(), pair_couplings = None))]
    fn new(
        bx: &PySimulationBox,
        particles: Vec<(f64, f64)>,
        dt: f64,
        nuclei: Vec<(Vec<f64>, f64)>,
        field: Vec<f64>,
        pair_couplings: Option<Vec<Vec<f64>>>,
    ) -> PyResult<Self> {
        let spec = HamiltonianSpec {
            particles: particles.iter().map(|&(mass, charge)| ParticleSpec { mass, charge }).collect(),
            nuclei: nuclei.into_iter().map(|(position, charge)| Nucleus { position, charge }).collect(),
            pair_couplings,
            field,
            attenuation: None,
            singularity: Default::default(),
        };
        let layout = grid_layout(&bx.inner, spec.particles.len())?;
        let inner = soqft::Propagator::new(bx.inner.clone(), spec, layout, SoStepPlan::new(dt)).map_err(err)?;
        Ok(PyPropagator { inner })
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt()
    }

    /// Applies `steps` split-operator cycles in place.
    #[pyo3(signature = (state, steps = 1))]
    fn step(&self, py: Python<'_>, state: &mut PyStateVector, steps: usize) -> PyResult<()> {
        let st = &mut state.inner;
        py.detach(|| {
            for _ in 0..steps {
                self.inner.so_step(st)?;
            }
            Ok(())
        })
        .map_err(err)
    }

    /// Probability of the |+> ancilla outcome after `steps` controlled cycles.
    fn ipe_probability(&self, py: Python<'_>, state: &PyStateVector, steps: usize) -> PyResult<f64> {
        py.detach(|| observables::ipe_probability(&self.inner, &state.inner, steps)).map_err(err)
    }
}

/// Runs a bundled scenario or TOML file and returns one dict per variant.
#[pyfunction]
#[pyo3(signature = (config, out_dir, seed = None, threads = None, extended = false))]
fn run_scenario<'py>(
    py: Python<'py>,
    config: &str,
    out_dir: PathBuf,
    seed: Option<u64>,
    threads: Option<usize>,
    extended: bool,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = scenario::load(config).map_err(err)?;
    let opts = RunOptions {
        out_dir,
        seed,
        extended,
        threads,
    };
    let outs = py.detach(|| scenario::run_scenario(&cfg, &opts)).map_err(err)?;
    outs.into_iter()
        .map(|v| {
            let d = PyDict::new(py);
            d.set_item("label", v.label)?;
            d.set_item("dir", v.dir)?;
            d.set_item("seed", v.manifest.seed)?;
            d.set_item("artifacts", v.manifest.artifacts.iter().map(|a| a.file.clone()).collect::<Vec<_>>())?;
            d.set_item("energies", v.energies.iter().map(|e| (e.energy, e.uncertainty)).collect::<Vec<_>>())?;
            d.set_item("final_autocorrelation", v.final_autocorrelation)?;
            d.set_item("prep_success", v.prep_success)?;
            Ok(d)
        })
        .collect()
}

#[pyfunction]
fn list_scenarios() -> PyResult<Vec<(String, String, bool)>> {
    Ok(scenario::list_scenarios()
        .map_err(err)?
        .into_iter()
        .map(|s| (s.name, s.description, s.extended))
        .collect())
}

/// Resource estimate for a preset molecule ("nh3", "c2f6").
#[pyfunction]
fn estimate<'py>(py: Python<'py>, molecule: &str) -> PyResult<Bound<'py, PyDict>> {
    let spec = MoleculeSpec::preset(molecule).ok_or_else(|| PyValueError::new_err(format!("unknown molecule {molecule}")))?;
    let r = ResourceReport::new(&spec).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("molecule", r.molecule)?;
    d.set_item("particles", r.particles)?;
    d.set_item("n_r", r.n_r)?;
    d.set_item("qubits", r.qubits)?;
    d.set_item("depth_per_cycle", r.depth_per_cycle)?;
    d.set_item("depth_fast", r.depth_fast)?;
    d.set_item("depth_slow", r.depth_slow)?;
    Ok(d)
}

#[pyfunction]
fn bhattacharyya(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    soqft::grid::bhattacharyya(&p, &q).map_err(err)
}

#[pymodule]
fn pysoqft(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySimulationBox>()?;
    m.add_class::<PyStateVector>()?;
    m.add_class::<PyPropagator>()?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(bhattacharyya, m)?)?;
    Ok(())
}
