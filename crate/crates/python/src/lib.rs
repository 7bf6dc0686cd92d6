//! Python bindings: models, tracks, simulation, the integrated likelihood, the samplers
//! and ESS diagnostics.

use std::path::PathBuf;

use inch::config::SimulateConfig;
use inch::mcmc::Clock;
use inch::{
    simulate_track, Config, InchError, ModelSpec, ObservationTrack, Priors, RateRegistry, RunSettings, SamplerKind,
    SwitchSet, TimeUnit, Tuning,
};
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

create_exception!(inch, InchException, PyException);
create_exception!(inch, ValidationError, InchException);
create_exception!(inch, GuardError, InchException);

fn to_py(e: InchError) -> PyErr {
    if e.is_guard_breach() {
        GuardError::new_err(e.to_string())
    } else {
        match e {
            InchError::NumericalUnderflow(_) | InchError::DegenerateCovariance(_) => InchException::new_err(e.to_string()),
            _ => ValidationError::new_err(e.to_string()),
        }
    }
}

fn square(rows: Vec<Vec<f64>>, what: &str) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(ValidationError::new_err(format!("{what} must be a square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn parse_unit(unit: &str) -> PyResult<TimeUnit> {
    serde_json::from_value(serde_json::Value::from(unit)).map_err(|e| ValidationError::new_err(e.to_string()))
}

/// Switching movement model.
#[pyclass(name = "Model", module = "inch", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyModel {
    inner: ModelSpec,
}

#[pymethods]
impl PyModel {
    /// Brownian states with constant switching rates and rate prior bounds.
    #[staticmethod]
    #[pyo3(signature = (speeds, rates, bounds, dim=2, initial=None))]
    fn brownian(
        speeds: Vec<f64>,
        rates: Vec<Vec<f64>>,
        bounds: Vec<Vec<f64>>,
        dim: usize,
        initial: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let model = ModelSpec::brownian(dim, &speeds, square(rates, "rates")?, square(bounds, "bounds")?).map_err(to_py)?;
        let inner = match initial {
            Some(p) => model.with_initial(p).map_err(to_py)?,
            None => model,
        };
        Ok(PyModel { inner })
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn speeds(&self) -> Option<Vec<f64>> {
        self.inner.speeds()
    }

    #[getter]
    fn initial(&self) -> Vec<f64> {
        self.inner.initial().to_vec()
    }

    fn is_homogeneous(&self) -> bool {
        self.inner.is_homogeneous()
    }

    /// Largest row sum of the rate bounds; the smallest admissible `kappa`.
    fn max_bound_out_rate(&self) -> f64 {
        self.inner.max_bound_out_rate()
    }

    fn with_speeds(&self, speeds: Vec<f64>) -> PyResult<Self> {
        Ok(PyModel { inner: self.inner.with_speeds(&speeds).map_err(to_py)? })
    }

    fn __repr__(&self) -> String {
        format!("Model(n_states={}, dim={}, speeds={:?})", self.inner.n_states(), self.inner.dim(), self.inner.speeds())
    }
}

/// Observed track: strictly increasing times and one location per time.
#[pyclass(name = "Track", module = "inch", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyTrack {
    inner: ObservationTrack,
}

#[pymethods]
impl PyTrack {
    #[new]
    #[pyo3(signature = (times, locations, unit="minutes"))]
    fn new(times: Vec<f64>, locations: Vec<Vec<f64>>, unit: &str) -> PyResult<Self> {
        let inner = ObservationTrack::with_unit(times, locations, parse_unit(unit)?).map_err(to_py)?;
        Ok(PyTrack { inner })
    }

    /// Reads a track CSV, dropping rows with missing coordinates.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyTrack { inner: inch::track::ingest_csv(path).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    fn to_unit(&self, unit: &str) -> PyResult<Self> {
        Ok(PyTrack { inner: self.inner.to_unit(parse_unit(unit)?) })
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times().to_vec()
    }

    #[getter]
    fn locations(&self) -> Vec<Vec<f64>> {
        self.inner.locations().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Track(n_obs={}, dim={})", self.inner.len(), self.inner.dim())
    }
}

/// Draws of one sampler run.
#[pyclass(name = "ChainResult", module = "inch", frozen)]
pub struct PyChainResult {
    inner: inch::ChainOutput,
}

#[pymethods]
impl PyChainResult {
    /// Names of the tracked parameters, matching the columns of `draws`.
    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.quantity_names()
    }

    /// One row per retained draw: speeds followed by off-diagonal rates.
    #[getter]
    fn draws(&self) -> Vec<Vec<f64>> {
        self.inner.samples.iter().map(|s| s.speeds.iter().chain(&s.rates).copied().collect()).collect()
    }

    #[getter]
    fn loglik(&self) -> Vec<f64> {
        self.inner.samples.iter().map(|s| s.loglik).collect()
    }

    #[getter]
    fn switch_counts(&self) -> Vec<Vec<usize>> {
        self.inner.samples.iter().map(|s| s.switch_counts.clone()).collect()
    }

    #[getter]
    fn elapsed_s(&self) -> f64 {
        self.inner.elapsed_s
    }

    #[getter]
    fn guard_breaches(&self) -> u64 {
        self.inner.guard_breaches
    }

    /// Accepted and proposed counts per move type.
    fn acceptance<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let a = &self.inner.acceptance;
        let d = PyDict::new(py);
        d.set_item("trajectory", a.trajectory)?;
        d.set_item("labels", a.labels)?;
        d.set_item("speeds", a.speeds)?;
        d.set_item("rates", a.rates)?;
        Ok(d)
    }

    /// Per-parameter ESS, minimum ESS and ESS per second.
    fn efficiency<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = inch::EfficiencyReport::from_chain(&self.inner).map_err(to_py)?;
        let d = PyDict::new(py);
        let per = PyDict::new(py);
        for q in &r.quantities {
            per.set_item(&q.name, (q.ess, q.mean, q.sd))?;
        }
        d.set_item("quantities", per)?;
        d.set_item("min_ess", r.min_ess)?;
        d.set_item("elapsed_s", r.elapsed_s)?;
        d.set_item("ess_per_second", r.ess_per_second)?;
        Ok(d)
    }

    /// Writes the samples CSV.
    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        let f = std::fs::File::create(path).map_err(|e| to_py(e.into()))?;
        self.inner.write_csv(std::io::BufWriter::new(f)).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.samples.len()
    }
}

/// Loads a JSON config and returns the model it describes with its resolved `kappa`.
#[pyfunction]
fn load_config(path: PathBuf) -> PyResult<(PyModel, f64)> {
    let cfg = Config::load(path).map_err(to_py)?;
    let (inner, kappa) = cfg.resolve(&RateRegistry::default()).map_err(to_py)?;
    Ok((PyModel { inner }, kappa))
}

/// Simulates a path and observes it at gaps drawn from `intervals`.
#[pyfunction]
#[pyo3(signature = (model, kappa, n_obs, intervals, seed, missing_prob=0.0, unit="minutes"))]
fn simulate(
    model: &PyModel,
    kappa: f64,
    n_obs: usize,
    intervals: Vec<f64>,
    seed: u64,
    missing_prob: f64,
    unit: &str,
) -> PyResult<PyTrack> {
    let sim = SimulateConfig { n_obs, intervals, missing_prob, ..SimulateConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (inner, _) = simulate_track(&model.inner, kappa, &sim, parse_unit(unit)?, &mut rng).map_err(to_py)?;
    Ok(PyTrack { inner })
}

/// Log likelihood of a track given potential switch times per interval, with states and
/// switch locations integrated out.
#[pyfunction]
#[pyo3(signature = (model, track, switch_times, kappa, guard=1e6))]
fn hom_loglik(model: &PyModel, track: &PyTrack, switch_times: Vec<Vec<f64>>, kappa: f64, guard: f64) -> PyResult<f64> {
    let switches = SwitchSet::new(switch_times.into_iter().map(inch::IntervalSwitches::times_only).collect());
    inch::homolik::hom_forward_loglik(&track.inner, &switches, &model.inner, kappa, guard).map_err(to_py)
}

/// Runs `inch-hom`, `inch-het` or `baseline`. `tuning` is a dict of tuning fields.
#[pyfunction]
#[pyo3(signature = (sampler, model, track, kappa, iters, burn_in=0, thin=1, seed=1, update_params=true, tuning=None, speed_max=100.0))]
#[allow(clippy::too_many_arguments)]
fn run_chain(
    py: Python<'_>,
    sampler: &str,
    model: &PyModel,
    track: &PyTrack,
    kappa: f64,
    iters: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
    update_params: bool,
    tuning: Option<Bound<'_, PyDict>>,
    speed_max: f64,
) -> PyResult<PyChainResult> {
    let kind: SamplerKind = serde_json::from_value(serde_json::Value::from(sampler))
        .map_err(|_| ValidationError::new_err(format!("unknown sampler {sampler:?}")))?;
    let tuning: Tuning = match tuning {
        Some(d) => {
            let text: String = py.import("json")?.call_method1("dumps", (d,))?.extract()?;
            serde_json::from_str(&text).map_err(|e| ValidationError::new_err(format!("tuning: {e}")))?
        }
        None => Tuning::default(),
    };
    let settings = RunSettings {
        iters,
        burn_in,
        thin,
        seed,
        update_params,
        flat_likelihood: false,
        clock: Clock::default(),
    };
    let priors = Priors { speed_max };
    let (m, t) = (model.inner.clone(), track.inner.clone());
    let inner = py
        .detach(move || inch::run_chain(kind, &m, &t, kappa, &tuning, &priors, &settings))
        .map_err(to_py)?;
    Ok(PyChainResult { inner })
}

/// Geyer initial monotone sequence ESS of one series.
#[pyfunction]
fn ess(series: Vec<f64>) -> PyResult<f64> {
    inch::ess(&series).map_err(to_py)
}

#[pymodule(name = "inch")]
fn inch_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyTrack>()?;
    m.add_class::<PyChainResult>()?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(hom_loglik, m)?)?;
    m.add_function(wrap_pyfunction!(run_chain, m)?)?;
    m.add_function(wrap_pyfunction!(ess, m)?)?;
    m.add("InchException", m.py().get_type::<InchException>())?;
    m.add("ValidationError", m.py().get_type::<ValidationError>())?;
    m.add("GuardError", m.py().get_type::<GuardError>())?;
    Ok(())
}
