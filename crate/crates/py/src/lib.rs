//! Python bindings for `htclip`.
//!
//! Structured inputs (objective parts, oracle kinds, experiment configs) are
//! plain dicts in the same shape as the JSON configs; they cross the boundary
//! through Python's `json` module and serde on this side.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use htclip::algorithms::RecordStride;
use htclip::config::ExperimentConfig;
use htclip::noise::{self, make_oracle, NoiseSpec, OracleKind};
use htclip::problems::{prox_step, stabilized_prox_step, subgrad_f};
use htclip::schedules::{make_schedule, Regime, ScheduleParams};
use htclip::{clipping, harness, CompositeObjective, Domain, FKind, RKind};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Composite objective `f + r` over a domain.
#[pyclass(name = "Objective", module = "htclip_py", frozen)]
struct PyObjective(CompositeObjective);

#[pymethods]
impl PyObjective {
    /// `f` is a dict such as `{"type": "euclid-norm", "g": 1.0, "y": [0, 0]}`.
    /// `r` defaults to zero and `domain` to all of R^d.
    #[new]
    #[pyo3(signature = (f, r = None, domain = None, lipschitz = None))]
    fn new(
        f: &Bound<'_, PyAny>,
        r: Option<&Bound<'_, PyAny>>,
        domain: Option<&Bound<'_, PyAny>>,
        lipschitz: Option<f64>,
    ) -> PyResult<Self> {
        let f: FKind = from_py(f)?;
        let r: RKind = r.map(from_py).transpose()?.unwrap_or(RKind::Zero);
        let domain: Domain = match domain {
            Some(d) => from_py(d)?,
            None => Domain::AllSpace { d: f.dim().ok_or_else(|| err("cannot infer the dimension of f"))? },
        };
        let obj = match lipschitz {
            Some(g) => CompositeObjective::with_lipschitz(f, r, domain, g),
            None => CompositeObjective::new(f, r, domain),
        };
        obj.map(Self).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn lipschitz(&self) -> f64 {
        self.0.lipschitz_g
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.0.mu
    }

    /// `F(x) = f(x) + r(x)`.
    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.0.eval_f(&x).map_err(err)? + self.0.eval_r(&x).map_err(err)?)
    }

    fn subgrad(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        subgrad_f(&self.0, &x).map_err(err)
    }

    /// One proximal step from `x` along `g` with stepsize `eta`. With
    /// `anchor = (x1, eta_next)` the stabilized step is taken instead.
    #[pyo3(signature = (x, g, eta, anchor = None))]
    fn prox(&self, x: Vec<f64>, g: Vec<f64>, eta: f64, anchor: Option<(Vec<f64>, f64)>) -> PyResult<Vec<f64>> {
        match anchor {
            None => prox_step(&self.0.r, &self.0.domain, &x, &g, eta),
            Some((x1, eta_next)) => stabilized_prox_step(&self.0.r, &self.0.domain, &x, &x1, &g, eta, eta_next),
        }
        .map_err(err)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }

    fn __repr__(&self) -> String {
        format!("Objective(dim={}, lipschitz={}, mu={})", self.0.dim(), self.0.lipschitz_g, self.0.mu)
    }
}

/// Stochastic subgradient oracle with declared noise moments.
#[pyclass(name = "Oracle", module = "htclip_py", frozen)]
struct PyOracle(noise::GradOracle);

#[pymethods]
impl PyOracle {
    /// `kind` is a dict such as `{"type": "additive-gaussian", "scales": [1, 1]}`.
    /// Without `sigma_s` and `sigma_l` the constants follow from the kind.
    #[new]
    #[pyo3(signature = (objective, kind, p, sigma_s = None, sigma_l = None))]
    fn new(
        objective: &PyObjective,
        kind: &Bound<'_, PyAny>,
        p: f64,
        sigma_s: Option<f64>,
        sigma_l: Option<f64>,
    ) -> PyResult<Self> {
        let kind: OracleKind = from_py(kind)?;
        let declared = match (sigma_s, sigma_l) {
            (Some(s), Some(l)) => Some(NoiseSpec::new(p, s, l).map_err(err)?),
            (None, None) => None,
            _ => return Err(err("give both sigma_s and sigma_l or neither")),
        };
        make_oracle(&objective.0, kind, p, declared).map(Self).map_err(err)
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.noise.p
    }

    #[getter]
    fn sigma_s(&self) -> f64 {
        self.0.noise.sigma_s
    }

    #[getter]
    fn sigma_l(&self) -> f64 {
        self.0.noise.sigma_l
    }

    /// `n` independent draws at `x`.
    #[pyo3(signature = (objective, x, seed, n = 1))]
    fn sample(&self, objective: &PyObjective, x: Vec<f64>, seed: u64, n: usize) -> PyResult<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.0.sample(&objective.0, &x, &mut rng).map_err(err)).collect()
    }
}

/// Stepsize and clipping-threshold schedule.
#[pyclass(name = "Schedule", module = "htclip_py", frozen)]
struct PySchedule(htclip::Schedule);

#[pymethods]
impl PySchedule {
    /// `regime` is one of `cvx-hp-T`, `cvx-hp-anytime`, `cvx-ex-T`,
    /// `cvx-ex-anytime`, `str-hp`, `str-ex`.
    #[new]
    #[pyo3(signature = (regime, p, sigma_s, sigma_l, g, d, mu = 0.0, delta = None, alpha_clip = 0.5, horizon = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        regime: &str,
        p: f64,
        sigma_s: f64,
        sigma_l: f64,
        g: f64,
        d: f64,
        mu: f64,
        delta: Option<f64>,
        alpha_clip: f64,
        horizon: Option<u64>,
    ) -> PyResult<Self> {
        let regime: Regime = serde_json::from_value(serde_json::Value::String(regime.into()))
            .map_err(|_| err(format!("unknown regime `{regime}`")))?;
        let params = ScheduleParams { p, sigma_s, sigma_l, g, d, mu, delta, alpha_clip, t_known: horizon };
        make_schedule(regime, params).map(Self).map_err(err)
    }

    fn eta(&self, t: u64) -> PyResult<f64> {
        if t == 0 {
            return Err(err("iterations are counted from 1"));
        }
        Ok(self.0.eta(t))
    }

    fn tau(&self, t: u64) -> PyResult<f64> {
        if t == 0 {
            return Err(err("iterations are counted from 1"));
        }
        Ok(self.0.tau(t))
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }
}

/// Runs Clipped SGD, or its stabilized variant, and returns the trajectory
/// as a dict. `record_every = k` keeps a checkpoint every `k` iterations;
/// the default keeps a geometric subset.
#[pyfunction]
#[pyo3(signature = (objective, oracle, schedule, horizon, x1, seed, stabilized = false, record_every = None))]
#[allow(clippy::too_many_arguments)]
fn run_clipped_sgd<'py>(
    py: Python<'py>,
    objective: &PyObjective,
    oracle: &PyOracle,
    schedule: &PySchedule,
    horizon: u64,
    x1: Vec<f64>,
    seed: u64,
    stabilized: bool,
    record_every: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let stride = record_every.map_or_else(RecordStride::default, |k| RecordStride::Every { k });
    let traj = py
        .detach(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let run = if stabilized { htclip::run_stabilized_clipped_sgd } else { htclip::run_clipped_sgd };
            run(&objective.0, &oracle.0, &schedule.0, horizon, &x1, &mut rng, stride)
        })
        .map_err(err)?;
    to_py(py, &traj)
}

/// `min(1, tau/‖g‖) g`.
#[pyfunction]
fn clip(g: Vec<f64>, tau: f64) -> PyResult<Vec<f64>> {
    clipping::clip(&g, tau).map_err(err)
}

/// The six clipping-error bounds and whether the threshold condition holds.
#[pyfunction]
fn clip_bounds<'py>(
    py: Python<'py>,
    p: f64,
    sigma_s: f64,
    sigma_l: f64,
    grad_norm: f64,
    tau: f64,
    alpha: f64,
) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &clipping::clip_bounds(p, sigma_s, sigma_l, grad_norm, tau, alpha).map_err(err)?)
}

#[pyfunction]
fn d_eff_iid(d: usize, p: f64) -> PyResult<f64> {
    noise::d_eff_iid(d, p).map_err(err)
}

#[pyfunction]
fn d_eff_independent(sigmas: Vec<f64>, p: f64) -> PyResult<f64> {
    noise::d_eff_independent(&sigmas, p).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (d, p, eps = None))]
fn d_eff_stable<'py>(py: Python<'py>, d: usize, p: f64, eps: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &noise::d_eff_stable(d, p, eps).map_err(err)?)
}

/// Least-squares slope of `ln error` on `ln T`.
#[pyfunction]
fn fit_rate<'py>(py: Python<'py>, t_values: Vec<f64>, errors: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &harness::fit_rate(&t_values, &errors).map_err(err)?)
}

#[pyfunction]
fn derive_seed(master: u64, trial: u64, stream_tag: u64) -> u64 {
    harness::derive_seed(master, trial, stream_tag)
}

/// Runs a full experiment from a config dict and returns the result as a
/// dict. With `out_dir` the series, fits and manifest are also written there.
#[pyfunction]
#[pyo3(signature = (config, threads = None, out_dir = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &Bound<'_, PyAny>,
    threads: Option<usize>,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let text: String = config.py().import("json")?.call_method1("dumps", (config,))?.extract()?;
    let cfg = ExperimentConfig::from_json(&text).map_err(err)?;
    let result = py
        .detach(|| {
            let result = harness::run_experiment(&cfg, threads)?;
            if let Some(dir) = &out_dir {
                harness::persist(&result, dir)?;
            }
            Ok::<_, htclip::Error>(result)
        })
        .map_err(err)?;
    to_py(py, &result)
}

#[pymodule]
fn htclip_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyObjective>()?;
    m.add_class::<PyOracle>()?;
    m.add_class::<PySchedule>()?;
    m.add_function(wrap_pyfunction!(run_clipped_sgd, m)?)?;
    m.add_function(wrap_pyfunction!(clip, m)?)?;
    m.add_function(wrap_pyfunction!(clip_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(d_eff_iid, m)?)?;
    m.add_function(wrap_pyfunction!(d_eff_independent, m)?)?;
    m.add_function(wrap_pyfunction!(d_eff_stable, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
