//! Python bindings: configuration, environment stepping, link physics,
//! controllers and the exact solver.

use std::collections::HashMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mec_core::agents::{Controller, Darling, DeepSarl};
use mec_core::baselines::{Baseline, BaselineKind};
use mec_core::env::{space_sizes, StepOutcome};
use mec_core::harness::{run_seed, Algorithm, Metric};
use mec_core::oracle::{build_kernel, value_iteration, DEFAULT_MAX_ITERATIONS};
use mec_core::{physics, Error, JointAction, NetworkState};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Contract(_) | Error::Parse(_) | Error::SizeGuard { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "SystemConfig", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: mec_core::SystemConfig,
}

#[pymethods]
impl PyConfig {
    /// Six-BS setup; channel matrices drawn from `matrix_seed`.
    #[staticmethod]
    #[pyo3(signature = (matrix_seed = 0))]
    fn six_bs(matrix_seed: u64) -> Self {
        Self {
            inner: mec_core::SystemConfig::six_bs(matrix_seed),
        }
    }

    /// 18-state instance small enough for exact dynamic programming.
    #[staticmethod]
    fn tiny() -> Self {
        Self {
            inner: mec_core::SystemConfig::tiny(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = mec_core::SystemConfig::from_toml_str(text).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(py_err)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    /// (number of states, number of joint actions).
    fn space_sizes(&self) -> (u128, u128) {
        space_sizes(&self.inner)
    }

    #[getter]
    fn num_bs(&self) -> usize {
        self.inner.num_bs
    }

    #[getter]
    fn task_arrival_prob(&self) -> f64 {
        self.inner.task_arrival_prob
    }

    #[setter]
    fn set_task_arrival_prob(&mut self, v: f64) {
        self.inner.task_arrival_prob = v;
    }

    #[getter]
    fn energy_arrival_rate(&self) -> f64 {
        self.inner.energy_arrival_rate
    }

    #[setter]
    fn set_energy_arrival_rate(&mut self, v: f64) {
        self.inner.energy_arrival_rate = v;
    }

    #[getter]
    fn discount(&self) -> f64 {
        self.inner.discount
    }

    #[setter]
    fn set_discount(&mut self, v: f64) {
        self.inner.discount = v;
    }
}

fn state_dict(s: &NetworkState) -> HashMap<&'static str, Vec<usize>> {
    HashMap::from([
        ("task_queue", vec![s.task_queue as usize]),
        ("energy_queue", vec![s.energy_queue as usize]),
        ("association", vec![s.association]),
        ("gains", s.gains.clone()),
    ])
}

fn outcome_dict(o: &StepOutcome) -> HashMap<&'static str, f64> {
    let d = &o.diagnostics;
    let mut m = HashMap::from([
        ("utility", o.utility.total),
        ("delay", d.delay),
        ("drops", f64::from(d.drops)),
        ("queuing", f64::from(d.queuing)),
        ("payment", d.payment),
        ("penalty", f64::from(d.penalty)),
        ("task_queue", f64::from(o.next_state.task_queue)),
        ("energy_queue", f64::from(o.next_state.energy_queue)),
        ("association", o.next_state.association as f64),
    ]);
    for (name, v) in ["u1", "u2", "u3", "u4", "u5"].into_iter().zip(o.utility.components) {
        m.insert(name, v);
    }
    m
}

#[pyclass(name = "Environment")]
struct PyEnvironment {
    inner: mec_core::Environment,
}

#[pymethods]
impl PyEnvironment {
    #[new]
    fn new(cfg: &PyConfig, seed: u64) -> PyResult<Self> {
        let inner = mec_core::Environment::new(cfg.inner.clone(), seed).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn state(&self) -> HashMap<&'static str, Vec<usize>> {
        state_dict(self.inner.state())
    }

    /// Applies (offload target, energy units) for one epoch.
    fn step(&mut self, offload: usize, energy: u32) -> PyResult<HashMap<&'static str, f64>> {
        let out = self.inner.step(&JointAction::new(offload, energy)).map_err(py_err)?;
        Ok(outcome_dict(&out))
    }
}

/// (frequency Hz, delay s, frequency capped).
#[pyfunction]
fn local_solution(e_units: u32, cfg: &PyConfig) -> PyResult<(f64, f64, bool)> {
    let s = physics::local_solution(e_units, &cfg.inner).map_err(py_err)?;
    Ok((s.freq, s.delay, s.freq_capped))
}

/// (delay s, rate bit/s, power W, power capped), or None when the link
/// cannot carry the task.
#[pyfunction]
fn solve_transmit_time(gain_db: f64, e_units: u32, cfg: &PyConfig) -> PyResult<Option<(f64, f64, f64, bool)>> {
    match physics::solve_transmit_time(gain_db, e_units, &cfg.inner) {
        Ok(s) => Ok(Some((s.delay, s.rate, s.power, s.power_capped))),
        Err(Error::LinkInfeasible { .. }) => Ok(None),
        Err(e) => Err(py_err(e)),
    }
}

enum Inner {
    Darling(Box<Darling>),
    Sarl(Box<DeepSarl>),
    Baseline(Box<Baseline>),
}

impl Inner {
    fn controller(&mut self) -> &mut dyn Controller {
        match self {
            Inner::Darling(a) => a.as_mut(),
            Inner::Sarl(a) => a.as_mut(),
            Inner::Baseline(b) => b.as_mut(),
        }
    }
}

/// An online controller: `darling`, `deep-sarl`, `mobile`, `server` or `greedy`.
#[pyclass(name = "Agent", unsendable)]
struct PyAgent {
    inner: Inner,
}

#[pymethods]
impl PyAgent {
    #[new]
    fn new(kind: &str, cfg: &PyConfig, seed: u64) -> PyResult<Self> {
        let cfg = cfg.inner.clone();
        let inner = match kind {
            "darling" => Inner::Darling(Box::new(Darling::new(cfg, seed).map_err(py_err)?)),
            "deep-sarl" => Inner::Sarl(Box::new(DeepSarl::new(cfg, seed).map_err(py_err)?)),
            "mobile" => Inner::Baseline(Box::new(Baseline::new(BaselineKind::Mobile, cfg))),
            "server" => Inner::Baseline(Box::new(Baseline::new(BaselineKind::Server, cfg))),
            "greedy" => Inner::Baseline(Box::new(Baseline::new(BaselineKind::Greedy, cfg))),
            other => return Err(PyValueError::new_err(format!("unknown agent `{other}`"))),
        };
        Ok(Self { inner })
    }

    /// Runs `epochs` act/observe cycles against `env`; returns per-epoch
    /// utilities and losses (NaN where no training step happened).
    fn interact(&mut self, env: &mut PyEnvironment, epochs: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let ctl = self.inner.controller();
        let (mut utility, mut loss) = (Vec::new(), Vec::new());
        for _ in 0..epochs {
            let s = env.inner.state().clone();
            let a = ctl.act(&s).map_err(py_err)?;
            let out = env.inner.step(&a).map_err(py_err)?;
            loss.push(ctl.observe(&s, &a, &out).map_err(py_err)?.unwrap_or(f64::NAN));
            utility.push(out.utility.total);
        }
        Ok((utility, loss))
    }

    /// Action values at the environment's current state (summed over agents
    /// for the decomposed learner).
    fn q_values(&self, env: &PyEnvironment) -> PyResult<Vec<f64>> {
        match &self.inner {
            Inner::Darling(a) => Ok(a.q_values(env.inner.state())),
            Inner::Sarl(a) => Ok(a.q_values(env.inner.state())),
            Inner::Baseline(_) => Err(PyValueError::new_err("baselines have no action values")),
        }
    }

    fn save(&self, path: &str) -> PyResult<()> {
        match &self.inner {
            Inner::Darling(a) => a.save(path).map_err(py_err),
            Inner::Sarl(a) => a.save(path).map_err(py_err),
            Inner::Baseline(_) => Err(PyValueError::new_err("baselines have no parameters")),
        }
    }

    fn load(&mut self, path: &str) -> PyResult<()> {
        match &mut self.inner {
            Inner::Darling(a) => a.load(path).map_err(py_err),
            Inner::Sarl(a) => a.load(path).map_err(py_err),
            Inner::Baseline(_) => Err(PyValueError::new_err("baselines have no parameters")),
        }
    }
}

/// (V, Q row-major, sweeps) of the optimal value on an enumerable instance.
#[pyfunction]
#[pyo3(signature = (cfg, tol = 1e-12))]
fn solve_values(cfg: &PyConfig, tol: f64) -> PyResult<(Vec<f64>, Vec<f64>, usize)> {
    let kernel = build_kernel(&cfg.inner).map_err(py_err)?;
    let t = value_iteration(&kernel, cfg.inner.discount, tol, DEFAULT_MAX_ITERATIONS).map_err(py_err)?;
    Ok((t.v, t.q, t.iterations))
}

/// Per-epoch utility and loss series of one seeded run.
#[pyfunction]
fn run(cfg: &PyConfig, algorithm: &str, epochs: u64, seed: u64) -> PyResult<HashMap<&'static str, Vec<f64>>> {
    let alg: Algorithm = algorithm.parse().map_err(py_err)?;
    let s = run_seed(&cfg.inner, alg, epochs, seed).map_err(py_err)?;
    Ok(HashMap::from([
        ("utility", s.values(Metric::Utility)),
        ("payment", s.values(Metric::Payment)),
        ("loss", s.records.iter().map(|r| r.loss.unwrap_or(f64::NAN)).collect()),
    ]))
}

/// Worst finite-difference disagreement over `nets` random networks.
#[pyfunction]
#[pyo3(signature = (hidden, nets = 10, seed = 0))]
fn gradient_audit(hidden: usize, nets: usize, seed: u64) -> PyResult<f64> {
    mec_core::nn::gradient_audit(14, hidden, 35, nets, seed).map_err(py_err)
}

#[pymodule]
fn mecoffload(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyEnvironment>()?;
    m.add_class::<PyAgent>()?;
    m.add_function(wrap_pyfunction!(local_solution, m)?)?;
    m.add_function(wrap_pyfunction!(solve_transmit_time, m)?)?;
    m.add_function(wrap_pyfunction!(solve_values, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_audit, m)?)?;
    Ok(())
}
