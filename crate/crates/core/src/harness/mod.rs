//! Training and evaluation runs, parameter sweeps and metric output.

mod metrics;

pub use metrics::{
    emit_metrics, fmt_f64, load_metrics_json, moving_average, summary_header, write_summary_csv, EpochRecord, Metric,
    MetricsSeries, OutputFormat, RunSummary, CSV_HEADER,
};

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{Controller, Darling, DeepSarl};
use crate::baselines::{Baseline, BaselineKind};
use crate::config::SystemConfig;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::oracle::{build_kernel, value_iteration, Schedule, TablePolicy, TabularQAgent, TabularSarlAgent, DEFAULT_MAX_ITERATIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Darling,
    DeepSarl,
    Mobile,
    Server,
    Greedy,
    TabularQ,
    TabularSarl,
    ValueIteration,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Darling,
        Algorithm::DeepSarl,
        Algorithm::Mobile,
        Algorithm::Server,
        Algorithm::Greedy,
        Algorithm::TabularQ,
        Algorithm::TabularSarl,
        Algorithm::ValueIteration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Darling => "darling",
            Algorithm::DeepSarl => "deep-sarl",
            Algorithm::Mobile => "mobile",
            Algorithm::Server => "server",
            Algorithm::Greedy => "greedy",
            Algorithm::TabularQ => "tabular-q",
            Algorithm::TabularSarl => "tabular-sarl",
            Algorithm::ValueIteration => "value-iteration",
        }
    }

    pub fn is_tabular(self) -> bool {
        matches!(self, Algorithm::TabularQ | Algorithm::TabularSarl | Algorithm::ValueIteration)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    TaskArrival,
    EnergyArrival,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl SweepAxis {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        for &v in &self.values {
            let ok = match self.parameter {
                SweepParameter::TaskArrival => (0.0..=1.0).contains(&v),
                SweepParameter::EnergyArrival => v.is_finite() && v >= 0.0,
            };
            if !ok {
                return Err(Error::Config(format!("sweep value {v} out of range for {:?}", self.parameter)));
            }
        }
        Ok(())
    }

    pub fn apply(&self, cfg: &SystemConfig, value: f64) -> SystemConfig {
        let mut cfg = cfg.clone();
        match self.parameter {
            SweepParameter::TaskArrival => cfg.task_arrival_prob = value,
            SweepParameter::EnergyArrival => cfg.energy_arrival_rate = value,
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub cfg: SystemConfig,
    pub algorithm: Algorithm,
    pub epochs: u64,
    pub seeds: Vec<u64>,
    pub sweep: Option<SweepAxis>,
    pub tail_window: usize,
    pub output_dir: Option<PathBuf>,
    pub format: OutputFormat,
    /// Where learned parameters are written after each run, if anywhere.
    pub checkpoint_dir: Option<PathBuf>,
    pub tabular_schedule: Schedule,
}

impl ExperimentSpec {
    pub fn new(cfg: SystemConfig, algorithm: Algorithm, epochs: u64, seeds: Vec<u64>) -> Self {
        Self {
            cfg,
            algorithm,
            epochs,
            seeds,
            sweep: None,
            tail_window: 5_000,
            output_dir: None,
            format: OutputFormat::Csv,
            checkpoint_dir: None,
            tabular_schedule: Schedule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.tail_window < 1 {
            return Err(Error::Config("tail window must be at least 1".into()));
        }
        if let Some(axis) = &self.sweep {
            axis.validate()?;
        }
        Ok(())
    }
}

enum Agent {
    Darling(Box<Darling>),
    Sarl(Box<DeepSarl>),
    Other(Box<dyn Controller>),
}

impl Agent {
    fn build(algorithm: Algorithm, cfg: &SystemConfig, seed: u64, schedule: Schedule) -> Result<Self> {
        Ok(match algorithm {
            Algorithm::Darling => Agent::Darling(Box::new(Darling::new(cfg.clone(), seed)?)),
            Algorithm::DeepSarl => Agent::Sarl(Box::new(DeepSarl::new(cfg.clone(), seed)?)),
            Algorithm::Mobile => Agent::Other(Box::new(Baseline::new(BaselineKind::Mobile, cfg.clone()))),
            Algorithm::Server => Agent::Other(Box::new(Baseline::new(BaselineKind::Server, cfg.clone()))),
            Algorithm::Greedy => Agent::Other(Box::new(Baseline::new(BaselineKind::Greedy, cfg.clone()))),
            Algorithm::TabularQ => Agent::Other(Box::new(TabularQAgent::new(cfg.clone(), schedule, seed)?)),
            Algorithm::TabularSarl => Agent::Other(Box::new(TabularSarlAgent::new(cfg.clone(), schedule, seed)?)),
            Algorithm::ValueIteration => {
                let kernel = build_kernel(cfg)?;
                let tables = value_iteration(&kernel, cfg.discount, 1e-12, DEFAULT_MAX_ITERATIONS)?;
                Agent::Other(Box::new(TablePolicy::new(cfg.clone(), tables.greedy_policy())))
            }
        })
    }

    fn controller(&mut self) -> &mut dyn Controller {
        match self {
            Agent::Darling(a) => a.as_mut(),
            Agent::Sarl(a) => a.as_mut(),
            Agent::Other(a) => a.as_mut(),
        }
    }

    fn save(&self, path: &Path) -> Result<bool> {
        match self {
            Agent::Darling(a) => a.save(path).map(|_| true),
            Agent::Sarl(a) => a.save(path).map(|_| true),
            Agent::Other(_) => Ok(false),
        }
    }
}

/// One run of `algorithm` for `epochs` epochs. Environment randomness comes
/// from `seed` only, so every algorithm run under the same seed faces the
/// same arrivals and channel paths.
pub fn run_seed(cfg: &SystemConfig, algorithm: Algorithm, epochs: u64, seed: u64) -> Result<MetricsSeries> {
    run_seed_with(cfg, algorithm, epochs, seed, Schedule::default(), None)
}

pub fn run_seed_with(
    cfg: &SystemConfig,
    algorithm: Algorithm,
    epochs: u64,
    seed: u64,
    schedule: Schedule,
    checkpoint: Option<&Path>,
) -> Result<MetricsSeries> {
    cfg.validate()?;
    let mut env = Environment::new(cfg.clone(), seed)?;
    let mut agent = Agent::build(algorithm, cfg, seed, schedule)?;
    let mut series = MetricsSeries::new(algorithm.name(), seed);
    series.records.reserve(epochs as usize);
    let ctl = agent.controller();
    for epoch in 1..=epochs {
        let state = env.state().clone();
        let action = ctl.act(&state)?;
        let outcome = env.step(&action)?;
        let loss = ctl.observe(&state, &action, &outcome)?;
        series.records.push(EpochRecord::from_outcome(epoch, &outcome, loss));
    }
    if let Some(path) = checkpoint {
        agent.save(path)?;
    }
    Ok(series)
}

pub fn metrics_file_name(algorithm: Algorithm, seed: u64, grid_value: Option<f64>, format: OutputFormat) -> String {
    match grid_value {
        Some(v) => format!("{}-g{v}-seed{seed}.{}", algorithm.name(), format.extension()),
        None => format!("{}-seed{seed}.{}", algorithm.name(), format.extension()),
    }
}

fn checkpoint_path(spec: &ExperimentSpec, seed: u64, grid_value: Option<f64>) -> Option<PathBuf> {
    let dir = spec.checkpoint_dir.as_ref()?;
    matches!(spec.algorithm, Algorithm::Darling | Algorithm::DeepSarl)
        .then(|| dir.join(metrics_file_name(spec.algorithm, seed, grid_value, OutputFormat::Json).replace(".json", ".ckpt.json")))
}

/// Runs every seed of `spec` (in parallel) and returns the series in seed
/// order; writes one metrics file per seed when an output directory is set.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<MetricsSeries>> {
    spec.validate()?;
    for dir in [&spec.output_dir, &spec.checkpoint_dir].into_iter().flatten() {
        fs::create_dir_all(dir)?;
    }
    let series = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let ck = checkpoint_path(spec, seed, None);
            run_seed_with(&spec.cfg, spec.algorithm, spec.epochs, seed, spec.tabular_schedule, ck.as_deref())
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = &spec.output_dir {
        for s in &series {
            emit_metrics(s, dir.join(metrics_file_name(spec.algorithm, s.seed, None, spec.format)), spec.format)?;
        }
    }
    Ok(series)
}

/// One summary row per (grid value, algorithm, seed), ordered by that key.
pub fn sweep(spec: &ExperimentSpec, algorithms: &[Algorithm]) -> Result<Vec<RunSummary>> {
    spec.validate()?;
    let axis = spec
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep requires a grid".into()))?;
    if algorithms.is_empty() {
        return Err(Error::Config("sweep requires at least one algorithm".into()));
    }
    let mut jobs = Vec::new();
    for &value in &axis.values {
        for &alg in algorithms {
            for &seed in &spec.seeds {
                jobs.push((value, alg, seed));
            }
        }
    }
    if let Some(dir) = &spec.output_dir {
        fs::create_dir_all(dir)?;
    }
    jobs.par_iter()
        .map(|&(value, alg, seed)| {
            let cfg = axis.apply(&spec.cfg, value);
            let series = run_seed_with(&cfg, alg, spec.epochs, seed, spec.tabular_schedule, None)?;
            if let Some(dir) = &spec.output_dir {
                emit_metrics(&series, dir.join(metrics_file_name(alg, seed, Some(value), spec.format)), spec.format)?;
            }
            let mut row = series.summary(spec.tail_window);
            row.grid_value = Some(value);
            Ok(row)
        })
        .collect()
}

/// Mean of `metric` (tail window) over the seeds of each (grid value, algorithm).
pub fn seed_means(rows: &[RunSummary], metric: Metric) -> Vec<(f64, String, f64)> {
    let mut out: Vec<(f64, String, f64, usize)> = Vec::new();
    for r in rows {
        let g = r.grid_value.unwrap_or(f64::NAN);
        let v = r.tail_of(metric);
        match out.iter_mut().find(|(og, oa, _, _)| og.to_bits() == g.to_bits() && *oa == r.algorithm) {
            Some(e) => {
                e.2 += v;
                e.3 += 1;
            }
            None => out.push((g, r.algorithm.clone(), v, 1)),
        }
    }
    out.into_iter().map(|(g, a, s, n)| (g, a, s / n as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_parse_back() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("dqn".parse::<Algorithm>().is_err());
    }

    #[test]
    fn spec_validation() {
        let cfg = SystemConfig::tiny();
        assert!(ExperimentSpec::new(cfg.clone(), Algorithm::Mobile, 0, vec![1]).validate().is_err());
        assert!(ExperimentSpec::new(cfg.clone(), Algorithm::Mobile, 10, vec![]).validate().is_err());
        let mut s = ExperimentSpec::new(cfg, Algorithm::Mobile, 10, vec![1]);
        s.sweep = Some(SweepAxis {
            parameter: SweepParameter::TaskArrival,
            values: vec![0.5, 1.5],
        });
        assert!(s.validate().is_err());
    }

    #[test]
    fn idle_system_earns_full_utility() {
        let mut cfg = SystemConfig::six_bs(2);
        cfg.task_arrival_prob = 0.0;
        let s = run_seed(&cfg, Algorithm::Mobile, 500, 3).unwrap();
        assert_eq!(s.len(), 500);
        assert!(s.records.iter().all(|r| r.utility == 20.0));
    }

    #[test]
    fn tabular_algorithms_refuse_large_instances() {
        let cfg = SystemConfig::six_bs(2);
        for a in [Algorithm::TabularQ, Algorithm::TabularSarl, Algorithm::ValueIteration] {
            assert!(matches!(run_seed(&cfg, a, 10, 1), Err(Error::SizeGuard { .. })));
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = SystemConfig::tiny();
        for a in [Algorithm::Greedy, Algorithm::TabularQ, Algorithm::TabularSarl, Algorithm::ValueIteration] {
            assert_eq!(run_seed(&cfg, a, 300, 9).unwrap(), run_seed(&cfg, a, 300, 9).unwrap());
        }
    }

    #[test]
    fn algorithms_share_arrivals() {
        let mut cfg = SystemConfig::six_bs(2);
        cfg.task_arrival_prob = 0.3;
        let a = run_seed(&cfg, Algorithm::Mobile, 400, 5).unwrap();
        let b = run_seed(&cfg, Algorithm::Server, 400, 5).unwrap();
        // queues differ but the idle-start epochs agree until the first task arrives
        assert_eq!(a.records[0].utility, b.records[0].utility);
    }

    #[test]
    fn sweep_orders_rows_by_key() {
        let mut spec = ExperimentSpec::new(SystemConfig::tiny(), Algorithm::Mobile, 50, vec![1, 2]);
        spec.tail_window = 10;
        spec.sweep = Some(SweepAxis {
            parameter: SweepParameter::TaskArrival,
            values: vec![0.2, 0.8],
        });
        let rows = sweep(&spec, &[Algorithm::Mobile, Algorithm::Greedy]).unwrap();
        let keys: Vec<(f64, &str, u64)> = rows.iter().map(|r| (r.grid_value.unwrap(), r.algorithm.as_str(), r.seed)).collect();
        assert_eq!(
            keys,
            vec![
                (0.2, "mobile", 1),
                (0.2, "mobile", 2),
                (0.2, "greedy", 1),
                (0.2, "greedy", 2),
                (0.8, "mobile", 1),
                (0.8, "mobile", 2),
                (0.8, "greedy", 1),
                (0.8, "greedy", 2),
            ]
        );
        assert_eq!(seed_means(&rows, Metric::Utility).len(), 4);
    }
}
