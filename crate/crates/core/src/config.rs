//! System parameters and their text-file representation.
//!
//! Configurations are stored as TOML. Floating-point values are written in
//! the shortest representation that parses back to the same bits, so
//! channel matrices survive a save/load cycle exactly.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::utility::Partition;

/// Channel gain levels observed in the experiments, in dB.
pub const GAIN_LEVELS_DB: [f64; 6] = [-11.23, -9.37, -7.8, -6.3, -4.68, -2.08];

/// Row-sum tolerance for channel transition matrices.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Finite-state Markov model of the gain between the mobile user and one BS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub gain_levels_db: Vec<f64>,
    /// Row-stochastic; `transitions[i][j]` is P(level j | level i).
    pub transitions: Vec<Vec<f64>>,
}

impl ChannelModel {
    pub fn levels(&self) -> usize {
        self.gain_levels_db.len()
    }

    /// Each row drawn from a flat Dirichlet distribution.
    pub fn random<R: rand::Rng + ?Sized>(gain_levels_db: &[f64], rng: &mut R) -> Self {
        let n = gain_levels_db.len();
        let transitions = (0..n)
            .map(|_| {
                let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
                let total: f64 = draws.iter().sum();
                draws.into_iter().map(|x| x / total).collect()
            })
            .collect();
        Self {
            gain_levels_db: gain_levels_db.to_vec(),
            transitions,
        }
    }

    pub fn validate(&self, bs: usize) -> Result<()> {
        let n = self.levels();
        if n == 0 {
            return Err(Error::Config(format!("BS {bs}: empty gain level list")));
        }
        if self.gain_levels_db.iter().any(|g| !g.is_finite()) {
            return Err(Error::Config(format!("BS {bs}: non-finite gain level")));
        }
        if self.transitions.len() != n {
            return Err(Error::Config(format!(
                "BS {bs}: transition matrix has {} rows, expected {n}",
                self.transitions.len()
            )));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Config(format!(
                    "BS {bs}: row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
                return Err(Error::Config(format!("BS {bs}: row {i} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Config(format!(
                    "BS {bs}: row {i} sums to {sum:.17}, not 1"
                )));
            }
        }
        Ok(())
    }
}

/// Hyperparameters of the deep learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    /// Replay capacity (M for DARLING, N for Deep-SARL).
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Hidden width of the single DARLING network.
    pub darling_hidden: usize,
    /// Hidden width of each Deep-SARL agent network.
    pub sarl_hidden: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Target networks are reset to the online networks every this many epochs.
    pub target_sync_period: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            replay_capacity: 5000,
            batch_size: 200,
            darling_hidden: 200,
            sarl_hidden: 40,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            target_sync_period: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_bs: usize,
    pub channels: Vec<ChannelModel>,
    /// Decision epoch duration δ (s).
    pub epoch_duration: f64,
    /// MEC slice bandwidth W (Hz).
    pub bandwidth: f64,
    /// Interference plus noise power I (W).
    pub interference_noise: f64,
    /// Task input size μ (bits).
    pub input_bits: f64,
    /// Task CPU cycles ν.
    pub task_cycles: f64,
    pub max_cpu_freq: f64,
    pub max_tx_power: f64,
    /// Handover signalling delay ζ (s).
    pub handover_delay: f64,
    pub server_exec_time: f64,
    /// Price of MEC service per second of use.
    pub mec_price: f64,
    /// Joules per energy unit.
    pub energy_unit: f64,
    /// Effective switched capacitance τ of the mobile CPU.
    pub switched_capacitance: f64,
    pub task_queue_cap: u32,
    pub energy_queue_cap: u32,
    pub task_arrival_prob: f64,
    pub energy_arrival_rate: f64,
    pub weights: [f64; 5],
    pub discount: f64,
    pub exploration: f64,
    /// Grouping of the five utility components into learning agents.
    #[serde(default)]
    pub partition: Partition,
    #[serde(default)]
    pub learner: LearnerConfig,
}

impl SystemConfig {
    /// Experiment setup with six BSs; channel matrices drawn from `matrix_seed`.
    pub fn six_bs(matrix_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(matrix_seed);
        let channels = (0..6)
            .map(|_| ChannelModel::random(&GAIN_LEVELS_DB, &mut rng))
            .collect();
        Self {
            num_bs: 6,
            channels,
            epoch_duration: 5e-3,
            bandwidth: 0.6e6,
            interference_noise: 1.5e-8,
            input_bits: 1e4,
            task_cycles: 7.375e6,
            max_cpu_freq: 2e9,
            max_tx_power: 2.0,
            handover_delay: 2e-3,
            server_exec_time: 0.0,
            mec_price: 1.0,
            energy_unit: 2e-3,
            switched_capacitance: 1e-28,
            task_queue_cap: 4,
            energy_queue_cap: 4,
            task_arrival_prob: 0.5,
            energy_arrival_rate: 0.8,
            weights: [3.0, 9.0, 5.0, 2.0, 1.0],
            discount: 0.9,
            exploration: 0.01,
            partition: Partition::default(),
            learner: LearnerConfig::default(),
        }
    }

    /// Small instance for exact dynamic programming: one BS with two gain
    /// levels and queues of length two (18 states, 6 actions).
    pub fn tiny() -> Self {
        let mut cfg = Self::six_bs(0);
        cfg.num_bs = 1;
        cfg.channels = vec![ChannelModel {
            gain_levels_db: vec![-11.23, -2.08],
            transitions: vec![vec![0.3, 0.7], vec![0.4, 0.6]],
        }];
        cfg.task_queue_cap = 2;
        cfg.energy_queue_cap = 2;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_bs < 1 {
            return Err(Error::Config("num_bs must be at least 1".into()));
        }
        if self.channels.len() != self.num_bs {
            return Err(Error::Config(format!(
                "{} channel models for {} BSs",
                self.channels.len(),
                self.num_bs
            )));
        }
        for (b, ch) in self.channels.iter().enumerate() {
            ch.validate(b + 1)?;
        }
        let positive = [
            ("epoch_duration", self.epoch_duration),
            ("bandwidth", self.bandwidth),
            ("interference_noise", self.interference_noise),
            ("input_bits", self.input_bits),
            ("task_cycles", self.task_cycles),
            ("energy_unit", self.energy_unit),
            ("switched_capacitance", self.switched_capacitance),
            ("max_cpu_freq", self.max_cpu_freq),
            ("max_tx_power", self.max_tx_power),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [
            ("handover_delay", self.handover_delay),
            ("server_exec_time", self.server_exec_time),
            ("mec_price", self.mec_price),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.task_arrival_prob) {
            return Err(Error::Config(format!(
                "task_arrival_prob must lie in [0, 1], got {}",
                self.task_arrival_prob
            )));
        }
        if !self.energy_arrival_rate.is_finite() || self.energy_arrival_rate < 0.0 {
            return Err(Error::Config(format!(
                "energy_arrival_rate must be non-negative, got {}",
                self.energy_arrival_rate
            )));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Config(format!("discount must lie in [0, 1), got {}", self.discount)));
        }
        if !(0.0..=1.0).contains(&self.exploration) {
            return Err(Error::Config(format!(
                "exploration must lie in [0, 1], got {}",
                self.exploration
            )));
        }
        if self.task_queue_cap < 1 || self.energy_queue_cap < 1 {
            return Err(Error::Config("queue capacities must be at least 1".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("utility weights must be non-negative".into()));
        }
        self.partition.validate()?;
        let l = &self.learner;
        if l.batch_size == 0 || l.replay_capacity < l.batch_size {
            return Err(Error::Config(format!(
                "replay capacity {} must hold at least one batch of {}",
                l.replay_capacity, l.batch_size
            )));
        }
        if l.darling_hidden == 0 || l.sarl_hidden == 0 || l.target_sync_period == 0 {
            return Err(Error::Config("hidden widths and sync period must be positive".into()));
        }
        Ok(())
    }

    /// Number of joint actions per offload target.
    pub fn energy_levels(&self) -> usize {
        self.energy_queue_cap as usize + 1
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}
