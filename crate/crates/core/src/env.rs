//! MDP state, stochastic arrivals, channel evolution and the epoch transition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::{ChannelModel, SystemConfig};
use crate::error::{Error, Result};
use crate::physics::{execution_delay, ExecutionDelay};
use crate::utility::{utility_components, UtilityBreakdown};

/// Network state observed at the start of a decision epoch.
///
/// BS indices are 1-based; `gains[b]` is the level index of BS `b + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkState {
    pub task_queue: u32,
    pub energy_queue: u32,
    pub association: usize,
    pub gains: Vec<usize>,
}

impl NetworkState {
    /// Empty queues, associated with BS 1, every channel at its lowest level.
    pub fn initial(cfg: &SystemConfig) -> Self {
        Self {
            task_queue: 0,
            energy_queue: 0,
            association: 1,
            gains: vec![0; cfg.num_bs],
        }
    }

    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        if self.task_queue > cfg.task_queue_cap {
            return Err(Error::Contract(format!("task queue {} over capacity", self.task_queue)));
        }
        if self.energy_queue > cfg.energy_queue_cap {
            return Err(Error::Contract(format!("energy queue {} over capacity", self.energy_queue)));
        }
        if !(1..=cfg.num_bs).contains(&self.association) {
            return Err(Error::Contract(format!("association {} not a BS", self.association)));
        }
        if self.gains.len() != cfg.num_bs {
            return Err(Error::Contract(format!("{} gain indices for {} BSs", self.gains.len(), cfg.num_bs)));
        }
        for (b, (&g, ch)) in self.gains.iter().zip(&cfg.channels).enumerate() {
            if g >= ch.levels() {
                return Err(Error::Contract(format!("gain index {g} invalid for BS {}", b + 1)));
            }
        }
        Ok(())
    }
}

/// Offload target (0 = local, otherwise a 1-based BS) and allocated energy units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointAction {
    pub offload: usize,
    pub energy: u32,
}

impl JointAction {
    pub const IDLE: JointAction = JointAction { offload: 0, energy: 0 };

    pub fn new(offload: usize, energy: u32) -> Self {
        Self { offload, energy }
    }

    /// Position in the flattened action space `(1 + B) x (1 + q_e_max)`.
    pub fn index(&self, cfg: &SystemConfig) -> usize {
        self.offload * cfg.energy_levels() + self.energy as usize
    }

    pub fn from_index(index: usize, cfg: &SystemConfig) -> Self {
        let levels = cfg.energy_levels();
        Self {
            offload: index / levels,
            energy: (index % levels) as u32,
        }
    }

    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        if self.offload > cfg.num_bs {
            return Err(Error::Contract(format!("offload target {} exceeds B = {}", self.offload, cfg.num_bs)));
        }
        if self.energy > cfg.energy_queue_cap {
            return Err(Error::Contract(format!(
                "energy allocation {} exceeds q_e_max = {}",
                self.energy, cfg.energy_queue_cap
            )));
        }
        Ok(())
    }
}

/// Per-epoch record of what happened beyond the next state and utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Execution delay d (s); `+inf` if the link could not carry the task.
    pub delay: f64,
    pub handover: f64,
    /// Transmission time or local execution time, whichever applied.
    pub transmit_delay: Option<f64>,
    pub local_delay: Option<f64>,
    pub power_capped: bool,
    pub freq_capped: bool,
    pub link_infeasible: bool,
    /// The action asked for more energy than queued, or for work on an empty queue.
    pub forced_noop: bool,
    pub drops: u32,
    pub queuing: u32,
    pub penalty: u32,
    pub payment: f64,
    pub task_arrival: u32,
    pub energy_arrival: u32,
    pub energy_deducted: u32,
    pub energy_spent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next_state: NetworkState,
    pub utility: UtilityBreakdown,
    pub diagnostics: Diagnostics,
}

/// Task arrival indicator for one epoch.
pub fn sample_task_arrival<R: Rng + ?Sized>(rng: &mut R, prob: f64) -> u32 {
    let b = Bernoulli::new(prob).expect("task arrival probability in [0, 1]");
    u32::from(b.sample(rng))
}

/// Energy units harvested during one epoch (uncapped).
pub fn sample_energy_arrival<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> u32 {
    if rate <= 0.0 {
        return 0;
    }
    let p = Poisson::new(rate).expect("energy arrival rate positive and finite");
    p.sample(rng) as u32
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // rounding left a sliver above the cumulative sum; land on the last
    // state with positive mass
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Advances every BS channel one step along its own Markov chain.
pub fn step_channel<R: Rng + ?Sized>(gains: &[usize], channels: &[ChannelModel], rng: &mut R) -> Result<Vec<usize>> {
    if gains.len() != channels.len() {
        return Err(Error::Config(format!("{} gain indices for {} channel models", gains.len(), channels.len())));
    }
    gains
        .iter()
        .zip(channels)
        .enumerate()
        .map(|(b, (&g, ch))| {
            let row = ch
                .transitions
                .get(g)
                .ok_or_else(|| Error::Config(format!("BS {}: no transition row for level {g}", b + 1)))?;
            if row.len() != ch.levels() {
                return Err(Error::Config(format!("BS {}: malformed transition row {g}", b + 1)));
            }
            Ok(sample_row(row, rng))
        })
        .collect()
}

/// Association after an epoch: moves to `offload` only if the task was
/// actually sent there.
pub fn update_association(prev: usize, offload: usize, executed: bool) -> usize {
    if offload >= 1 && executed {
        offload
    } else {
        prev
    }
}

/// Deterministic part of an epoch: what an action does before any
/// arrivals or channel moves are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    /// The action as carried out; idle when neutralized.
    pub executed: JointAction,
    pub forced_noop: bool,
    pub timing: ExecutionDelay,
    pub energy_deducted: u32,
    /// Task completed within the epoch and leaves the queue.
    pub served: bool,
}

/// Screens `action` against the queues and computes its execution delay.
pub fn resolve_action(state: &NetworkState, action: &JointAction, cfg: &SystemConfig) -> Result<Resolved> {
    let forced_noop = action.energy > 0 && (action.energy > state.energy_queue || state.task_queue == 0);
    let executed = if forced_noop || action.energy == 0 {
        JointAction::IDLE
    } else {
        *action
    };
    let timing = execution_delay(state, &executed, cfg)?;
    Ok(Resolved {
        executed,
        forced_noop,
        timing,
        energy_deducted: executed.energy,
        served: timing.delay > 0.0 && timing.delay <= cfg.epoch_duration,
    })
}

/// Next association and queue contents given the arrivals.
pub fn next_queues(state: &NetworkState, r: &Resolved, task_arrival: u32, energy_arrival: u32, cfg: &SystemConfig) -> (u32, u32, usize) {
    let q_t = (state.task_queue - u32::from(r.served) + task_arrival).min(cfg.task_queue_cap);
    let q_e = (state.energy_queue - r.energy_deducted + energy_arrival).min(cfg.energy_queue_cap);
    let s = update_association(state.association, r.executed.offload, r.executed.energy > 0);
    (q_t, q_e, s)
}

/// Randomness consumed by the environment, split so channel and arrival
/// sequences do not depend on each other or on the controller.
#[derive(Debug, Clone)]
pub struct EnvStreams {
    pub arrivals: ChaCha8Rng,
    pub channel: ChaCha8Rng,
}

impl EnvStreams {
    pub fn new(arrivals: ChaCha8Rng, channel: ChaCha8Rng) -> Self {
        Self { arrivals, channel }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self {
            arrivals: crate::seeds::substream(seed, crate::seeds::Stream::EnvArrivals),
            channel: crate::seeds::substream(seed, crate::seeds::Stream::EnvChannel),
        }
    }
}

/// One decision epoch.
pub fn step(state: &NetworkState, action: &JointAction, cfg: &SystemConfig, rng: &mut EnvStreams) -> Result<StepOutcome> {
    state.validate(cfg)?;
    action.validate(cfg)?;
    let r = resolve_action(state, action, cfg)?;
    let task_arrival = sample_task_arrival(&mut rng.arrivals, cfg.task_arrival_prob);
    let energy_arrival = sample_energy_arrival(&mut rng.arrivals, cfg.energy_arrival_rate);
    let (task_queue, energy_queue, association) = next_queues(state, &r, task_arrival, energy_arrival, cfg);
    let gains = step_channel(&state.gains, &cfg.channels, &mut rng.channel)?;

    let utility = utility_components(state, &r.executed, r.timing.delay, r.timing.handover, task_arrival, cfg);
    let diagnostics = Diagnostics {
        delay: r.timing.delay,
        handover: r.timing.handover,
        transmit_delay: r.timing.transmit.map(|t| t.delay),
        local_delay: r.timing.local.map(|l| l.delay),
        power_capped: r.timing.transmit.is_some_and(|t| t.power_capped),
        freq_capped: r.timing.local.is_some_and(|l| l.freq_capped),
        link_infeasible: r.timing.link_infeasible,
        forced_noop: r.forced_noop,
        drops: utility.raw.drops as u32,
        queuing: utility.raw.queuing as u32,
        penalty: utility.raw.penalty as u32,
        payment: utility.raw.payment,
        task_arrival,
        energy_arrival,
        energy_deducted: r.energy_deducted,
        energy_spent: match (r.timing.transmit, r.timing.local) {
            (Some(t), _) => t.energy_spent,
            (None, Some(_)) => f64::from(r.energy_deducted) * cfg.energy_unit,
            _ => 0.0,
        },
    };
    Ok(StepOutcome {
        next_state: NetworkState {
            task_queue,
            energy_queue,
            association,
            gains,
        },
        utility,
        diagnostics,
    })
}

/// State and action space cardinalities (X, Y).
pub fn space_sizes(cfg: &SystemConfig) -> (u128, u128) {
    let gains: u128 = cfg.channels.iter().map(|c| c.levels() as u128).product();
    let x = (1 + u128::from(cfg.task_queue_cap)) * (1 + u128::from(cfg.energy_queue_cap)) * cfg.num_bs as u128 * gains;
    let y = (1 + cfg.num_bs as u128) * (1 + u128::from(cfg.energy_queue_cap));
    (x, y)
}

/// Length of the feature vector produced by [`encode_state`].
pub fn feature_len(cfg: &SystemConfig) -> usize {
    2 + 2 * cfg.num_bs
}

/// Network input features: normalized queues, one-hot association and each
/// BS gain rescaled to [-1, 1] over that BS's level range.
pub fn encode_state(state: &NetworkState, cfg: &SystemConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(feature_len(cfg));
    encode_state_into(state, cfg, &mut out);
    out
}

pub fn encode_state_into(state: &NetworkState, cfg: &SystemConfig, out: &mut Vec<f64>) {
    out.clear();
    out.push(f64::from(state.task_queue) / f64::from(cfg.task_queue_cap));
    out.push(f64::from(state.energy_queue) / f64::from(cfg.energy_queue_cap));
    out.extend((1..=cfg.num_bs).map(|b| if b == state.association { 1.0 } else { 0.0 }));
    for (&g, ch) in state.gains.iter().zip(&cfg.channels) {
        let levels = &ch.gain_levels_db;
        let lo = levels.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = levels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.push(if hi > lo { 2.0 * (levels[g] - lo) / (hi - lo) - 1.0 } else { 0.0 });
    }
}

/// Mixed-radix index of a state, in the order (q_t, q_e, s, g_1..g_B).
pub fn state_index(state: &NetworkState, cfg: &SystemConfig) -> usize {
    let mut idx = state.task_queue as usize;
    idx = idx * cfg.energy_levels() + state.energy_queue as usize;
    idx = idx * cfg.num_bs + (state.association - 1);
    for (&g, ch) in state.gains.iter().zip(&cfg.channels) {
        idx = idx * ch.levels() + g;
    }
    idx
}

pub fn state_from_index(mut idx: usize, cfg: &SystemConfig) -> NetworkState {
    let mut gains = vec![0; cfg.num_bs];
    for (b, ch) in cfg.channels.iter().enumerate().rev() {
        gains[b] = idx % ch.levels();
        idx /= ch.levels();
    }
    let association = idx % cfg.num_bs + 1;
    idx /= cfg.num_bs;
    let energy_queue = (idx % cfg.energy_levels()) as u32;
    idx /= cfg.energy_levels();
    NetworkState {
        task_queue: idx as u32,
        energy_queue,
        association,
        gains,
    }
}

/// A stateful environment instance owning its configuration, state and randomness.
#[derive(Debug, Clone)]
pub struct Environment {
    cfg: SystemConfig,
    state: NetworkState,
    streams: EnvStreams,
}

impl Environment {
    pub fn new(cfg: SystemConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let state = NetworkState::initial(&cfg);
        Ok(Self {
            cfg,
            state,
            streams: EnvStreams::from_seed(seed),
        })
    }

    pub fn with_state(cfg: SystemConfig, state: NetworkState, streams: EnvStreams) -> Result<Self> {
        cfg.validate()?;
        state.validate(&cfg)?;
        Ok(Self { cfg, state, streams })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn set_state(&mut self, state: NetworkState) -> Result<()> {
        state.validate(&self.cfg)?;
        self.state = state;
        Ok(())
    }

    pub fn step(&mut self, action: &JointAction) -> Result<StepOutcome> {
        let out = step(&self.state, action, &self.cfg, &mut self.streams)?;
        self.state = out.next_state.clone();
        Ok(out)
    }
}

/// Convenience for tests and bindings: a generator seeded directly.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
