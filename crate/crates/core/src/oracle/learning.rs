use rand::Rng;
use serde::{Deserialize, Serialize};

use rand_chacha::ChaCha8Rng;

use crate::agents::{argmax, Controller};
use crate::config::SystemConfig;
use crate::env::{state_index, Environment, JointAction, NetworkState, StepOutcome};
use crate::error::Result;
use crate::seeds::{substream, Stream};
use crate::utility::Partition;

use super::kernel::check_size;

/// Step sizes α = (1 + rate_scale·n)^-rate_exponent after n visits of a
/// pair and exploration ε_j = max(explore_floor, j^-explore_power) at epoch j ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub rate_scale: f64,
    pub rate_exponent: f64,
    pub explore_floor: f64,
    pub explore_power: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            rate_scale: 1.0,
            rate_exponent: 0.85,
            explore_floor: 0.01,
            explore_power: 0.5,
        }
    }
}

impl Schedule {
    /// Step size 1/(1 + rate_scale·n) with the default exploration.
    pub fn linear(rate_scale: f64) -> Self {
        Self {
            rate_scale,
            rate_exponent: 1.0,
            ..Self::default()
        }
    }

    pub fn rate(&self, visits: u64) -> f64 {
        (1.0 + self.rate_scale * visits as f64).powf(-self.rate_exponent)
    }

    pub fn exploration(&self, epoch: u64) -> f64 {
        (epoch.max(1) as f64).powf(-self.explore_power).max(self.explore_floor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub num_actions: usize,
    /// Row-major X×Y.
    pub q: Vec<f64>,
    pub visits: Vec<u64>,
}

impl QTable {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_actions,
            q: vec![0.0; num_states * num_actions],
            visits: vec![0; num_states * num_actions],
        }
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.q[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        super::dp::greedy_policy(&self.q, self.num_actions)
    }

    /// Moves Q(state, action) toward (1−γ)u + γ max_a' Q(next, a') by `alpha`.
    pub fn update(&mut self, state: usize, action: usize, utility: f64, next: usize, alpha: f64, gamma: f64) {
        let best = self.row(next).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let i = state * self.num_actions + action;
        self.visits[i] += 1;
        self.q[i] += alpha * ((1.0 - gamma) * utility + gamma * best - self.q[i]);
    }
}

fn epsilon_greedy<R: Rng>(values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..values.len())
    } else {
        argmax(values)
    }
}

/// Online tabular Q-learner usable as a [`Controller`].
pub struct TabularQAgent {
    cfg: SystemConfig,
    schedule: Schedule,
    table: QTable,
    explore: ChaCha8Rng,
    epoch: u64,
}

impl TabularQAgent {
    pub fn new(cfg: SystemConfig, schedule: Schedule, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (num_states, num_actions) = check_size(&cfg)?;
        Ok(Self {
            cfg,
            schedule,
            table: QTable::new(num_states, num_actions),
            explore: substream(seed, Stream::AgentExplore),
            epoch: 0,
        })
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    pub fn into_table(self) -> QTable {
        self.table
    }
}

impl Controller for TabularQAgent {
    fn name(&self) -> &'static str {
        "tabular-q"
    }

    fn act(&mut self, state: &NetworkState) -> Result<JointAction> {
        let x = state_index(state, &self.cfg);
        let eps = self.schedule.exploration(self.epoch + 1);
        let a = epsilon_greedy(self.table.row(x), eps, &mut self.explore);
        Ok(JointAction::from_index(a, &self.cfg))
    }

    fn observe(&mut self, state: &NetworkState, action: &JointAction, outcome: &StepOutcome) -> Result<Option<f64>> {
        let x = state_index(state, &self.cfg);
        let a = action.index(&self.cfg);
        let next = state_index(&outcome.next_state, &self.cfg);
        let alpha = self.schedule.rate(self.table.visits[x * self.table.num_actions + a]);
        self.table.update(x, a, outcome.utility.total, next, alpha, self.cfg.discount);
        self.epoch += 1;
        Ok(None)
    }
}

fn drive(env: &mut Environment, agent: &mut dyn Controller, epochs: u64) -> Result<()> {
    for _ in 0..epochs {
        let s = env.state().clone();
        let a = agent.act(&s)?;
        let out = env.step(&a)?;
        agent.observe(&s, &a, &out)?;
    }
    Ok(())
}

/// Off-policy tabular learning with a max-over-next-action target, run
/// online against the environment seeded by `seed`.
pub fn tabular_q_learning(cfg: &SystemConfig, schedule: &Schedule, epochs: u64, seed: u64) -> Result<QTable> {
    let mut env = Environment::new(cfg.clone(), seed)?;
    let mut agent = TabularQAgent::new(cfg.clone(), *schedule, seed)?;
    drive(&mut env, &mut agent, epochs)?;
    Ok(agent.into_table())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarlTables {
    pub num_actions: usize,
    /// One row-major X×Y table per partition group.
    pub agents: Vec<Vec<f64>>,
    pub visits: Vec<u64>,
}

impl SarlTables {
    /// Σ_k Q_k.
    pub fn aggregate(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.visits.len()];
        for agent in &self.agents {
            total.iter_mut().zip(agent).for_each(|(t, q)| *t += q);
        }
        total
    }

    pub fn aggregate_row(&self, state: usize) -> Vec<f64> {
        let span = state * self.num_actions..(state + 1) * self.num_actions;
        let mut row = vec![0.0; self.num_actions];
        for agent in &self.agents {
            row.iter_mut().zip(&agent[span.clone()]).for_each(|(r, q)| *r += q);
        }
        row
    }
}

/// On-policy per-group tabular learner. Each group's table follows its own
/// SARSA update on the shared trajectory; actions maximize the summed tables.
pub struct TabularSarlAgent {
    cfg: SystemConfig,
    schedule: Schedule,
    tables: SarlTables,
    explore: ChaCha8Rng,
    pending: Option<(usize, usize)>,
    epoch: u64,
}

impl TabularSarlAgent {
    pub fn new(cfg: SystemConfig, schedule: Schedule, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (num_states, num_actions) = check_size(&cfg)?;
        Ok(Self {
            tables: SarlTables {
                num_actions,
                agents: vec![vec![0.0; num_states * num_actions]; cfg.partition.len()],
                visits: vec![0; num_states * num_actions],
            },
            cfg,
            schedule,
            explore: substream(seed, Stream::AgentExplore),
            pending: None,
            epoch: 0,
        })
    }

    pub fn tables(&self) -> &SarlTables {
        &self.tables
    }

    pub fn into_tables(self) -> SarlTables {
        self.tables
    }

    fn choose(&mut self, x: usize, epoch: u64) -> usize {
        let row = self.tables.aggregate_row(x);
        epsilon_greedy(&row, self.schedule.exploration(epoch), &mut self.explore)
    }
}

impl Controller for TabularSarlAgent {
    fn name(&self) -> &'static str {
        "tabular-sarl"
    }

    fn act(&mut self, state: &NetworkState) -> Result<JointAction> {
        let x = state_index(state, &self.cfg);
        let a = match self.pending.take() {
            Some((s, a)) if s == x => a,
            _ => self.choose(x, self.epoch + 1),
        };
        Ok(JointAction::from_index(a, &self.cfg))
    }

    fn observe(&mut self, state: &NetworkState, action: &JointAction, outcome: &StepOutcome) -> Result<Option<f64>> {
        let num_actions = self.tables.num_actions;
        let x = state_index(state, &self.cfg);
        let a = action.index(&self.cfg);
        let next = state_index(&outcome.next_state, &self.cfg);
        self.epoch += 1;
        let next_a = self.choose(next, self.epoch + 1);
        self.pending = Some((next, next_a));
        let u = self.cfg.partition.decompose(&outcome.utility);
        let (i, n) = (x * num_actions + a, next * num_actions + next_a);
        let alpha = self.schedule.rate(self.tables.visits[i]);
        self.tables.visits[i] += 1;
        let gamma = self.cfg.discount;
        for (k, q) in self.tables.agents.iter_mut().enumerate() {
            q[i] += alpha * ((1.0 - gamma) * u[k] + gamma * q[n] - q[i]);
        }
        Ok(None)
    }
}

/// Runs [`TabularSarlAgent`] with `partition` in place of the configured one.
pub fn tabular_sarl(cfg: &SystemConfig, schedule: &Schedule, partition: &Partition, epochs: u64, seed: u64) -> Result<SarlTables> {
    partition.validate()?;
    let mut cfg = cfg.clone();
    cfg.partition = partition.clone();
    let mut env = Environment::new(cfg.clone(), seed)?;
    let mut agent = TabularSarlAgent::new(cfg, *schedule, seed)?;
    drive(&mut env, &mut agent, epochs)?;
    Ok(agent.into_tables())
}

/// Acts greedily on a fixed table of action values.
pub struct TablePolicy {
    cfg: SystemConfig,
    policy: Vec<usize>,
}

impl TablePolicy {
    pub fn new(cfg: SystemConfig, policy: Vec<usize>) -> Self {
        Self { cfg, policy }
    }
}

impl Controller for TablePolicy {
    fn name(&self) -> &'static str {
        "value-iteration"
    }

    fn act(&mut self, state: &NetworkState) -> Result<JointAction> {
        Ok(JointAction::from_index(self.policy[state_index(state, &self.cfg)], &self.cfg))
    }
}
