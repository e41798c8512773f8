//! Decomposed on-policy learner: one small network per utility group, acting
//! greedily on the sum of their outputs.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::darling::stack;
use super::{select_action, Controller, ReplayMemory};
use crate::config::SystemConfig;
use crate::env::{encode_state, feature_len, space_sizes, JointAction, NetworkState, StepOutcome};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, MlpParams, Trainable};
use crate::seeds::{substream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarlExperience {
    pub features: Vec<f64>,
    pub state: NetworkState,
    pub action: usize,
    pub utilities: Vec<f64>,
    pub next_features: Vec<f64>,
    pub next_state: NetworkState,
    pub next_action: usize,
}

/// Per-agent SARSA targets for each transition in `batch`, indexed `[agent][row]`.
pub fn sarl_targets(batch: &[&SarlExperience], targets: &[MlpParams], gamma: f64) -> Vec<Vec<f64>> {
    let width = targets.first().map_or(0, |t| t.sizes().0);
    let next = stack(batch.iter().map(|e| e.next_features.as_slice()), batch.len(), width);
    targets
        .iter()
        .enumerate()
        .map(|(k, net)| {
            let out = net.forward_batch(next.view()).output;
            batch
                .iter()
                .enumerate()
                .map(|(i, e)| (1.0 - gamma) * e.utilities[k] + gamma * out[[i, e.next_action]])
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarlCheckpoint {
    pub online: Vec<Trainable>,
    pub target: Vec<MlpParams>,
    pub epochs: u64,
}

pub struct DeepSarl {
    cfg: SystemConfig,
    online: Vec<Trainable>,
    target: Vec<MlpParams>,
    memory: ReplayMemory<SarlExperience>,
    explore: ChaCha8Rng,
    replay: ChaCha8Rng,
    // action already committed for the state reached by the last observed step
    pending: Option<(NetworkState, usize)>,
    epochs: u64,
    num_actions: usize,
}

impl DeepSarl {
    pub fn new(cfg: SystemConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let num_actions = space_sizes(&cfg).1 as usize;
        let mut init = substream(seed, Stream::AgentInit);
        let adam = AdamConfig {
            step_size: cfg.learner.learning_rate,
            beta1: cfg.learner.adam_beta1,
            beta2: cfg.learner.adam_beta2,
            eps: cfg.learner.adam_eps,
        };
        let online: Vec<Trainable> = (0..cfg.partition.len())
            .map(|_| {
                let p = MlpParams::init(feature_len(&cfg), cfg.learner.sarl_hidden, num_actions, &mut init);
                Trainable::new(p, adam)
            })
            .collect();
        Ok(Self {
            target: online.iter().map(|t| t.params.clone()).collect(),
            online,
            memory: ReplayMemory::new(cfg.learner.replay_capacity),
            explore: substream(seed, Stream::AgentExplore),
            replay: substream(seed, Stream::ReplaySampling),
            pending: None,
            epochs: 0,
            num_actions,
            cfg,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.online.len()
    }

    pub fn online(&self, k: usize) -> &MlpParams {
        &self.online[k].params
    }

    pub fn target_params(&self, k: usize) -> &MlpParams {
        &self.target[k]
    }

    pub fn memory(&self) -> &ReplayMemory<SarlExperience> {
        &self.memory
    }

    /// Per-agent outputs at `state`, indexed `[agent][action]`.
    pub fn agent_q_values(&self, state: &NetworkState) -> Vec<Vec<f64>> {
        let x = encode_state(state, &self.cfg);
        self.online
            .iter()
            .map(|t| t.params.forward(&x).expect("feature length matches network input"))
            .collect()
    }

    /// Aggregated value Σ_k Q_k used for action selection.
    pub fn q_values(&self, state: &NetworkState) -> Vec<f64> {
        let mut total = vec![0.0; self.num_actions];
        for q in self.agent_q_values(state) {
            total.iter_mut().zip(q).for_each(|(t, v)| *t += v);
        }
        total
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.iter().map(|t| t.params.clone()).collect();
    }

    fn choose(&mut self, state: &NetworkState) -> Result<usize> {
        let q = self.q_values(state);
        select_action(&q, self.cfg.exploration, &mut self.explore)
    }

    /// Independent Adam step for every agent; returns the summed per-agent
    /// mean squared errors measured before the step.
    pub fn train_step(&mut self, batch: &[&SarlExperience]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::NotReady { have: 0, need: 1 });
        }
        let n = batch.len();
        let ys = sarl_targets(batch, &self.target, self.cfg.discount);
        let x = stack(batch.iter().map(|e| e.features.as_slice()), n, feature_len(&self.cfg));
        let mut total = 0.0;
        for (agent, y) in self.online.iter_mut().zip(ys) {
            let fwd = agent.params.forward_batch(x.view());
            let mut err = Array2::zeros((n, self.num_actions));
            let mut loss = 0.0;
            for (i, e) in batch.iter().enumerate() {
                let diff = fwd.output[[i, e.action]] - y[i];
                loss += diff * diff;
                err[[i, e.action]] = diff / n as f64;
            }
            let grads = agent.params.gradient_batch(x.view(), &fwd.hidden, err.view());
            agent.adam.step(&mut agent.params, &grads)?;
            total += loss / n as f64;
        }
        Ok(total)
    }

    pub fn checkpoint(&self) -> SarlCheckpoint {
        SarlCheckpoint {
            online: self.online.clone(),
            target: self.target.clone(),
            epochs: self.epochs,
        }
    }

    pub fn restore(&mut self, ck: SarlCheckpoint) -> Result<()> {
        let same = ck.online.len() == self.online.len()
            && ck.target.len() == self.target.len()
            && ck.online.iter().zip(&self.online).all(|(a, b)| a.params.sizes() == b.params.sizes())
            && ck.target.iter().zip(&self.target).all(|(a, b)| a.sizes() == b.sizes());
        if !same {
            return Err(Error::Contract("checkpoint shapes do not match this agent".into()));
        }
        self.online = ck.online;
        self.target = ck.target;
        self.epochs = ck.epochs;
        self.pending = None;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(&self.checkpoint())?)?;
        Ok(())
    }

    pub fn load(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let ck: SarlCheckpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        self.restore(ck)
    }
}

impl Controller for DeepSarl {
    fn name(&self) -> &'static str {
        "deep-sarl"
    }

    fn act(&mut self, state: &NetworkState) -> Result<JointAction> {
        let idx = match self.pending.take() {
            Some((s, a)) if &s == state => a,
            _ => self.choose(state)?,
        };
        Ok(JointAction::from_index(idx, &self.cfg))
    }

    /// Commits the next action at the successor state right away so the
    /// stored experience carries the action that will actually be taken.
    fn observe(&mut self, state: &NetworkState, action: &JointAction, outcome: &StepOutcome) -> Result<Option<f64>> {
        let next_action = self.choose(&outcome.next_state)?;
        self.pending = Some((outcome.next_state.clone(), next_action));
        self.memory.push(SarlExperience {
            features: encode_state(state, &self.cfg),
            state: state.clone(),
            action: action.index(&self.cfg),
            utilities: self.cfg.partition.decompose(&outcome.utility),
            next_features: encode_state(&outcome.next_state, &self.cfg),
            next_state: outcome.next_state.clone(),
            next_action,
        });
        self.epochs += 1;
        let loss = if self.memory.len() >= self.cfg.learner.batch_size {
            let batch: Vec<SarlExperience> = self
                .memory
                .sample(self.cfg.learner.batch_size, &mut self.replay)?
                .into_iter()
                .cloned()
                .collect();
            let refs: Vec<&SarlExperience> = batch.iter().collect();
            Some(self.train_step(&refs)?)
        } else {
            None
        };
        if self.epochs.is_multiple_of(self.cfg.learner.target_sync_period as u64) {
            self.sync_target();
        }
        Ok(loss)
    }
}
