//! Double-DQN learner over the joint offloading/energy action space.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, select_action, Controller, ReplayMemory};
use crate::config::SystemConfig;
use crate::env::{encode_state, feature_len, space_sizes, JointAction, NetworkState, StepOutcome};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, MlpParams, Trainable};
use crate::seeds::{substream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DarlingExperience {
    pub features: Vec<f64>,
    pub state: NetworkState,
    pub action: usize,
    pub utility: f64,
    pub next_features: Vec<f64>,
    pub next_state: NetworkState,
}

/// Bootstrapped target for one transition: the online network picks the
/// next action, the target network scores it.
pub fn darling_target(exp: &DarlingExperience, online: &MlpParams, target: &MlpParams, gamma: f64) -> Result<f64> {
    let best = argmax(&online.forward(&exp.next_features)?);
    let value = target.forward(&exp.next_features)?[best];
    Ok((1.0 - gamma) * exp.utility + gamma * value)
}

/// Batched [`darling_target`].
pub fn darling_targets(batch: &[&DarlingExperience], online: &MlpParams, target: &MlpParams, gamma: f64) -> Vec<f64> {
    let next = stack(batch.iter().map(|e| e.next_features.as_slice()), batch.len(), online.sizes().0);
    let pick = online.forward_batch(next.view()).output;
    let eval = target.forward_batch(next.view()).output;
    batch
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let best = argmax(pick.row(i).as_slice().expect("row-major"));
            (1.0 - gamma) * e.utility + gamma * eval[[i, best]]
        })
        .collect()
}

pub(crate) fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>, n: usize, width: usize) -> Array2<f64> {
    let mut data = Vec::with_capacity(n * width);
    for r in rows {
        data.extend_from_slice(r);
    }
    Array2::from_shape_vec((n, width), data).expect("feature rows share a width")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DarlingCheckpoint {
    pub online: Trainable,
    pub target: MlpParams,
    pub epochs: u64,
}

pub struct Darling {
    cfg: SystemConfig,
    online: Trainable,
    target: MlpParams,
    memory: ReplayMemory<DarlingExperience>,
    explore: ChaCha8Rng,
    replay: ChaCha8Rng,
    epochs: u64,
    num_actions: usize,
}

impl Darling {
    pub fn new(cfg: SystemConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (_, y) = space_sizes(&cfg);
        let num_actions = y as usize;
        let params = MlpParams::init(
            feature_len(&cfg),
            cfg.learner.darling_hidden,
            num_actions,
            &mut substream(seed, Stream::AgentInit),
        );
        let adam = AdamConfig {
            step_size: cfg.learner.learning_rate,
            beta1: cfg.learner.adam_beta1,
            beta2: cfg.learner.adam_beta2,
            eps: cfg.learner.adam_eps,
        };
        Ok(Self {
            memory: ReplayMemory::new(cfg.learner.replay_capacity),
            target: params.clone(),
            online: Trainable::new(params, adam),
            explore: substream(seed, Stream::AgentExplore),
            replay: substream(seed, Stream::ReplaySampling),
            epochs: 0,
            num_actions,
            cfg,
        })
    }

    pub fn online(&self) -> &MlpParams {
        &self.online.params
    }

    pub fn target_params(&self) -> &MlpParams {
        &self.target
    }

    pub fn memory(&self) -> &ReplayMemory<DarlingExperience> {
        &self.memory
    }

    pub fn q_values(&self, state: &NetworkState) -> Vec<f64> {
        self.online
            .params
            .forward(&encode_state(state, &self.cfg))
            .expect("feature length matches network input")
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.params.clone();
    }

    /// One Adam step on the squared Bellman error of `batch`; returns the
    /// mean squared error measured before the step.
    pub fn train_step(&mut self, batch: &[&DarlingExperience]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::NotReady { have: 0, need: 1 });
        }
        let n = batch.len();
        let width = self.online.params.sizes().0;
        let y = darling_targets(batch, &self.online.params, &self.target, self.cfg.discount);
        let x = stack(batch.iter().map(|e| e.features.as_slice()), n, width);
        let fwd = self.online.params.forward_batch(x.view());
        let mut err = Array2::zeros((n, self.num_actions));
        let mut loss = 0.0;
        for (i, e) in batch.iter().enumerate() {
            let diff = fwd.output[[i, e.action]] - y[i];
            loss += diff * diff;
            err[[i, e.action]] = diff / n as f64;
        }
        let grads = self.online.params.gradient_batch(x.view(), &fwd.hidden, err.view());
        self.online.adam.step(&mut self.online.params, &grads)?;
        Ok(loss / n as f64)
    }

    pub fn checkpoint(&self) -> DarlingCheckpoint {
        DarlingCheckpoint {
            online: self.online.clone(),
            target: self.target.clone(),
            epochs: self.epochs,
        }
    }

    pub fn restore(&mut self, ck: DarlingCheckpoint) -> Result<()> {
        if ck.online.params.sizes() != self.online.params.sizes() || ck.target.sizes() != self.target.sizes() {
            return Err(Error::Contract("checkpoint shapes do not match this agent".into()));
        }
        self.online = ck.online;
        self.target = ck.target;
        self.epochs = ck.epochs;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string(&self.checkpoint())?)?;
        Ok(())
    }

    pub fn load(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let ck: DarlingCheckpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        self.restore(ck)
    }
}

impl Controller for Darling {
    fn name(&self) -> &'static str {
        "darling"
    }

    fn act(&mut self, state: &NetworkState) -> Result<JointAction> {
        let q = self.q_values(state);
        let idx = select_action(&q, self.cfg.exploration, &mut self.explore)?;
        Ok(JointAction::from_index(idx, &self.cfg))
    }

    fn observe(&mut self, state: &NetworkState, action: &JointAction, outcome: &StepOutcome) -> Result<Option<f64>> {
        self.memory.push(DarlingExperience {
            features: encode_state(state, &self.cfg),
            state: state.clone(),
            action: action.index(&self.cfg),
            utility: outcome.utility.total,
            next_features: encode_state(&outcome.next_state, &self.cfg),
            next_state: outcome.next_state.clone(),
        });
        self.epochs += 1;
        let loss = if self.memory.len() >= self.cfg.learner.batch_size {
            let batch: Vec<DarlingExperience> = self
                .memory
                .sample(self.cfg.learner.batch_size, &mut self.replay)?
                .into_iter()
                .cloned()
                .collect();
            let refs: Vec<&DarlingExperience> = batch.iter().collect();
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
