//! Online controllers: the deep learners and the shared exploration and
//! replay machinery.

mod darling;
mod replay;
mod sarl;

pub use darling::{darling_target, darling_targets, Darling, DarlingCheckpoint, DarlingExperience};
pub use replay::ReplayMemory;
pub use sarl::{sarl_targets, DeepSarl, SarlCheckpoint, SarlExperience};

use rand::Rng;

use crate::env::{JointAction, NetworkState, StepOutcome};
use crate::error::{Error, Result};

/// Anything that picks actions epoch by epoch and may learn from outcomes.
pub trait Controller: Send {
    fn name(&self) -> &'static str;

    fn act(&mut self, state: &NetworkState) -> Result<JointAction>;

    /// Feeds back the transition that followed `act`. Returns the training
    /// loss when a gradient step was taken.
    fn observe(&mut self, state: &NetworkState, action: &JointAction, outcome: &StepOutcome) -> Result<Option<f64>> {
        let _ = (state, action, outcome);
        Ok(None)
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy choice over `q_values`.
pub fn select_action<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
    if q_values.is_empty() {
        return Err(Error::Contract("no actions to choose from".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Contract(format!("exploration probability {epsilon} outside [0, 1]")));
    }
    let explore = rng.random::<f64>() < epsilon;
    Ok(if explore {
        rng.random_range(0..q_values.len())
    } else {
        argmax(q_values)
    })
}
