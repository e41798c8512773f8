//! Stochastic computation offloading for a mobile user in a multi-BS
//! mobile-edge computing system.
//!
//! The crate contains the Markov decision process ([`env`]) with its link
//! physics ([`physics`]) and utility model ([`utility`]), exact tabular
//! solvers used as ground truth ([`oracle`]), a small neural network with
//! Adam ([`nn`]), the double-DQN and decomposed deep SARSA learners
//! ([`agents`]), three heuristic baselines ([`baselines`]) and the
//! experiment driver ([`harness`]).

pub mod agents;
pub mod baselines;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod oracle;
pub mod physics;
pub mod seeds;
pub mod utility;

pub use config::{ChannelModel, LearnerConfig, SystemConfig};
pub use env::{Environment, JointAction, NetworkState, StepOutcome};
pub use error::{Error, Result};
pub use utility::{Partition, UtilityBreakdown};
