//! Per-epoch satisfaction components and their grouping into agents.

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::env::{JointAction, NetworkState};
use crate::error::{Error, Result};

/// Raw quantities the satisfaction functions are evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawMetrics {
    /// min{d, δ} (s).
    pub delay: f64,
    pub drops: f64,
    pub queuing: f64,
    pub penalty: f64,
    pub payment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityBreakdown {
    /// Weighted components u1..u5.
    pub components: [f64; 5],
    pub total: f64,
    pub raw: RawMetrics,
}

/// Tasks lost to a full queue this epoch.
pub fn task_drop(task_queue: u32, delay: f64, task_arrival: u32, cfg: &SystemConfig) -> u32 {
    let served = u32::from(delay > 0.0 && delay <= cfg.epoch_duration);
    (task_queue + task_arrival)
        .saturating_sub(served)
        .saturating_sub(cfg.task_queue_cap)
}

/// Queuing delay expressed as the number of tasks left waiting.
pub fn queuing_delay(task_queue: u32, delay: f64) -> u32 {
    task_queue.saturating_sub(u32::from(delay > 0.0))
}

pub fn failure_penalty(delay: f64, cfg: &SystemConfig) -> u32 {
    u32::from(delay > cfg.epoch_duration)
}

/// Payment for MEC service; zero unless the task went to a BS.
pub fn service_payment(delay: f64, handover: f64, offload: usize, cfg: &SystemConfig) -> f64 {
    if (1..=cfg.num_bs).contains(&offload) {
        cfg.mec_price * (delay.min(cfg.epoch_duration) - handover)
    } else {
        0.0
    }
}

/// Weighted exponential satisfactions for one epoch.
///
/// `action` must be the action as executed: idle epochs carry `energy == 0`
/// and `offload == 0`.
pub fn utility_components(
    state: &NetworkState,
    action: &JointAction,
    delay: f64,
    handover: f64,
    task_arrival: u32,
    cfg: &SystemConfig,
) -> UtilityBreakdown {
    let raw = RawMetrics {
        delay: delay.min(cfg.epoch_duration),
        drops: f64::from(task_drop(state.task_queue, delay, task_arrival, cfg)),
        queuing: f64::from(queuing_delay(state.task_queue, delay)),
        penalty: f64::from(failure_penalty(delay, cfg)),
        payment: service_payment(delay, handover, action.offload, cfg),
    };
    breakdown_from_raw(raw, &cfg.weights)
}

pub fn breakdown_from_raw(raw: RawMetrics, weights: &[f64; 5]) -> UtilityBreakdown {
    let xs = [raw.delay, raw.drops, raw.queuing, raw.penalty, raw.payment];
    let mut components = [0.0; 5];
    for k in 0..5 {
        components[k] = weights[k] * (-xs[k]).exp();
    }
    UtilityBreakdown {
        components,
        total: components.iter().sum(),
        raw,
    }
}

/// Grouping of the five utility components (numbered 1..=5) into agents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition(Vec<Vec<usize>>);

impl Default for Partition {
    fn default() -> Self {
        Self::identity()
    }
}

impl Partition {
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let p = Self(groups);
        p.validate()?;
        Ok(p)
    }

    /// One agent per component.
    pub fn identity() -> Self {
        Self((1..=5).map(|k| vec![k]).collect())
    }

    /// A single agent that sees the whole utility.
    pub fn monolithic() -> Self {
        Self(vec![vec![1, 2, 3, 4, 5]])
    }

    /// Execution delay merged with queuing delay; the rest stand alone.
    pub fn four_way() -> Self {
        Self(vec![vec![1, 3], vec![2], vec![4], vec![5]])
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = [false; 5];
        for group in &self.0 {
            if group.is_empty() {
                return Err(Error::Config("partition has an empty group".into()));
            }
            for &k in group {
                if !(1..=5).contains(&k) {
                    return Err(Error::Config(format!("utility component {k} out of 1..=5")));
                }
                if std::mem::replace(&mut seen[k - 1], true) {
                    return Err(Error::Config(format!("utility component {k} appears twice")));
                }
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::Config(format!("utility component {} is not covered", k + 1)));
        }
        Ok(())
    }

    /// Per-agent utilities. Components are summed in index order, so the
    /// monolithic grouping reproduces `breakdown.total` bit for bit.
    pub fn decompose(&self, breakdown: &UtilityBreakdown) -> Vec<f64> {
        self.decompose_components(&breakdown.components)
    }

    pub fn decompose_components(&self, components: &[f64; 5]) -> Vec<f64> {
        self.0
            .iter()
            .map(|g| g.iter().map(|&k| components[k - 1]).sum())
            .collect()
    }
}

/// Splits `breakdown` according to `pattern`, validating the pattern first.
pub fn decompose(breakdown: &UtilityBreakdown, pattern: &Partition) -> Result<Vec<f64>> {
    pattern.validate()?;
    Ok(pattern.decompose(breakdown))
}
