//! Fixed comparison policies: always local, always offload, and the
//! myopically faster of the two.

use serde::{Deserialize, Serialize};

use crate::agents::Controller;
use crate::config::SystemConfig;
use crate::env::{JointAction, NetworkState};
use crate::error::Result;
use crate::physics::{execution_delay, solve_transmit_time};

/// Largest energy-unit count whose uncapped local frequency stays within the
/// CPU limit.
pub fn local_energy_cap(cfg: &SystemConfig) -> u32 {
    let units = cfg.switched_capacitance * cfg.task_cycles * cfg.max_cpu_freq.powi(2) / cfg.energy_unit;
    // guard against 2.9999999 style rounding just below an integer
    (units * (1.0 + 1e-12)).floor() as u32
}

pub fn mobile_execution_policy(state: &NetworkState, cfg: &SystemConfig) -> JointAction {
    if state.task_queue == 0 || state.energy_queue == 0 {
        return JointAction::IDLE;
    }
    JointAction::new(0, state.energy_queue.min(local_energy_cap(cfg)))
}

/// Best offloading action and its delay, or `None` when nothing can be
/// offloaded (empty queues or every link infeasible).
pub fn server_candidate(state: &NetworkState, cfg: &SystemConfig) -> Option<(JointAction, f64)> {
    if state.task_queue == 0 || state.energy_queue == 0 {
        return None;
    }
    let mut best: Option<(JointAction, f64)> = None;
    for bs in 1..=cfg.num_bs {
        let gain_db = cfg.channels[bs - 1].gain_levels_db[state.gains[bs - 1]];
        let energy = (1..=state.energy_queue)
            .rev()
            .find(|&e| solve_transmit_time(gain_db, e, cfg).is_ok_and(|tx| !tx.power_capped))
            .unwrap_or(1);
        let action = JointAction::new(bs, energy);
        let Ok(timing) = execution_delay(state, &action, cfg) else {
            continue;
        };
        if !timing.delay.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, d)| timing.delay < d) {
            best = Some((action, timing.delay));
        }
    }
    best
}

pub fn server_execution_policy(state: &NetworkState, cfg: &SystemConfig) -> JointAction {
    server_candidate(state, cfg).map_or(JointAction::IDLE, |(a, _)| a)
}

pub fn greedy_execution_policy(state: &NetworkState, cfg: &SystemConfig) -> JointAction {
    let local = mobile_execution_policy(state, cfg);
    let local_delay = if local.energy > 0 {
        execution_delay(state, &local, cfg).map_or(f64::INFINITY, |t| t.delay)
    } else {
        f64::INFINITY
    };
    match server_candidate(state, cfg) {
        Some((remote, d)) if d < local_delay => remote,
        _ => local,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Mobile,
    Server,
    Greedy,
}

impl BaselineKind {
    pub fn policy(self, state: &NetworkState, cfg: &SystemConfig) -> JointAction {
        match self {
            Self::Mobile => mobile_execution_policy(state, cfg),
            Self::Server => server_execution_policy(state, cfg),
            Self::Greedy => greedy_execution_policy(state, cfg),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Baseline {
    kind: BaselineKind,
    cfg: SystemConfig,
}

impl Baseline {
    pub fn new(kind: BaselineKind, cfg: SystemConfig) -> Self {
        Self { kind, cfg }
    }
}

impl Controller for Baseline {
    fn name(&self) -> &'static str {
        match self.kind {
            BaselineKind::Mobile => "mobile",
            BaselineKind::Server => "server",
            BaselineKind::Greedy => "greedy",
        }
    }

    fn act(&mut self, state: &NetworkState) -> Result<JointAction> {
        Ok(self.kind.policy(state, &self.cfg))
    }
}
