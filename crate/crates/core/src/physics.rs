//! Local execution, uplink transmission and handover timing.

use std::f64::consts::LN_2;

use crate::config::SystemConfig;
use crate::env::{JointAction, NetworkState};
use crate::error::{Error, Result};

/// Absolute tolerance on the inverse transmission time when bisecting.
pub const BISECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSolution {
    /// CPU-cycle frequency (Hz).
    pub freq: f64,
    /// Local execution time ν/f (s).
    pub delay: f64,
    pub freq_capped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmitSolution {
    /// Transmission time of the task input (s).
    pub delay: f64,
    /// Constant uplink rate (bit/s).
    pub rate: f64,
    /// Transmit power (W).
    pub power: f64,
    pub power_capped: bool,
    /// Energy radiated during transmission (J). Below the allocation when capped.
    pub energy_spent: f64,
}

/// Converts a gain in dB to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// CPU frequency and local execution time for `e_units` allocated energy units.
pub fn local_solution(e_units: u32, cfg: &SystemConfig) -> Result<LocalSolution> {
    if e_units == 0 {
        return Err(Error::Contract("local execution needs at least one energy unit".into()));
    }
    let energy = f64::from(e_units) * cfg.energy_unit;
    let raw = (energy / (cfg.switched_capacitance * cfg.task_cycles)).sqrt();
    let (freq, freq_capped) = if raw > cfg.max_cpu_freq {
        (cfg.max_cpu_freq, true)
    } else {
        (raw, false)
    };
    Ok(LocalSolution {
        freq,
        delay: cfg.task_cycles / freq,
        freq_capped,
    })
}

/// Residual of the rate/time fixed point at `x = 1/d_tr`:
/// `log2(1 + a x) - b x` with `a = g e / I` and `b = μ / W`.
pub fn transmit_residual(x: f64, a: f64, b: f64) -> f64 {
    (a * x).ln_1p() / LN_2 - b * x
}

/// Largest root of `log2(1 + a x) = b x`, or `None` when only the trivial
/// root at zero exists.
pub fn solve_inverse_time(a: f64, b: f64) -> Option<f64> {
    // The residual is concave and vanishes at 0; a positive root exists iff
    // its slope at 0 is positive.
    if a / LN_2 <= b {
        return None;
    }
    let mut lo = f64::EPSILON;
    if transmit_residual(lo, a, b) <= 0.0 {
        // slope barely positive; the root sits below machine epsilon
        return Some(lo);
    }
    let mut hi = a / (b * LN_2) + 1.0;
    while transmit_residual(hi, a, b) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= BISECTION_TOL || mid <= lo || mid >= hi {
            return Some(0.5 * (lo + hi));
        }
        if transmit_residual(mid, a, b) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Minimum transmission time for the task input over a link with gain
/// `gain_db`, spending at most `e_units` energy units.
///
/// When the constant-rate solution needs more than the maximum transmit
/// power, transmission proceeds at the cap instead and spends less energy
/// than allocated.
pub fn solve_transmit_time(gain_db: f64, e_units: u32, cfg: &SystemConfig) -> Result<TransmitSolution> {
    if e_units == 0 {
        return Err(Error::Contract("transmission needs at least one energy unit".into()));
    }
    let g = db_to_linear(gain_db);
    let energy = f64::from(e_units) * cfg.energy_unit;
    let a = g * energy / cfg.interference_noise;
    let b = cfg.input_bits / cfg.bandwidth;
    let x = solve_inverse_time(a, b).ok_or(Error::LinkInfeasible {
        slope: a / (b * LN_2),
    })?;
    let delay = 1.0 / x;
    let power = energy / delay;
    if power <= cfg.max_tx_power {
        return Ok(TransmitSolution {
            delay,
            rate: cfg.input_bits / delay,
            power,
            power_capped: false,
            energy_spent: energy,
        });
    }
    let power = cfg.max_tx_power;
    let rate = cfg.bandwidth * (g * power / cfg.interference_noise).ln_1p() / LN_2;
    let delay = cfg.input_bits / rate;
    Ok(TransmitSolution {
        delay,
        rate,
        power,
        power_capped: true,
        energy_spent: power * delay,
    })
}

/// Handover signalling delay for offloading via `target` while associated with `assoc`.
pub fn handover_delay(target: usize, assoc: usize, cfg: &SystemConfig) -> f64 {
    if (1..=cfg.num_bs).contains(&target) && target != assoc {
        cfg.handover_delay
    } else {
        0.0
    }
}

/// Task execution delay and the pieces it was assembled from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecutionDelay {
    /// Total delay d; `+inf` when the chosen link cannot carry the task.
    pub delay: f64,
    pub handover: f64,
    pub local: Option<LocalSolution>,
    pub transmit: Option<TransmitSolution>,
    pub link_infeasible: bool,
}

impl ExecutionDelay {
    fn idle() -> Self {
        Self {
            delay: 0.0,
            handover: 0.0,
            local: None,
            transmit: None,
            link_infeasible: false,
        }
    }
}

/// Execution delay of an action that has already been screened for feasibility.
pub fn execution_delay(state: &NetworkState, action: &JointAction, cfg: &SystemConfig) -> Result<ExecutionDelay> {
    if action.energy == 0 {
        return Ok(ExecutionDelay::idle());
    }
    if action.offload == 0 {
        let local = local_solution(action.energy, cfg)?;
        return Ok(ExecutionDelay {
            delay: local.delay,
            local: Some(local),
            ..ExecutionDelay::idle()
        });
    }
    let bs = action.offload;
    if bs > cfg.num_bs {
        return Err(Error::Contract(format!("offload target {bs} exceeds B = {}", cfg.num_bs)));
    }
    let handover = handover_delay(bs, state.association, cfg);
    let gain_db = cfg.channels[bs - 1].gain_levels_db[state.gains[bs - 1]];
    match solve_transmit_time(gain_db, action.energy, cfg) {
        Ok(tx) => Ok(ExecutionDelay {
            delay: handover + tx.delay + cfg.server_exec_time,
            handover,
            local: None,
            transmit: Some(tx),
            link_infeasible: false,
        }),
        Err(Error::LinkInfeasible { .. }) => Ok(ExecutionDelay {
            delay: f64::INFINITY,
            handover,
            local: None,
            transmit: None,
            link_infeasible: true,
        }),
        Err(e) => Err(e),
    }
}
