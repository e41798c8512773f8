use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::env::{next_queues, resolve_action, space_sizes, state_from_index, state_index, JointAction, NetworkState};
use crate::error::{Error, Result};
use crate::utility::utility_components;

/// Largest X·Y the tabular machinery agrees to enumerate.
pub const SIZE_LIMIT: u128 = 1_000_000;

/// Sparse controlled Markov chain over the enumerated state space with
/// expected per-component utilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub num_states: usize,
    pub num_actions: usize,
    /// `rows[x * num_actions + a]` lists `(x', P(x' | x, a))` sorted by `x'`.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub components: Vec<[f64; 5]>,
    pub utility: Vec<f64>,
}

impl Kernel {
    pub fn row(&self, state: usize, action: usize) -> &[(usize, f64)] {
        &self.rows[state * self.num_actions + action]
    }

    pub fn expected_utility(&self, state: usize, action: usize) -> f64 {
        self.utility[state * self.num_actions + action]
    }

    /// Σ_x' P(x'|x,a) v(x').
    pub fn expect(&self, state: usize, action: usize, v: &[f64]) -> f64 {
        self.row(state, action).iter().map(|&(j, p)| p * v[j]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            let total: f64 = row.iter().map(|&(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-12 || row.iter().any(|&(j, p)| j >= self.num_states || !(0.0..=1.0).contains(&p)) {
                return Err(Error::Contract(format!("kernel row {i} is not a distribution (sum {total})")));
            }
            if !self.utility[i].is_finite() {
                return Err(Error::Contract(format!("kernel utility {i} is not finite")));
            }
        }
        Ok(())
    }

    /// Same dynamics with every expected utility replaced by `value`.
    pub fn with_constant_utility(&self, value: f64) -> Self {
        let mut k = self.clone();
        k.utility.iter_mut().for_each(|u| *u = value);
        k
    }
}

/// Refuses configurations whose state-action table exceeds [`SIZE_LIMIT`].
pub fn check_size(cfg: &SystemConfig) -> Result<(usize, usize)> {
    let (x, y) = space_sizes(cfg);
    if x * y > SIZE_LIMIT {
        return Err(Error::SizeGuard { size: x * y, limit: SIZE_LIMIT });
    }
    Ok((x as usize, y as usize))
}

/// P(a_e = k) for k < `open`, then the tail mass P(a_e ≥ open) as the last entry.
fn truncated_poisson(rate: f64, open: u32) -> Vec<f64> {
    let mut probs = Vec::with_capacity(open as usize + 1);
    let mut p = (-rate).exp();
    let mut below = 0.0;
    for k in 0..open {
        probs.push(p);
        below += p;
        p *= rate / f64::from(k + 1);
    }
    probs.push((1.0 - below).max(0.0));
    probs
}

/// Distribution of the next gain vector, as (gains, probability) pairs.
fn channel_successors(gains: &[usize], cfg: &SystemConfig) -> Vec<(Vec<usize>, f64)> {
    let mut out = vec![(Vec::with_capacity(gains.len()), 1.0)];
    for (&g, ch) in gains.iter().zip(&cfg.channels) {
        let mut next = Vec::with_capacity(out.len() * ch.levels());
        for (prefix, p) in &out {
            for (j, &q) in ch.transitions[g].iter().enumerate() {
                if q > 0.0 {
                    let mut v = prefix.clone();
                    v.push(j);
                    next.push((v, p * q));
                }
            }
        }
        out = next;
    }
    out
}

/// Enumerates the exact transition law and expected utilities.
pub fn build_kernel(cfg: &SystemConfig) -> Result<Kernel> {
    cfg.validate()?;
    let (num_states, num_actions) = check_size(cfg)?;
    let p_task = cfg.task_arrival_prob;
    let mut rows = Vec::with_capacity(num_states * num_actions);
    let mut components = Vec::with_capacity(num_states * num_actions);
    for x in 0..num_states {
        let state = state_from_index(x, cfg);
        let channel = channel_successors(&state.gains, cfg);
        for a in 0..num_actions {
            let action = JointAction::from_index(a, cfg);
            let r = resolve_action(&state, &action, cfg)?;

            let mut expected = [0.0; 5];
            for (a_t, w) in [(0, 1.0 - p_task), (1, p_task)] {
                if w > 0.0 {
                    let b = utility_components(&state, &r.executed, r.timing.delay, r.timing.handover, a_t, cfg);
                    expected.iter_mut().zip(b.components).for_each(|(e, c)| *e += w * c);
                }
            }
            components.push(expected);

            // energy arrivals beyond the free space all land on the cap
            let open = cfg.energy_queue_cap - (state.energy_queue - r.energy_deducted);
            let energy = truncated_poisson(cfg.energy_arrival_rate, open);
            let mut row = Vec::new();
            for (a_t, pt) in [(0u32, 1.0 - p_task), (1, p_task)] {
                if pt <= 0.0 {
                    continue;
                }
                for (a_e, &pe) in energy.iter().enumerate() {
                    if pe <= 0.0 {
                        continue;
                    }
                    let (q_t, q_e, s) = next_queues(&state, &r, a_t, a_e as u32, cfg);
                    for (gains, pg) in &channel {
                        let next = NetworkState {
                            task_queue: q_t,
                            energy_queue: q_e,
                            association: s,
                            gains: gains.clone(),
                        };
                        row.push((state_index(&next, cfg), pt * pe * pg));
                    }
                }
            }
            row.sort_unstable_by_key(|&(j, _)| j);
            row.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
            rows.push(row);
        }
    }
    let utility = components.iter().map(|c| c.iter().sum()).collect();
    let kernel = Kernel {
        num_states,
        num_actions,
        rows,
        components,
        utility,
    };
    kernel.validate()?;
    Ok(kernel)
}
