//! Exact dynamic programming and tabular learners for instances small
//! enough to enumerate.

mod dp;
mod kernel;
mod learning;

pub use dp::{
    backup, bellman_residual, greedy_policy, policy_evaluation_decomposed, value_iteration, DecomposedEvaluation,
    ValueTables, DEFAULT_MAX_ITERATIONS,
};
pub use kernel::{build_kernel, check_size, Kernel, SIZE_LIMIT};
pub use learning::{
    tabular_q_learning, tabular_sarl, QTable, SarlTables, Schedule, TablePolicy, TabularQAgent, TabularSarlAgent,
};

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::Result;
use crate::utility::Partition;

/// Largest absolute entrywise difference.
pub fn sup_norm_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn random_policy<R: Rng + ?Sized>(num_states: usize, num_actions: usize, rng: &mut R) -> Vec<usize> {
    (0..num_states).map(|_| rng.random_range(0..num_actions)).collect()
}

/// Regression fixture of the tabular suite on one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub num_states: usize,
    pub num_actions: usize,
    pub discount: f64,
    pub value_iteration: ValueTables,
    pub greedy_policy: Vec<usize>,
    pub q_learning: QTable,
    pub q_learning_epochs: u64,
    pub q_learning_gap: f64,
    /// ‖Σ_k Q_k − Q‖∞ for the greedy policy under each partition tested.
    pub additivity_gaps: Vec<(Partition, f64)>,
}

impl OracleReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

pub fn run_oracle_suite(cfg: &SystemConfig, schedule: &Schedule, epochs: u64, seed: u64) -> Result<OracleReport> {
    let kernel = build_kernel(cfg)?;
    let vi = value_iteration(&kernel, cfg.discount, 1e-12, DEFAULT_MAX_ITERATIONS)?;
    let policy = vi.greedy_policy();
    let ql = tabular_q_learning(cfg, schedule, epochs, seed)?;
    let additivity_gaps = [Partition::identity(), Partition::four_way()]
        .into_iter()
        .map(|p| {
            let gap = policy_evaluation_decomposed(&kernel, &policy, &p, cfg.discount)?.additivity_gap();
            Ok((p, gap))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleReport {
        num_states: kernel.num_states,
        num_actions: kernel.num_actions,
        discount: cfg.discount,
        q_learning_gap: sup_norm_gap(&ql.q, &vi.q),
        greedy_policy: policy,
        value_iteration: vi,
        q_learning: ql,
        q_learning_epochs: epochs,
        additivity_gaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::seeded_rng;

    #[test]
    fn report_round_trips_through_json() {
        let cfg = SystemConfig::tiny();
        let report = run_oracle_suite(&cfg, &Schedule::default(), 5_000, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oracle.json");
        report.save(&path).unwrap();
        assert_eq!(OracleReport::load(&path).unwrap(), report);
        assert!(report.additivity_gaps.iter().all(|(_, g)| *g < 1e-10));
    }

    #[test]
    fn random_policies_are_in_range() {
        let p = random_policy(18, 6, &mut seeded_rng(2));
        assert_eq!(p.len(), 18);
        assert!(p.iter().all(|&a| a < 6));
    }
}
