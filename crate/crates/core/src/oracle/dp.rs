use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kernel::Kernel;
use crate::agents::argmax;
use crate::error::{Error, Result};
use crate::utility::Partition;

pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTables {
    pub v: Vec<f64>,
    /// Row-major X×Y.
    pub q: Vec<f64>,
    pub num_actions: usize,
    pub iterations: usize,
    /// Sup-norm change of the final sweep.
    pub residual: f64,
}

impl ValueTables {
    pub fn q_row(&self, state: usize) -> &[f64] {
        &self.q[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        greedy_policy(&self.q, self.num_actions)
    }
}

pub fn greedy_policy(q: &[f64], num_actions: usize) -> Vec<usize> {
    q.chunks(num_actions).map(argmax).collect()
}

/// One Bellman backup Q(x,a) = (1−γ)u(x,a) + γ Σ P(x'|x,a) v(x').
pub fn backup(kernel: &Kernel, v: &[f64], gamma: f64) -> Vec<f64> {
    let mut q = Vec::with_capacity(kernel.num_states * kernel.num_actions);
    for x in 0..kernel.num_states {
        for a in 0..kernel.num_actions {
            q.push((1.0 - gamma) * kernel.expected_utility(x, a) + gamma * kernel.expect(x, a, v));
        }
    }
    q
}

/// Iterates the normalized optimality operator until the sup-norm change
/// drops below `tol`.
pub fn value_iteration(kernel: &Kernel, gamma: f64, tol: f64, max_iterations: usize) -> Result<ValueTables> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Contract(format!("discount {gamma} outside [0, 1)")));
    }
    let y = kernel.num_actions;
    let mut v = vec![0.0; kernel.num_states];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iterations {
        let q = backup(kernel, &v, gamma);
        let next: Vec<f64> = q.chunks(y).map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if residual < tol {
            let q = backup(kernel, &v, gamma);
            return Ok(ValueTables {
                v,
                q,
                num_actions: y,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iterations,
        residual,
    })
}

/// Largest |max_a Q(x,a) − V(x)| after one more backup of `tables.v`.
pub fn bellman_residual(kernel: &Kernel, tables: &ValueTables, gamma: f64) -> f64 {
    backup(kernel, &tables.v, gamma)
        .chunks(kernel.num_actions)
        .zip(&tables.v)
        .map(|(r, v)| (r.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v).abs())
        .fold(0.0, f64::max)
}

/// Exact per-agent and monolithic action values of a fixed policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposedEvaluation {
    /// One row-major X×Y table per partition group.
    pub agents: Vec<Vec<f64>>,
    pub total: Vec<f64>,
}

impl DecomposedEvaluation {
    /// ‖Σ_k Q_k − Q‖∞.
    pub fn additivity_gap(&self) -> f64 {
        self.total
            .iter()
            .enumerate()
            .map(|(i, q)| (self.agents.iter().map(|a| a[i]).sum::<f64>() - q).abs())
            .fold(0.0, f64::max)
    }
}

/// Solves Q_k = (1−γ)u_k + γ P_π Q_k for every group of `partition` and for
/// the total utility, by a direct LU solve on the state values.
pub fn policy_evaluation_decomposed(
    kernel: &Kernel,
    policy: &[usize],
    partition: &Partition,
    gamma: f64,
) -> Result<DecomposedEvaluation> {
    if policy.len() != kernel.num_states || policy.iter().any(|&a| a >= kernel.num_actions) {
        return Err(Error::Contract("policy does not fit the kernel".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Contract(format!("discount {gamma} outside [0, 1)")));
    }
    partition.validate()?;
    let n = kernel.num_states;
    let mut m = DMatrix::<f64>::identity(n, n);
    for (x, &a) in policy.iter().enumerate() {
        for &(j, p) in kernel.row(x, a) {
            m[(x, j)] -= gamma * p;
        }
    }
    let lu = m.lu();

    let per_group: Vec<Vec<f64>> = kernel
        .components
        .iter()
        .map(|c| partition.decompose_components(c))
        .collect();
    let solve = |reward: &dyn Fn(usize) -> f64| -> Result<Vec<f64>> {
        let rhs = DVector::from_iterator(n, (0..n).map(|x| (1.0 - gamma) * reward(x * kernel.num_actions + policy[x])));
        let v = lu.solve(&rhs).ok_or(Error::Singular)?;
        let v = v.as_slice();
        let mut q = Vec::with_capacity(n * kernel.num_actions);
        for x in 0..n {
            for a in 0..kernel.num_actions {
                q.push((1.0 - gamma) * reward(x * kernel.num_actions + a) + gamma * kernel.expect(x, a, v));
            }
        }
        Ok(q)
    };
    let agents = (0..partition.len())
        .map(|k| solve(&|i| per_group[i][k]))
        .collect::<Result<Vec<_>>>()?;
    let total = solve(&|i| kernel.utility[i])?;
    Ok(DecomposedEvaluation { agents, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;
    use crate::oracle::build_kernel;
    use approx::assert_relative_eq;

    fn tiny() -> Kernel {
        build_kernel(&SystemConfig::tiny()).unwrap()
    }

    #[test]
    fn constant_utility_is_a_fixed_point() {
        let k = tiny().with_constant_utility(20.0);
        let t = value_iteration(&k, 0.9, 1e-13, DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(t.v.iter().all(|v| (v - 20.0).abs() < 1e-10));
    }

    #[test]
    fn myopic_values() {
        let k = tiny();
        let t = value_iteration(&k, 0.0, 1e-13, 10).unwrap();
        for x in 0..k.num_states {
            let best = (0..k.num_actions).map(|a| k.expected_utility(x, a)).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(t.v[x], best);
        }
    }

    #[test]
    fn residual_below_tolerance() {
        let k = tiny();
        let t = value_iteration(&k, 0.9, 1e-11, DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(bellman_residual(&k, &t, 0.9) < 1e-11);
        for x in 0..k.num_states {
            let best = t.q_row(x).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!((best - t.v[x]).abs() < 1e-10);
        }
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let err = value_iteration(&tiny(), 0.99, 1e-15, 3).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 3, residual } if residual > 0.0));
    }

    #[test]
    fn single_group_equals_total() {
        let k = tiny();
        let policy: Vec<usize> = (0..k.num_states).map(|x| x % k.num_actions).collect();
        let e = policy_evaluation_decomposed(&k, &policy, &Partition::monolithic(), 0.9).unwrap();
        for (a, b) in e.agents[0].iter().zip(&e.total) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn myopic_evaluation_returns_components() {
        let k = tiny();
        let policy = vec![0; k.num_states];
        let e = policy_evaluation_decomposed(&k, &policy, &Partition::identity(), 0.0).unwrap();
        for (i, c) in k.components.iter().enumerate() {
            for g in 0..5 {
                assert_relative_eq!(e.agents[g][i], c[g], max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn greedy_policy_ignores_weight_scale() {
        let mut cfg = SystemConfig::tiny();
        let base = value_iteration(&build_kernel(&cfg).unwrap(), 0.9, 1e-12, DEFAULT_MAX_ITERATIONS).unwrap();
        cfg.weights.iter_mut().for_each(|w| *w *= 2.5);
        let scaled = value_iteration(&build_kernel(&cfg).unwrap(), 0.9, 1e-12, DEFAULT_MAX_ITERATIONS).unwrap();
        assert_eq!(base.greedy_policy(), scaled.greedy_policy());
    }
}
