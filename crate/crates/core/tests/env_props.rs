use proptest::prelude::*;

use mec_core::config::SystemConfig;
use mec_core::env::{encode_state, feature_len, state_from_index, state_index, step, EnvStreams, JointAction, NetworkState};

fn configs() -> [SystemConfig; 2] {
    [SystemConfig::six_bs(0), SystemConfig::tiny()]
}

fn arb_state(cfg: &SystemConfig, raw: u64) -> NetworkState {
    let (x, _) = mec_core::env::space_sizes(cfg);
    state_from_index((raw % x as u64) as usize, cfg)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn one_step_respects_queue_dynamics(which in 0usize..2, raw in any::<u64>(), c in 0usize..7, e in 0u32..5, seed in any::<u64>()) {
        let cfg = &configs()[which];
        let state = arb_state(cfg, raw);
        let action = JointAction::new(c % (cfg.num_bs + 1), e.min(cfg.energy_queue_cap));
        let out = step(&state, &action, cfg, &mut EnvStreams::from_seed(seed)).unwrap();
        let d = out.diagnostics;
        let n = &out.next_state;
        prop_assert!(n.task_queue <= cfg.task_queue_cap);
        prop_assert!(n.energy_queue <= cfg.energy_queue_cap);
        prop_assert!(d.energy_deducted <= state.energy_queue);
        prop_assert_eq!(d.forced_noop, e.min(cfg.energy_queue_cap) > 0 && (action.energy > state.energy_queue || state.task_queue == 0));
        if d.forced_noop || action.energy == 0 {
            prop_assert_eq!(d.energy_deducted, 0);
            prop_assert_eq!(n.association, state.association);
            prop_assert_eq!(d.payment, 0.0);
        }
        prop_assert!(out.utility.total.is_finite());
        prop_assert!(out.utility.total > 0.0 && out.utility.total <= 20.0 + 1e-12);
        prop_assert!(n.validate(cfg).is_ok());
    }

    #[test]
    fn state_indexing_is_a_bijection(which in 0usize..2, raw in any::<u64>()) {
        let cfg = &configs()[which];
        let (x, _) = mec_core::env::space_sizes(cfg);
        let i = (raw % x as u64) as usize;
        let s = state_from_index(i, cfg);
        prop_assert_eq!(state_index(&s, cfg), i);
        prop_assert_eq!(encode_state(&s, cfg).len(), feature_len(cfg));
    }

    #[test]
    fn stepping_is_deterministic(raw in any::<u64>(), idx in 0usize..35, seed in any::<u64>()) {
        let cfg = SystemConfig::six_bs(0);
        let state = arb_state(&cfg, raw);
        let action = JointAction::from_index(idx, &cfg);
        let a = step(&state, &action, &cfg, &mut EnvStreams::from_seed(seed)).unwrap();
        let b = step(&state, &action, &cfg, &mut EnvStreams::from_seed(seed)).unwrap();
        prop_assert_eq!(a, b);
    }
}
