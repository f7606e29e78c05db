//! Environment, dataset and oracle properties over random configurations.

use brave_core::dataset::{generate, is_valid_action, valid_action_count};
use brave_core::env::{displacement, distance, is_interior, random_environment, random_environment_with_pits};
use brave_core::eval::evaluate_policy;
use brave_core::planner::Planner;
use brave_core::vi::{value_iteration, ViConfig};
use brave_core::{ActionVector, EnvConfig, GridState, TerminalKind};
use proptest::prelude::*;

fn env_strategy() -> impl Strategy<Value = EnvConfig> {
    (1usize..=4, 3u16..=6, 0.0f64..0.6, any::<u64>())
        .prop_map(|(d, m, frac, seed)| random_environment(d, m, if d == 1 { 0.0 } else { frac }, seed).unwrap())
}

fn state_in(cfg: &EnvConfig) -> impl Strategy<Value = GridState> {
    proptest::collection::vec(0..cfg.size, cfg.dims).prop_map(GridState)
}

fn action_for(dims: usize) -> impl Strategy<Value = ActionVector> {
    proptest::collection::vec(0u8..=1, 2 * dims).prop_map(ActionVector)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn step_stays_in_bounds_and_is_deterministic(
        (cfg, s, a) in env_strategy().prop_flat_map(|c| {
            let (ss, aa) = (state_in(&c), action_for(c.dims));
            (Just(c), ss, aa)
        })
    ) {
        let o1 = cfg.step(&s, &a, 0).unwrap();
        let o2 = cfg.step(&s, &a, 0).unwrap();
        prop_assert_eq!(&o1, &o2);
        prop_assert!(o1.next_state.0.iter().all(|&c| c < cfg.size));
        prop_assert!(o1.reward <= 10.0);
        prop_assert_eq!(o1.terminal, o1.terminal_kind != TerminalKind::None);
    }

    #[test]
    fn swapping_primitives_negates_displacement(a in (1usize..8).prop_flat_map(action_for)) {
        let dims = a.len() / 2;
        let swapped = ActionVector(a.0.chunks(2).flat_map(|p| [p[1], p[0]]).collect());
        let d = displacement(&a, dims).unwrap();
        let e = displacement(&swapped, dims).unwrap();
        prop_assert!(d.iter().zip(&e).all(|(x, y)| *x == -*y));
    }

    #[test]
    fn pits_are_interior(cfg in env_strategy()) {
        prop_assert!(cfg.pits.iter().all(|p| is_interior(p, cfg.size)));
        prop_assert!(!cfg.pits.contains(&cfg.start) && !cfg.pits.contains(&cfg.goal));
    }

    #[test]
    fn generated_datasets_replay_and_chain(cfg in env_strategy(), seed in any::<u64>(), p in 0.0f64..=1.0) {
        let ds = generate(&cfg, 8, p, seed).unwrap();
        ds.verify().unwrap();
        for t in &ds.transitions {
            prop_assert!(is_valid_action(&cfg, &t.state, &t.action));
        }
    }

    #[test]
    fn boundary_path_always_exists(cfg in env_strategy()) {
        let mut planner = Planner::new(&cfg);
        prop_assert!(planner.distance(&cfg.start).is_some());
    }
}

/// Worst successful episode of `len` steps: every intermediate state as far
/// from the goal as the start.
fn worst_success(cfg: &EnvConfig, len: u32) -> f64 {
    10.0 - f64::from(len - 1) * cfg.start_goal_distance()
}

#[test]
fn pit_is_worse_than_short_successes() {
    for dims in 1..=6 {
        for size in 3..=7u16 {
            let cfg = random_environment(dims, size, 0.0, 0).unwrap();
            let rho = cfg.start_goal_distance();
            // Longest success length for which failure is guaranteed worse.
            let bound = (10.0 + 10.0 / rho).ceil() as u32;
            for len in 1..=bound {
                assert!(cfg.pit_reward() < worst_success(&cfg, len), "D={dims} M={size} L={len}");
            }
            // Shortest paths are always better than falling into a pit.
            let mut planner = Planner::new(&cfg);
            let mut expert = |s: &GridState| planner.optimal_action(s).unwrap();
            let e = evaluate_policy(&cfg, &mut expert, 1).unwrap();
            assert!(cfg.pit_reward() < e.mean);
        }
    }
}

#[test]
fn long_detours_can_be_worse_than_a_pit() {
    // Loitering at the start for most of the horizon before reaching the goal.
    let cfg = random_environment(2, 5, 0.0, 0).unwrap();
    let len = cfg.horizon;
    assert!(worst_success(&cfg, len) < cfg.pit_reward());
}

#[test]
fn behaviour_mixture_matches_p_opt() {
    let cfg = random_environment_with_pits(3, 5, 3, 1).unwrap();
    let mut planner = Planner::new(&cfg);
    for &p in &[0.0, 0.1, 0.5, 0.9] {
        let ds = generate(&cfg, 400, p, 99).unwrap();
        let (mut hits, mut expect, mut var) = (0.0, 0.0, 0.0);
        for t in &ds.transitions {
            let opt = planner.optimal_action(&t.state).unwrap();
            // A uniform draw lands on the planner's action with probability 1/n.
            let n = valid_action_count(&cfg, &t.state) as f64;
            let prob = p + (1.0 - p) / n;
            expect += prob;
            var += prob * (1.0 - prob);
            if t.action == opt {
                hits += 1.0;
            }
        }
        let z = (hits - expect) / var.sqrt();
        assert!(z.abs() < 4.5, "p_opt={p}: z={z}");
    }
}

#[test]
fn value_iteration_upper_bounds_policies() {
    for seed in 0..6 {
        let cfg = random_environment_with_pits(2, 6, 4, seed).unwrap();
        let table = value_iteration(&cfg, &ViConfig::default()).unwrap();
        let best = table.max_q(&cfg.start);
        let mut planner = Planner::new(&cfg);
        let mut expert = |s: &GridState| planner.optimal_action(s).unwrap();
        assert!(evaluate_policy(&cfg, &mut expert, 1).unwrap().mean <= best + 1e-9);
        for code in 0..16u8 {
            let a = ActionVector((0..4).map(|b| (code >> b) & 1).collect());
            let mut constant = |_: &GridState| a.clone();
            assert!(evaluate_policy(&cfg, &mut constant, 1).unwrap().mean <= best + 1e-9);
        }
    }
}

#[test]
fn one_dimensional_grids_reject_pits() {
    assert!(random_environment_with_pits(1, 6, 1, 0).is_err());
    assert!(random_environment_with_pits(1, 6, 0, 0).is_ok());
}

#[test]
fn distance_examples() {
    let g = GridState(vec![4, 4]);
    assert_eq!(distance(&GridState(vec![4, 4]), &g), 0.0);
    assert!((distance(&GridState(vec![0, 0]), &g) - 32f64.sqrt()).abs() < 1e-15);
}
