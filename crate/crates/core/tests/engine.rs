mod common;

use atelier_core::engine::{
    phase1_optimize, phase2_optimize, trajectory_distribution, trajectory_loglik, EngineError, LoopConfig,
    LoopSettings, RewardParams, ToySpace, TrajectoryRecord,
};
use common::studies::{
    oracle_config, oracle_gap, phase1_fixture, phase1_gradient_error, phase2_gradient_error, planted_recovery,
    random_reward,
};
use common::toy::Toy;

fn config() -> LoopConfig {
    oracle_config()
}

fn check_against_oracle(toy: &Toy, seeds: std::ops::Range<u64>) {
    let gap = oracle_gap(toy, seeds);
    assert!(gap < 1e-9, "gap {gap}");
}

#[test]
fn loglik_matches_enumeration_on_two_states_two_actions() {
    check_against_oracle(&Toy::random(2, 2, 2, 1), 0..20);
}

#[test]
fn loglik_matches_enumeration_on_six_actions_three_steps() {
    for states in [2, 3, 5] {
        check_against_oracle(&Toy::random(states, 6, 3, 10 + states as u64), 0..10);
    }
}

#[test]
fn loglik_matches_enumeration_up_to_ten_thousand_trajectories() {
    check_against_oracle(&Toy::random(10, 3, 3, 99), 0..3);
    check_against_oracle(&Toy::random(3, 4, 6, 98), 0..3);
}

#[test]
fn zero_reward_gives_the_plain_trajectory_probability() {
    let toy = Toy::random(3, 2, 2, 5);
    let (states, actions) = toy.legal_record(5);
    let space = toy.space();
    let record = TrajectoryRecord::in_space(&space, states.clone(), actions.clone());
    let v = trajectory_loglik(&record, &RewardParams::zeros(3, 2), &config(), &space).unwrap();
    assert!((v - toy.prob(&states, &actions).ln()).abs() < 1e-12);
}

#[test]
fn normalized_distribution_ignores_reward_shift() {
    for (toy, seed) in [(Toy::random(2, 2, 2, 3), 3), (Toy::random(4, 6, 3, 4), 4)] {
        let space = toy.space();
        let (_, actions) = toy.legal_record(seed);
        let reward = random_reward(seed);
        let base = trajectory_distribution(&space, &actions, &reward, &config()).unwrap();
        assert!((base.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for c in [-3.0, 0.5, 7.0] {
            let shifted = trajectory_distribution(&space, &actions, &reward.shifted(c), &config()).unwrap();
            for (a, b) in base.iter().zip(&shifted) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn inconsistent_records_and_oversized_spaces_are_rejected() {
    let toy = Toy::random(3, 2, 2, 8);
    let space = toy.space();
    let (states, actions) = toy.legal_record(8);
    let mut record = TrajectoryRecord::in_space(&space, states, actions);
    record.log_probs[0] += 0.1;
    let reward = RewardParams::zeros(3, 2);
    assert!(matches!(trajectory_loglik(&record, &reward, &config(), &space), Err(EngineError::InconsistentRecord(_))));

    let big = ToySpace::uniform(vec![vec![0.0; 3]; 11], vec![vec![0.0; 2]], 5).unwrap();
    let record = TrajectoryRecord::in_space(&big, vec![0; 6], vec![0; 5]);
    assert!(matches!(trajectory_loglik(&record, &reward, &config(), &big), Err(EngineError::SpaceTooLarge(_))));
    assert!(matches!(
        phase2_optimize(&[], &space, &reward, &config(), 1, 0.1),
        Err(EngineError::NoTrajectories)
    ));
}

#[test]
fn phase2_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let err = phase2_gradient_error(seed);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn planted_reward_is_recovered_at_seed_7() {
    let start = std::time::Instant::now();
    let (rho, monotone) = planted_recovery(7);
    assert!(monotone);
    assert!(rho >= 0.9, "spearman {rho}");
    assert!(start.elapsed().as_secs_f64() < 20.0);
}

#[test]
fn phase1_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let err = phase1_gradient_error(seed);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn phase1_trace_never_decreases() {
    let cfg = LoopConfig::new(LoopSettings::default()).unwrap();
    let (batch, enc, comp, setup) = phase1_fixture(3);
    let out = phase1_optimize(&batch, &enc, &comp, &setup, &cfg, 50, 0.05).unwrap();
    let values = &out.trace.values;
    assert!(values.len() >= 2 && values.len() <= 51);
    assert!(values.windows(2).all(|w| w[1] >= w[0]));
    assert!(values[values.len() - 1] > values[0]);
}

#[test]
fn phase1_zero_steps_is_identity() {
    let cfg = LoopConfig::new(LoopSettings::default()).unwrap();
    let (batch, enc, comp, setup) = phase1_fixture(4);
    let out = phase1_optimize(&batch, &enc, &comp, &setup, &cfg, 0, 0.05).unwrap();
    assert_eq!(out.encoder, enc);
    assert_eq!(out.composer, comp);
    assert!(matches!(phase1_optimize(&[], &enc, &comp, &setup, &cfg, 1, 0.1), Err(EngineError::EmptyBatch)));
}
