mod common;

use common::*;
use rric_misspec::builtin::{builtin_set, PAPER4};
use rric_misspec::choice_sets::{human_choice, optimal_element, Classification, MisspecClass};
use rric_misspec::cli::DEFAULT_THETA_STAR;
use rric_misspec::experiments::{
    run_goal_bias_study, run_randomized_study, run_symmetry_verification, run_trial, summarize,
    InferenceSetup, NamedEnv, RandomizedStudy, SymmetricPairSampler,
};
use rric_misspec::gridworld::{trajectory_return, GridWorld};
use rric_misspec::inference::{ThetaGrid, DEFAULT_BETA};
use rric_misspec::planner::master_choice_set;
use rric_misspec::Error;

fn setup() -> InferenceSetup {
    InferenceSetup::uniform(
        ThetaGrid::circle(64, 2.0).unwrap(),
        DEFAULT_THETA_STAR,
        DEFAULT_BETA,
    )
}

#[test]
fn default_study_has_six_tuples_per_class_and_env() {
    let envs = builtin_set(PAPER4).unwrap();
    let results = run_randomized_study(&RandomizedStudy::default(), &envs, &setup()).unwrap();
    assert_eq!(results.len(), 5 * 24);
    for class in MisspecClass::ALL {
        let of_class: Vec<_> = results
            .iter()
            .filter(|r| r.class == Classification::Misspecified(class))
            .collect();
        assert_eq!(of_class.len(), 24, "{class}");
        for env in &envs {
            assert_eq!(of_class.iter().filter(|r| r.env_id == env.id).count(), 6);
        }
    }
    for r in &results {
        assert_eq!(r.per_env_regret.len(), envs.len());
        let mean = r.per_env_regret.iter().sum::<f64>() / envs.len() as f64;
        assert!((r.regret - mean).abs() < 1e-12);
        assert!((r.entropy_change - (r.entropy_correct - r.entropy_misspecified)).abs() < 1e-12);
    }
}

#[test]
fn randomized_study_is_deterministic() {
    let envs = builtin_set(PAPER4).unwrap();
    let study = RandomizedStudy {
        seed: 11,
        ..RandomizedStudy::default()
    };
    let a = run_randomized_study(&study, &envs, &setup()).unwrap();
    let b = run_randomized_study(&study, &envs, &setup()).unwrap();
    assert_eq!(a, b);
    let c = run_randomized_study(&RandomizedStudy::default(), &envs, &setup()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn mirrored_a2_trials_negate_a1_trials() {
    let envs = builtin_set(PAPER4).unwrap();
    let results = run_randomized_study(&RandomizedStudy::default(), &envs, &setup()).unwrap();
    let of = |c: MisspecClass| -> Vec<_> {
        results
            .iter()
            .filter(|r| r.class == Classification::Misspecified(c))
            .collect()
    };
    for (a1, a2) in of(MisspecClass::A1).iter().zip(of(MisspecClass::A2)) {
        assert_eq!((a1.env_id.as_str(), a1.seed), (a2.env_id.as_str(), a2.seed));
        assert!((a1.entropy_change + a2.entropy_change).abs() < 1e-12);
        assert!((a1.regret + a2.regret).abs() < 1e-12);
    }
}

#[test]
fn sampled_sets_have_their_class_structure() {
    let envs = builtin_set(PAPER4).unwrap();
    let s = setup();
    let masters: Vec<_> = envs
        .iter()
        .map(|e| master_choice_set(&e.env, s.thetas()))
        .collect();
    let study = RandomizedStudy {
        classes: vec![MisspecClass::A3, MisspecClass::B2, MisspecClass::B3],
        tuples_per_class_per_env: 3,
        ..RandomizedStudy::default()
    };
    // draw directly from the sampler and check set structure
    for (i, env) in envs.iter().enumerate() {
        for class in &study.classes {
            for seed in 0..3 {
                let pair = rric_misspec::choice_sets::sample_pair(
                    *class,
                    &masters[i],
                    &s.theta_star,
                    &env.env,
                    seed,
                    study.size_bounds,
                )
                .unwrap();
                let best = optimal_element(&pair, &s.theta_star, &env.env).unwrap();
                let c_h = human_choice(&pair.human, &s.theta_star, &env.env).unwrap();
                assert!(pair.robot.contains(&best));
                assert!(pair.robot.contains(&c_h));
                match class {
                    MisspecClass::A3 => {
                        assert!(pair.human.contains(&best));
                        assert!(!pair.robot.is_subset_of(&pair.human));
                        assert!(!pair.human.is_subset_of(&pair.robot));
                        assert_eq!(best, c_h);
                    }
                    MisspecClass::B2 => {
                        assert!(!pair.human.contains(&best));
                        assert!(pair.human.is_subset_of(&pair.robot));
                        let r_best = trajectory_return(&env.env, &best, &s.theta_star).unwrap();
                        let r_h = trajectory_return(&env.env, &c_h, &s.theta_star).unwrap();
                        assert!(r_best > r_h);
                    }
                    MisspecClass::B3 => {
                        assert!(!pair.human.contains(&best));
                        assert!(!pair.human.is_subset_of(&pair.robot));
                    }
                    _ => unreachable!(),
                }
            }
        }
    }
    let results = run_randomized_study(&study, &envs, &s).unwrap();
    assert_eq!(results.len(), 3 * 3 * envs.len());
    let summary = summarize(
        &results,
        &study.classes.iter().map(|&c| c.into()).collect::<Vec<_>>(),
    );
    for row in &summary.rows {
        assert_eq!(row.count, 3 * envs.len());
    }
}

#[test]
fn identical_sets_give_zero_change() {
    let envs = builtin_set(PAPER4).unwrap();
    let s = setup();
    let env = &envs[0].env;
    let master = master_choice_set(env, s.thetas());
    let pair = rric_misspec::choice_sets::ChoicePair::new(master.clone(), master);
    let grids: Vec<GridWorld> = envs.iter().map(|e| e.env.clone()).collect();
    let t = run_trial(&pair, &s.theta_star, &grids, env, s.beta, &s.prior).unwrap();
    assert_eq!(t.class, Classification::NoMisspecification);
    assert_eq!(t.entropy_change, 0.0);
    assert_eq!(t.regret, 0.0);
}

#[test]
fn goal_bias_on_all_goal_master_is_not_misspecified() {
    // lava-free and small: every hypothesis can reach the goal
    let env = GridWorld::parse("4 4 8\n0 0 3 3\n0 0 0 0\n0 0 0 0\n0 0 0 0\n0 0 0 0\n").unwrap();
    let named = NamedEnv::new("open", env.clone());
    let s = setup();
    let master = master_choice_set(&env, s.thetas());
    assert!(master.iter().all(|t| t.ends_at_goal(&env)));
    let (pair, t) = run_goal_bias_study(&named, &s).unwrap();
    assert!(pair.robot.same_members(&pair.human));
    assert_eq!(t.entropy_change, 0.0);
    assert_eq!(t.regret, 0.0);
}

#[test]
fn goal_bias_without_goal_paths_is_an_error() {
    // goal unreachable within the horizon
    let env = GridWorld::parse("5 1 2\n0 0 4 0\n0 0 0 0 0\n").unwrap();
    let err = run_goal_bias_study(&NamedEnv::new("far", env), &setup()).unwrap_err();
    assert!(matches!(err.root(), Error::EmptyBiasSet));
}

#[test]
fn symmetry_verification_on_a_small_env() {
    let env = pocket_env();
    let named = NamedEnv::new("pocket", env.clone());
    let s = InferenceSetup::uniform(ThetaGrid::circle(32, 2.0).unwrap(), DEFAULT_THETA_STAR, 3.0);
    let master = master_choice_set(&env, s.thetas());
    let sampler = SymmetricPairSampler::from_master(
        &master,
        &s.theta_star,
        &env,
        4,
        rric_misspec::choice_sets::SizeBounds::new(2, 3).unwrap(),
        1,
    )
    .unwrap();
    let report =
        run_symmetry_verification(&sampler, &s, std::slice::from_ref(&named), &named, 200, 3).unwrap();
    assert!(report.exact);
    assert_eq!(report.trials.len(), 2 * report.support_pairs);
    assert!(report.max_antisymmetry_residual <= 1e-9);
    assert!(report.max_entropy_antisymmetry_residual <= 1e-9);
    assert!(report.expected_regret.abs() <= 1e-9);
}

#[test]
fn symmetric_sampler_rejects_support_without_common_argmax() {
    let env = pocket_env();
    let s = setup();
    let master = master_choice_set(&env, s.thetas());
    let best = human_choice(&master, &s.theta_star, &env).unwrap();
    let best_idx = master.position(&best).unwrap();
    let other: Vec<usize> = (0..master.len()).filter(|&i| i != best_idx).collect();
    assert!(other.len() >= 2);
    let x = master.select(&[best_idx, other[0]]).unwrap();
    let y = master.select(&[other[0], other[1]]).unwrap();
    let err = SymmetricPairSampler::new(vec![(x, y)], &s.theta_star, &env).unwrap_err();
    assert_eq!(err.kind(), "contract_violation");
}
