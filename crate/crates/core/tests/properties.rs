//! Invariants checked over generated inputs.

mod common;

use std::sync::Arc;

use common::*;
use proptest::prelude::*;
use rric_misspec::choice_sets::{
    classify, sample_pair, ChoicePair, ChoiceSet, Classification, MisspecClass, SizeBounds,
};
use rric_misspec::gridworld::{
    generate_layout, trajectory_return, Action, Cell, GridWorld, RewardParams, Trajectory,
};
use rric_misspec::inference::{boltzmann_likelihood, rric_posterior, Belief, ThetaGrid};
use rric_misspec::planner::{master_choice_set, value_iteration};

fn weight() -> impl Strategy<Value = f64> {
    -3.0..3.0f64
}

fn theta() -> impl Strategy<Value = RewardParams> {
    (weight(), weight(), weight()).prop_map(|(l, g, a)| RewardParams::new(l, g, a).unwrap())
}

/// Small random grid with start and goal at distinct cells.
fn env() -> impl Strategy<Value = GridWorld> {
    (2usize..5, 2usize..5, 1usize..6).prop_flat_map(|(w, h, horizon)| {
        (
            proptest::collection::vec(0.0..=1.0f64, w * h),
            0..w * h,
            0..w * h - 1,
        )
            .prop_map(move |(lava, s, g)| {
                let g = if g >= s { g + 1 } else { g };
                GridWorld::new(
                    w,
                    h,
                    lava,
                    Cell::new(s % w, s / w),
                    Cell::new(g % w, g / w),
                    horizon,
                )
                .unwrap()
            })
    })
}

/// Random action sequence replayed from the start, stopping at the goal.
fn walk(env: &GridWorld, actions: &[usize]) -> Trajectory {
    let mut states = vec![env.start()];
    for &a in actions.iter().take(env.horizon()) {
        let last = *states.last().unwrap();
        if last == env.goal() {
            break;
        }
        states.push(next_cell(env, last, Action::ALL[a % 8]));
    }
    Trajectory::new(states)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn return_is_linear_in_theta(
        env in env(),
        actions in proptest::collection::vec(0usize..8, 0..6),
        a in theta(),
        b in theta(),
        s in -2.0..2.0f64,
        t in -2.0..2.0f64,
    ) {
        let traj = walk(&env, &actions);
        let mixed = s * a + t * b;
        let lhs = trajectory_return(&env, &traj, &mixed).unwrap();
        let rhs = s * trajectory_return(&env, &traj, &a).unwrap()
            + t * trajectory_return(&env, &traj, &b).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn value_table_satisfies_bellman_equation(env in env(), th in theta()) {
        let vt = value_iteration(&env, &th);
        for t in 1..=env.horizon() {
            for i in 0..env.cell_count() {
                let c = env.cell_at(i);
                let v = vt.value(&env, c, t);
                if c == env.goal() {
                    prop_assert_eq!(v, 0.0);
                    continue;
                }
                let best = Action::ALL
                    .iter()
                    .map(|&a| {
                        let n = next_cell(&env, c, a);
                        let goal = if n == env.goal() { 1.0 } else { 0.0 };
                        th.lava * env.lava(n) + th.goal * goal + th.alive + vt.value(&env, n, t - 1)
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                prop_assert!((v - best).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn likelihoods_over_a_set_sum_to_one(env in env(), th in theta(), beta in 0.0..20.0f64) {
        let grid = ThetaGrid::circle(12, 2.0).unwrap();
        let set = master_choice_set(&env, grid.points());
        let total: f64 = set
            .iter()
            .map(|c| boltzmann_likelihood(c, &set, &th, beta, &env).unwrap())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn likelihood_of_unique_best_grows_with_beta(
        env in env(),
        th in theta(),
        b1 in 0.0..10.0f64,
        extra in 0.0..10.0f64,
    ) {
        let grid = ThetaGrid::circle(12, 2.0).unwrap();
        let set = master_choice_set(&env, grid.points());
        let returns = set.returns(&env, &th).unwrap();
        let best = (0..set.len()).fold(0, |b, i| if returns[i] > returns[b] { i } else { b });
        let unique = returns.iter().filter(|&&r| r == returns[best]).count() == 1;
        prop_assume!(unique);
        let c = &set.trajectories()[best];
        let lo = boltzmann_likelihood(c, &set, &th, b1, &env).unwrap();
        let hi = boltzmann_likelihood(c, &set, &th, b1 + extra, &env).unwrap();
        prop_assert!(hi >= lo - 1e-15);
    }

    #[test]
    fn posterior_ignores_uniform_shift_of_prior_weights(
        env in env(),
        beta in 0.0..10.0f64,
        scale in 0.1..10.0f64,
    ) {
        let grid = Arc::new(ThetaGrid::circle(16, 2.0).unwrap());
        let set = master_choice_set(&env, grid.points());
        let c = &set.trajectories()[0];
        let raw: Vec<f64> = (0..grid.len()).map(|i| 1.0 + (i % 3) as f64).collect();
        let norm = |v: &[f64]| {
            let t: f64 = v.iter().sum();
            v.iter().map(|x| x / t).collect::<Vec<_>>()
        };
        let scaled: Vec<f64> = raw.iter().map(|x| x * scale).collect();
        let p1 = Belief::new(Arc::clone(&grid), norm(&raw)).unwrap();
        let p2 = Belief::new(Arc::clone(&grid), norm(&scaled)).unwrap();
        let a = rric_posterior(c, &set, &p1, beta, &env).unwrap();
        let b = rric_posterior(c, &set, &p2, beta, &env).unwrap();
        prop_assert!(a.total_variation(&b) < 1e-12);
    }

    #[test]
    fn trajectory_text_round_trips(env in env(), actions in proptest::collection::vec(0usize..8, 0..6)) {
        let traj = walk(&env, &actions);
        let back: Trajectory = traj.to_string().parse().unwrap();
        prop_assert_eq!(back, traj);
    }

    #[test]
    fn env_text_round_trips(env in env()) {
        let back = GridWorld::parse(&env.to_text()).unwrap();
        prop_assert_eq!(back, env);
    }
}

/// An option that loses to the chosen one by a fixed margin for every
/// hypothesis barely moves the posterior.
#[test]
fn option_dominated_in_every_direction_is_negligible() {
    // corridor: goal at the east end, a lava-free dead end to the west
    let env = GridWorld::parse("6 1 4\n2 0 5 0\n0 0 0 0.5 0.5 0\n").unwrap();
    let to_goal: Trajectory = "2:0,3:0,4:0,5:0".parse().unwrap();
    let stay: Trajectory = "2:0,2:0,2:0,2:0".parse().unwrap();
    // same length as `to_goal`, half a unit more lava and no goal bonus
    let shadow: Trajectory = "2:0,3:0,4:0,4:0".parse().unwrap();
    let f_goal = to_goal.features(&env);
    let f_shadow = shadow.features(&env);
    assert_eq!(f_goal.steps, f_shadow.steps);
    assert_eq!(f_shadow.lava, f_goal.lava + 0.5);

    let grid = Arc::new(ThetaGrid::circle(64, 2.0).unwrap());
    let prior = Belief::uniform(Arc::clone(&grid));
    let beta = 20.0;
    let base = ChoiceSet::from_trajectories([to_goal.clone(), stay.clone()]).unwrap();
    let more = ChoiceSet::from_trajectories([to_goal.clone(), stay, shadow]).unwrap();
    let a = rric_posterior(&to_goal, &base, &prior, beta, &env).unwrap();
    let b = rric_posterior(&to_goal, &more, &prior, beta, &env).unwrap();
    assert!(a.total_variation(&b) < 1e-6, "tv = {}", a.total_variation(&b));
}

#[test]
fn identical_feature_options_leave_prior_unchanged() {
    let env = GridWorld::parse("3 3 2\n0 0 2 2\n0 0 0\n0 0 0\n0 0 0\n").unwrap();
    let east: Trajectory = "0:0,1:0,1:1".parse().unwrap();
    let south: Trajectory = "0:0,0:1,1:1".parse().unwrap();
    assert_eq!(east.features(&env), south.features(&env));
    let set = ChoiceSet::from_trajectories([east.clone(), south]).unwrap();
    let grid = Arc::new(ThetaGrid::circle(32, 2.0).unwrap());
    let prior = Belief::uniform(Arc::clone(&grid));
    let post = rric_posterior(&east, &set, &prior, 5.0, &env).unwrap();
    assert!(post.total_variation(&prior) < 1e-15);
}

#[test]
fn sampled_pairs_keep_their_class_under_swap() {
    let env = generate_layout(0);
    let grid = ThetaGrid::circle(64, 2.0).unwrap();
    let theta_star = grid.points()[35];
    let master = master_choice_set(&env, grid.points());
    let bounds = SizeBounds::default();
    for seed in 0..40 {
        for class in [MisspecClass::A1, MisspecClass::A2] {
            let pair = sample_pair(class, &master, &theta_star, &env, seed, bounds).unwrap();
            assert_eq!(classify(&pair, &theta_star, &env).unwrap(), class.into());
            let swapped = classify(&pair.swapped(), &theta_star, &env).unwrap();
            let expected = if class == MisspecClass::A1 {
                MisspecClass::A2
            } else {
                MisspecClass::A1
            };
            assert_eq!(swapped, Classification::Misspecified(expected));
        }
    }
}

#[test]
fn sampled_pairs_respect_size_bounds_and_are_reproducible() {
    let env = generate_layout(5);
    let grid = ThetaGrid::circle(64, 2.0).unwrap();
    let theta_star = grid.points()[35];
    let master = master_choice_set(&env, grid.points());
    let bounds = SizeBounds::new(3, 5).unwrap();
    for class in MisspecClass::ALL {
        for seed in 0..10 {
            let a = sample_pair(class, &master, &theta_star, &env, seed, bounds).unwrap();
            let b = sample_pair(class, &master, &theta_star, &env, seed, bounds).unwrap();
            assert_eq!(a, b);
            for set in [&a.robot, &a.human] {
                assert!((3..=5).contains(&set.len()));
                assert!(set.is_subset_of(&master));
            }
            a.validate(&theta_star, &env).unwrap();
        }
    }
}

#[test]
fn swap_of_a_valid_pair_is_a_pair_of_the_same_sets() {
    let env = small_env(4);
    let grid = ThetaGrid::circle(16, 2.0).unwrap();
    let master = master_choice_set(&env, grid.points());
    let pair = ChoicePair::new(master.clone(), master.select(&[0]).unwrap());
    let back = pair.swapped().swapped();
    assert_eq!(back, pair);
}
