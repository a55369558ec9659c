//! Finite-horizon value iteration over a [`GridWorld`].
//!
//! `V(c, 0) = 0`, the goal is absorbing with value 0 for every budget, and
//! for `t >= 1`
//!
//! ```text
//! V(c, t) = max_a [ r(step(c, a)) + V(step(c, a), t - 1) ]
//! ```
//!
//! Ties go to the first maximizer in [`Action::ALL`] order.

use rayon::prelude::*;

use crate::choice_sets::ChoiceSet;
use crate::gridworld::{Action, Cell, GridWorld, RewardParams, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    cells: usize,
    horizon: usize,
    /// `(horizon + 1) * cells`, indexed by remaining budget then cell.
    values: Vec<f64>,
    greedy: Vec<Action>,
}

impl ValueTable {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn value(&self, env: &GridWorld, cell: Cell, remaining: usize) -> f64 {
        self.values[remaining * self.cells + env.index(cell)]
    }

    pub fn greedy_action(&self, env: &GridWorld, cell: Cell, remaining: usize) -> Action {
        self.greedy[remaining * self.cells + env.index(cell)]
    }

    /// Follows the greedy policy from the start cell until the goal or the horizon.
    pub fn rollout(&self, env: &GridWorld) -> Trajectory {
        let mut cell = env.start();
        let mut states = Vec::with_capacity(self.horizon + 1);
        states.push(cell);
        for remaining in (1..=self.horizon).rev() {
            let action = self.greedy_action(env, cell, remaining);
            cell = env.step_unchecked(cell, action);
            states.push(cell);
            if env.is_goal(cell) {
                break;
            }
        }
        Trajectory::new(states)
    }
}

pub fn value_iteration(env: &GridWorld, theta: &RewardParams) -> ValueTable {
    let cells = env.cell_count();
    let horizon = env.horizon();
    let goal = env.index(env.goal());

    let reward: Vec<f64> = (0..cells)
        .map(|i| env.entry_reward(env.cell_at(i), theta))
        .collect();
    // successor table, shared by every budget level
    let next: Vec<[usize; 8]> = (0..cells)
        .map(|i| {
            let c = env.cell_at(i);
            Action::ALL.map(|a| env.index(env.step_unchecked(c, a)))
        })
        .collect();

    let mut values = vec![0.0; (horizon + 1) * cells];
    let mut greedy = vec![Action::ALL[0]; (horizon + 1) * cells];

    for t in 1..=horizon {
        let (done, rest) = values.split_at_mut(t * cells);
        let prev = &done[(t - 1) * cells..];
        let cur = &mut rest[..cells];
        for i in 0..cells {
            if i == goal {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            let mut best_action = Action::ALL[0];
            for (a, &j) in Action::ALL.iter().zip(next[i].iter()) {
                let q = reward[j] + prev[j];
                if q > best {
                    best = q;
                    best_action = *a;
                }
            }
            cur[i] = best;
            greedy[t * cells + i] = best_action;
        }
    }

    ValueTable {
        cells,
        horizon,
        values,
        greedy,
    }
}

pub fn optimal_trajectory(env: &GridWorld, theta: &RewardParams) -> Trajectory {
    value_iteration(env, theta).rollout(env)
}

/// Distinct optimal trajectories over `thetas`, in first-encountered order.
///
/// One trajectory per parameter vector: the tie-break rollout, not every
/// co-optimal path.
///
/// # Panics
///
/// Panics if `thetas` is empty.
pub fn master_choice_set(env: &GridWorld, thetas: &[RewardParams]) -> ChoiceSet {
    assert!(!thetas.is_empty(), "master_choice_set needs at least one theta");
    let rollouts: Vec<Trajectory> = thetas
        .par_iter()
        .map(|theta| optimal_trajectory(env, theta))
        .collect();
    ChoiceSet::from_trajectories(rollouts).expect("non-empty by construction")
}
