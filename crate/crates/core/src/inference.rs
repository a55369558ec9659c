//! Boltzmann-rational choice likelihood and the reward-rational implicit
//! choice posterior over a discrete grid of reward parameters.
//!
//! Demonstrations ground to themselves, so the expected return of a choice is
//! simply its trajectory return. Every softmax-style sum is shifted by its
//! maximum before exponentiation.

use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::choice_sets::ChoiceSet;
use crate::error::{Error, Result};
use crate::gridworld::{Features, GridWorld, RewardParams, Trajectory};

pub const DEFAULT_GOAL_WEIGHT: f64 = 2.0;
pub const DEFAULT_ANGLE_COUNT: usize = 64;
pub const DEFAULT_BETA: f64 = 5.0;

/// Hypothesis space: `(w_lava, w_alive)` on the unit circle, `w_goal` fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid {
    points: Vec<RewardParams>,
    angle_count: usize,
}

impl ThetaGrid {
    /// `angle_count` equally spaced angles; angle `k` is `k * 2pi / angle_count`
    /// measured from the `+w_lava` axis toward `+w_alive`.
    pub fn circle(angle_count: usize, goal_weight: f64) -> Result<Self> {
        if angle_count == 0 {
            return Err(Error::contract("angle_count must be positive"));
        }
        if !goal_weight.is_finite() {
            return Err(Error::contract("goal weight must be finite"));
        }
        let points = (0..angle_count)
            .map(|k| {
                let phi = TAU * k as f64 / angle_count as f64;
                RewardParams {
                    lava: phi.cos(),
                    goal: goal_weight,
                    alive: phi.sin(),
                }
            })
            .collect();
        Ok(ThetaGrid { points, angle_count })
    }

    /// Arbitrary points, checked against the grid invariants.
    pub fn from_points(points: Vec<RewardParams>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::contract("theta grid must be non-empty"))?;
        let goal = first.goal;
        for (i, p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::contract(format!("theta point {i} is not finite")));
            }
            if ((p.lava * p.lava + p.alive * p.alive) - 1.0).abs() > 1e-9 {
                return Err(Error::contract(format!("theta point {i} is off the unit circle")));
            }
            if p.goal != goal {
                return Err(Error::contract("all theta points must share the goal weight"));
            }
            if points[..i].contains(p) {
                return Err(Error::contract(format!("theta point {i} is a duplicate")));
            }
        }
        let angle_count = points.len();
        Ok(ThetaGrid { points, angle_count })
    }

    pub fn points(&self) -> &[RewardParams] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn angle_count(&self) -> usize {
        self.angle_count
    }

    /// Index of the grid point whose `(w_lava, w_alive)` direction is closest to `theta`'s.
    pub fn nearest(&self, theta: &RewardParams) -> usize {
        let norm = theta.lava.hypot(theta.alive);
        let (l, a) = if norm > 0.0 {
            (theta.lava / norm, theta.alive / norm)
        } else {
            (1.0, 0.0)
        };
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (p.lava - l).powi(2) + (p.alive - a).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn snap(&self, theta: &RewardParams) -> RewardParams {
        self.points[self.nearest(theta)]
    }
}

/// Normalized distribution over the points of a [`ThetaGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    grid: Arc<ThetaGrid>,
    probs: Vec<f64>,
}

impl Belief {
    pub fn uniform(grid: Arc<ThetaGrid>) -> Self {
        let n = grid.len();
        Belief {
            grid,
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn new(grid: Arc<ThetaGrid>, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != grid.len() {
            return Err(Error::contract(format!(
                "belief has {} probabilities for {} grid points",
                probs.len(),
                grid.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::contract("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Belief { grid, probs })
    }

    pub fn point_mass(grid: Arc<ThetaGrid>, index: usize) -> Result<Self> {
        let mut probs = vec![0.0; grid.len()];
        *probs
            .get_mut(index)
            .ok_or_else(|| Error::contract("point mass index out of range"))? = 1.0;
        Ok(Belief { grid, probs })
    }

    pub fn grid(&self) -> &Arc<ThetaGrid> {
        &self.grid
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Index of the most probable grid point (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn peak(&self) -> RewardParams {
        self.grid.points()[self.argmax()]
    }

    /// Total variation distance to another belief on the same grid.
    pub fn total_variation(&self, other: &Belief) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta >= 0.0 {
        Ok(())
    } else {
        Err(Error::contract(format!(
            "beta must be finite and non-negative, got {beta}"
        )))
    }
}

/// `ln P(chosen | theta, C)` from precomputed feature totals of `C`.
fn log_likelihood(chosen: usize, features: &[Features], theta: &RewardParams, beta: f64) -> f64 {
    let scores: Vec<f64> = features.iter().map(|f| beta * theta.dot(f)).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_norm = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scores[chosen] - log_norm
}

fn member_index(choice: &Trajectory, set: &ChoiceSet) -> Result<usize> {
    set.position(choice).ok_or(Error::NotInChoiceSet)
}

/// Probability that a Boltzmann-rational human with rationality `beta`
/// picks `choice` from `set` under reward `theta`.
pub fn boltzmann_likelihood(
    choice: &Trajectory,
    set: &ChoiceSet,
    theta: &RewardParams,
    beta: f64,
    env: &GridWorld,
) -> Result<f64> {
    check_beta(beta)?;
    let chosen = member_index(choice, set)?;
    let features = set.features(env)?;
    Ok(log_likelihood(chosen, &features, theta, beta).exp())
}

/// Posterior over the prior's grid after observing `choice` from `set`.
pub fn rric_posterior(
    choice: &Trajectory,
    set: &ChoiceSet,
    prior: &Belief,
    beta: f64,
    env: &GridWorld,
) -> Result<Belief> {
    check_beta(beta)?;
    let chosen = member_index(choice, set)?;
    let features = set.features(env)?;

    let log_lik: Vec<f64> = prior
        .grid
        .points()
        .iter()
        .map(|theta| log_likelihood(chosen, &features, theta, beta))
        .collect();
    let max = log_lik
        .iter()
        .zip(&prior.probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut probs: Vec<f64> = log_lik
        .iter()
        .zip(&prior.probs)
        .map(|(&l, &p)| if p > 0.0 { p * (l - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = probs.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::NumericalDegeneracy(format!(
            "unnormalized posterior mass is {total}"
        )));
    }
    for p in &mut probs {
        *p /= total;
    }
    Ok(Belief {
        grid: Arc::clone(&prior.grid),
        probs,
    })
}

/// Shannon entropy in nats.
pub fn entropy(belief: &Belief) -> f64 {
    -belief
        .probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Probability-weighted mean parameter vector.
///
/// Returns are linear in the parameters, so planning under the mean equals
/// planning under the belief's expected reward. The mean usually lies inside
/// the unit circle.
pub fn expected_theta(belief: &Belief) -> RewardParams {
    belief
        .grid
        .points()
        .iter()
        .zip(&belief.probs)
        .fold(RewardParams::zero(), |acc, (theta, &p)| acc + p * *theta)
}
