#![allow(dead_code)]

use rric_misspec::gridworld::{Action, Cell, GridWorld, RewardParams, Trajectory};

/// 3x3 grid with graded lava, start top-left, goal bottom-right.
pub fn small_env(horizon: usize) -> GridWorld {
    #[rustfmt::skip]
    let lava = vec![
        0.0, 0.7, 0.2,
        0.4, 1.0, 0.3,
        0.0, 0.5, 0.0,
    ];
    GridWorld::new(3, 3, lava, Cell::new(0, 0), Cell::new(2, 2), horizon).unwrap()
}

/// 4x3 grid whose goal sits behind a lava column, with a lava-free pocket.
pub fn pocket_env() -> GridWorld {
    #[rustfmt::skip]
    let lava = vec![
        0.0, 0.0, 0.9, 0.0,
        0.0, 0.0, 0.6, 0.0,
        0.0, 0.0, 0.2, 0.0,
    ];
    GridWorld::new(4, 3, lava, Cell::new(0, 0), Cell::new(3, 0), 6).unwrap()
}

/// Move rule written out independently of the library: off-grid moves stay put.
pub fn next_cell(env: &GridWorld, cell: Cell, action: Action) -> Cell {
    let (dc, dr): (i64, i64) = match action {
        Action::North => (0, -1),
        Action::NorthEast => (1, -1),
        Action::East => (1, 0),
        Action::SouthEast => (1, 1),
        Action::South => (0, 1),
        Action::SouthWest => (-1, 1),
        Action::West => (-1, 0),
        Action::NorthWest => (-1, -1),
    };
    let c = cell.col as i64 + dc;
    let r = cell.row as i64 + dr;
    if c < 0 || r < 0 || c >= env.width() as i64 || r >= env.height() as i64 {
        cell
    } else {
        Cell::new(c as usize, r as usize)
    }
}

/// Return summed transition by transition from the raw lava table.
pub fn resum_return(env: &GridWorld, traj: &Trajectory, theta: &RewardParams) -> f64 {
    traj.states()
        .iter()
        .skip(1)
        .map(|&c| {
            let goal = if c == env.goal() { 1.0 } else { 0.0 };
            theta.lava * env.lava(c) + theta.goal * goal + theta.alive
        })
        .sum()
}

/// Every trajectory reachable by some action sequence of full horizon,
/// truncated at the first goal entry. Duplicates are kept.
pub fn enumerate_trajectories(env: &GridWorld) -> Vec<Trajectory> {
    let mut out = Vec::new();
    let mut stack = vec![vec![env.start()]];
    while let Some(states) = stack.pop() {
        let last = *states.last().unwrap();
        if last == env.goal() || states.len() == env.horizon() + 1 {
            out.push(Trajectory::new(states));
            continue;
        }
        for a in Action::ALL {
            let mut next = states.clone();
            next.push(next_cell(env, last, a));
            stack.push(next);
        }
    }
    out
}

pub fn brute_force_best(env: &GridWorld, theta: &RewardParams) -> f64 {
    enumerate_trajectories(env)
        .iter()
        .map(|t| resum_return(env, t, theta))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Plain softmax likelihood, no log-space shifting.
pub fn naive_likelihood(
    env: &GridWorld,
    chosen: &Trajectory,
    set: &[Trajectory],
    theta: &RewardParams,
    beta: f64,
) -> f64 {
    let weight = |t: &Trajectory| (beta * resum_return(env, t, theta)).exp();
    weight(chosen) / set.iter().map(weight).sum::<f64>()
}

pub fn naive_posterior(
    env: &GridWorld,
    chosen: &Trajectory,
    set: &[Trajectory],
    thetas: &[RewardParams],
    prior: &[f64],
    beta: f64,
) -> Vec<f64> {
    let raw: Vec<f64> = thetas
        .iter()
        .zip(prior)
        .map(|(th, p)| p * naive_likelihood(env, chosen, set, th, beta))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

pub fn naive_entropy(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}
