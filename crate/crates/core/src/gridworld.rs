//! Featured gridworld MDP.
//!
//! Cells carry two features: a continuous `lava` intensity in `[0, 1]` and a
//! binary `goal` indicator. Rewards are linear in those features plus a
//! constant per-timestep `alive` term. A transition is charged the features
//! of the cell it *enters*; the start cell is never charged, and because an
//! episode ends on entering the goal, the goal weight accrues at most once.
//!
//! Dynamics are deterministic and 8-connected. A move that would leave the
//! grid leaves the agent where it is.
//!
//! Coordinates are `(col, row)` with `(0, 0)` in the upper-left corner.

use std::fmt;
use std::ops::{Add, Mul};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub const fn new(col: usize, row: usize) -> Self {
        Cell { col, row }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.col, self.row)
    }
}

/// The eight compass moves. Declaration order is the planner's tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    North,
    NorthEast,
    East,
    SouthEast,
    South,
    SouthWest,
    West,
    NorthWest,
}

impl Action {
    pub const ALL: [Action; 8] = [
        Action::North,
        Action::NorthEast,
        Action::East,
        Action::SouthEast,
        Action::South,
        Action::SouthWest,
        Action::West,
        Action::NorthWest,
    ];

    /// `(dcol, drow)`; north is decreasing row.
    pub const fn delta(self) -> (isize, isize) {
        match self {
            Action::North => (0, -1),
            Action::NorthEast => (1, -1),
            Action::East => (1, 0),
            Action::SouthEast => (1, 1),
            Action::South => (0, 1),
            Action::SouthWest => (-1, 1),
            Action::West => (-1, 0),
            Action::NorthWest => (-1, -1),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Linear reward weights `(w_lava, w_goal, w_alive)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub lava: f64,
    pub goal: f64,
    pub alive: f64,
}

impl RewardParams {
    pub fn new(lava: f64, goal: f64, alive: f64) -> Result<Self> {
        let theta = RewardParams { lava, goal, alive };
        if theta.is_finite() {
            Ok(theta)
        } else {
            Err(Error::contract(format!(
                "reward weights must be finite, got {theta:?}"
            )))
        }
    }

    pub const fn zero() -> Self {
        RewardParams {
            lava: 0.0,
            goal: 0.0,
            alive: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lava.is_finite() && self.goal.is_finite() && self.alive.is_finite()
    }

    /// Return of a trajectory with the given feature totals.
    pub fn dot(&self, f: &Features) -> f64 {
        self.lava * f.lava + self.goal * f.goal + self.alive * f.steps
    }
}

impl Add for RewardParams {
    type Output = RewardParams;

    fn add(self, rhs: RewardParams) -> RewardParams {
        RewardParams {
            lava: self.lava + rhs.lava,
            goal: self.goal + rhs.goal,
            alive: self.alive + rhs.alive,
        }
    }
}

impl Mul<RewardParams> for f64 {
    type Output = RewardParams;

    fn mul(self, rhs: RewardParams) -> RewardParams {
        RewardParams {
            lava: self * rhs.lava,
            goal: self * rhs.goal,
            alive: self * rhs.alive,
        }
    }
}

/// Feature totals of a trajectory: summed lava, goal indicator, transition count.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Features {
    pub lava: f64,
    pub goal: f64,
    pub steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorld {
    width: usize,
    height: usize,
    lava: Vec<f64>,
    goal: Cell,
    start: Cell,
    horizon: usize,
}

impl GridWorld {
    /// `lava` is row-major, `height` rows of `width` values.
    pub fn new(
        width: usize,
        height: usize,
        lava: Vec<f64>,
        start: Cell,
        goal: Cell,
        horizon: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::contract("grid dimensions must be positive"));
        }
        if lava.len() != width * height {
            return Err(Error::contract(format!(
                "expected {} lava values, got {}",
                width * height,
                lava.len()
            )));
        }
        if let Some(i) = lava.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::contract(format!(
                "lava value {} at cell {} outside [0, 1]",
                lava[i],
                Cell::new(i % width, i / width)
            )));
        }
        let env = GridWorld {
            width,
            height,
            lava,
            goal,
            start,
            horizon,
        };
        if !env.contains(start) || !env.contains(goal) {
            return Err(Error::contract("start and goal must lie inside the grid"));
        }
        if start == goal {
            return Err(Error::contract("goal must differ from start"));
        }
        if horizon == 0 {
            return Err(Error::contract("horizon must be at least 1"));
        }
        Ok(env)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.col < self.width && cell.row < self.height
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn lava(&self, cell: Cell) -> f64 {
        self.lava[self.index(cell)]
    }

    pub fn is_goal(&self, cell: Cell) -> bool {
        cell == self.goal
    }

    /// Reward for entering `cell`.
    pub fn entry_reward(&self, cell: Cell, theta: &RewardParams) -> f64 {
        let goal = if self.is_goal(cell) { 1.0 } else { 0.0 };
        theta.lava * self.lava(cell) + theta.goal * goal + theta.alive
    }

    /// Transition for an in-bounds cell; callers guarantee `contains(cell)`.
    pub(crate) fn step_unchecked(&self, cell: Cell, action: Action) -> Cell {
        let (dc, dr) = action.delta();
        let col = cell.col as isize + dc;
        let row = cell.row as isize + dr;
        if col < 0 || row < 0 || col >= self.width as isize || row >= self.height as isize {
            cell
        } else {
            Cell::new(col as usize, row as usize)
        }
    }

    /// Parses the plain-text environment format:
    ///
    /// ```text
    /// width height horizon
    /// start_col start_row goal_col goal_row
    /// <height lines of width space-separated lava values>
    /// ```
    ///
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| {
                let t = l.trim();
                !t.is_empty() && !t.starts_with('#')
            });

        let (header_line, header) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            column: 1,
            message: "missing `width height horizon` header".into(),
        })?;
        let dims: Vec<usize> = parse_fields(header_line, header, 3)?;
        let (width, height, horizon) = (dims[0], dims[1], dims[2]);

        let (pos_line, pos) = lines.next().ok_or_else(|| Error::Parse {
            line: header_line + 1,
            column: 1,
            message: "missing `start_col start_row goal_col goal_row` line".into(),
        })?;
        let coords: Vec<usize> = parse_fields(pos_line, pos, 4)?;
        let start = Cell::new(coords[0], coords[1]);
        let goal = Cell::new(coords[2], coords[3]);

        let mut lava = Vec::with_capacity(width * height);
        let mut last_line = pos_line;
        for _ in 0..height {
            let (line_no, line) = lines.next().ok_or_else(|| Error::Parse {
                line: last_line + 1,
                column: 1,
                message: format!("expected {height} rows of lava values"),
            })?;
            last_line = line_no;
            let row: Vec<f64> = parse_fields(line_no, line, width)?;
            for (col, v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::Parse {
                        line: line_no,
                        column: col + 1,
                        message: format!("lava value {v} outside [0, 1]"),
                    });
                }
            }
            lava.extend(row);
        }
        if let Some((line_no, _)) = lines.next() {
            return Err(Error::Parse {
                line: line_no,
                column: 1,
                message: "trailing content after lava rows".into(),
            });
        }

        GridWorld::new(width, height, lava, start, goal, horizon).map_err(|e| Error::Parse {
            line: header_line,
            column: 1,
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GridWorld::parse(&text).map_err(|e| e.with_context(path.display().to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} {}\n{} {} {} {}\n",
            self.width,
            self.height,
            self.horizon,
            self.start.col,
            self.start.row,
            self.goal.col,
            self.goal.row
        );
        for row in self.lava.chunks(self.width) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Splits a line into exactly `expected` whitespace-separated fields.
/// Columns in diagnostics are 1-based field positions.
fn parse_fields<T: FromStr>(line_no: usize, line: &str, expected: usize) -> Result<Vec<T>> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != expected {
        return Err(Error::Parse {
            line: line_no,
            column: fields.len().min(expected) + 1,
            message: format!("expected {expected} fields, found {}", fields.len()),
        });
    }
    fields
        .iter()
        .enumerate()
        .map(|(i, f)| {
            f.parse::<T>().map_err(|_| Error::Parse {
                line: line_no,
                column: i + 1,
                message: format!("cannot parse `{f}`"),
            })
        })
        .collect()
}

/// Moves `cell` by `action`; moves off the grid leave the agent in place.
pub fn step(env: &GridWorld, cell: Cell, action: Action) -> Result<Cell> {
    if !env.contains(cell) {
        return Err(Error::contract(format!(
            "cell {cell} outside {}x{} grid",
            env.width, env.height
        )));
    }
    Ok(env.step_unchecked(cell, action))
}

/// A state sequence starting at the environment's start cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Trajectory {
    states: Vec<Cell>,
}

impl Trajectory {
    pub fn new(states: Vec<Cell>) -> Self {
        Trajectory { states }
    }

    pub fn states(&self) -> &[Cell] {
        &self.states
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last(&self) -> Option<Cell> {
        self.states.last().copied()
    }

    pub fn ends_at_goal(&self, env: &GridWorld) -> bool {
        self.last().is_some_and(|c| env.is_goal(c))
    }

    /// Feature totals over entered states. Assumes the trajectory is valid.
    pub fn features(&self, env: &GridWorld) -> Features {
        let mut f = Features::default();
        for &cell in self.states.iter().skip(1) {
            f.lava += env.lava(cell);
            if env.is_goal(cell) {
                f.goal += 1.0;
            }
            f.steps += 1.0;
        }
        f
    }
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.states.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for Trajectory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_cell = |(i, tok): (usize, &str)| -> Result<Cell> {
            let bad = || Error::Parse {
                line: 1,
                column: i + 1,
                message: format!("expected `col:row`, found `{tok}`"),
            };
            let (c, r) = tok.split_once(':').ok_or_else(bad)?;
            Ok(Cell::new(
                c.trim().parse().map_err(|_| bad())?,
                r.trim().parse().map_err(|_| bad())?,
            ))
        };
        let states = s
            .trim()
            .split(',')
            .enumerate()
            .map(parse_cell)
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory { states })
    }
}

/// Action sequence that reproduces `traj` from its first state, if one exists.
/// Where several actions lead to the same cell the earliest in tie-break order wins.
pub fn replay_actions(env: &GridWorld, traj: &Trajectory) -> Option<Vec<Action>> {
    traj.states
        .windows(2)
        .map(|w| {
            if !env.contains(w[0]) {
                return None;
            }
            Action::ALL
                .into_iter()
                .find(|&a| env.step_unchecked(w[0], a) == w[1])
        })
        .collect()
}

pub fn validate_trajectory(env: &GridWorld, traj: &Trajectory) -> bool {
    let states = traj.states();
    if states.first() != Some(&env.start) {
        return false;
    }
    if traj.len() > env.horizon {
        return false;
    }
    if !states.iter().all(|&c| env.contains(c)) {
        return false;
    }
    // nothing may follow the goal
    if let Some(pos) = states.iter().position(|&c| env.is_goal(c)) {
        if pos != states.len() - 1 {
            return false;
        }
    }
    replay_actions(env, traj).is_some()
}

/// Sum over transitions of the reward for the entered state.
pub fn trajectory_return(env: &GridWorld, traj: &Trajectory, theta: &RewardParams) -> Result<f64> {
    if !validate_trajectory(env, traj) {
        return Err(Error::contract(format!("invalid trajectory {traj}")));
    }
    Ok(traj
        .states
        .iter()
        .skip(1)
        .map(|&c| env.entry_reward(c, theta))
        .sum())
}

pub const LAYOUT_SIZE: usize = 20;
pub const LAYOUT_HORIZON: usize = 35;

/// Seeded 20x20 lava layout.
///
/// Procedure (ChaCha8 seeded with `seed`):
/// 1. draw a blob count uniformly from {2, 3};
/// 2. for each blob draw a center with both coordinates uniform in `2..=17`,
///    a radius uniform in `[2.0, 4.5)` and a peak intensity uniform in `[0.6, 1.0)`;
/// 3. each cell takes the maximum over blobs of `peak * (1 - d / radius)` for
///    euclidean distance `d < radius`, else 0, rounded to three decimals;
/// 4. the start (upper-left) and goal (lower-right) cells are forced lava-free.
pub fn generate_layout(seed: u64) -> GridWorld {
    let n = LAYOUT_SIZE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blob_count = rng.gen_range(2..=3);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..blob_count)
        .map(|_| {
            let col = rng.gen_range(2..=17) as f64;
            let row = rng.gen_range(2..=17) as f64;
            let radius = rng.gen_range(2.0..4.5);
            let peak = rng.gen_range(0.6..1.0);
            (col, row, radius, peak)
        })
        .collect();

    let mut lava = vec![0.0; n * n];
    for row in 0..n {
        for col in 0..n {
            let v = blobs
                .iter()
                .map(|&(bc, br, radius, peak)| {
                    let d = ((col as f64 - bc).powi(2) + (row as f64 - br).powi(2)).sqrt();
                    if d < radius {
                        peak * (1.0 - d / radius)
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max);
            lava[row * n + col] = (v * 1000.0).round() / 1000.0;
        }
    }
    let start = Cell::new(0, 0);
    let goal = Cell::new(n - 1, n - 1);
    lava[0] = 0.0;
    lava[n * n - 1] = 0.0;
    GridWorld::new(n, n, lava, start, goal, LAYOUT_HORIZON).expect("generated layout is valid")
}
