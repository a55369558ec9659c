//! Choice sets, the misspecification taxonomy and class-conditioned sampling.
//!
//! A pair is classified along two axes. The optimal element `c*` of
//! `C_R ∪ C_H` (true return, first maximizer in robot-then-human order)
//! decides the letter: `A` when it lies in both sets, `B` when only the robot
//! has it. Containment decides the digit: `1` when `C_R ⊊ C_H`, `2` when
//! `C_R ⊋ C_H`, `3` when the sets merely intersect. `B1` cannot occur.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{trajectory_return, Features, GridWorld, RewardParams, Trajectory};

pub const DEFAULT_REJECTION_BUDGET: usize = 10_000;

/// Ordered set of distinct trajectories.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChoiceSet {
    trajectories: Vec<Trajectory>,
}

impl ChoiceSet {
    /// Keeps the first occurrence of each trajectory.
    pub fn from_trajectories(trajectories: impl IntoIterator<Item = Trajectory>) -> Result<Self> {
        let mut out: Vec<Trajectory> = Vec::new();
        for t in trajectories {
            if !out.contains(&t) {
                out.push(t);
            }
        }
        if out.is_empty() {
            return Err(Error::contract("choice set must be non-empty"));
        }
        Ok(ChoiceSet { trajectories: out })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Trajectory> {
        self.trajectories.iter()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Trajectory> {
        self.trajectories.get(i)
    }

    pub fn position(&self, t: &Trajectory) -> Option<usize> {
        self.trajectories.iter().position(|x| x == t)
    }

    pub fn contains(&self, t: &Trajectory) -> bool {
        self.position(t).is_some()
    }

    pub fn is_subset_of(&self, other: &ChoiceSet) -> bool {
        self.iter().all(|t| other.contains(t))
    }

    /// Same members, ignoring order.
    pub fn same_members(&self, other: &ChoiceSet) -> bool {
        self.len() == other.len() && self.is_subset_of(other)
    }

    /// Subset by member indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<ChoiceSet> {
        ChoiceSet::from_trajectories(indices.iter().map(|&i| self.trajectories[i].clone()))
    }

    /// Feature totals of every member; fails on a member that is invalid in `env`.
    pub fn features(&self, env: &GridWorld) -> Result<Vec<Features>> {
        self.trajectories
            .iter()
            .map(|t| {
                if crate::gridworld::validate_trajectory(env, t) {
                    Ok(t.features(env))
                } else {
                    Err(Error::contract(format!("invalid trajectory {t} in choice set")))
                }
            })
            .collect()
    }

    pub fn returns(&self, env: &GridWorld, theta: &RewardParams) -> Result<Vec<f64>> {
        self.trajectories
            .iter()
            .map(|t| trajectory_return(env, t, theta))
            .collect()
    }

    /// One trajectory per line, cells as comma-separated `col:row`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.trajectories {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut trajectories = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t: Trajectory = line.parse().map_err(|e| match e {
                Error::Parse { column, message, .. } => Error::Parse {
                    line: i + 1,
                    column,
                    message,
                },
                other => other,
            })?;
            if trajectories.contains(&t) {
                return Err(Error::Parse {
                    line: i + 1,
                    column: 1,
                    message: "duplicate trajectory".into(),
                });
            }
            trajectories.push(t);
        }
        ChoiceSet::from_trajectories(trajectories)
    }
}

impl<'a> IntoIterator for &'a ChoiceSet {
    type Item = &'a Trajectory;
    type IntoIter = std::slice::Iter<'a, Trajectory>;

    fn into_iter(self) -> Self::IntoIter {
        self.trajectories.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MisspecClass {
    A1,
    A2,
    A3,
    B2,
    B3,
}

impl MisspecClass {
    pub const ALL: [MisspecClass; 5] = [
        MisspecClass::A1,
        MisspecClass::A2,
        MisspecClass::A3,
        MisspecClass::B2,
        MisspecClass::B3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MisspecClass::A1 => "A1",
            MisspecClass::A2 => "A2",
            MisspecClass::A3 => "A3",
            MisspecClass::B2 => "B2",
            MisspecClass::B3 => "B3",
        }
    }

    /// Minimum master set size the sampler accepts for this class.
    pub fn min_master_size(self) -> usize {
        match self {
            MisspecClass::A3 | MisspecClass::B3 => 4,
            _ => 3,
        }
    }
}

impl fmt::Display for MisspecClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MisspecClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MisspecClass::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Usage {
                key: "class".into(),
                message: format!("unknown misspecification class `{s}`"),
            })
    }
}

/// Outcome of [`classify`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Classification {
    Misspecified(MisspecClass),
    NoMisspecification,
    /// `c*` is only in the human's set, or the sets are disjoint.
    Unclassifiable,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Misspecified(c) => c.as_str(),
            Classification::NoMisspecification => "none",
            Classification::Unclassifiable => "unclassifiable",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<MisspecClass> for Classification {
    fn from(c: MisspecClass) -> Self {
        Classification::Misspecified(c)
    }
}

/// Robot's assumed choice set and the human's actual one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChoicePair {
    pub robot: ChoiceSet,
    pub human: ChoiceSet,
}

impl ChoicePair {
    pub fn new(robot: ChoiceSet, human: ChoiceSet) -> Self {
        ChoicePair { robot, human }
    }

    pub fn swapped(&self) -> ChoicePair {
        ChoicePair {
            robot: self.human.clone(),
            human: self.robot.clone(),
        }
    }

    /// Checks that the human's choice is something the robot considers possible.
    pub fn validate(&self, theta_star: &RewardParams, env: &GridWorld) -> Result<()> {
        let c_h = human_choice(&self.human, theta_star, env)?;
        if self.robot.contains(&c_h) {
            Ok(())
        } else {
            Err(Error::ImpossibleObservation)
        }
    }
}

/// First index of the maximum; `None` for an empty slice.
fn first_argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if v <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

/// The member with the highest true return; ties go to the lowest index.
pub fn human_choice(set: &ChoiceSet, theta_star: &RewardParams, env: &GridWorld) -> Result<Trajectory> {
    let returns = set.returns(env, theta_star)?;
    let i = first_argmax(&returns).ok_or_else(|| Error::contract("empty choice set"))?;
    Ok(set.trajectories[i].clone())
}

/// Union in robot-then-human order.
fn union(pair: &ChoicePair) -> Vec<&Trajectory> {
    let mut all: Vec<&Trajectory> = pair.robot.iter().collect();
    all.extend(pair.human.iter().filter(|t| !pair.robot.contains(t)));
    all
}

/// Best element of `C_R ∪ C_H` under the true reward.
pub fn optimal_element(pair: &ChoicePair, theta_star: &RewardParams, env: &GridWorld) -> Result<Trajectory> {
    let all = union(pair);
    let returns = all
        .iter()
        .map(|t| trajectory_return(env, t, theta_star))
        .collect::<Result<Vec<_>>>()?;
    let i = first_argmax(&returns).ok_or_else(|| Error::contract("empty choice pair"))?;
    Ok(all[i].clone())
}

/// Taxonomy over any item type; `robot` and `human` hold distinct items.
fn classify_items<T: PartialEq>(robot: &[T], human: &[T], optimal: &T) -> Classification {
    let robot_in_human = robot.iter().all(|t| human.contains(t));
    let human_in_robot = human.iter().all(|t| robot.contains(t));
    if robot_in_human && human_in_robot {
        return Classification::NoMisspecification;
    }
    let in_robot = robot.contains(optimal);
    let in_human = human.contains(optimal);
    let intersects = robot.iter().any(|t| human.contains(t));
    if !in_robot || !intersects {
        return Classification::Unclassifiable;
    }
    let class = match (in_human, robot_in_human, human_in_robot) {
        (true, true, _) => MisspecClass::A1,
        (true, _, true) => MisspecClass::A2,
        (true, _, _) => MisspecClass::A3,
        (false, true, _) => unreachable!("c* in C_R ⊂ C_H is in C_H"),
        (false, _, true) => MisspecClass::B2,
        (false, _, _) => MisspecClass::B3,
    };
    Classification::Misspecified(class)
}

pub fn classify(pair: &ChoicePair, theta_star: &RewardParams, env: &GridWorld) -> Result<Classification> {
    let optimal = optimal_element(pair, theta_star, env)?;
    Ok(classify_items(
        pair.robot.trajectories(),
        pair.human.trajectories(),
        &optimal,
    ))
}

/// Inclusive range of choice set sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeBounds {
    pub min: usize,
    pub max: usize,
}

impl SizeBounds {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min < 2 {
            return Err(Error::Usage {
                key: "size_min".into(),
                message: format!("must be at least 2, got {min}"),
            });
        }
        if max < min {
            return Err(Error::Usage {
                key: "size_max".into(),
                message: format!("must be at least size_min ({min}), got {max}"),
            });
        }
        Ok(SizeBounds { min, max })
    }
}

impl Default for SizeBounds {
    fn default() -> Self {
        SizeBounds { min: 2, max: 6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Rejection {
    TiedOptimum,
    EmptyIntersection,
    HumanChoiceOutsideRobot,
    ClassMismatch,
}

impl Rejection {
    fn describe(self) -> &'static str {
        match self {
            Rejection::TiedOptimum => "optimal element or human choice is tied in true return",
            Rejection::EmptyIntersection => "robot and human sets do not intersect",
            Rejection::HumanChoiceOutsideRobot => "human choice is not in the robot's set",
            Rejection::ClassMismatch => "drawn pair does not belong to the requested class",
        }
    }
}

/// Samples a pair of the requested class from `master`.
///
/// Each draw picks `|C_H|` and `|C_R|` uniformly from `bounds` (capped at the
/// master size) and members uniformly without replacement; members keep
/// master order. Draws are rejected unless the pair has the requested class,
/// the human's choice lies in `C_R`, and both the union's optimum and the
/// human's choice are unique in true return. The last condition keeps the
/// classification independent of set order, so swapping an `A1` pair always
/// yields an `A2` pair.
pub fn sample_pair(
    class: MisspecClass,
    master: &ChoiceSet,
    theta_star: &RewardParams,
    env: &GridWorld,
    rng_seed: u64,
    bounds: SizeBounds,
) -> Result<ChoicePair> {
    sample_pair_with_budget(
        class,
        master,
        theta_star,
        env,
        rng_seed,
        bounds,
        DEFAULT_REJECTION_BUDGET,
    )
}

pub fn sample_pair_with_budget(
    class: MisspecClass,
    master: &ChoiceSet,
    theta_star: &RewardParams,
    env: &GridWorld,
    rng_seed: u64,
    bounds: SizeBounds,
    budget: usize,
) -> Result<ChoicePair> {
    let m = master.len();
    if m < class.min_master_size() {
        return Err(Error::InfeasibleClass {
            class: class.to_string(),
            reason: format!(
                "master set has {m} elements, class needs at least {}",
                class.min_master_size()
            ),
        });
    }
    let returns = master.returns(env, theta_star)?;
    let lo = bounds.min.min(m);
    let hi = bounds.max.min(m);

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut rejections: HashMap<Rejection, usize> = HashMap::new();
    for _ in 0..budget {
        let n_human = rng.gen_range(lo..=hi);
        let n_robot = rng.gen_range(lo..=hi);
        let mut human = index::sample(&mut rng, m, n_human).into_vec();
        let mut robot = index::sample(&mut rng, m, n_robot).into_vec();
        human.sort_unstable();
        robot.sort_unstable();

        match check_draw(class, &robot, &human, &returns) {
            Ok(()) => {
                return Ok(ChoicePair::new(master.select(&robot)?, master.select(&human)?));
            }
            Err(r) => *rejections.entry(r).or_default() += 1,
        }
    }
    let reason = rejections
        .into_iter()
        .max_by_key(|&(r, n)| (n, std::cmp::Reverse(r)))
        .map(|(r, n)| format!("{} ({n} of {budget} draws)", r.describe()))
        .unwrap_or_else(|| "rejection budget is zero".into());
    Err(Error::InfeasibleClass {
        class: class.to_string(),
        reason,
    })
}

fn unique_argmax(indices: &[usize], returns: &[f64]) -> Option<usize> {
    let best = indices
        .iter()
        .copied()
        .max_by(|&a, &b| returns[a].total_cmp(&returns[b]))?;
    let ties = indices.iter().filter(|&&i| returns[i] == returns[best]).count();
    (ties == 1).then_some(best)
}

fn check_draw(
    class: MisspecClass,
    robot: &[usize],
    human: &[usize],
    returns: &[f64],
) -> std::result::Result<(), Rejection> {
    let mut all: Vec<usize> = robot.to_vec();
    all.extend(human.iter().filter(|i| !robot.contains(i)));
    let optimal = unique_argmax(&all, returns).ok_or(Rejection::TiedOptimum)?;
    let c_h = unique_argmax(human, returns).ok_or(Rejection::TiedOptimum)?;
    if !robot.iter().any(|i| human.contains(i)) {
        return Err(Rejection::EmptyIntersection);
    }
    if !robot.contains(&c_h) {
        return Err(Rejection::HumanChoiceOutsideRobot);
    }
    if classify_items(robot, human, &optimal) != Classification::Misspecified(class) {
        return Err(Rejection::ClassMismatch);
    }
    Ok(())
}

/// Members of `master` that end at the goal, in master order.
pub fn goal_biased_subset(master: &ChoiceSet, env: &GridWorld) -> Result<ChoiceSet> {
    let kept: Vec<Trajectory> = master.iter().filter(|t| t.ends_at_goal(env)).cloned().collect();
    if kept.is_empty() {
        return Err(Error::EmptyBiasSet);
    }
    ChoiceSet::from_trajectories(kept)
}
