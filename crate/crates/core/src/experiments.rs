//! Correct-vs-misspecified inference trials and the studies built on them.
//!
//! A trial takes a `(C_R, C_H)` pair, lets the simulated human pick the best
//! element of `C_H` under the true reward, and infers two posteriors from that
//! choice: `B_H` against `C_H` and `B_R` against `C_R`. The robot then plans
//! under the mean reward of each posterior in every evaluation environment.
//! Regret is the mean over environments of the true return of the `B_H` plan
//! minus that of the `B_R` plan; entropy change is `H(B_H) - H(B_R)`.

use std::collections::HashSet;
use std::io::Write;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::choice_sets::{
    classify, goal_biased_subset, human_choice, sample_pair, ChoicePair, ChoiceSet, Classification,
    MisspecClass, SizeBounds,
};
use crate::error::{Error, Result};
use crate::gridworld::{trajectory_return, GridWorld, RewardParams, Trajectory};
use crate::inference::{entropy, expected_theta, rric_posterior, Belief, ThetaGrid};
use crate::planner::{master_choice_set, optimal_trajectory};

/// An environment together with the identifier used in outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedEnv {
    pub id: String,
    pub env: GridWorld,
}

impl NamedEnv {
    pub fn new(id: impl Into<String>, env: GridWorld) -> Self {
        NamedEnv { id: id.into(), env }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub class: Classification,
    pub env_id: String,
    pub seed: u64,
    pub entropy_correct: f64,
    pub entropy_misspecified: f64,
    pub entropy_change: f64,
    pub per_env_regret: Vec<f64>,
    pub regret: f64,
    #[serde(skip)]
    pub belief_correct: Belief,
    #[serde(skip)]
    pub belief_misspecified: Belief,
}

impl TrialResult {
    fn tagged(mut self, env_id: &str, seed: u64) -> Self {
        self.env_id = env_id.to_string();
        self.seed = seed;
        self
    }
}

/// Runs one correct-vs-misspecified inference trial.
///
/// `feedback_env` is where the choice sets live; `envs` are the environments
/// the regret is averaged over. The returned result has an empty `env_id`
/// and seed 0; study runners fill those in.
pub fn run_trial(
    pair: &ChoicePair,
    theta_star: &RewardParams,
    envs: &[GridWorld],
    feedback_env: &GridWorld,
    beta: f64,
    prior: &Belief,
) -> Result<TrialResult> {
    if envs.is_empty() {
        return Err(Error::contract(
            "run_trial needs at least one evaluation environment",
        ));
    }
    let c_h = human_choice(&pair.human, theta_star, feedback_env)?;
    if !pair.robot.contains(&c_h) {
        return Err(Error::ImpossibleObservation);
    }
    let class = classify(pair, theta_star, feedback_env)?;

    let belief_correct = rric_posterior(&c_h, &pair.human, prior, beta, feedback_env)?;
    let belief_misspecified = rric_posterior(&c_h, &pair.robot, prior, beta, feedback_env)?;
    let entropy_correct = entropy(&belief_correct);
    let entropy_misspecified = entropy(&belief_misspecified);

    let mean_correct = expected_theta(&belief_correct);
    let mean_misspecified = expected_theta(&belief_misspecified);
    let per_env_regret = envs
        .iter()
        .map(|env| {
            let with_correct = plan_and_score(env, &mean_correct, theta_star)?;
            let with_misspecified = if mean_misspecified == mean_correct {
                with_correct
            } else {
                plan_and_score(env, &mean_misspecified, theta_star)?
            };
            Ok(with_correct - with_misspecified)
        })
        .collect::<Result<Vec<f64>>>()?;
    let regret = per_env_regret.iter().sum::<f64>() / envs.len() as f64;

    Ok(TrialResult {
        class,
        env_id: String::new(),
        seed: 0,
        entropy_correct,
        entropy_misspecified,
        entropy_change: entropy_correct - entropy_misspecified,
        per_env_regret,
        regret,
        belief_correct,
        belief_misspecified,
    })
}

/// True return of the optimal plan under `planning` reward.
fn plan_and_score(env: &GridWorld, planning: &RewardParams, theta_star: &RewardParams) -> Result<f64> {
    let traj = optimal_trajectory(env, planning);
    trajectory_return(env, &traj, theta_star)
}

/// Settings shared by every study.
#[derive(Debug, Clone)]
pub struct InferenceSetup {
    pub theta_star: RewardParams,
    pub beta: f64,
    pub prior: Belief,
}

impl InferenceSetup {
    /// Uniform prior over `grid`; `theta_star` is snapped onto the grid so the
    /// prior contains it.
    pub fn uniform(grid: ThetaGrid, theta_star: RewardParams, beta: f64) -> Self {
        let grid = Arc::new(grid);
        let theta_star = grid.snap(&theta_star);
        InferenceSetup {
            theta_star,
            beta,
            prior: Belief::uniform(grid),
        }
    }

    pub fn thetas(&self) -> &[RewardParams] {
        self.prior.grid().points()
    }
}

#[derive(Debug, Clone)]
pub struct RandomizedStudy {
    pub classes: Vec<MisspecClass>,
    pub tuples_per_class_per_env: usize,
    pub size_bounds: SizeBounds,
    pub seed: u64,
    /// Build the `A2` tuples as orientation swaps of the `A1` tuples.
    pub mirror_a2: bool,
}

impl Default for RandomizedStudy {
    fn default() -> Self {
        RandomizedStudy {
            classes: MisspecClass::ALL.to_vec(),
            tuples_per_class_per_env: 6,
            size_bounds: SizeBounds::default(),
            seed: 0,
            mirror_a2: true,
        }
    }
}

/// Candidate sample seeds tried per (class, env) before giving up on finding
/// enough distinct tuples.
const TUPLE_SEED_ATTEMPTS: usize = 1_000;

struct PlannedTrial {
    class_rank: usize,
    env_index: usize,
    seed: u64,
    pair: ChoicePair,
}

/// Stream id for the per-(class, env) seed generator.
fn stream_id(class: MisspecClass, env_index: usize) -> u64 {
    ((class as u64) << 32) | env_index as u64
}

/// Samples the tuples for one (class, env) cell of the study.
fn sample_tuples(
    study: &RandomizedStudy,
    class: MisspecClass,
    env_index: usize,
    master: &ChoiceSet,
    setup: &InferenceSetup,
    env: &NamedEnv,
) -> Result<Vec<(u64, ChoicePair)>> {
    let context = || format!("class {class}, env {}", env.id);
    let mut seeds = ChaCha8Rng::seed_from_u64(study.seed);
    seeds.set_stream(stream_id(class, env_index));

    let mut seen: HashSet<ChoicePair> = HashSet::new();
    let mut out = Vec::with_capacity(study.tuples_per_class_per_env);
    for _ in 0..TUPLE_SEED_ATTEMPTS {
        if out.len() == study.tuples_per_class_per_env {
            break;
        }
        let seed: u64 = seeds.gen();
        let pair = sample_pair(
            class,
            master,
            &setup.theta_star,
            &env.env,
            seed,
            study.size_bounds,
        )
        .map_err(|e| e.with_context(context()))?;
        if seen.insert(pair.clone()) {
            out.push((seed, pair));
        }
    }
    if out.len() < study.tuples_per_class_per_env {
        return Err(Error::InfeasibleClass {
            class: class.to_string(),
            reason: format!(
                "only {} distinct tuples found, {} requested",
                out.len(),
                study.tuples_per_class_per_env
            ),
        }
        .with_context(context()));
    }
    Ok(out)
}

/// Master choice set of every environment under the setup's hypothesis grid.
pub fn master_sets(envs: &[NamedEnv], setup: &InferenceSetup) -> Vec<ChoiceSet> {
    envs.iter()
        .map(|e| master_choice_set(&e.env, setup.thetas()))
        .collect()
}

/// Every requested class on every environment, regret averaged over all
/// environments. Results are ordered by (class, env, seed).
pub fn run_randomized_study(
    study: &RandomizedStudy,
    envs: &[NamedEnv],
    setup: &InferenceSetup,
) -> Result<Vec<TrialResult>> {
    if study.tuples_per_class_per_env == 0 {
        return Err(Error::contract("tuples_per_class_per_env must be at least 1"));
    }
    if envs.is_empty() {
        return Err(Error::contract("randomized study needs at least one environment"));
    }
    let masters = master_sets(envs, setup);
    let mirror = study.mirror_a2
        && study.classes.contains(&MisspecClass::A1)
        && study.classes.contains(&MisspecClass::A2);

    let mut planned = Vec::new();
    for (rank, &class) in study.classes.iter().enumerate() {
        if mirror && class == MisspecClass::A2 {
            continue;
        }
        for (env_index, env) in envs.iter().enumerate() {
            for (seed, pair) in sample_tuples(study, class, env_index, &masters[env_index], setup, env)? {
                if mirror && class == MisspecClass::A1 {
                    let a2_rank = study.classes.iter().position(|&c| c == MisspecClass::A2).unwrap();
                    planned.push(PlannedTrial {
                        class_rank: a2_rank,
                        env_index,
                        seed,
                        pair: pair.swapped(),
                    });
                }
                planned.push(PlannedTrial {
                    class_rank: rank,
                    env_index,
                    seed,
                    pair,
                });
            }
        }
    }

    let grids: Vec<GridWorld> = envs.iter().map(|e| e.env.clone()).collect();
    let mut results: Vec<(usize, usize, TrialResult)> = planned
        .par_iter()
        .map(|p| {
            let env = &envs[p.env_index];
            let trial = run_trial(
                &p.pair,
                &setup.theta_star,
                &grids,
                &env.env,
                setup.beta,
                &setup.prior,
            )
            .map_err(|e| e.with_context(format!("env {}, seed {}", env.id, p.seed)))?;
            let expected = Classification::Misspecified(study.classes[p.class_rank]);
            if trial.class != expected {
                return Err(Error::contract(format!(
                    "sampled pair classified as {}, expected {expected}",
                    trial.class
                )));
            }
            log::debug!(
                "trial class={} env={} seed={} dH={} regret={}",
                trial.class,
                env.id,
                p.seed,
                trial.entropy_change,
                trial.regret
            );
            Ok((p.class_rank, p.env_index, trial.tagged(&env.id, p.seed)))
        })
        .collect::<Result<_>>()?;
    results.sort_by_key(|r| (r.0, r.1, r.2.seed));
    Ok(results.into_iter().map(|(_, _, r)| r).collect())
}

/// Location and spread of one measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Stats {
    /// Population standard deviation; `None` for empty input.
    pub fn from_values(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Stats {
            mean,
            std: var.sqrt(),
            median: quantile(&sorted, 0.5),
            q1: quantile(&sorted, 0.25),
            q3: quantile(&sorted, 0.75),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub class: Classification,
    pub count: usize,
    pub entropy_change: Stats,
    pub regret: Stats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Summary {
    pub rows: Vec<ClassSummary>,
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn row(&self, class: impl Into<Classification>) -> Option<&ClassSummary> {
        let class = class.into();
        self.rows.iter().find(|r| r.class == class)
    }
}

/// Per-class statistics in `classes` order; classes without results are
/// omitted and reported in `warnings`.
pub fn summarize(results: &[TrialResult], classes: &[Classification]) -> Summary {
    let mut summary = Summary::default();
    for &class in classes {
        let bucket: Vec<&TrialResult> = results.iter().filter(|r| r.class == class).collect();
        let dh: Vec<f64> = bucket.iter().map(|r| r.entropy_change).collect();
        let regret: Vec<f64> = bucket.iter().map(|r| r.regret).collect();
        match (Stats::from_values(&dh), Stats::from_values(&regret)) {
            (Some(entropy_change), Some(regret)) => summary.rows.push(ClassSummary {
                class,
                count: bucket.len(),
                entropy_change,
                regret,
            }),
            _ => summary
                .warnings
                .push(format!("class {class} has no results; omitted")),
        }
    }
    summary
}

/// Classes present in `results`, in first-seen order.
pub fn classes_in(results: &[TrialResult]) -> Vec<Classification> {
    let mut out = Vec::new();
    for r in results {
        if !out.contains(&r.class) {
            out.push(r.class);
        }
    }
    out
}

/// Symmetric distribution over ordered choice set pairs: an unordered pair is
/// drawn uniformly from the support, then oriented by a fair coin.
///
/// Every set in the support must pick the same best element under the true
/// reward, so the human's choice does not depend on which set they hold.
#[derive(Debug, Clone)]
pub struct SymmetricPairSampler {
    support: Vec<(ChoiceSet, ChoiceSet)>,
}

impl SymmetricPairSampler {
    pub fn new(
        support: Vec<(ChoiceSet, ChoiceSet)>,
        theta_star: &RewardParams,
        env: &GridWorld,
    ) -> Result<Self> {
        let sampler = SymmetricPairSampler { support };
        sampler.check(theta_star, env)?;
        Ok(sampler)
    }

    /// Random support of `pairs` distinct unordered pairs of subsets of
    /// `master`, each subset holding the master's best element.
    pub fn from_master(
        master: &ChoiceSet,
        theta_star: &RewardParams,
        env: &GridWorld,
        pairs: usize,
        bounds: SizeBounds,
        seed: u64,
    ) -> Result<Self> {
        let best = human_choice(master, theta_star, env)?;
        let best_index = master.position(&best).expect("best is a member");
        let others: Vec<usize> = (0..master.len()).filter(|&i| i != best_index).collect();
        if others.is_empty() {
            return Err(Error::Infeasible("master set has a single element".into()));
        }
        let lo = bounds.min.min(master.len());
        let hi = bounds.max.min(master.len());

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw_set = |rng: &mut ChaCha8Rng| -> Vec<usize> {
            let size = rng.gen_range(lo..=hi);
            let mut members: Vec<usize> = index::sample(rng, others.len(), size - 1)
                .into_iter()
                .map(|i| others[i])
                .collect();
            members.push(best_index);
            members.sort_unstable();
            members
        };

        let mut seen: HashSet<(Vec<usize>, Vec<usize>)> = HashSet::new();
        let mut support = Vec::with_capacity(pairs);
        let attempts = pairs.saturating_mul(100).max(1_000);
        for _ in 0..attempts {
            if support.len() == pairs {
                break;
            }
            let x = draw_set(&mut rng);
            let y = draw_set(&mut rng);
            if x == y {
                continue;
            }
            let key = if x < y { (x, y) } else { (y, x) };
            if seen.insert(key.clone()) {
                support.push((master.select(&key.0)?, master.select(&key.1)?));
            }
        }
        if support.len() < pairs {
            return Err(Error::Infeasible(format!(
                "found {} distinct support pairs, {pairs} requested",
                support.len()
            )));
        }
        SymmetricPairSampler::new(support, theta_star, env)
    }

    pub fn support(&self) -> &[(ChoiceSet, ChoiceSet)] {
        &self.support
    }

    fn check(&self, theta_star: &RewardParams, env: &GridWorld) -> Result<()> {
        let mut common: Option<Trajectory> = None;
        for (x, y) in &self.support {
            for set in [x, y] {
                let choice = human_choice(set, theta_star, env)?;
                match &common {
                    None => common = Some(choice),
                    Some(c) if *c == choice => {}
                    Some(_) => {
                        return Err(Error::contract(
                            "symmetric sampler support violates the common-argmax condition",
                        ))
                    }
                }
            }
        }
        if common.is_none() {
            return Err(Error::contract("symmetric sampler support is empty"));
        }
        Ok(())
    }

    /// Ordered draw `(human, robot)` as a [`ChoicePair`].
    pub fn sample(&self, rng: &mut impl Rng) -> ChoicePair {
        let (x, y) = &self.support[rng.gen_range(0..self.support.len())];
        if rng.gen_bool(0.5) {
            ChoicePair::new(y.clone(), x.clone())
        } else {
            ChoicePair::new(x.clone(), y.clone())
        }
    }
}

/// Supports up to this size are enumerated exactly in both orientations.
pub const EXACT_ENUMERATION_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryReport {
    pub support_pairs: usize,
    pub exact: bool,
    pub max_antisymmetry_residual: f64,
    pub max_entropy_antisymmetry_residual: f64,
    pub expected_regret: f64,
    pub expected_entropy_change: f64,
    pub sampled_draws: usize,
    pub sampled_mean_regret: Option<f64>,
    #[serde(skip)]
    pub trials: Vec<TrialResult>,
}

/// Evaluates both orientations of every support pair and the expected regret
/// under the sampler's symmetric distribution.
#[allow(clippy::too_many_arguments)]
pub fn run_symmetry_verification(
    sampler: &SymmetricPairSampler,
    setup: &InferenceSetup,
    envs: &[NamedEnv],
    feedback_env: &NamedEnv,
    n_draws: usize,
    seed: u64,
) -> Result<SymmetryReport> {
    sampler.check(&setup.theta_star, &feedback_env.env)?;
    let grids: Vec<GridWorld> = envs.iter().map(|e| e.env.clone()).collect();
    let trial = |pair: &ChoicePair, tag: u64| -> Result<TrialResult> {
        run_trial(
            pair,
            &setup.theta_star,
            &grids,
            &feedback_env.env,
            setup.beta,
            &setup.prior,
        )
        .map(|t| t.tagged(&feedback_env.id, tag))
    };

    let exact = sampler.support.len() <= EXACT_ENUMERATION_LIMIT;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pair_indices: Vec<usize> = if exact {
        (0..sampler.support.len()).collect()
    } else {
        (0..n_draws)
            .map(|_| rng.gen_range(0..sampler.support.len()))
            .collect()
    };

    let oriented: Vec<(TrialResult, TrialResult)> = pair_indices
        .par_iter()
        .map(|&i| {
            let (x, y) = &sampler.support[i];
            // human holds x in the forward orientation
            let forward = trial(&ChoicePair::new(y.clone(), x.clone()), 2 * i as u64)?;
            let backward = trial(&ChoicePair::new(x.clone(), y.clone()), 2 * i as u64 + 1)?;
            Ok((forward, backward))
        })
        .collect::<Result<_>>()?;

    let mut max_residual: f64 = 0.0;
    let mut max_entropy_residual: f64 = 0.0;
    let mut regret_total = 0.0;
    let mut entropy_total = 0.0;
    for (f, b) in &oriented {
        max_residual = max_residual.max((f.regret + b.regret).abs());
        max_entropy_residual = max_entropy_residual.max((f.entropy_change + b.entropy_change).abs());
        regret_total += f.regret + b.regret;
        entropy_total += f.entropy_change + b.entropy_change;
    }
    let n = (2 * oriented.len()) as f64;

    // Monte Carlo estimate through the sampler's own distribution; in exact
    // mode the drawn pair is looked up, otherwise draw j is oriented[j].
    let sampled_mean_regret = (n_draws > 0 && !oriented.is_empty()).then(|| {
        let mut draws = ChaCha8Rng::seed_from_u64(seed);
        draws.set_stream(1);
        let total: f64 = (0..n_draws)
            .map(|j| {
                let k = if exact {
                    draws.gen_range(0..oriented.len())
                } else {
                    j
                };
                let (f, b) = &oriented[k];
                if draws.gen_bool(0.5) {
                    f.regret
                } else {
                    b.regret
                }
            })
            .sum();
        total / n_draws as f64
    });

    let trials = oriented.into_iter().flat_map(|(f, b)| [f, b]).collect();
    Ok(SymmetryReport {
        support_pairs: sampler.support.len(),
        exact,
        max_antisymmetry_residual: max_residual,
        max_entropy_antisymmetry_residual: max_entropy_residual,
        expected_regret: if n > 0.0 { regret_total / n } else { 0.0 },
        expected_entropy_change: if n > 0.0 { entropy_total / n } else { 0.0 },
        sampled_draws: n_draws,
        sampled_mean_regret,
        trials,
    })
}

/// The human only considers demonstrations that end at the goal; the robot
/// considers the whole master set. Regret is measured on `env` alone.
pub fn run_goal_bias_study(env: &NamedEnv, setup: &InferenceSetup) -> Result<(ChoicePair, TrialResult)> {
    let master = master_choice_set(&env.env, setup.thetas());
    let human = goal_biased_subset(&master, &env.env)?;
    let pair = ChoicePair::new(master, human);
    let trial = run_trial(
        &pair,
        &setup.theta_star,
        std::slice::from_ref(&env.env),
        &env.env,
        setup.beta,
        &setup.prior,
    )?;
    Ok((pair, trial.tagged(&env.id, 0)))
}

#[derive(Debug, Clone)]
pub struct WorstCase {
    pub human_choice: Trajectory,
    pub b2_pair: ChoicePair,
    pub b3_pair: ChoicePair,
    pub b2: TrialResult,
    pub b3: TrialResult,
    pub b3_peak: RewardParams,
}

impl WorstCase {
    /// Peak of the B3 belief in the `(+lava, +alive)` quadrant while the true
    /// reward sits in `(-lava, -alive)`.
    pub fn b3_peak_is_opposite(&self, theta_star: &RewardParams) -> bool {
        self.b3_peak.lava > 0.0 && self.b3_peak.alive > 0.0 && theta_star.lava < 0.0 && theta_star.alive < 0.0
    }
}

/// Builds the two-poor-demonstrations human set and matching `B2` and `B3`
/// robot sets from the master set of `env`, then runs both trials.
///
/// Only trajectories with the same goal status are compared, so the belief
/// update hinges on lava and length. `c_H` is the lowest-return master
/// element that has alternatives which are strictly shorter, carry strictly
/// less lava and score strictly higher; the second human option is the
/// element scoring just below `c_H`. The `B3` robot set is `c_H` plus those
/// alternatives, so `c_H` is its worst element; the `B2` robot set adds the
/// alternatives to the whole human set.
pub fn run_b3_worst_case(env: &NamedEnv, setup: &InferenceSetup) -> Result<WorstCase> {
    let master = master_choice_set(&env.env, setup.thetas());
    let returns = master.returns(&env.env, &setup.theta_star)?;
    let features = master.features(&env.env)?;

    let mut order: Vec<usize> = (0..master.len()).collect();
    order.sort_by(|&a, &b| returns[a].total_cmp(&returns[b]).then(a.cmp(&b)));

    let construction = order.iter().find_map(|&c| {
        let comparable = |t: usize| t != c && features[t].goal == features[c].goal;
        let better: Vec<usize> = (0..master.len())
            .filter(|&t| {
                comparable(t)
                    && features[t].steps < features[c].steps
                    && features[t].lava < features[c].lava
                    && returns[t] > returns[c]
            })
            .collect();
        let worse = (0..master.len())
            .filter(|&t| comparable(t) && returns[t] < returns[c])
            .max_by(|&a, &b| returns[a].total_cmp(&returns[b]));
        match (better.is_empty(), worse) {
            (false, Some(w)) => Some((c, w, better)),
            _ => None,
        }
    });
    let (c, w, better) = construction.ok_or_else(|| {
        Error::Infeasible(format!(
            "env {}: no master element has both a worse alternative and strictly shorter, lower-lava, better alternatives",
            env.id
        ))
    })?;

    let human = master.select(&sorted(vec![c, w]))?;
    let mut b3_members = better.clone();
    b3_members.push(c);
    let b3_pair = ChoicePair::new(master.select(&sorted(b3_members))?, human.clone());
    let mut b2_members = better;
    b2_members.extend([c, w]);
    let b2_pair = ChoicePair::new(master.select(&sorted(b2_members))?, human);

    for (pair, class) in [(&b2_pair, MisspecClass::B2), (&b3_pair, MisspecClass::B3)] {
        let got = classify(pair, &setup.theta_star, &env.env)?;
        if got != class.into() {
            return Err(Error::Infeasible(format!(
                "env {}: constructed {class} pair classifies as {got}",
                env.id
            )));
        }
    }

    let evals = std::slice::from_ref(&env.env);
    let b2 = run_trial(
        &b2_pair,
        &setup.theta_star,
        evals,
        &env.env,
        setup.beta,
        &setup.prior,
    )?
    .tagged(&env.id, 0);
    let b3 = run_trial(
        &b3_pair,
        &setup.theta_star,
        evals,
        &env.env,
        setup.beta,
        &setup.prior,
    )?
    .tagged(&env.id, 0);
    let b3_peak = b3.belief_misspecified.peak();
    Ok(WorstCase {
        human_choice: master.trajectories()[c].clone(),
        b2_pair,
        b3_pair,
        b2,
        b3,
        b3_peak,
    })
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

/// Writes the per-trial CSV: `class,env_id,seed,entropy_correct,entropy_misspec,
/// entropy_change,regret,regret_env_0..regret_env_{n-1}`.
pub fn write_trials_csv<W: Write>(results: &[TrialResult], out: W) -> Result<()> {
    let env_columns = results.iter().map(|r| r.per_env_regret.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "class",
        "env_id",
        "seed",
        "entropy_correct",
        "entropy_misspec",
        "entropy_change",
        "regret",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..env_columns).map(|i| format!("regret_env_{i}")));
    w.write_record(&header).map_err(csv_error)?;
    for r in results {
        let mut row = vec![
            r.class.to_string(),
            r.env_id.clone(),
            r.seed.to_string(),
            r.entropy_correct.to_string(),
            r.entropy_misspecified.to_string(),
            r.entropy_change.to_string(),
            r.regret.to_string(),
        ];
        row.extend(
            (0..env_columns).map(|i| r.per_env_regret.get(i).map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(summary: &Summary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let stat_names = ["mean", "std", "median", "q1", "q3", "min", "max"];
    let mut header = vec!["class".to_string(), "count".to_string()];
    for measure in ["entropy_change", "regret"] {
        header.extend(stat_names.iter().map(|s| format!("{measure}_{s}")));
    }
    w.write_record(&header).map_err(csv_error)?;
    for row in &summary.rows {
        let mut rec = vec![row.class.to_string(), row.count.to_string()];
        for s in [&row.entropy_change, &row.regret] {
            rec.extend(
                [s.mean, s.std, s.median, s.q1, s.q3, s.min, s.max]
                    .iter()
                    .map(|v| v.to_string()),
            );
        }
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::io("<csv>", std::io::Error::other(e))
}

#[derive(Serialize)]
struct JsonTrial<'a> {
    #[serde(flatten)]
    trial: &'a TrialResult,
    belief_correct: &'a [f64],
    belief_misspecified: &'a [f64],
}

#[derive(Serialize)]
struct JsonTrials<'a> {
    grid: &'a [RewardParams],
    trials: Vec<JsonTrial<'a>>,
}

/// JSON variant of the trial table carrying full beliefs; the hypothesis grid
/// is written once.
pub fn trials_json(results: &[TrialResult], grid: &ThetaGrid) -> serde_json::Value {
    let doc = JsonTrials {
        grid: grid.points(),
        trials: results
            .iter()
            .map(|t| JsonTrial {
                trial: t,
                belief_correct: t.belief_correct.probs(),
                belief_misspecified: t.belief_misspecified.probs(),
            })
            .collect(),
    };
    serde_json::to_value(doc).expect("trial records serialize")
}
