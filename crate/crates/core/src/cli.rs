//! Batch entry point: configuration, study dispatch and result files.
//!
//! Configuration comes from built-in defaults, then an optional TOML file
//! (`--config`), then command-line flags, each layer overriding the previous
//! one. The fully resolved configuration is written to `config.resolved` in
//! the output directory and can be passed back through `--config`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::builtin;
use crate::choice_sets::{Classification, MisspecClass, SizeBounds};
use crate::error::{Error, Result};
use crate::experiments::{
    classes_in, master_sets, run_b3_worst_case, run_goal_bias_study, run_randomized_study,
    run_symmetry_verification, summarize, trials_json, write_summary_csv, write_trials_csv, InferenceSetup,
    NamedEnv, RandomizedStudy, SymmetricPairSampler, TrialResult,
};
use crate::gridworld::{GridWorld, RewardParams};
use crate::inference::{ThetaGrid, DEFAULT_ANGLE_COUNT, DEFAULT_BETA, DEFAULT_GOAL_WEIGHT};

pub const OUT_ENV_VAR: &str = "RRIC_MISSPEC_OUT";
pub const DEFAULT_OUT_DIR: &str = "rric-out";

/// Default true reward: strongly lava-averse with a small per-step cost.
/// Angle index 35 of the default 64-angle circle, so it is a grid point.
pub const DEFAULT_THETA_STAR: RewardParams = RewardParams {
    lava: -0.9569403357322088,
    goal: DEFAULT_GOAL_WEIGHT,
    alive: -0.29028467725446233,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Randomized,
    Symmetry,
    GoalBias,
    B3WorstCase,
}

impl Study {
    const NAMES: [(&'static str, Study); 4] = [
        ("randomized", Study::Randomized),
        ("symmetry", Study::Symmetry),
        ("goal-bias", Study::GoalBias),
        ("b3-worst-case", Study::B3WorstCase),
    ];

    fn default_envs(self) -> &'static str {
        match self {
            Study::Randomized | Study::Symmetry => builtin::PAPER4,
            Study::GoalBias => builtin::BIAS1,
            Study::B3WorstCase => builtin::WORSTCASE1,
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = Study::NAMES.iter().find(|(_, s)| s == self).unwrap().0;
        f.write_str(name)
    }
}

impl FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Study::NAMES
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, st)| *st)
            .ok_or_else(|| Error::Usage {
                key: "study".into(),
                message: format!(
                    "unknown study `{s}` (expected randomized, symmetry, goal-bias or b3-worst-case)"
                ),
            })
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub study: Study,
    /// Built-in set name (`paper4`, `bias1`, `worstcase1`) or comma-separated env file paths.
    pub envs: String,
    pub theta_star: RewardParams,
    pub beta: f64,
    pub angles: usize,
    pub tuples: usize,
    pub size_min: usize,
    pub size_max: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub out: PathBuf,
    pub mirror_a2: bool,
    pub symmetry_pairs: usize,
    pub symmetry_draws: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            study: Study::Randomized,
            envs: builtin::PAPER4.into(),
            theta_star: DEFAULT_THETA_STAR,
            beta: DEFAULT_BETA,
            angles: DEFAULT_ANGLE_COUNT,
            tuples: 6,
            size_min: 2,
            size_max: 6,
            seed: 0,
            jobs: 0,
            out: PathBuf::from(DEFAULT_OUT_DIR),
            mirror_a2: true,
            symmetry_pairs: 60,
            symmetry_draws: 1000,
        }
    }
}

/// Same keys as [`RunConfig`], all optional, as read from a config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    study: Option<Study>,
    envs: Option<String>,
    theta_star: Option<RewardParams>,
    beta: Option<f64>,
    angles: Option<usize>,
    tuples: Option<usize>,
    size_min: Option<usize>,
    size_max: Option<usize>,
    seed: Option<u64>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
    mirror_a2: Option<bool>,
    symmetry_pairs: Option<usize>,
    symmetry_draws: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(
    name = "rric-misspec",
    about = "Choice set misspecification experiments for reward-rational implicit choice inference"
)]
struct Args {
    /// randomized | symmetry | goal-bias | b3-worst-case
    #[arg(long)]
    study: Option<String>,
    /// Built-in environment set or comma-separated environment files
    #[arg(long)]
    envs: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    angles: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tuples: Option<String>,
    #[arg(long = "size-min", allow_hyphen_values = true)]
    size_min: Option<String>,
    #[arg(long = "size-max", allow_hyphen_values = true)]
    size_max: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    jobs: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML file with any of the keys written to `config.resolved`
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Usage {
        key: key.into(),
        message: format!("cannot parse `{raw}`"),
    })
}

/// Resolves defaults, the optional config file and flags into a [`RunConfig`].
///
/// `args` excludes the program name. Output directory falls back to
/// `RRIC_MISSPEC_OUT` when neither the file nor the flags set it.
pub fn parse_config<I, S>(args: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv =
        std::iter::once(std::ffi::OsString::from("rric-misspec")).chain(args.into_iter().map(Into::into));
    let args = Args::try_parse_from(argv).map_err(|e| Error::Usage {
        key: "args".into(),
        message: e.to_string(),
    })?;

    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            toml::from_str::<FileConfig>(&text).map_err(|e| Error::Usage {
                key: "config".into(),
                message: format!("{}: {e}", path.display()),
            })?
        }
        None => FileConfig::default(),
    };

    let mut cfg = RunConfig::default();
    let mut envs_set = false;
    let mut out_set = false;

    macro_rules! layer {
        ($field:ident) => {
            if let Some(v) = file.$field {
                cfg.$field = v;
            }
        };
    }
    if let Some(v) = file.envs {
        cfg.envs = v;
        envs_set = true;
    }
    if let Some(v) = file.out {
        cfg.out = v;
        out_set = true;
    }
    layer!(study);
    layer!(theta_star);
    layer!(beta);
    layer!(angles);
    layer!(tuples);
    layer!(size_min);
    layer!(size_max);
    layer!(seed);
    layer!(jobs);
    layer!(mirror_a2);
    layer!(symmetry_pairs);
    layer!(symmetry_draws);

    if let Some(s) = &args.study {
        cfg.study = s.parse()?;
    }
    if let Some(v) = args.envs {
        cfg.envs = v;
        envs_set = true;
    }
    if let Some(v) = &args.beta {
        cfg.beta = parse_value("beta", v)?;
    }
    if let Some(v) = &args.angles {
        cfg.angles = parse_value("angles", v)?;
    }
    if let Some(v) = &args.tuples {
        cfg.tuples = parse_value("tuples", v)?;
    }
    if let Some(v) = &args.size_min {
        cfg.size_min = parse_value("size_min", v)?;
    }
    if let Some(v) = &args.size_max {
        cfg.size_max = parse_value("size_max", v)?;
    }
    if let Some(v) = &args.seed {
        cfg.seed = parse_value("seed", v)?;
    }
    if let Some(v) = &args.jobs {
        cfg.jobs = parse_value("jobs", v)?;
    }
    if let Some(v) = args.out {
        cfg.out = v;
        out_set = true;
    }

    if !envs_set {
        cfg.envs = cfg.study.default_envs().into();
    }
    if !out_set {
        if let Some(dir) = std::env::var_os(OUT_ENV_VAR) {
            cfg.out = PathBuf::from(dir);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let usage = |key: &str, message: String| Error::Usage {
            key: key.into(),
            message,
        };
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(usage(
                "beta",
                format!("must be a positive finite number, got {}", self.beta),
            ));
        }
        if self.angles < 8 {
            return Err(usage(
                "angles",
                format!("must be at least 8, got {}", self.angles),
            ));
        }
        if self.tuples == 0 {
            return Err(usage("tuples", "must be at least 1".into()));
        }
        SizeBounds::new(self.size_min, self.size_max)?;
        if !self.theta_star.is_finite() {
            return Err(usage("theta_star", "weights must be finite".into()));
        }
        if self.symmetry_pairs == 0 {
            return Err(usage("symmetry_pairs", "must be at least 1".into()));
        }
        if !builtin::is_builtin(&self.envs) {
            for path in self.env_paths() {
                if !path.is_file() {
                    return Err(Error::io(
                        path,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "environment file not found"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn env_paths(&self) -> Vec<PathBuf> {
        self.envs
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(PathBuf::from)
            .collect()
    }

    pub fn load_envs(&self) -> Result<Vec<NamedEnv>> {
        if let Some(set) = builtin::builtin_set(&self.envs) {
            return Ok(set);
        }
        let paths = self.env_paths();
        if paths.is_empty() {
            return Err(Error::Usage {
                key: "envs".into(),
                message: "no environments given".into(),
            });
        }
        paths
            .iter()
            .map(|p| {
                let id = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string());
                Ok(NamedEnv::new(id, GridWorld::load(p)?))
            })
            .collect()
    }

    pub fn size_bounds(&self) -> SizeBounds {
        SizeBounds {
            min: self.size_min,
            max: self.size_max,
        }
    }

    pub fn setup(&self) -> Result<InferenceSetup> {
        let grid = ThetaGrid::circle(self.angles, DEFAULT_GOAL_WEIGHT)?;
        Ok(InferenceSetup::uniform(grid, self.theta_star, self.beta))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

/// Files produced by a run, keyed by file name.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn add_json(&mut self, name: &str, value: &serde_json::Value) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("json serializes");
        bytes.push(b'\n');
        self.add(name, bytes);
    }

    fn add_trials(
        &mut self,
        trials: &[TrialResult],
        grid: &ThetaGrid,
        classes: &[Classification],
    ) -> Result<()> {
        let mut csv = Vec::new();
        write_trials_csv(trials, &mut csv)?;
        self.add("trials.csv", csv);
        self.add_json("trials.json", &trials_json(trials, grid));
        let summary = summarize(trials, classes);
        for w in &summary.warnings {
            log::warn!("{w}");
        }
        let mut csv = Vec::new();
        write_summary_csv(&summary, &mut csv)?;
        self.add("summary.csv", csv);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
    }
}

/// Executes the configured study and returns its output files without writing them.
pub fn execute(config: &RunConfig) -> Result<RunOutput> {
    let envs = config.load_envs()?;
    let setup = config.setup()?;
    let grid = setup.prior.grid().clone();
    let mut out = RunOutput::default();
    out.add("config.resolved", config.to_toml().into_bytes());

    match config.study {
        Study::Randomized => {
            let study = RandomizedStudy {
                classes: MisspecClass::ALL.to_vec(),
                tuples_per_class_per_env: config.tuples,
                size_bounds: config.size_bounds(),
                seed: config.seed,
                mirror_a2: config.mirror_a2,
            };
            let trials = run_randomized_study(&study, &envs, &setup)?;
            let classes: Vec<Classification> = study.classes.iter().map(|&c| c.into()).collect();
            out.add_trials(&trials, &grid, &classes)?;
        }
        Study::Symmetry => {
            let feedback = envs[0].clone();
            let master = master_sets(std::slice::from_ref(&feedback), &setup).remove(0);
            let sampler = SymmetricPairSampler::from_master(
                &master,
                &setup.theta_star,
                &feedback.env,
                config.symmetry_pairs,
                config.size_bounds(),
                config.seed,
            )
            .map_err(|e| e.with_context(format!("symmetric support on env {}", feedback.id)))?;
            let report = run_symmetry_verification(
                &sampler,
                &setup,
                &envs,
                &feedback,
                config.symmetry_draws,
                config.seed,
            )?;
            out.add_trials(&report.trials, &grid, &classes_in(&report.trials))?;
            let mut value = serde_json::to_value(&report).expect("report serializes");
            value["feedback_env"] = json!(feedback.id);
            value["antisymmetry_holds"] = json!(report.max_antisymmetry_residual <= 1e-9);
            value["zero_expected_regret"] = json!(report.expected_regret.abs() <= 1e-9);
            out.add_json("report.json", &value);
        }
        Study::GoalBias => {
            let env = &envs[0];
            let (pair, trial) = run_goal_bias_study(env, &setup)?;
            let trials = vec![trial];
            out.add_trials(&trials, &grid, &classes_in(&trials))?;
            out.add("robot_choice_set.txt", pair.robot.to_text().into_bytes());
            out.add("human_choice_set.txt", pair.human.to_text().into_bytes());
            let t = &trials[0];
            out.add_json(
                "report.json",
                &json!({
                    "env": env.id,
                    "class": t.class,
                    "robot_set_size": pair.robot.len(),
                    "human_set_size": pair.human.len(),
                    "entropy_change": t.entropy_change,
                    "regret": t.regret,
                    "underconfident": t.entropy_change < 0.0,
                    "positive_regret": t.regret > 0.0,
                }),
            );
        }
        Study::B3WorstCase => {
            let env = &envs[0];
            let wc = run_b3_worst_case(env, &setup)?;
            let trials = vec![wc.b2.clone(), wc.b3.clone()];
            out.add_trials(&trials, &grid, &classes_in(&trials))?;
            out.add("human_choice_set.txt", wc.b3_pair.human.to_text().into_bytes());
            out.add("robot_choice_set_b2.txt", wc.b2_pair.robot.to_text().into_bytes());
            out.add("robot_choice_set_b3.txt", wc.b3_pair.robot.to_text().into_bytes());
            out.add_json(
                "report.json",
                &json!({
                    "env": env.id,
                    "theta_star": setup.theta_star,
                    "human_choice": wc.human_choice.to_string(),
                    "b2_regret": wc.b2.regret,
                    "b3_regret": wc.b3.regret,
                    "b3_exceeds_b2": wc.b3.regret > wc.b2.regret,
                    "b3_peak": wc.b3_peak,
                    "b3_peak_opposite_quadrant": wc.b3_peak_is_opposite(&setup.theta_star),
                }),
            );
        }
    }
    Ok(out)
}

/// Writes every file under a temporary name first and renames only once all
/// of them are on disk.
pub fn write_atomically(dir: &Path, output: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut staged = Vec::with_capacity(output.files.len());
    for (name, bytes) in &output.files {
        let tmp = dir.join(format!(".{name}.tmp"));
        if let Err(e) = fs::write(&tmp, bytes) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(Error::io(&tmp, e));
        }
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, dest) in staged {
        fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))?;
    }
    Ok(())
}

/// Runs the study and writes its files to `config.out`.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let output = if config.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::contract(format!("cannot build worker pool: {e}")))?;
        pool.install(|| execute(config))?
    } else {
        execute(config)?
    };
    write_atomically(&config.out, &output)?;
    Ok(output)
}

/// JSON line describing an error, for the diagnostic stream.
pub fn error_record(err: &Error) -> String {
    json!({ "error": err.kind(), "message": err.to_string() }).to_string()
}

/// Process exit code for an error: 2 for usage problems, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Usage { .. } => 2,
        _ => 1,
    }
}
