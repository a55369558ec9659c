//! Environments compiled into the binary.
//!
//! `paper4` holds four 20x20 layouts produced by
//! [`generate_layout`](crate::gridworld::generate_layout) with the seeds in
//! [`PAPER4_SEEDS`], the first seeds whose default master set has at least
//! ten elements. `worstcase1` is the generated layout for
//! [`WORSTCASE1_SEED`]. `bias1` is a 10x7 layout tuned by local search: a lava
//! field lies between start and goal and thins out to the south, with
//! lava-free columns beside the start and the goal.

use crate::experiments::NamedEnv;
use crate::gridworld::GridWorld;

pub const PAPER4: &str = "paper4";
pub const BIAS1: &str = "bias1";
pub const WORSTCASE1: &str = "worstcase1";

pub const PAPER4_SEEDS: [u64; 4] = [0, 5, 6, 11];
pub const WORSTCASE1_SEED: u64 = 38;

const PAPER4_FILES: [(&str, &str); 4] = [
    ("paper4-0", include_str!("../envs/paper4-0.env")),
    ("paper4-1", include_str!("../envs/paper4-1.env")),
    ("paper4-2", include_str!("../envs/paper4-2.env")),
    ("paper4-3", include_str!("../envs/paper4-3.env")),
];
const BIAS1_FILE: &str = include_str!("../envs/bias1.env");
const WORSTCASE1_FILE: &str = include_str!("../envs/worstcase1.env");

pub fn is_builtin(name: &str) -> bool {
    matches!(name, PAPER4 | BIAS1 | WORSTCASE1)
}

fn parse(id: &str, text: &str) -> NamedEnv {
    let env = GridWorld::parse(text).unwrap_or_else(|e| panic!("builtin env {id} is malformed: {e}"));
    NamedEnv::new(id, env)
}

pub fn builtin_set(name: &str) -> Option<Vec<NamedEnv>> {
    match name {
        PAPER4 => Some(PAPER4_FILES.iter().map(|(id, text)| parse(id, text)).collect()),
        BIAS1 => Some(vec![parse(BIAS1, BIAS1_FILE)]),
        WORSTCASE1 => Some(vec![parse(WORSTCASE1, WORSTCASE1_FILE)]),
        _ => None,
    }
}
