//! Reward-rational implicit choice inference over featured gridworlds, and a
//! harness for measuring what happens when the robot assumes the wrong
//! choice set for the human.

pub mod builtin;
pub mod choice_sets;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod gridworld;
pub mod inference;
pub mod planner;

pub use error::{Error, Result};
