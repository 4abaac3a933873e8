//! Generalization and on-average stability of mini-batch gradient descent
//! under data-independent batch schedules.
//!
//! The crate runs the unconstrained mini-batch update over a realized
//! batch schedule, pairs runs on neighboring datasets, and compares the
//! measured stability and generalization error with closed-form bounds and
//! the exact values of worst-case constructions.
//!
//! * [`schedule`]: batch-selection rules and their realizations.
//! * [`problems`]: loss families, data laws and risks.
//! * [`engine`]: the iterate map, paired runs and closed-form iterates.
//! * [`stability`]: stability measurements and growth-recursion audits.
//! * [`bounds`]: bound formulas and exact generalization errors.
//! * [`experiments`]: Monte Carlo studies and full verification runs.

pub mod bounds;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod problems;
pub mod schedule;
pub mod seeds;
pub mod stability;

pub use error::{Error, Result};
