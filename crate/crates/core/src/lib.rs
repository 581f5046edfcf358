//! Constraint-steered tactic mining for multivariate event sequences.
//!
//! The crate mines a small set of value-nullable, consecutive patterns
//! ("tactics") that minimise a count-based description length of a rally
//! dataset, and lets an analyst reshape that set through global constraints
//! (re-mining under a parameterized metric) and local constraints (minimal
//! modification of named tactics followed by a locality-preserving
//! optimizer).

pub mod bench;
pub mod constraint;
pub mod cover;
mod engine;
pub mod miner;
pub mod error;
pub mod finetune;
pub mod io;
pub mod model;
pub mod nl;
pub mod projection;
pub mod session;
pub mod synth;

pub use error::{Error, Result};
