//! Tight bounds on interventional probabilities in quasi-Markovian causal
//! models with binary endogenous variables.

pub mod canon;
pub mod dist;
pub mod error;
pub mod fixtures;
pub mod format;
pub mod graph;
pub mod lpform;
pub mod objective;
pub mod oracle;
pub mod query;
pub mod solve;

pub use error::{Error, Result};
