//! Learned cardinality estimation from per-table key distributions.

pub mod anpm;
pub mod bundle;
pub mod catalog;
pub mod cli;
mod container;
pub mod dist;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod join;
pub mod predicates;
pub mod query;
pub mod value;

pub use error::{Error, Result};
