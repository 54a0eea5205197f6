//! Staged trees and chain event graphs for categorical event-sequence data.
//!
//! The pipeline mirrors the natural modelling workflow:
//!
//! 1. [`table`] ingests tabular records into a path-count table, handling
//!    structural missing values (elided from paths), sampling missing values
//!    (kept as ordinary edge labels) and sampling-zero paths.
//! 2. [`tree`] builds the event tree from the path-count table.
//! 3. [`prior`] derives Dirichlet priors by mass conservation from a root
//!    imaginary sample size, and hyperstage constraints on stage merging.
//! 4. [`staging`] runs Bayesian agglomerative hierarchical clustering to find
//!    the MAP stage partition, yielding a staged tree.
//! 5. [`ceg`] contracts the staged tree into a chain event graph by merging
//!    positions and fusing leaves into a single sink.
//! 6. [`evidence`] reduces a chain event graph by certain/uncertain evidence
//!    and propagates updated transition probabilities.
//! 7. [`render`] and [`io`] provide deterministic DOT and JSON output.
//!
//! All prior and posterior hyperparameters are exact rationals; floating
//! point enters only through `log Gamma` when scores are evaluated.

pub mod ceg;
pub mod error;
pub mod evidence;
pub mod io;
pub mod prior;
pub mod rational;
pub mod render;
pub mod staging;
pub mod table;
#[cfg(test)]
pub(crate) mod test_fixtures;
pub mod tree;

pub use ceg::ChainEventGraph;
pub use error::Error;
pub use evidence::{EvidenceSpec, ReducedCeg};
pub use prior::{DirichletSpec, Hyperstage};
pub use rational::Rat;
pub use render::RenderStyle;
pub use staging::StagedTree;
pub use table::{PathCountTable, RecordTable};
pub use tree::EventTree;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
