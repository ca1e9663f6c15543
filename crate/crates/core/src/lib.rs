//! Feature selection for pairwise learning to rank with sparse linear SVMs.
//!
//! Query-grouped relevance data is reduced to preference pairs; a linear
//! scorer is fit by minimizing the squared hinge loss over pair differences
//! plus a sparsity penalty. Convex penalties (ℓ1, weighted ℓ1) are solved by
//! FISTA; concave ones (ℓp with p < 1, log, MCP) by iteratively reweighted ℓ1.

pub mod data;
pub mod error;
pub mod experiment;
pub mod json;
pub mod metrics;
pub mod pairs;
pub mod penalty;
pub mod solver;
pub mod synth;

pub use data::{parse_letor_file, Dataset, FoldSpec, Sample};
pub use error::{Error, Result};
pub use pairs::{PairMatrix, PairOperator, PreferencePairs};
pub use penalty::{Penalty, PenaltySpec};
pub use solver::{FitResult, LipschitzMode, Model, Problem, SolverConfig};
