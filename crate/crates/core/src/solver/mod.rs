//! Minimization of `J₁(w) + λΩ(w)` where `J₁` is the squared hinge loss over
//! preference pairs.
//!
//! Convex penalties go straight to [`fista_solve`]. Concave penalties go
//! through [`reweighted_solve`], which solves a sequence of weighted-ℓ1
//! problems with FISTA, each warm-started at the previous solution.

mod fista;
mod loss;
mod model;
mod reweighted;

use serde::{Deserialize, Serialize};

pub use fista::fista_solve;
pub use loss::{
    lipschitz_constant, loss_from_margins, objective, squared_hinge_gradient, squared_hinge_loss,
    LipschitzMode,
};
pub use model::{predict_scores, rank_order, Model};
pub use reweighted::{reweighted_solve, reweighted_solve_with, Reweighting};

use crate::error::Result;
use crate::pairs::PairOperator;
use crate::penalty::PenaltySpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative objective change regarded as stalled.
    pub inner_tol: f64,
    /// Consecutive stalled iterations before FISTA stops.
    pub inner_patience: usize,
    pub inner_max_iter: usize,
    /// Sup-norm change of `w` between outer iterations regarded as converged.
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    pub lipschitz_mode: LipschitzMode,
    /// Magnitude at or below which a weight counts as zero when reporting.
    pub zero_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            inner_tol: 1e-8,
            inner_patience: 5,
            inner_max_iter: 10_000,
            outer_tol: 1e-5,
            outer_max_iter: 20,
            lipschitz_mode: LipschitzMode::SumNorms,
            zero_threshold: 1e-10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error::InvalidParameter;
        if !(self.inner_tol > 0.0 && self.outer_tol > 0.0) {
            return Err(InvalidParameter("tolerances must be positive".into()));
        }
        if self.inner_max_iter == 0 || self.outer_max_iter == 0 || self.inner_patience == 0 {
            return Err(InvalidParameter("iteration limits must be at least 1".into()));
        }
        if !(self.zero_threshold >= 0.0) {
            return Err(InvalidParameter("zero threshold must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub weights: Vec<f64>,
    /// FISTA: objective at `w⁰` then after every iteration.
    /// Reweighted: true objective after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    pub nonzero_count: usize,
    pub lipschitz: f64,
}

impl FitResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

pub(crate) fn count_nonzero(w: &[f64], threshold: f64) -> usize {
    w.iter().filter(|x| x.abs() > threshold).count()
}

/// A pair operator together with a Lipschitz constant of `∇J₁`.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    op: &'a dyn PairOperator,
    lipschitz: f64,
}

impl<'a> Problem<'a> {
    pub fn new(op: &'a dyn PairOperator, mode: LipschitzMode) -> Result<Self> {
        let lipschitz = lipschitz_constant(op, mode)?;
        if !lipschitz.is_finite() {
            return Err(crate::error::Error::SolverFailed(
                "Lipschitz constant overflowed; rescale the features".into(),
            ));
        }
        Ok(Problem { op, lipschitz })
    }

    pub fn with_lipschitz(op: &'a dyn PairOperator, lipschitz: f64) -> Result<Self> {
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(crate::error::Error::InvalidParameter(format!(
                "Lipschitz constant must be positive, got {lipschitz}"
            )));
        }
        Ok(Problem { op, lipschitz })
    }

    pub fn op(&self) -> &'a dyn PairOperator {
        self.op
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }
}

/// Dispatches on the penalty: FISTA for convex ones, reweighting otherwise.
pub fn fit(problem: &Problem<'_>, spec: &PenaltySpec, config: &SolverConfig) -> Result<FitResult> {
    if spec.penalty.is_convex() {
        fista_solve(problem, spec, config, None)
    } else {
        reweighted_solve(problem, spec, config)
    }
}
