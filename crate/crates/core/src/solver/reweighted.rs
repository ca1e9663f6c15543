use super::fista::fista_solve;
use super::loss::squared_hinge_loss;
use super::{count_nonzero, FitResult, Problem, SolverConfig};
use crate::error::{Error, Result};
use crate::penalty::{Penalty, PenaltySpec};

/// A separable concave penalty that can be majorized by weighted ℓ1.
pub trait Reweighting {
    fn lambda(&self) -> f64;
    /// `Ω(w)`
    fn value(&self, w: &[f64]) -> f64;
    /// `β_j = g'(|w_j|)`
    fn weights(&self, w: &[f64]) -> Vec<f64>;
}

impl Reweighting for PenaltySpec {
    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn value(&self, w: &[f64]) -> f64 {
        PenaltySpec::value(self, w)
    }

    fn weights(&self, w: &[f64]) -> Vec<f64> {
        self.reweight(w)
    }
}

/// Majorization-minimization for the concave penalties (ℓp, log, MCP).
pub fn reweighted_solve(
    problem: &Problem<'_>,
    spec: &PenaltySpec,
    config: &SolverConfig,
) -> Result<FitResult> {
    spec.validate()?;
    if spec.penalty.is_convex() {
        return Err(Error::InvalidParameter(format!(
            "reweighting needs a concave penalty, got {}",
            spec.penalty.name()
        )));
    }
    reweighted_solve_with(problem, spec, config)
}

/// Starts from `w = 0` with all weights 1, then alternates a warm-started
/// weighted-ℓ1 FISTA solve with `β ← g'(|w|)` until the sup-norm change of
/// `w` drops below `outer_tol` or `outer_max_iter` is reached. Each FISTA
/// run begins with fresh momentum.
pub fn reweighted_solve_with<R: Reweighting + ?Sized>(
    problem: &Problem<'_>,
    penalty: &R,
    config: &SolverConfig,
) -> Result<FitResult> {
    config.validate()?;
    let d = problem.dim();
    let lambda = penalty.lambda();
    let mut w = vec![0.0; d];
    let mut beta = vec![1.0; d];
    let mut trace = Vec::new();
    let mut inner_iterations = 0;
    let mut outer_iterations = 0;
    let mut converged = false;

    for _ in 0..config.outer_max_iter {
        let sub = PenaltySpec::new(Penalty::WeightedL1 { beta }, lambda)?;
        let inner = fista_solve(problem, &sub, config, Some(&w))?;
        inner_iterations += inner.inner_iterations;
        outer_iterations += 1;

        let delta = inner
            .weights
            .iter()
            .zip(&w)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        w = inner.weights;
        let f = squared_hinge_loss(problem.op(), &w)? + lambda * penalty.value(&w);
        if !f.is_finite() {
            return Err(Error::NonFinite { iteration: inner_iterations });
        }
        trace.push(f);
        beta = penalty.weights(&w);
        if delta < config.outer_tol {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        nonzero_count: count_nonzero(&w, config.zero_threshold),
        weights: w,
        objective_trace: trace,
        inner_iterations,
        outer_iterations,
        converged,
        lipschitz: problem.lipschitz(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairs::DensePairMatrix;
    use crate::solver::LipschitzMode;
    use rand::{Rng, SeedableRng};

    struct ConstantOne(f64);

    impl Reweighting for ConstantOne {
        fn lambda(&self) -> f64 {
            self.0
        }
        fn value(&self, w: &[f64]) -> f64 {
            w.iter().map(|x| x.abs()).sum()
        }
        fn weights(&self, w: &[f64]) -> Vec<f64> {
            vec![1.0; w.len()]
        }
    }

    fn random_op(seed: u64, pairs: usize, d: usize) -> DensePairMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..pairs)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0) + 0.2).collect())
            .collect();
        DensePairMatrix::from_rows(rows, d).unwrap()
    }

    fn tight() -> SolverConfig {
        SolverConfig {
            inner_tol: 1e-13,
            inner_max_iter: 50_000,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn constant_weights_reduce_to_l1() {
        let op = random_op(5, 100, 8);
        let problem = Problem::new(&op, LipschitzMode::SumNorms).unwrap();
        let lambda = 2.0;
        let l1 = fista_solve(&problem, &PenaltySpec::new(Penalty::L1, lambda).unwrap(), &tight(), None)
            .unwrap();
        let rw = reweighted_solve_with(&problem, &ConstantOne(lambda), &tight()).unwrap();
        assert!(rw.converged);
        assert!(rw.outer_iterations <= 2);
        for (a, b) in rw.weights.iter().zip(&l1.weights) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn huge_gamma_mcp_matches_l1() {
        let op = random_op(6, 100, 8);
        let problem = Problem::new(&op, LipschitzMode::SumNorms).unwrap();
        let lambda = 2.0;
        let l1 = fista_solve(&problem, &PenaltySpec::new(Penalty::L1, lambda).unwrap(), &tight(), None)
            .unwrap();
        let mcp = PenaltySpec::new(Penalty::Mcp { gamma: 1e9 }, lambda).unwrap();
        let rw = reweighted_solve(&problem, &mcp, &tight()).unwrap();
        for (a, b) in rw.weights.iter().zip(&l1.weights) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn objective_never_increases() {
        for seed in 0..4 {
            let op = random_op(10 + seed, 150, 12);
            let problem = Problem::new(&op, LipschitzMode::SumNorms).unwrap();
            for penalty in [Penalty::lp(), Penalty::log(), Penalty::mcp()] {
                let spec = PenaltySpec::new(penalty, 1.0).unwrap();
                let fit = reweighted_solve(&problem, &spec, &SolverConfig::default()).unwrap();
                for pair in fit.objective_trace.windows(2) {
                    assert!(pair[1] <= pair[0] + 1e-8, "{:?}", fit.objective_trace);
                }
                // never worse than its own first (pure ℓ1) iterate
                assert!(fit.final_objective() <= fit.objective_trace[0] + 1e-8);
            }
        }
    }

    #[test]
    fn rejects_convex_penalty() {
        let op = random_op(7, 10, 3);
        let problem = Problem::new(&op, LipschitzMode::SumNorms).unwrap();
        let l1 = PenaltySpec::new(Penalty::L1, 1.0).unwrap();
        assert!(reweighted_solve(&problem, &l1, &SolverConfig::default()).is_err());
    }
}
