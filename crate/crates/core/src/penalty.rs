//! Separable sparsity penalties `Ω(w) = Σ_j g(|w_j|)`.
//!
//! `L1` and `WeightedL1` are convex and handled directly by the proximal
//! solver. `Lp`, `Log` and `Mcp` are concave on the positive half-line; the
//! reweighted solver replaces them by the weighted-ℓ1 tangent `β_j = g'(|w_j|)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this magnitude the ℓp derivative is evaluated at the floor instead
/// of at `|w|`, keeping the weight finite.
pub const LP_DERIVATIVE_FLOOR: f64 = 1e-8;

/// Upper clamp on reweighting coefficients.
pub const MAX_WEIGHT: f64 = 1e12;

pub const DEFAULT_P: f64 = 0.5;
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_GAMMA: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalty {
    L1,
    WeightedL1 { beta: Vec<f64> },
    Lp { p: f64 },
    Log { epsilon: f64 },
    Mcp { gamma: f64 },
}

impl Penalty {
    pub fn lp() -> Self {
        Penalty::Lp { p: DEFAULT_P }
    }

    pub fn log() -> Self {
        Penalty::Log { epsilon: DEFAULT_EPSILON }
    }

    pub fn mcp() -> Self {
        Penalty::Mcp { gamma: DEFAULT_GAMMA }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Penalty::L1 => "l1",
            Penalty::WeightedL1 { .. } => "weighted_l1",
            Penalty::Lp { .. } => "lp",
            Penalty::Log { .. } => "log",
            Penalty::Mcp { .. } => "mcp",
        }
    }

    pub fn is_convex(&self) -> bool {
        matches!(self, Penalty::L1 | Penalty::WeightedL1 { .. })
    }
}

/// A penalty together with its strength `λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub penalty: Penalty,
    pub lambda: f64,
}

impl PenaltySpec {
    pub fn new(penalty: Penalty, lambda: f64) -> Result<Self> {
        let spec = PenaltySpec { penalty, lambda };
        spec.validate()?;
        Ok(spec)
    }

    /// `λ = 1/C`.
    pub fn from_c(penalty: Penalty, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("C must be positive, got {c}")));
        }
        PenaltySpec::new(penalty, 1.0 / c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        match &self.penalty {
            Penalty::L1 => Ok(()),
            Penalty::WeightedL1 { beta } => {
                if beta.iter().all(|b| *b >= 0.0 && b.is_finite()) {
                    Ok(())
                } else {
                    bad("weights must be finite and non-negative".into())
                }
            }
            Penalty::Lp { p } if !(*p > 0.0 && *p < 1.0) => bad(format!("p must lie in (0,1), got {p}")),
            Penalty::Log { epsilon } if !(*epsilon > 0.0) => {
                bad(format!("epsilon must be positive, got {epsilon}"))
            }
            Penalty::Mcp { gamma } if !(*gamma > 0.0) => bad(format!("gamma must be positive, got {gamma}")),
            _ => Ok(()),
        }
    }

    /// `g(u)` for `u = |w_j|` at coordinate `j`.
    ///
    /// MCP is expressed per unit of `λ`: `u - u²/(2γλ)` up to `γλ`, then
    /// `γλ/2`. Multiplied by `λ` this is the usual minimax concave penalty.
    pub fn g(&self, j: usize, u: f64) -> f64 {
        match &self.penalty {
            Penalty::L1 => u,
            Penalty::WeightedL1 { beta } => beta[j] * u,
            Penalty::Lp { p } => u.powf(*p),
            Penalty::Log { epsilon } => (epsilon + u).ln(),
            Penalty::Mcp { gamma } => {
                let knee = gamma * self.lambda;
                if u <= knee {
                    u - u * u / (2.0 * knee)
                } else {
                    knee / 2.0
                }
            }
        }
    }

    /// `g'(u)`, clamped to `[0, MAX_WEIGHT]`.
    pub fn g_prime(&self, j: usize, u: f64) -> f64 {
        let raw = match &self.penalty {
            Penalty::L1 => 1.0,
            Penalty::WeightedL1 { beta } => beta[j],
            Penalty::Lp { p } => p * u.max(LP_DERIVATIVE_FLOOR).powf(p - 1.0),
            Penalty::Log { epsilon } => 1.0 / (epsilon + u),
            Penalty::Mcp { gamma } => (1.0 - u / (gamma * self.lambda)).max(0.0),
        };
        raw.clamp(0.0, MAX_WEIGHT)
    }

    /// `Ω(w) = Σ_j g(|w_j|)`.
    pub fn value(&self, w: &[f64]) -> f64 {
        w.iter().enumerate().map(|(j, x)| self.g(j, x.abs())).sum()
    }

    /// Weighted-ℓ1 coefficients `β_j = g'(|w_j|)` of the tangent majorizer.
    pub fn reweight(&self, w: &[f64]) -> Vec<f64> {
        w.iter().enumerate().map(|(j, x)| self.g_prime(j, x.abs())).collect()
    }

    pub(crate) fn check_dimension(&self, d: usize) -> Result<()> {
        match &self.penalty {
            Penalty::WeightedL1 { beta } if beta.len() != d => Err(Error::DimensionMismatch {
                expected: d,
                found: beta.len(),
            }),
            _ => Ok(()),
        }
    }
}

/// Soft thresholding with per-coordinate thresholds `mu·β_j`:
/// `sign(z_j)·max(|z_j| - mu·β_j, 0)`.
pub fn prox_weighted_l1(z: &[f64], mu: f64, beta: &[f64]) -> Result<Vec<f64>> {
    if z.len() != beta.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            found: beta.len(),
        });
    }
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("prox step must be positive, got {mu}")));
    }
    let mut out = vec![0.0; z.len()];
    soft_threshold_into(z, mu, beta, &mut out);
    Ok(out)
}

#[inline]
pub(crate) fn soft_threshold(z: f64, threshold: f64) -> f64 {
    let shrunk = z.abs() - threshold;
    if shrunk > 0.0 {
        shrunk.copysign(z)
    } else {
        0.0
    }
}

pub(crate) fn soft_threshold_into(z: &[f64], mu: f64, beta: &[f64], out: &mut [f64]) {
    for ((o, &zj), &bj) in out.iter_mut().zip(z).zip(beta) {
        *o = soft_threshold(zj, mu * bj);
    }
}
