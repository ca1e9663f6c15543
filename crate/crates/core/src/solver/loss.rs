use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairs::PairOperator;
use crate::penalty::PenaltySpec;

/// `Σ_p max(0, 1 - m_p)²` for margins `m = X̃w`.
pub fn loss_from_margins(margins: &[f64]) -> f64 {
    margins
        .iter()
        .map(|m| {
            let h = (1.0 - m).max(0.0);
            h * h
        })
        .sum()
}

pub fn squared_hinge_loss(op: &dyn PairOperator, w: &[f64]) -> Result<f64> {
    Ok(loss_from_margins(&op.apply(w)?))
}

/// `∇J₁(w) = -2 Σ_p x̃_p max(0, 1 - x̃_pᵀw)`.
pub fn squared_hinge_gradient(op: &dyn PairOperator, w: &[f64]) -> Result<Vec<f64>> {
    let mut hinge = op.apply(w)?;
    for h in hinge.iter_mut() {
        *h = -2.0 * (1.0 - *h).max(0.0);
    }
    op.apply_transpose(&hinge)
}

/// `J₁(w) + λ·Ω(w)`.
pub fn objective(op: &dyn PairOperator, spec: &PenaltySpec, w: &[f64]) -> Result<f64> {
    spec.check_dimension(w.len())?;
    Ok(squared_hinge_loss(op, w)? + spec.lambda * spec.value(w))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzMode {
    /// `2·Σ_p ‖x̃_p‖²`
    #[default]
    SumNorms,
    /// `2·σ_max(X̃)²` from power iteration, inflated slightly and capped by
    /// the sum-of-norms bound.
    Spectral,
}

const POWER_MAX_ITER: usize = 1000;
const POWER_TOL: f64 = 1e-12;
const SPECTRAL_SAFETY: f64 = 1.01;

pub fn lipschitz_constant(op: &dyn PairOperator, mode: LipschitzMode) -> Result<f64> {
    if op.n_pairs() == 0 {
        return Err(Error::Empty("no preference pairs"));
    }
    let frob = 2.0 * op.frobenius_sq();
    if !(frob > 0.0) {
        return Err(Error::InvalidParameter(
            "all pair difference vectors are zero".into(),
        ));
    }
    match mode {
        LipschitzMode::SumNorms => Ok(frob),
        LipschitzMode::Spectral => {
            let sigma_sq = top_eigenvalue(op);
            Ok((2.0 * sigma_sq * SPECTRAL_SAFETY).min(frob))
        }
    }
}

/// Largest eigenvalue of `X̃ᵀX̃` by power iteration from a fixed start.
fn top_eigenvalue(op: &dyn PairOperator) -> f64 {
    let d = op.dim();
    let mut v: Vec<f64> = (0..d).map(|j| 1.0 + 0.5 * ((j + 1) as f64).sin()).collect();
    normalize(&mut v);
    let mut xv = vec![0.0; op.n_pairs()];
    let mut u = vec![0.0; d];
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITER {
        op.apply_into(&v, &mut xv);
        op.apply_transpose_into(&xv, &mut u);
        let norm = normalize(&mut u);
        if norm == 0.0 {
            break;
        }
        std::mem::swap(&mut u, &mut v);
        let done = (norm - estimate).abs() <= POWER_TOL * norm;
        estimate = norm;
        if done {
            break;
        }
    }
    estimate
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}
