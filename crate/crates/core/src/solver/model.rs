use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FitResult;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::json::to_string_precise;
use crate::pairs::dot;
use crate::penalty::PenaltySpec;

const MODEL_FORMAT: &str = "sparserank-model/1";

/// `score_i = x_iᵀw`. There is no intercept: it cancels in every pair.
pub fn predict_scores(weights: &[f64], dataset: &Dataset) -> Result<Vec<f64>> {
    if weights.len() != dataset.dimension() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dimension(),
            found: weights.len(),
        });
    }
    Ok((0..dataset.len())
        .map(|i| dot(dataset.features(i), weights))
        .collect())
}

/// Positions `0..scores.len()` by descending score; ties keep input order.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// A trained linear ranker with its training metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub weights: Vec<f64>,
    pub penalty: PenaltySpec,
    pub c: f64,
    pub converged: bool,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub nonzero_count: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    dimension: usize,
    c: f64,
    penalty: PenaltySpec,
    converged: bool,
    inner_iterations: usize,
    outer_iterations: usize,
    nonzero_count: usize,
    /// 1-based feature id → weight, as in the data files.
    weights: BTreeMap<usize, f64>,
}

impl Model {
    pub fn from_fit(fit: &FitResult, penalty: PenaltySpec, c: f64) -> Self {
        Model {
            weights: fit.weights.clone(),
            penalty,
            c,
            converged: fit.converged,
            inner_iterations: fit.inner_iterations,
            outer_iterations: fit.outer_iterations,
            nonzero_count: fit.nonzero_count,
        }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn scores(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        predict_scores(&self.weights, dataset)
    }

    /// Pads with zero weights for features the model never saw.
    pub fn widened(&self, dimension: usize) -> Result<Model> {
        if dimension < self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                found: self.dimension(),
            });
        }
        let mut m = self.clone();
        m.weights.resize(dimension, 0.0);
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            format: MODEL_FORMAT.into(),
            dimension: self.weights.len(),
            c: self.c,
            penalty: self.penalty.clone(),
            converged: self.converged,
            inner_iterations: self.inner_iterations,
            outer_iterations: self.outer_iterations,
            nonzero_count: self.nonzero_count,
            weights: self.weights.iter().enumerate().map(|(j, &w)| (j + 1, w)).collect(),
        };
        to_string_precise(&doc).expect("model document serializes")
    }

    pub fn from_json(text: &str, source: &str) -> Result<Model> {
        let format_err = |message: String| Error::Format {
            path: source.to_owned(),
            message,
        };
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| format_err(e.to_string()))?;
        if doc.format != MODEL_FORMAT {
            return Err(format_err(format!("unknown format {:?}", doc.format)));
        }
        let mut weights = vec![0.0; doc.dimension];
        for (fid, w) in doc.weights {
            if fid == 0 || fid > doc.dimension {
                return Err(format_err(format!("feature id {fid} outside 1..={}", doc.dimension)));
            }
            weights[fid - 1] = w;
        }
        Ok(Model {
            weights,
            penalty: doc.penalty,
            c: doc.c,
            converged: doc.converged,
            inner_iterations: doc.inner_iterations,
            outer_iterations: doc.outer_iterations,
            nonzero_count: doc.nonzero_count,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Model::from_json(&text, &path.display().to_string())
    }
}
