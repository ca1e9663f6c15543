//! Preference pairs and the pair-difference matrix.
//!
//! Row `p` of the pair matrix is `x_winner - x_loser`. The matrix is never
//! stored by default: products go through per-document scores, so `X̃w` and
//! `X̃ᵀv` each cost `O(n·d + P)`.

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pair {
    pub winner: usize,
    pub loser: usize,
}

/// Ordered within-query document pairs, stored winner first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PreferencePairs {
    pairs: Vec<Pair>,
}

impl PreferencePairs {
    /// Emits one pair for every two documents of the same query with
    /// different grades. Queries with a single grade contribute nothing.
    pub fn build(dataset: &Dataset) -> Self {
        let mut pairs = Vec::new();
        for q in dataset.queries() {
            for s in q.range.clone() {
                let rs = dataset.relevance(s);
                for t in q.range.clone() {
                    if rs > dataset.relevance(t) {
                        pairs.push(Pair { winner: s, loser: t });
                    }
                }
            }
        }
        PreferencePairs { pairs }
    }

    pub fn from_pairs(pairs: Vec<Pair>) -> Self {
        PreferencePairs { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn as_slice(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn get(&self, p: usize) -> Result<Pair> {
        self.pairs.get(p).copied().ok_or(Error::IndexOutOfRange {
            index: p,
            len: self.pairs.len(),
        })
    }
}

/// A linear map from weights (length `dim`) to pair margins (length `n_pairs`).
pub trait PairOperator: Sync {
    fn n_pairs(&self) -> usize;
    fn dim(&self) -> usize;
    /// `out = X̃ w`
    fn apply_into(&self, w: &[f64], out: &mut [f64]);
    /// `out = X̃ᵀ v`
    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]);
    /// `Σ_p ‖x̃_p‖²`, the squared Frobenius norm.
    fn frobenius_sq(&self) -> f64;

    fn apply(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), w.len())?;
        let mut out = vec![0.0; self.n_pairs()];
        self.apply_into(w, &mut out);
        Ok(out)
    }

    fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_pairs(), v.len())?;
        let mut out = vec![0.0; self.dim()];
        self.apply_transpose_into(v, &mut out);
        Ok(out)
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Matrix-free pair matrix over a dataset.
#[derive(Clone, Copy, Debug)]
pub struct PairMatrix<'a> {
    dataset: &'a Dataset,
    pairs: &'a PreferencePairs,
}

impl<'a> PairMatrix<'a> {
    pub fn new(dataset: &'a Dataset, pairs: &'a PreferencePairs) -> Self {
        PairMatrix { dataset, pairs }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn pairs(&self) -> &'a PreferencePairs {
        self.pairs
    }

    /// `x̃_p = x_winner - x_loser`.
    pub fn pair_difference(&self, p: usize) -> Result<Vec<f64>> {
        let pair = self.pairs.get(p)?;
        Ok(self
            .dataset
            .features(pair.winner)
            .iter()
            .zip(self.dataset.features(pair.loser))
            .map(|(a, b)| a - b)
            .collect())
    }

    /// Materializes the `P × d` matrix (row-major) if `P·d <= budget` entries.
    pub fn materialize(&self, budget: usize) -> Result<DensePairMatrix> {
        let d = self.dataset.dimension();
        let p = self.pairs.len();
        let size = p.saturating_mul(d);
        if size > budget {
            return Err(Error::InvalidParameter(format!(
                "dense pair matrix needs {size} entries, budget is {budget}"
            )));
        }
        let mut rows = Vec::with_capacity(size);
        for pair in self.pairs.as_slice() {
            let (a, b) = (self.dataset.features(pair.winner), self.dataset.features(pair.loser));
            rows.extend(a.iter().zip(b).map(|(x, y)| x - y));
        }
        Ok(DensePairMatrix { rows, n_pairs: p, dim: d })
    }
}

impl PairOperator for PairMatrix<'_> {
    fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    fn dim(&self) -> usize {
        self.dataset.dimension()
    }

    fn apply_into(&self, w: &[f64], out: &mut [f64]) {
        let scores: Vec<f64> = (0..self.dataset.len())
            .map(|i| dot(self.dataset.features(i), w))
            .collect();
        for (o, pair) in out.iter_mut().zip(self.pairs.as_slice()) {
            *o = scores[pair.winner] - scores[pair.loser];
        }
    }

    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        // Fold pair weights onto documents, then one pass over the rows.
        // Accumulation order is fixed: pairs in order, then documents in order.
        let mut coef = vec![0.0; self.dataset.len()];
        for (&vp, pair) in v.iter().zip(self.pairs.as_slice()) {
            coef[pair.winner] += vp;
            coef[pair.loser] -= vp;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &c) in coef.iter().enumerate() {
            if c != 0.0 {
                axpy(c, self.dataset.features(i), out);
            }
        }
    }

    fn frobenius_sq(&self) -> f64 {
        self.pairs
            .as_slice()
            .iter()
            .map(|pair| {
                self.dataset
                    .features(pair.winner)
                    .iter()
                    .zip(self.dataset.features(pair.loser))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Explicit row-major pair matrix, for small problems.
#[derive(Clone, Debug, PartialEq)]
pub struct DensePairMatrix {
    rows: Vec<f64>,
    n_pairs: usize,
    dim: usize,
}

impl DensePairMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        let n_pairs = rows.len();
        let mut flat = Vec::with_capacity(n_pairs * dim);
        for r in rows {
            check_len(dim, r.len())?;
            flat.extend(r);
        }
        Ok(DensePairMatrix { rows: flat, n_pairs, dim })
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.rows[p * self.dim..(p + 1) * self.dim]
    }
}

impl PairOperator for DensePairMatrix {
    fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_into(&self, w: &[f64], out: &mut [f64]) {
        for (p, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(p), w);
        }
    }

    fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (p, &vp) in v.iter().enumerate() {
            if vp != 0.0 {
                axpy(vp, self.row(p), out);
            }
        }
    }

    fn frobenius_sq(&self) -> f64 {
        self.rows.iter().map(|x| x * x).sum()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
