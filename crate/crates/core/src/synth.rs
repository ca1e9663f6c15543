//! Synthetic LETOR-format corpora with a planted sparse scorer.
//!
//! Features are standard normal. Each query's documents are scored by
//! `w*ᵀx + noise·N(0,1)` and graded by score quantile: the top 10% get
//! grade 2, the next 20% grade 1, the rest 0. `w*` has `informative`
//! nonzero entries of magnitude 1 with random signs at random positions;
//! the last `dead` features are identically zero.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::json::to_string_precise;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub queries: usize,
    pub docs_per_query: usize,
    pub dim: usize,
    pub informative: usize,
    pub dead: usize,
    pub noise: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            queries: 100,
            docs_per_query: 20,
            dim: 50,
            informative: 5,
            dead: 0,
            noise: 0.5,
            folds: 5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.informative == 0 || self.informative + self.dead > self.dim {
            return bad("need 1 <= informative and informative + dead <= dim");
        }
        if self.docs_per_query < 2 {
            return bad("need at least two documents per query");
        }
        if self.folds == 0 {
            return bad("need at least one fold");
        }
        if self.queries < self.parts() {
            return bad("need at least one query per data part");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be finite and non-negative");
        }
        Ok(())
    }

    /// Number of disjoint query subsets the folds rotate over.
    pub fn parts(&self) -> usize {
        self.folds.max(3)
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    /// Disjoint query subsets, in the role of LETOR's `S1..Sn`.
    pub parts: Vec<Dataset>,
    pub truth: Vec<f64>,
    pub config: SynthConfig,
}

pub fn generate(config: &SynthConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let live = config.dim - config.dead;

    let mut truth = vec![0.0; config.dim];
    for j in sample(&mut rng, live, config.informative).into_vec() {
        truth[j] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    }

    let n_parts = config.parts();
    let mut parts: Vec<Vec<Sample>> = vec![Vec::new(); n_parts];
    let n = config.docs_per_query;
    let top = ((n as f64) * 0.1).ceil() as usize;
    let mid = ((n as f64) * 0.3).ceil() as usize;
    for q in 0..config.queries {
        let mut docs: Vec<(Vec<f64>, f64)> = (0..n)
            .map(|_| {
                let mut x: Vec<f64> = (0..live).map(|_| rng.sample(StandardNormal)).collect();
                x.resize(config.dim, 0.0);
                let noise: f64 = rng.sample(StandardNormal);
                let score = x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + config.noise * noise;
                (x, score)
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| docs[b].1.total_cmp(&docs[a].1));
        let mut grades = vec![0u32; n];
        for (rank, &i) in order.iter().enumerate() {
            grades[i] = if rank < top {
                2
            } else if rank < mid {
                1
            } else {
                0
            };
        }
        let part = q * n_parts / config.queries;
        for (i, (x, _)) in docs.drain(..).enumerate() {
            parts[part].push(Sample {
                relevance: grades[i],
                query_id: q as u64 + 1,
                features: x,
                doc_id: None,
            });
        }
    }
    let parts = parts
        .into_iter()
        .map(|s| Dataset::from_samples(s, Some(config.dim)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticCorpus {
        parts,
        truth,
        config: config.clone(),
    })
}

impl SyntheticCorpus {
    /// Indices of the planted nonzero weights.
    pub fn support(&self) -> Vec<usize> {
        (0..self.truth.len()).filter(|&j| self.truth[j] != 0.0).collect()
    }

    /// `(train, validation, test)` part indices of fold `i`: test is the
    /// part just before `i` (cyclically), validation the one before that.
    pub fn fold_parts(&self, i: usize) -> (Vec<usize>, usize, usize) {
        let s = self.parts.len();
        let test = (i + s - 1) % s;
        let vali = (i + s - 2) % s;
        let train = (0..s).map(|k| (i + k) % s).take(s - 2).collect();
        (train, vali, test)
    }

    /// Writes `Fold1..FoldN/{train,vali,test}.txt` and `truth.json`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for i in 0..self.config.folds {
            let fold_dir = dir.join(format!("Fold{}", i + 1));
            fs::create_dir_all(&fold_dir).map_err(|e| Error::io(&fold_dir, e))?;
            let (train, vali, test) = self.fold_parts(i);
            let train: Vec<Dataset> = train.iter().map(|&k| self.parts[k].clone()).collect();
            Dataset::concat(&train)?.save_letor(fold_dir.join("train.txt"))?;
            self.parts[vali].save_letor(fold_dir.join("vali.txt"))?;
            self.parts[test].save_letor(fold_dir.join("test.txt"))?;
        }
        #[derive(Serialize)]
        struct Truth<'a> {
            config: &'a SynthConfig,
            support: Vec<usize>,
            weights: &'a [f64],
        }
        let truth = Truth {
            config: &self.config,
            support: self.support().iter().map(|j| j + 1).collect(),
            weights: &self.truth,
        };
        let path = dir.join("truth.json");
        fs::write(&path, to_string_precise(&truth).expect("truth serializes"))
            .map_err(|e| Error::io(&path, e))
    }
}
