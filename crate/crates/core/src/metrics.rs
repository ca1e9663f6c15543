//! Ranking quality measures: P@k, AP/MAP, NDCG@k, the sparsity ratio and a
//! paired one-sided Student t-test.
//!
//! MAP binarizes grades (grade ≥ 1 is relevant). A query without relevant
//! documents has AP 0 and is left out of the NDCG mean.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::json::fmt_f64;
use crate::solver::{predict_scores, rank_order};

/// Relevance grades listed in ranked order (best-scored first).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryRanking {
    relevances: Vec<u32>,
}

impl QueryRanking {
    pub fn new(relevances_in_rank_order: Vec<u32>) -> Self {
        QueryRanking {
            relevances: relevances_in_rank_order,
        }
    }

    /// Orders `relevances` by descending `scores`, ties by input position.
    pub fn from_scores(relevances: &[u32], scores: &[f64]) -> Self {
        assert_eq!(relevances.len(), scores.len());
        QueryRanking::new(rank_order(scores).into_iter().map(|i| relevances[i]).collect())
    }

    pub fn relevances(&self) -> &[u32] {
        &self.relevances
    }

    pub fn len(&self) -> usize {
        self.relevances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevances.is_empty()
    }

    fn num_relevant(&self) -> usize {
        self.relevances.iter().filter(|&&r| is_relevant(r)).count()
    }
}

#[inline]
fn is_relevant(grade: u32) -> bool {
    grade >= 1
}

/// Relevant documents among the top `min(k, len)`, divided by `k`.
///
/// # Panics
/// If `k == 0`.
pub fn precision_at_k(r: &QueryRanking, k: usize) -> f64 {
    assert!(k >= 1, "precision cutoff must be at least 1");
    let hits = r.relevances.iter().take(k).filter(|&&g| is_relevant(g)).count();
    hits as f64 / k as f64
}

pub fn average_precision(r: &QueryRanking) -> f64 {
    let total = r.num_relevant();
    if total == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &g) in r.relevances.iter().enumerate() {
        if is_relevant(g) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / total as f64
}

pub fn mean_average_precision(rankings: &[QueryRanking]) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::Empty("no queries to average"));
    }
    Ok(rankings.iter().map(average_precision).sum::<f64>() / rankings.len() as f64)
}

/// `Σ_{i ≤ k} (2^{r_i} - 1) / log₂(i + 1)` over the first `min(k, len)` grades.
pub fn dcg_at_k(grades: &[u32], k: usize) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// DCG@k over the ideal DCG@k; `None` when the ideal DCG is zero.
///
/// # Panics
/// If `k == 0`.
pub fn ndcg_at_k(r: &QueryRanking, k: usize) -> Option<f64> {
    assert!(k >= 1, "NDCG cutoff must be at least 1");
    let mut ideal = r.relevances.clone();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let z = dcg_at_k(&ideal, k);
    (z > 0.0).then(|| dcg_at_k(&r.relevances, k) / z)
}

/// Mean NDCG@k over the queries where it is defined (0 if none are).
pub fn mean_ndcg_at_k(rankings: &[QueryRanking], k: usize) -> f64 {
    let values: Vec<f64> = rankings.iter().filter_map(|r| ndcg_at_k(r, k)).collect();
    mean_or_zero(&values)
}

fn mean_or_zero(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Fraction of active features kept by the model.
pub fn sparsity_ratio(nonzero: usize, active: usize) -> Result<f64> {
    if active == 0 {
        return Err(Error::InvalidParameter("no active features".into()));
    }
    if nonzero > active {
        return Err(Error::InvalidParameter(format!(
            "{nonzero} nonzero weights exceed {active} active features"
        )));
    }
    Ok(nonzero as f64 / active as f64)
}

pub fn mean_sparsity_ratio(per_fold: &[f64]) -> Result<f64> {
    if per_fold.is_empty() {
        return Err(Error::Empty("no folds"));
    }
    Ok(per_fold.iter().sum::<f64>() / per_fold.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t_statistic: f64,
    pub p_value: f64,
}

/// Tests `H₁: mean(a - b) < 0`, i.e. that `a` is worse than `b`.
///
/// All-zero differences give `p = 1`. Constant nonzero differences give
/// `p = 0` when negative and `p = 1` when positive.
pub fn paired_one_sided_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidParameter("t-test needs at least two pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        let (t_statistic, p_value) = if mean < 0.0 {
            (f64::NEG_INFINITY, 0.0)
        } else if mean > 0.0 {
            (f64::INFINITY, 1.0)
        } else {
            (0.0, 1.0)
        };
        return Ok(TTest { t_statistic, p_value });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(TTest {
        t_statistic: t,
        p_value: dist.cdf(t),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryEval {
    pub query_id: u64,
    pub ap: f64,
    pub ndcg: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_query: Vec<QueryEval>,
    pub map: f64,
    pub mean_ndcg_at_k: f64,
    pub k: usize,
    pub sparsity_ratio: f64,
    pub nonzero_features: usize,
    pub active_features: usize,
}

impl EvalReport {
    pub fn per_query_ap(&self) -> Vec<f64> {
        self.per_query.iter().map(|q| q.ap).collect()
    }

    /// `qid,ap,ndcg@k`, one row per query in dataset order. NDCG is left
    /// empty for queries without relevant documents.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "qid,ap,ndcg@{}", self.k)?;
        for q in &self.per_query {
            let ndcg = q.ndcg.map(fmt_f64).unwrap_or_default();
            writeln!(out, "{},{},{}", q.query_id, fmt_f64(q.ap), ndcg)?;
        }
        Ok(())
    }
}

/// Scores every query of `dataset` with `weights` and computes the report.
/// `active_features` is the sparsity-ratio denominator (taken from the
/// training split); `zero_threshold` decides which weights count as kept.
pub fn evaluate(
    weights: &[f64],
    dataset: &Dataset,
    k: usize,
    active_features: usize,
    zero_threshold: f64,
) -> Result<EvalReport> {
    if k == 0 {
        return Err(Error::InvalidParameter("NDCG cutoff must be at least 1".into()));
    }
    let scores = predict_scores(weights, dataset)?;
    let mut per_query = Vec::with_capacity(dataset.num_queries());
    let mut rankings = Vec::with_capacity(dataset.num_queries());
    for q in dataset.queries() {
        let ranking = QueryRanking::from_scores(
            &dataset.relevances()[q.range.clone()],
            &scores[q.range.clone()],
        );
        per_query.push(QueryEval {
            query_id: q.query_id,
            ap: average_precision(&ranking),
            ndcg: ndcg_at_k(&ranking, k),
        });
        rankings.push(ranking);
    }
    let map = mean_average_precision(&rankings)?;
    let nonzero = weights.iter().filter(|w| w.abs() > zero_threshold).count();
    Ok(EvalReport {
        per_query,
        map,
        mean_ndcg_at_k: mean_ndcg_at_k(&rankings, k),
        k,
        sparsity_ratio: sparsity_ratio(nonzero, active_features)?,
        nonzero_features: nonzero,
        active_features,
    })
}
