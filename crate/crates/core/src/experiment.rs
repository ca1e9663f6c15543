//! Cross-validation protocol.
//!
//! For every fold one model is trained per `C` on the training split, the
//! `C` with the best validation MAP is kept (ties go to the smaller `C`),
//! and that same model is scored on the test split. The test split is read
//! only after the choice is made.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{parse_letor_file, Dataset, FoldSpec};
use crate::error::{Error, Result};
use crate::json::{fmt_f64, to_string_precise};
use crate::metrics::{
    evaluate, mean_average_precision, mean_sparsity_ratio, paired_one_sided_t_test, EvalReport,
    QueryRanking,
};
use crate::pairs::{PairMatrix, PreferencePairs};
use crate::penalty::{Penalty, PenaltySpec};
use crate::solver::{fit, predict_scores, FitResult, Model, Problem, SolverConfig};

/// Significance level for method comparisons.
pub const SIGNIFICANCE: f64 = 0.05;

/// `{10^i : i = -4..=4}`.
pub fn default_c_grid() -> Vec<f64> {
    (-4..=4).map(|i| 10f64.powi(i)).collect()
}

/// Candidate values for the concave penalties' shape parameter, used only
/// when hyper-parameter search is switched on.
pub fn hyper_grid(penalty: &Penalty) -> Vec<Penalty> {
    match penalty {
        Penalty::Lp { .. } => [0.25, 0.5, 0.75].map(|p| Penalty::Lp { p }).to_vec(),
        Penalty::Log { .. } => [0.01, 0.1, 1.0].map(|epsilon| Penalty::Log { epsilon }).to_vec(),
        Penalty::Mcp { .. } => [1.5, 2.0, 3.0].map(|gamma| Penalty::Mcp { gamma }).to_vec(),
        other => vec![other.clone()],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub folds: Vec<FoldSpec>,
    pub c_grid: Vec<f64>,
    pub penalty: Penalty,
    /// Search the penalty's shape parameter together with `C`.
    pub hyper_search: bool,
    pub ndcg_k: usize,
    pub normalize: bool,
    pub solver: SolverConfig,
    /// Reserved for synthetic generators; the protocol itself is deterministic.
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(folds: Vec<FoldSpec>, penalty: Penalty) -> Self {
        ExperimentConfig {
            folds,
            c_grid: default_c_grid(),
            penalty,
            hyper_search: false,
            ndcg_k: 10,
            normalize: false,
            solver: SolverConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() {
            return Err(Error::InvalidParameter("C grid is empty".into()));
        }
        if !self.c_grid.iter().all(|c| *c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter("C values must be positive".into()));
        }
        if !self.c_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter("C grid must be strictly increasing".into()));
        }
        if self.ndcg_k == 0 {
            return Err(Error::InvalidParameter("NDCG cutoff must be at least 1".into()));
        }
        PenaltySpec::new(self.penalty.clone(), 1.0)?;
        self.solver.validate()
    }

    fn candidates(&self) -> Vec<Penalty> {
        if self.hyper_search {
            hyper_grid(&self.penalty)
        } else {
            vec![self.penalty.clone()]
        }
    }
}

/// Where a fold's three splits come from.
pub trait FoldSource: Sync {
    fn train(&self) -> Result<Dataset>;
    fn validation(&self) -> Result<Dataset>;
    fn test(&self) -> Result<Dataset>;
}

impl FoldSource for FoldSpec {
    fn train(&self) -> Result<Dataset> {
        parse_letor_file(&self.train_path)
    }

    fn validation(&self) -> Result<Dataset> {
        parse_letor_file(&self.validation_path)
    }

    fn test(&self) -> Result<Dataset> {
        parse_letor_file(&self.test_path)
    }
}

/// Splits held in memory.
#[derive(Clone, Debug)]
pub struct InMemoryFold {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

impl FoldSource for InMemoryFold {
    fn train(&self) -> Result<Dataset> {
        Ok(self.train.clone())
    }

    fn validation(&self) -> Result<Dataset> {
        Ok(self.validation.clone())
    }

    fn test(&self) -> Result<Dataset> {
        Ok(self.test.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub penalty: Penalty,
    pub validation_map: Option<f64>,
    pub nonzero_count: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub converged: bool,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub nonzero_count: usize,
    pub final_objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldOutcome {
    pub chosen_c: f64,
    pub chosen_penalty: Penalty,
    pub validation_map: f64,
    pub test_report: EvalReport,
    pub fit: FitSummary,
    pub grid: Vec<GridPoint>,
    pub model: Model,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSummary {
    pub per_fold: Vec<FoldOutcome>,
    pub mean_map: f64,
    pub mean_ndcg_at_k: f64,
    pub mean_sparsity_ratio: f64,
}

fn prepare(dataset: Dataset, dimension: usize, normalize: bool) -> Result<Dataset> {
    let ds = dataset.with_dimension(dimension)?;
    Ok(if normalize { ds.normalize_query_minmax() } else { ds })
}

fn map_of(weights: &[f64], dataset: &Dataset) -> Result<f64> {
    let scores = predict_scores(weights, dataset)?;
    let rankings: Vec<QueryRanking> = dataset
        .queries()
        .iter()
        .map(|q| QueryRanking::from_scores(&dataset.relevances()[q.range.clone()], &scores[q.range.clone()]))
        .collect();
    mean_average_precision(&rankings)
}

/// Trains over the grid, selects by validation MAP, then evaluates on test.
pub fn run_fold<S: FoldSource + ?Sized>(fold: &S, config: &ExperimentConfig) -> Result<FoldOutcome> {
    config.validate()?;
    let train = fold.train()?;
    let validation = fold.validation()?;
    let dimension = train.dimension().max(validation.dimension());
    let train = prepare(train, dimension, config.normalize)?;
    let validation = prepare(validation, dimension, config.normalize)?;

    let pairs = PreferencePairs::build(&train);
    let op = PairMatrix::new(&train, &pairs);
    let problem = Problem::new(&op, config.solver.lipschitz_mode)?;

    let jobs: Vec<(f64, Penalty)> = config
        .candidates()
        .into_iter()
        .flat_map(|p| config.c_grid.iter().map(move |&c| (c, p.clone())))
        .collect();
    let results: Vec<(GridPoint, Result<(FitResult, PenaltySpec)>)> = jobs
        .into_par_iter()
        .map(|(c, penalty)| {
            let attempt = PenaltySpec::from_c(penalty.clone(), c).and_then(|spec| {
                let result = fit(&problem, &spec, &config.solver)?;
                let vmap = map_of(&result.weights, &validation)?;
                Ok((result, spec, vmap))
            });
            match attempt {
                Ok((result, spec, vmap)) => (
                    GridPoint {
                        c,
                        penalty,
                        validation_map: Some(vmap),
                        nonzero_count: Some(result.nonzero_count),
                        error: None,
                    },
                    Ok((result, spec)),
                ),
                Err(e) => (
                    GridPoint {
                        c,
                        penalty,
                        validation_map: None,
                        nonzero_count: None,
                        error: Some(e.to_string()),
                    },
                    Err(e),
                ),
            }
        })
        .collect();

    // Strictly greater wins, so among equal MAPs the first job (smallest C,
    // then first candidate) is kept.
    let mut best: Option<usize> = None;
    for (i, (point, _)) in results.iter().enumerate() {
        if let Some(m) = point.validation_map {
            if best.is_none_or(|b| m > results[b].0.validation_map.unwrap()) {
                best = Some(i);
            }
        }
    }
    let Some(best) = best else {
        // A data problem shared by every grid point is reported as such.
        let mut errors = results.into_iter().filter_map(|(_, r)| r.err());
        let first = errors.next().expect("grid is non-empty");
        if first.is_data_error() {
            return Err(first);
        }
        return Err(Error::SolverFailed(format!("every grid point failed; first: {first}")));
    };
    let grid: Vec<GridPoint> = results.iter().map(|(p, _)| p.clone()).collect();
    let (chosen, fitted) = results.into_iter().nth(best).unwrap();
    let (result, spec) = fitted.expect("selected point succeeded");

    // Model is fixed from here on; only now is the test split read.
    let test = fold.test()?;
    let dimension = dimension.max(test.dimension());
    let test = prepare(test, dimension, config.normalize)?;
    let model = Model::from_fit(&result, spec, chosen.c);
    let scored = model.widened(dimension)?;
    let report = evaluate(
        &scored.weights,
        &test,
        config.ndcg_k,
        train.num_active_features(),
        config.solver.zero_threshold,
    )?;

    Ok(FoldOutcome {
        chosen_c: chosen.c,
        chosen_penalty: chosen.penalty,
        validation_map: chosen.validation_map.unwrap(),
        test_report: report,
        fit: FitSummary {
            converged: result.converged,
            inner_iterations: result.inner_iterations,
            outer_iterations: result.outer_iterations,
            nonzero_count: result.nonzero_count,
            final_objective: result.final_objective(),
        },
        grid,
        model,
    })
}

/// Runs every fold (concurrently when the ambient rayon pool allows) and
/// averages the per-fold test results.
pub fn run_folds<S: FoldSource>(folds: &[S], config: &ExperimentConfig) -> Result<ExperimentSummary> {
    if folds.is_empty() {
        return Err(Error::Empty("no folds"));
    }
    let per_fold = folds
        .par_iter()
        .map(|f| run_fold(f, config))
        .collect::<Result<Vec<_>>>()?;
    summarize(per_fold)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    run_folds(&config.folds, config)
}

/// [`run_experiment`] on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(config: &ExperimentConfig, threads: usize) -> Result<ExperimentSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    pool.install(|| run_experiment(config))
}

pub fn summarize(per_fold: Vec<FoldOutcome>) -> Result<ExperimentSummary> {
    if per_fold.is_empty() {
        return Err(Error::Empty("no folds"));
    }
    let n = per_fold.len() as f64;
    let mean_map = per_fold.iter().map(|f| f.test_report.map).sum::<f64>() / n;
    let mean_ndcg_at_k = per_fold.iter().map(|f| f.test_report.mean_ndcg_at_k).sum::<f64>() / n;
    let srs: Vec<f64> = per_fold.iter().map(|f| f.test_report.sparsity_ratio).collect();
    Ok(ExperimentSummary {
        mean_sparsity_ratio: mean_sparsity_ratio(&srs)?,
        mean_map,
        mean_ndcg_at_k,
        per_fold,
    })
}

/// `Fold3/train.txt` rather than the full path, so that reports do not
/// depend on where the corpus lives.
fn short_path(p: &Path) -> String {
    let parts: Vec<_> = p.components().rev().take(2).collect();
    parts
        .iter()
        .rev()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

#[derive(Serialize)]
struct FoldRecord<'a> {
    fold: usize,
    train: String,
    validation: String,
    test: String,
    chosen_c: f64,
    chosen_penalty: &'a Penalty,
    validation_map: f64,
    test_map: f64,
    test_ndcg_at_k: f64,
    sparsity_ratio: f64,
    nonzero_features: usize,
    active_features: usize,
    fit: &'a FitSummary,
    grid: &'a [GridPoint],
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    c_grid: &'a [f64],
    penalty: &'a Penalty,
    hyper_search: bool,
    ndcg_k: usize,
    normalize: bool,
    solver: &'a SolverConfig,
    seed: u64,
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    config: ConfigEcho<'a>,
    folds: usize,
    mean_map: f64,
    mean_ndcg_at_k: f64,
    mean_sparsity_ratio: f64,
    per_fold: Vec<FoldRecord<'a>>,
}

/// Writes `summary.json`, `per_fold.csv`, `per_query.csv` and
/// `model_fold<N>.json` (folds numbered from 1) into `dir`.
///
/// `per_fold.csv` columns: `fold,chosen_c,validation_map,test_map,
/// test_ndcg@k,sparsity_ratio,nonzero_features,active_features,converged,
/// inner_iterations,outer_iterations`. `per_query.csv` columns:
/// `fold,qid,ap,ndcg@k`. Every float has 17 significant digits.
pub fn write_outputs(summary: &ExperimentSummary, config: &ExperimentConfig, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let k = config.ndcg_k;
    let write = |name: &str, text: &str| -> Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };

    let records = summary
        .per_fold
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let spec = config.folds.get(i);
            let show = |p: Option<&PathBuf>| p.map(|p| short_path(p)).unwrap_or_default();
            FoldRecord {
                fold: i + 1,
                train: show(spec.map(|s| &s.train_path)),
                validation: show(spec.map(|s| &s.validation_path)),
                test: show(spec.map(|s| &s.test_path)),
                chosen_c: f.chosen_c,
                chosen_penalty: &f.chosen_penalty,
                validation_map: f.validation_map,
                test_map: f.test_report.map,
                test_ndcg_at_k: f.test_report.mean_ndcg_at_k,
                sparsity_ratio: f.test_report.sparsity_ratio,
                nonzero_features: f.test_report.nonzero_features,
                active_features: f.test_report.active_features,
                fit: &f.fit,
                grid: &f.grid,
            }
        })
        .collect();
    let doc = SummaryDocument {
        config: ConfigEcho {
            c_grid: &config.c_grid,
            penalty: &config.penalty,
            hyper_search: config.hyper_search,
            ndcg_k: k,
            normalize: config.normalize,
            solver: &config.solver,
            seed: config.seed,
        },
        folds: summary.per_fold.len(),
        mean_map: summary.mean_map,
        mean_ndcg_at_k: summary.mean_ndcg_at_k,
        mean_sparsity_ratio: summary.mean_sparsity_ratio,
        per_fold: records,
    };
    write("summary.json", &to_string_precise(&doc).expect("summary serializes"))?;

    let mut per_fold = format!(
        "fold,chosen_c,validation_map,test_map,test_ndcg@{k},sparsity_ratio,nonzero_features,active_features,converged,inner_iterations,outer_iterations\n"
    );
    let mut per_query = format!("fold,qid,ap,ndcg@{k}\n");
    for (i, f) in summary.per_fold.iter().enumerate() {
        let r = &f.test_report;
        let _ = writeln!(
            per_fold,
            "{},{},{},{},{},{},{},{},{},{},{}",
            i + 1,
            fmt_f64(f.chosen_c),
            fmt_f64(f.validation_map),
            fmt_f64(r.map),
            fmt_f64(r.mean_ndcg_at_k),
            fmt_f64(r.sparsity_ratio),
            r.nonzero_features,
            r.active_features,
            f.fit.converged,
            f.fit.inner_iterations,
            f.fit.outer_iterations
        );
        for q in &r.per_query {
            let _ = writeln!(
                per_query,
                "{},{},{},{}",
                i + 1,
                q.query_id,
                fmt_f64(q.ap),
                q.ndcg.map(fmt_f64).unwrap_or_default()
            );
        }
        f.model.save(dir.join(format!("model_fold{}.json", i + 1)))?;
    }
    write("per_fold.csv", &per_fold)?;
    write("per_query.csv", &per_query)?;
    Ok(())
}

/// Per-query test metrics of one method, keyed by `(fold, qid)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodResults {
    pub name: String,
    pub k: usize,
    pub per_query: BTreeMap<(usize, u64), (f64, Option<f64>)>,
}

impl MethodResults {
    pub fn from_summary(name: impl Into<String>, summary: &ExperimentSummary) -> Self {
        let mut per_query = BTreeMap::new();
        let mut k = 0;
        for (i, f) in summary.per_fold.iter().enumerate() {
            k = f.test_report.k;
            for q in &f.test_report.per_query {
                per_query.insert((i + 1, q.query_id), (q.ap, q.ndcg));
            }
        }
        MethodResults {
            name: name.into(),
            k,
            per_query,
        }
    }

    /// Reads `per_query.csv` from an experiment output directory.
    pub fn load(name: impl Into<String>, dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join("per_query.csv");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let source = path.display().to_string();
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.clone(),
            line,
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
        let k = header
            .strip_prefix("fold,qid,ap,ndcg@")
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| parse_err(1, format!("unexpected header {header:?}")))?;
        let mut per_query = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(parse_err(lineno, "expected 4 columns".into()));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(lineno, format!("bad number {s:?}")));
            let fold = cols[0].parse().map_err(|_| parse_err(lineno, "bad fold".into()))?;
            let qid = cols[1].parse().map_err(|_| parse_err(lineno, "bad qid".into()))?;
            let ap = num(cols[2])?;
            let ndcg = if cols[3].is_empty() { None } else { Some(num(cols[3])?) };
            per_query.insert((fold, qid), (ap, ndcg));
        }
        Ok(MethodResults {
            name: name.into(),
            k,
            per_query,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Best,
    /// Not significantly worse than the best.
    Equivalent { p_value: f64 },
    /// Significantly worse; `decrease_percent = 100·(best - mean)/best`.
    Worse { decrease_percent: f64, p_value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub method: String,
    pub mean: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    /// `metric,method,mean,status,decrease_percent,p_value`; `~` marks
    /// equivalence to the best method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,method,mean,status,decrease_percent,p_value\n");
        for r in &self.rows {
            let (status, dec, p) = match &r.verdict {
                Verdict::Best => ("best", String::new(), String::new()),
                Verdict::Equivalent { p_value } => ("~", String::new(), fmt_f64(*p_value)),
                Verdict::Worse {
                    decrease_percent,
                    p_value,
                } => ("worse", fmt_f64(*decrease_percent), fmt_f64(*p_value)),
            };
            let _ = writeln!(out, "{},{},{},{status},{dec},{p}", r.metric, r.method, fmt_f64(r.mean));
        }
        out
    }
}

/// For MAP and NDCG@k: finds the method with the highest mean over the
/// pooled test queries, then tests every other method against it with the
/// paired one-sided t-test.
pub fn compare_methods(methods: &[MethodResults]) -> Result<Comparison> {
    if methods.len() < 2 {
        return Err(Error::InvalidParameter("need at least two methods to compare".into()));
    }
    let keys: Vec<&(usize, u64)> = methods[0].per_query.keys().collect();
    for m in &methods[1..] {
        if m.per_query.len() != keys.len() || !m.per_query.keys().eq(keys.iter().copied()) {
            return Err(Error::QueryMismatch(format!(
                "{} and {} were evaluated on different queries",
                methods[0].name, m.name
            )));
        }
        if m.k != methods[0].k {
            return Err(Error::QueryMismatch(format!(
                "NDCG cutoffs differ ({} vs {})",
                methods[0].k, m.k
            )));
        }
    }

    let ap: Vec<Vec<f64>> = methods.iter().map(|m| m.per_query.values().map(|v| v.0).collect()).collect();
    let ndcg_keys: Vec<&(usize, u64)> = keys
        .iter()
        .copied()
        .filter(|k| methods[0].per_query[*k].1.is_some())
        .collect();
    let mut ndcg = Vec::with_capacity(methods.len());
    for m in methods {
        let col: Option<Vec<f64>> = ndcg_keys.iter().map(|k| m.per_query[*k].1).collect();
        let defined = m.per_query.values().filter(|v| v.1.is_some()).count();
        match col {
            Some(col) if defined == ndcg_keys.len() => ndcg.push(col),
            _ => {
                return Err(Error::QueryMismatch(format!(
                    "{} has NDCG defined on a different set of queries",
                    m.name
                )))
            }
        }
    }

    let mut rows = Vec::new();
    rows.extend(compare_metric("MAP", methods, &ap)?);
    rows.extend(compare_metric(&format!("NDCG@{}", methods[0].k), methods, &ndcg)?);
    Ok(Comparison { rows })
}

fn compare_metric(metric: &str, methods: &[MethodResults], values: &[Vec<f64>]) -> Result<Vec<ComparisonRow>> {
    let means: Vec<f64> = values
        .iter()
        .map(|v| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 })
        .collect();
    let best = (0..means.len()).fold(0, |b, i| if means[i] > means[b] { i } else { b });
    let mut rows = Vec::with_capacity(methods.len());
    for (i, m) in methods.iter().enumerate() {
        let verdict = if i == best {
            Verdict::Best
        } else {
            let test = paired_one_sided_t_test(&values[i], &values[best])?;
            if test.p_value < SIGNIFICANCE {
                let decrease_percent = if means[best] != 0.0 {
                    100.0 * (means[best] - means[i]) / means[best]
                } else {
                    0.0
                };
                Verdict::Worse {
                    decrease_percent,
                    p_value: test.p_value,
                }
            } else {
                Verdict::Equivalent { p_value: test.p_value }
            }
        };
        rows.push(ComparisonRow {
            metric: metric.to_owned(),
            method: m.name.clone(),
            mean: means[i],
            verdict,
        });
    }
    Ok(rows)
}
