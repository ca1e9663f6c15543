//! `sparserank`: train, evaluate and cross-validate sparse pairwise rankers.
//!
//! Exit codes: 0 success, 2 bad flags, 3 data errors, 4 solver failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sparserank::data::parse_letor_file_with_dimension;
use sparserank::experiment::{
    compare_methods, default_c_grid, run_experiment, write_outputs, ExperimentConfig, MethodResults,
    Verdict,
};
use sparserank::json::fmt_f64;
use sparserank::metrics::evaluate;
use sparserank::pairs::{PairMatrix, PreferencePairs};
use sparserank::solver::fit;
use sparserank::synth::{generate, SynthConfig};
use sparserank::{
    parse_letor_file, Error, FoldSpec, LipschitzMode, Model, Penalty, PenaltySpec, Problem, SolverConfig,
};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_SOLVER: u8 = 4;

#[derive(Parser)]
#[command(name = "sparserank", version, about = "Sparse pairwise learning to rank")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "SPARSERANK_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model on a LETOR file.
    Train(TrainArgs),
    /// Score a LETOR file with a saved model.
    Eval(EvalArgs),
    /// Cross-validate over a Fold1..FoldN directory.
    Cv(CvArgs),
    /// Compare the per-query results of two or more `cv` output directories.
    Compare(CompareArgs),
    /// Write a synthetic corpus with a planted sparse scorer.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyKind {
    L1,
    Lp,
    Log,
    Mcp,
}

#[derive(Clone, Copy, ValueEnum)]
enum LipschitzArg {
    SumNorms,
    Spectral,
}

#[derive(Args)]
struct PenaltyArgs {
    #[arg(long, value_enum)]
    penalty: PenaltyKind,
    /// Exponent of the ℓp penalty.
    #[arg(long, default_value_t = sparserank::penalty::DEFAULT_P)]
    p: f64,
    /// Smoothing of the log penalty.
    #[arg(long, default_value_t = sparserank::penalty::DEFAULT_EPSILON)]
    eps: f64,
    /// Concavity of MCP.
    #[arg(long, default_value_t = sparserank::penalty::DEFAULT_GAMMA)]
    gamma: f64,
}

impl PenaltyArgs {
    fn penalty(&self) -> Penalty {
        match self.penalty {
            PenaltyKind::L1 => Penalty::L1,
            PenaltyKind::Lp => Penalty::Lp { p: self.p },
            PenaltyKind::Log => Penalty::Log { epsilon: self.eps },
            PenaltyKind::Mcp => Penalty::Mcp { gamma: self.gamma },
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "sum-norms")]
    lipschitz: LipschitzArg,
    #[arg(long, default_value_t = SolverConfig::default().inner_tol)]
    tol: f64,
    #[arg(long, default_value_t = SolverConfig::default().inner_max_iter)]
    max_iter: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            inner_tol: self.tol,
            inner_max_iter: self.max_iter,
            lipschitz_mode: match self.lipschitz {
                LipschitzArg::SumNorms => LipschitzMode::SumNorms,
                LipschitzArg::Spectral => LipschitzMode::Spectral,
            },
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    penalty: PenaltyArgs,
    /// Loss weight; the penalty is scaled by 1/C.
    #[arg(long)]
    c: f64,
    /// Per-query min-max scaling of every feature.
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// NDCG cutoff.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    normalize: bool,
    /// Per-query CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    dir: PathBuf,
    #[command(flatten)]
    penalty: PenaltyArgs,
    /// Comma-separated C values.
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    normalize: bool,
    /// Also search the penalty's shape parameter.
    #[arg(long)]
    hyper_search: bool,
    #[arg(long, default_value = "cv_out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Output directories of `cv` runs.
    #[arg(required = true, num_args = 2..)]
    dirs: Vec<PathBuf>,
    /// Write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    queries: usize,
    #[arg(long)]
    docs_per_query: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    informative: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    dead: usize,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CmdResult = Result<(), Failure>;

fn usage<T>(r: sparserank::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Usage(e.to_string()))
}

fn echo(config: serde_json::Value) {
    println!("config {config}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let outcome = match &cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Cv(a) => cv(a),
        Command::Compare(a) => compare(a),
        Command::Synth(a) => synth(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { EXIT_DATA } else { EXIT_SOLVER })
        }
    }
}

fn train(a: &TrainArgs) -> CmdResult {
    let spec = usage(PenaltySpec::from_c(a.penalty.penalty(), a.c))?;
    let solver = a.solver.config();
    usage(solver.validate())?;
    echo(json!({
        "command": "train",
        "data": a.data,
        "penalty": spec.penalty,
        "c": a.c,
        "lambda": spec.lambda,
        "normalize": a.normalize,
        "solver": solver,
        "out": a.out,
    }));

    let mut data = parse_letor_file(&a.data)?;
    if a.normalize {
        data = data.normalize_query_minmax();
    }
    let pairs = PreferencePairs::build(&data);
    println!(
        "data samples={} queries={} features={} active={} pairs={}",
        data.len(),
        data.num_queries(),
        data.dimension(),
        data.num_active_features(),
        pairs.len()
    );
    let op = PairMatrix::new(&data, &pairs);
    let problem = Problem::new(&op, solver.lipschitz_mode)?;
    let result = fit(&problem, &spec, &solver)?;
    let trace = &result.objective_trace;
    println!(
        "fit lipschitz={} outer={} inner={} converged={} objective_first={} objective_last={} nonzero={}",
        fmt_f64(result.lipschitz),
        result.outer_iterations,
        result.inner_iterations,
        result.converged,
        trace.first().map_or(String::new(), |v| fmt_f64(*v)),
        trace.last().map_or(String::new(), |v| fmt_f64(*v)),
        result.nonzero_count
    );
    Model::from_fit(&result, spec, a.c).save(&a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn eval(a: &EvalArgs) -> CmdResult {
    if a.k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    echo(json!({
        "command": "eval",
        "model": a.model,
        "data": a.data,
        "k": a.k,
        "normalize": a.normalize,
        "out": a.out,
    }));
    let model = Model::load(&a.model)?;
    // The data may omit trailing features the model knows; it may not add any.
    let mut data = parse_letor_file_with_dimension(&a.data, Some(model.dimension()))?;
    if a.normalize {
        data = data.normalize_query_minmax();
    }
    let report = evaluate(&model.weights, &data, a.k, data.num_active_features(), SolverConfig::default().zero_threshold)?;
    println!("MAP {}", fmt_f64(report.map));
    println!("NDCG@{} {}", a.k, fmt_f64(report.mean_ndcg_at_k));
    println!("nonzero {} of {} active", report.nonzero_features, report.active_features);
    if let Some(out) = &a.out {
        let file = std::fs::File::create(out).map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })?;
        report.write_csv(std::io::BufWriter::new(file)).map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cv(a: &CvArgs) -> CmdResult {
    let folds = FoldSpec::discover(&a.dir)?;
    let mut config = ExperimentConfig::new(folds, a.penalty.penalty());
    config.c_grid = a.c_grid.clone().unwrap_or_else(default_c_grid);
    config.ndcg_k = a.k;
    config.normalize = a.normalize;
    config.hyper_search = a.hyper_search;
    config.solver = a.solver.config();
    config.seed = a.seed;
    usage(config.validate())?;
    echo(json!({
        "command": "cv",
        "dir": a.dir,
        "folds": config.folds.len(),
        "penalty": config.penalty,
        "c_grid": config.c_grid,
        "hyper_search": config.hyper_search,
        "k": config.ndcg_k,
        "normalize": config.normalize,
        "solver": config.solver,
        "seed": config.seed,
        "out": a.out,
    }));

    let summary = run_experiment(&config)?;
    for (i, f) in summary.per_fold.iter().enumerate() {
        println!(
            "fold {} C={} validation_map={} test_map={} test_ndcg@{}={} sparsity_ratio={}",
            i + 1,
            fmt_f64(f.chosen_c),
            fmt_f64(f.validation_map),
            fmt_f64(f.test_report.map),
            config.ndcg_k,
            fmt_f64(f.test_report.mean_ndcg_at_k),
            fmt_f64(f.test_report.sparsity_ratio)
        );
    }
    println!(
        "mean test_map={} test_ndcg@{}={} sparsity_ratio={}",
        fmt_f64(summary.mean_map),
        config.ndcg_k,
        fmt_f64(summary.mean_ndcg_at_k),
        fmt_f64(summary.mean_sparsity_ratio)
    );
    write_outputs(&summary, &config, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn compare(a: &CompareArgs) -> CmdResult {
    echo(json!({ "command": "compare", "dirs": a.dirs, "out": a.out }));
    let methods = a
        .dirs
        .iter()
        .map(|d| MethodResults::load(d.display().to_string(), d))
        .collect::<sparserank::Result<Vec<_>>>()?;
    let table = compare_methods(&methods)?;
    for row in &table.rows {
        let mark = match &row.verdict {
            Verdict::Best => "best".to_owned(),
            Verdict::Equivalent { p_value } => format!("~ (p={})", fmt_f64(*p_value)),
            Verdict::Worse {
                decrease_percent,
                p_value,
            } => format!("-{}% (p={})", fmt_f64(*decrease_percent), fmt_f64(*p_value)),
        };
        println!("{} {} mean={} {mark}", row.metric, row.method, fmt_f64(row.mean));
    }
    if let Some(out) = &a.out {
        write_file(out, &table.to_csv())?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn synth(a: &SynthArgs) -> CmdResult {
    let config = SynthConfig {
        queries: a.queries,
        docs_per_query: a.docs_per_query,
        dim: a.dim,
        informative: a.informative,
        dead: a.dead,
        noise: a.noise,
        folds: a.folds,
        seed: a.seed,
    };
    usage(config.validate())?;
    echo(json!({ "command": "synth", "synth": config, "out": a.out }));
    let corpus = generate(&config)?;
    corpus.write(&a.out)?;
    println!(
        "support {}",
        corpus.support().iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(",")
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn write_file(path: &Path, text: &str) -> sparserank::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}
