use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sparserank::pairs::DensePairMatrix;
use sparserank::solver::{
    fista_solve, lipschitz_constant, objective, squared_hinge_gradient, squared_hinge_loss,
};
use sparserank::synth::{generate, SynthConfig};
use sparserank::{
    Dataset, LipschitzMode, PairMatrix, PairOperator, Penalty, PenaltySpec, PreferencePairs, Problem,
    Sample, SolverConfig,
};

fn random_dataset(rng: &mut ChaCha8Rng, queries: usize, docs: usize, d: usize) -> Dataset {
    let mut samples = Vec::new();
    for q in 0..queries {
        for _ in 0..docs {
            samples.push(Sample {
                relevance: rng.random_range(0..3),
                query_id: q as u64 + 1,
                features: (0..d).map(|_| rng.sample(StandardNormal)).collect(),
                doc_id: None,
            });
        }
    }
    Dataset::from_samples(samples, Some(d)).unwrap()
}

fn dense_rows(ds: &Dataset, pairs: &PreferencePairs) -> Vec<Vec<f64>> {
    pairs
        .as_slice()
        .iter()
        .map(|p| {
            ds.features(p.winner)
                .iter()
                .zip(ds.features(p.loser))
                .map(|(a, b)| a - b)
                .collect()
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let ds = random_dataset(&mut rng, 4, 6, 7);
        let pairs = PreferencePairs::build(&ds);
        let op = PairMatrix::new(&ds, &pairs);
        let w: Vec<f64> = (0..7).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
        let g = squared_hinge_gradient(&op, &w).unwrap();
        let h = 1e-6;
        let fd: Vec<f64> = (0..7)
            .map(|j| {
                let mut a = w.clone();
                let mut b = w.clone();
                a[j] += h;
                b[j] -= h;
                (squared_hinge_loss(&op, &a).unwrap() - squared_hinge_loss(&op, &b).unwrap()) / (2.0 * h)
            })
            .collect();
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) / norm(&g).max(1e-12) < 1e-5);
    }
}

#[test]
fn matrix_free_operator_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let ds = random_dataset(&mut rng, 3, 8, 5);
        let pairs = PreferencePairs::build(&ds);
        let op = PairMatrix::new(&ds, &pairs);
        let rows = dense_rows(&ds, &pairs);
        let w: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..pairs.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let aw = op.apply(&w).unwrap();
        let atv = op.apply_transpose(&v).unwrap();
        for (p, row) in rows.iter().enumerate() {
            let expect: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
            assert!((aw[p] - expect).abs() < 1e-12);
        }
        for j in 0..5 {
            let expect: f64 = rows.iter().zip(&v).map(|(r, x)| r[j] * x).sum();
            assert!((atv[j] - expect).abs() < 1e-10);
        }
        // <Aw, v> = <w, Aᵀv>
        let lhs: f64 = aw.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = w.iter().zip(&atv).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        let fro: f64 = rows.iter().flatten().map(|x| x * x).sum();
        assert!((op.frobenius_sq() - fro).abs() < 1e-9 * fro);
    }
}

#[test]
fn lipschitz_bounds_gradient_quotient() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let ds = random_dataset(&mut rng, 5, 8, 6);
    let pairs = PreferencePairs::build(&ds);
    let op = PairMatrix::new(&ds, &pairs);
    for mode in [LipschitzMode::SumNorms, LipschitzMode::Spectral] {
        let l = lipschitz_constant(&op, mode).unwrap();
        for _ in 0..200 {
            let u: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let v: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let gu = squared_hinge_gradient(&op, &u).unwrap();
            let gv = squared_hinge_gradient(&op, &v).unwrap();
            let dg: Vec<f64> = gu.iter().zip(&gv).map(|(a, b)| a - b).collect();
            let dx: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
            assert!(norm(&dg) <= l * norm(&dx) * (1.0 + 1e-12));
        }
    }
}

/// Plain proximal gradient on a dense matrix.
fn ista(rows: &[Vec<f64>], d: usize, lambda: f64, l: f64) -> (Vec<f64>, usize) {
    let mut w = vec![0.0; d];
    for it in 1..=1_000_000 {
        let mut g = vec![0.0; d];
        for r in rows {
            let m: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum();
            let slack = (1.0 - m).max(0.0);
            for j in 0..d {
                g[j] -= 2.0 * slack * r[j];
            }
        }
        let next: Vec<f64> = (0..d)
            .map(|j| {
                let z = w[j] - g[j] / l;
                z.signum() * (z.abs() - lambda / l).max(0.0)
            })
            .collect();
        let change = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        w = next;
        if change < 1e-13 {
            return (w, it);
        }
    }
    (w, 1_000_000)
}

#[test]
fn fista_agrees_with_ista() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..5 {
        let d = 10;
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0) + 0.1).collect())
            .collect();
        let op = DensePairMatrix::from_rows(rows.clone(), d).unwrap();
        let problem = Problem::new(&op, LipschitzMode::SumNorms).unwrap();
        let spec = PenaltySpec::new(Penalty::L1, 3.0).unwrap();
        let cfg = SolverConfig {
            inner_tol: 1e-14,
            inner_max_iter: 200_000,
            ..SolverConfig::default()
        };
        let fast = fista_solve(&problem, &spec, &cfg, None).unwrap();
        let (slow, _) = ista(&rows, d, 3.0, problem.lipschitz());
        let fo = objective(&op, &spec, &fast.weights).unwrap();
        let so = objective(&op, &spec, &slow).unwrap();
        assert!((fo - so).abs() <= 1e-6 * so.abs().max(1.0), "{fo} vs {so}");
    }
}

#[test]
fn zero_solution_exactly_when_lambda_dominates_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let ds = random_dataset(&mut rng, 4, 8, 6);
    let pairs = PreferencePairs::build(&ds);
    let op = PairMatrix::new(&ds, &pairs);
    let problem = Problem::new(&op, LipschitzMode::SumNorms).unwrap();
    let g0 = squared_hinge_gradient(&op, &[0.0; 6]).unwrap();
    let lmax = g0.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let cfg = SolverConfig::default();
    let above = fista_solve(&problem, &PenaltySpec::new(Penalty::L1, lmax * 1.001).unwrap(), &cfg, None).unwrap();
    assert!(above.weights.iter().all(|w| *w == 0.0));
    let below = fista_solve(&problem, &PenaltySpec::new(Penalty::L1, lmax * 0.9).unwrap(), &cfg, None).unwrap();
    assert!(below.nonzero_count > 0);
}

#[test]
fn regularization_path_trades_loss_for_penalty() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let ds = random_dataset(&mut rng, 6, 8, 8);
    let pairs = PreferencePairs::build(&ds);
    let op = PairMatrix::new(&ds, &pairs);
    let problem = Problem::new(&op, LipschitzMode::SumNorms).unwrap();
    let cfg = SolverConfig {
        inner_tol: 1e-13,
        inner_max_iter: 100_000,
        ..SolverConfig::default()
    };
    let mut last: Option<(f64, f64)> = None;
    for lambda in [0.1, 0.3, 1.0, 3.0, 10.0, 30.0] {
        let fit = fista_solve(&problem, &PenaltySpec::new(Penalty::L1, lambda).unwrap(), &cfg, None).unwrap();
        let loss = squared_hinge_loss(&op, &fit.weights).unwrap();
        let l1: f64 = fit.weights.iter().map(|w| w.abs()).sum();
        if let Some((pl, pn)) = last {
            assert!(loss >= pl - 1e-6 * pl.max(1.0));
            assert!(l1 <= pn + 1e-6 * pn.max(1.0));
        }
        last = Some((loss, l1));
    }
}

#[test]
fn log_penalty_is_no_denser_than_l1_on_planted_data() {
    let corpus = generate(&SynthConfig {
        queries: 40,
        docs_per_query: 15,
        dim: 30,
        informative: 4,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let train = Dataset::concat(&corpus.parts).unwrap();
    let pairs = PreferencePairs::build(&train);
    let op = PairMatrix::new(&train, &pairs);
    let problem = Problem::new(&op, LipschitzMode::SumNorms).unwrap();
    let cfg = SolverConfig::default();
    for c in [0.01, 0.1] {
        let l1 = sparserank::solver::fit(&problem, &PenaltySpec::from_c(Penalty::L1, c).unwrap(), &cfg).unwrap();
        let log = sparserank::solver::fit(&problem, &PenaltySpec::from_c(Penalty::log(), c).unwrap(), &cfg).unwrap();
        assert!(log.nonzero_count <= l1.nonzero_count, "C={c}: {} > {}", log.nonzero_count, l1.nonzero_count);
        for j in 0..30 {
            if log.weights[j].abs() > cfg.zero_threshold {
                assert!(l1.weights[j].abs() > cfg.zero_threshold, "C={c}: feature {j}");
            }
        }
    }
}
