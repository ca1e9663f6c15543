use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sparserank"));
    cmd.env_remove("SPARSERANK_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "synth", "--queries", "40", "--docs-per-query", "10", "--dim", "12", "--informative", "3", "--seed", "5",
        "--out", s(dir),
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn nonzero(model: &Path) -> Vec<usize> {
    let v: Value = serde_json::from_str(&fs::read_to_string(model).unwrap()).unwrap();
    let mut ids: Vec<usize> = v["weights"]
        .as_object()
        .unwrap()
        .iter()
        .filter(|(_, w)| w.as_f64().unwrap().abs() > 1e-10)
        .map(|(k, _)| k.parse().unwrap())
        .collect();
    ids.sort_unstable();
    ids
}

#[test]
fn train_writes_model_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let out = run(&["train", "--data", s(&fixture("eval_data.txt")), "--penalty", "l1", "--c", "1", "--out", s(&model)]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().next().unwrap().starts_with("config {"));
    assert!(stdout.contains("nonzero="));
    assert!(model.is_file());
}

#[test]
fn bad_flags_exit_2() {
    let out = run(&["train", "--penalty", "l1", "--c", "1"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&run(&["train", "--data", "x", "--penalty", "l1", "--c", "1", "--bogus"])), 2);
    assert_eq!(code(&run(&["train", "--data", "x", "--penalty", "l3", "--c", "1"])), 2);
    assert_eq!(code(&run(&["train", "--data", "x", "--penalty", "l1", "--c", "-1"])), 2);
    assert_eq!(code(&run(&["train", "--data", "x", "--penalty", "lp", "--p", "1.5", "--c", "1"])), 2);
    assert_eq!(code(&run(&["compare", "only-one"])), 2);
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "1 qid:1 1:0.5\nnot a line\n").unwrap();
    assert_eq!(code(&run(&["train", "--data", s(&bad), "--penalty", "l1", "--c", "1"])), 3);
    assert_eq!(code(&run(&["train", "--data", "/nonexistent.txt", "--penalty", "l1", "--c", "1"])), 3);
    assert_eq!(code(&run(&["cv", "--dir", s(dir.path()), "--penalty", "l1", "--out", s(&dir.path().join("o"))])), 3);

    let wide = dir.path().join("wide.txt");
    fs::write(&wide, "1 qid:1 1:0.5 7:1\n0 qid:1 1:0.1\n").unwrap();
    let eval = run(&["eval", "--model", s(&fixture("eval_model.json")), "--data", s(&wide)]);
    assert_eq!(code(&eval), 3);
}

#[test]
fn solver_failure_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let huge = dir.path().join("huge.txt");
    fs::write(&huge, "1 qid:1 1:1e300 2:1\n0 qid:1 1:-1e300 2:0\n").unwrap();
    let out = run(&["train", "--data", s(&huge), "--penalty", "l1", "--c", "1"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eval_matches_golden_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("q.csv");
    let out = run(&[
        "eval", "--model", s(&fixture("eval_model.json")), "--data", s(&fixture("eval_data.txt")), "--k", "3", "--out",
        s(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let got = fs::read_to_string(&csv).unwrap();
    let want = fs::read_to_string(fixture("eval_golden.csv")).unwrap();
    let got: Vec<Vec<&str>> = got.lines().map(|l| l.split(',').collect()).collect();
    let want: Vec<Vec<&str>> = want.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(got.len(), want.len());
    assert_eq!(got[0], want[0]);
    for (g, w) in got.iter().zip(&want).skip(1) {
        assert_eq!(g[0], w[0]);
        for (a, b) in g[1..].iter().zip(&w[1..]) {
            if b.is_empty() {
                assert!(a.is_empty());
            } else {
                let (a, b): (f64, f64) = (a.parse().unwrap(), b.parse().unwrap());
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn zero_model_ranks_in_file_order() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("zero.json");
    let text = fs::read_to_string(fixture("eval_model.json"))
        .unwrap()
        .replace("\"1\": 1.0, \"2\": 0.0, \"3\": -0.5", "\"1\": 0.0");
    fs::write(&model, text).unwrap();
    let out = run(&["eval", "--model", s(&model), "--data", s(&fixture("eval_data.txt"))]);
    assert_eq!(code(&out), 0);
    // file order: qid 7 -> [2,0,1,0,1], qid 9 -> no relevant, qid 12 -> [1,0,2,1]
    let ap7 = (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0;
    let ap12 = (1.0 + 2.0 / 3.0 + 3.0 / 4.0) / 3.0;
    let map = (ap7 + 0.0 + ap12) / 3.0;
    let stdout = String::from_utf8(out.stdout).unwrap();
    let line = stdout.lines().find(|l| l.starts_with("MAP ")).unwrap();
    let got: f64 = line[4..].parse().unwrap();
    assert!((got - map).abs() < 1e-12);
}

#[test]
fn planted_model_is_perfect_on_noiseless_data() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, &["--noise", "0"]);
    let truth: Value = serde_json::from_str(&fs::read_to_string(corpus.join("truth.json")).unwrap()).unwrap();
    let weights: Vec<String> = truth["weights"]
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(j, w)| format!("\"{}\": {}", j + 1, w.as_f64().unwrap()))
        .collect();
    let model = dir.path().join("oracle.json");
    fs::write(
        &model,
        format!(
            r#"{{"format":"sparserank-model/1","dimension":12,"c":1.0,"penalty":{{"penalty":{{"kind":"l1"}},"lambda":1.0}},"converged":true,"inner_iterations":0,"outer_iterations":0,"nonzero_count":3,"weights":{{{}}}}}"#,
            weights.join(",")
        ),
    )
    .unwrap();
    let out = run(&["eval", "--model", s(&model), "--data", s(&corpus.join("Fold1/test.txt"))]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("NDCG@10 1.0000000000000000e0"), "{stdout}");
    assert!(stdout.contains("MAP 1.0000000000000000e0"), "{stdout}");
}

#[test]
fn lp_is_no_denser_than_l1_at_same_c() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, &[]);
    let data = corpus.join("Fold1/train.txt");
    for c in ["0.01", "0.1", "1"] {
        let l1 = dir.path().join(format!("l1_{c}.json"));
        let lp = dir.path().join(format!("lp_{c}.json"));
        assert_eq!(code(&run(&["train", "--data", s(&data), "--penalty", "l1", "--c", c, "--out", s(&l1)])), 0);
        assert_eq!(
            code(&run(&["train", "--data", s(&data), "--penalty", "lp", "--p", "0.5", "--c", c, "--out", s(&lp)])),
            0
        );
        assert!(nonzero(&lp).len() <= nonzero(&l1).len(), "C={c}");
    }
}

#[test]
fn synth_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    synth(&a, &[]);
    synth(&b, &[]);
    for f in ["Fold1/train.txt", "Fold3/vali.txt", "Fold5/test.txt", "truth.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    let out = run(&[
        "synth", "--queries", "40", "--docs-per-query", "10", "--dim", "12", "--informative", "3", "--seed", "6",
        "--out", s(&c),
    ]);
    assert_eq!(code(&out), 0);
    assert_ne!(fs::read(a.join("Fold1/train.txt")).unwrap(), fs::read(c.join("Fold1/train.txt")).unwrap());
}

#[test]
fn synth_without_dead_features_uses_every_feature() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c");
    let out = run(&[
        "synth", "--queries", "20", "--docs-per-query", "8", "--dim", "6", "--informative", "6", "--seed", "1", "--out",
        s(&c),
    ]);
    assert_eq!(code(&out), 0);
    let text = fs::read_to_string(c.join("Fold1/train.txt")).unwrap();
    for j in 1..=6 {
        let key = format!(" {j}:");
        assert!(text.lines().any(|l| l.split(&key).nth(1).is_some_and(|v| !v.starts_with("0 ") && !v.starts_with("0\n"))));
    }
    assert_eq!(code(&run(&["synth", "--queries", "20", "--docs-per-query", "8", "--dim", "6", "--informative", "7", "--seed", "1", "--out", s(&c)])), 2);
}

#[test]
fn one_fold_cv_and_self_compare() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, &["--folds", "1"]);
    assert!(!corpus.join("Fold2").exists());
    let out_dir = dir.path().join("o");
    let out = run(&["cv", "--dir", s(&corpus), "--penalty", "mcp", "--c-grid", "0.01,0.1,1", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["folds"], 1);
    assert_eq!(summary["per_fold"].as_array().unwrap().len(), 1);

    let table = dir.path().join("t.csv");
    let cmp = run(&["compare", s(&out_dir), s(&out_dir), "--out", s(&table)]);
    assert_eq!(code(&cmp), 0, "{}", String::from_utf8_lossy(&cmp.stderr));
    let rows: Vec<String> = fs::read_to_string(&table).unwrap().lines().skip(1).map(String::from).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let status = r.split(',').nth(3).unwrap();
        assert!(status == "best" || status == "~", "{r}");
    }
}

#[test]
fn compare_rejects_different_query_sets() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    fs::write(a.join("per_query.csv"), "fold,qid,ap,ndcg@10\n1,1,0.5,0.5\n1,2,0.5,0.5\n").unwrap();
    fs::write(b.join("per_query.csv"), "fold,qid,ap,ndcg@10\n1,1,0.5,0.5\n1,3,0.5,0.5\n").unwrap();
    assert_eq!(code(&run(&["compare", s(&a), s(&b)])), 3);
}

#[test]
fn cv_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    synth(&corpus, &[]);
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let o = dir.path().join(format!("o{threads}"));
        let out = bin()
            .args(["cv", "--dir", s(&corpus), "--penalty", "log", "--c-grid", "0.01,0.1,1", "--out", s(&o)])
            .env("SPARSERANK_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        outputs.push(o);
    }
    for f in ["summary.json", "per_fold.csv", "per_query.csv", "model_fold1.json", "model_fold5.json"] {
        assert_eq!(fs::read(outputs[0].join(f)).unwrap(), fs::read(outputs[1].join(f)).unwrap(), "{f}");
    }
}

/// Noiseless planted data, 5 informative of 50 features: every fold's
/// selected ℓ1 model should keep exactly the planted features.
#[test]
fn l1_cv_recovers_planted_support() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    let out = run(&[
        "synth", "--queries", "100", "--docs-per-query", "20", "--dim", "50", "--informative", "5", "--noise", "0",
        "--seed", "1", "--out", s(&corpus),
    ]);
    assert_eq!(code(&out), 0);
    let truth: Value = serde_json::from_str(&fs::read_to_string(corpus.join("truth.json")).unwrap()).unwrap();
    let support: Vec<usize> = truth["support"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).collect();
    let o = dir.path().join("o");
    assert_eq!(code(&run(&["cv", "--dir", s(&corpus), "--penalty", "l1", "--out", s(&o)])), 0);

    // the path does pass through the planted support
    let summary: Value = serde_json::from_str(&fs::read_to_string(o.join("summary.json")).unwrap()).unwrap();
    for fold in summary["per_fold"].as_array().unwrap() {
        let sizes: Vec<u64> = fold["grid"].as_array().unwrap().iter().map(|g| g["nonzero_count"].as_u64().unwrap()).collect();
        assert!(sizes.contains(&5), "{sizes:?}");
    }
    let recovered: Vec<Vec<usize>> = (1..=5).map(|f| nonzero(&o.join(format!("model_fold{f}.json")))).collect();
    for (f, r) in recovered.iter().enumerate() {
        assert_eq!(r, &support, "fold {}", f + 1);
    }
}
