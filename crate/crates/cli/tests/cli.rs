use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pipeforge::pipeline::parse_pipeline;
use pipeforge::Dataset;

fn pipeforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pipeforge"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pipeforge(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn toy_data(dir: &Path) -> PathBuf {
    let csv = path(dir, "toy.csv");
    ok(&[
        "simulate", "--h2", "0.4", "--samples", "200", "--snps", "20", "--seed", "3", "--out", s(&csv),
    ]);
    csv
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let csv = path(dir.path(), &format!("{name}.csv"));
        ok(&[
            "simulate", "--h2", "0.4", "--maf", "0.2", "--samples", "800", "--snps", "100", "--seed", "7", "--out",
            s(&csv),
        ]);
        let manifest = std::fs::read(csv.with_extension("manifest")).unwrap();
        (std::fs::read(&csv).unwrap(), manifest)
    };
    let (a_csv, a_man) = run("a");
    let (b_csv, b_man) = run("b");
    assert_eq!(a_csv, b_csv);
    assert_eq!(a_man, b_man);
    let ds = Dataset::load_csv(path(dir.path(), "a.csv")).unwrap();
    assert_eq!((ds.n_rows(), ds.n_features()), (800, 100));
    let manifest = String::from_utf8(a_man).unwrap();
    assert!(manifest.lines().any(|l| l == "h2=0.4"));
    assert!(manifest.lines().any(|l| l.starts_with("predictive_columns=")));
}

#[test]
fn simulate_requires_h2() {
    let dir = tempfile::tempdir().unwrap();
    let out = pipeforge(&["simulate", "--samples", "200", "--out", s(&path(dir.path(), "x.csv"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--h2"));
}

#[test]
fn optimize_writes_parseable_pipeline_that_replays_under_holdout() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_data(dir.path());
    let best = path(dir.path(), "best.txt");
    let log = path(dir.path(), "log.csv");
    ok(&[
        "optimize", "--input", s(&csv), "--pop", "12", "--gens", "3", "--seed", "5", "--out", s(&best), "--log",
        s(&log),
    ]);
    let text = std::fs::read_to_string(&best).unwrap();
    parse_pipeline(&text).unwrap();

    let log_text = std::fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = log_text.lines().collect();
    assert_eq!(lines.len(), 1 + 4);
    let logged_best = lines.last().unwrap().split(',').nth(1).unwrap().to_string();

    let scores = path(dir.path(), "holdout.csv");
    ok(&[
        "evaluate", "--pipeline", s(&best), "--input", s(&csv), "--holdout", "--seed", "5", "--out", s(&scores),
    ]);
    let replay = std::fs::read_to_string(&scores).unwrap();
    assert_eq!(replay, format!("split,balanced_accuracy\nholdout,{logged_best}\n"));
}

#[test]
fn other_modes_run() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_data(dir.path());
    for mode in ["random", "models-only"] {
        let best = path(dir.path(), &format!("{mode}.txt"));
        ok(&[
            "optimize", "--input", s(&csv), "--mode", mode, "--pop", "10", "--gens", "2", "--out", s(&best),
        ]);
        let p = parse_pipeline(&std::fs::read_to_string(&best).unwrap()).unwrap();
        if mode == "models-only" {
            assert!(!p.to_string().contains("pairs") && !p.to_string().contains("combine"));
        }
    }
    let out = pipeforge(&["optimize", "--input", s(&csv), "--mode", "annealing", "--out", s(&path(dir.path(), "z"))]);
    assert!(!out.status.success());
}

#[test]
fn cross_validation_gives_one_row_per_fold() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_data(dir.path());
    let p = path(dir.path(), "p.txt");
    std::fs::write(&p, "(rf (pairs input n=4) trees=20)\n").unwrap();
    let out = ok(&["evaluate", "--pipeline", s(&p), "--input", s(&csv), "--cv", "10"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "fold,balanced_accuracy");
    assert_eq!(lines.len(), 11);
    for (i, l) in lines[1..].iter().enumerate() {
        let (fold, score) = l.split_once(',').unwrap();
        assert_eq!(fold, (i + 1).to_string());
        assert!((0.0..=1.0).contains(&score.parse::<f64>().unwrap()));
    }
}

#[test]
fn malformed_pipeline_reports_byte_offset() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_data(dir.path());
    let p = path(dir.path(), "bad.txt");
    std::fs::write(&p, "(dt input depth=12)").unwrap();
    let out = pipeforge(&["evaluate", "--pipeline", s(&p), "--input", s(&csv), "--holdout"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("byte 16"), "{err}");
}

#[test]
fn report_rows_follow_classifier_count() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_data(dir.path());
    for (text, n) in [
        ("(dt input depth=3)", 1),
        ("(rf (dt (dt input depth=2) depth=3) trees=10)", 3),
    ] {
        let p = path(dir.path(), "p.txt");
        std::fs::write(&p, text).unwrap();
        let steps = path(dir.path(), "steps.csv");
        let imp = path(dir.path(), "imp.csv");
        ok(&[
            "report", "--pipeline", s(&p), "--input", s(&csv), "--steps-out", s(&steps), "--importance-out",
            s(&imp),
        ]);
        let steps = std::fs::read_to_string(&steps).unwrap();
        assert_eq!(steps.lines().count(), 1 + n);
        let imp = std::fs::read_to_string(&imp).unwrap();
        let max_step = imp.lines().skip(1).map(|l| l.split(',').next().unwrap().parse::<usize>().unwrap()).max();
        assert_eq!(max_step, Some(n));
    }
}

#[test]
fn grid_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = path(dir.path(), name);
        ok(&[
            "grid", "--h2", "0.2", "--samples", "200", "--replicates", "2", "--modes", "gp,rf-baseline", "--pop",
            "10", "--gens", "1", "--snps", "12", "--cv", "3", "--out", s(&out),
        ]);
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a.lines().count(), 1 + 4);
    assert!(a.lines().skip(1).all(|l| l.contains(",\"ok\",")));
    assert_eq!(a, run("b.csv"));
}
