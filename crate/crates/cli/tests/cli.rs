use std::path::Path;
use std::process::{Command, Output};

fn rpl(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpl"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("RPL_THREADS")
        .output()
        .expect("rpl runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn range_law_oracle_exit_status() {
    let d = tempfile::tempdir().unwrap();
    let o = rpl(&["run", "range-law", "--n", "12", "--oracle", "enumerate"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(d.path().join("range-law-n12.csv"));
    assert!(csv.starts_with("x,y,logp\n"));
    // every (x, y) with 1 <= x + y <= 12
    assert_eq!(csv.lines().count() - 1, (1..=12).map(|t| t + 1).sum::<usize>());

    let o = rpl(&["range-law", "--n", "30", "--oracle", "enumerate"], d.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn expansion_is_byte_deterministic_and_replayable() {
    let d = tempfile::tempdir().unwrap();
    let (a, b, c) = (d.path().join("a"), d.path().join("b"), d.path().join("c"));
    let args = ["run", "expansion", "--n", "1e3,1e4", "--h", "1", "--beta", "1", "--replicas", "3", "--seed", "5"];
    assert_eq!(code(&rpl(&args, &a)), 0);
    let mut args_t = args.to_vec();
    args_t.extend(["--threads", "1"]);
    assert_eq!(code(&rpl(&args_t, &b)), 0);
    let csv = read(a.join("expansion.csv"));
    assert_eq!(csv.lines().next(), Some("n,replica,logZ,residual2,residual3,ref_sup,ref_w2"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(!csv.contains('\r'));
    for f in ["expansion.csv", "w2.csv", "localization.csv", "manifest.json"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f} differs between runs");
    }

    let manifest = a.join("manifest.json");
    let o = rpl(&["expansion", "--config", manifest.to_str().unwrap()], &c);
    assert_eq!(code(&o), 0);
    let m1: serde_json::Value = serde_json::from_str(&read(&manifest)).unwrap();
    let m2: serde_json::Value = serde_json::from_str(&read(c.join("manifest.json"))).unwrap();
    assert_eq!(m1["config_hash"], m2["config_hash"]);
    assert_eq!(m1["config"]["seed"], 5);
    assert_eq!(read(a.join("expansion.csv")), read(c.join("expansion.csv")));
    assert_eq!(m1["seeds"].as_array().unwrap().len(), 3);
    assert!(m1["build_id"].as_str().is_some_and(|s| !s.is_empty()));
}

#[test]
fn config_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.json");
    std::fs::write(&bad, r#"{"ns": [100], "typo": 1}"#).unwrap();
    assert_eq!(code(&rpl(&["partition", "--config", bad.to_str().unwrap()], d.path())), 2);
    assert_eq!(code(&rpl(&["partition", "--no-such-flag"], d.path())), 2);
    assert_eq!(code(&rpl(&["partition", "--law", "gaussian", "--alpha", "1.5"], d.path())), 2);
    let wrong = d.path().join("m");
    assert_eq!(code(&rpl(&["range-law", "--n", "4"], &wrong)), 0);
    let m = wrong.join("manifest.json");
    assert_eq!(code(&rpl(&["partition", "--config", m.to_str().unwrap()], d.path())), 2);
}

#[test]
fn threads_env_fallback_is_validated() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_rpl"))
        .args(["range-law", "--n", "5", "--out"])
        .arg(d.path())
        .env("RPL_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_rpl"))
        .args(["range-law", "--n", "5", "--out"])
        .arg(d.path())
        .env("RPL_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}

#[test]
fn accept_exit_codes_follow_criteria() {
    let d = tempfile::tempdir().unwrap();
    let o = rpl(&["accept", "--only", "1"], d.path());
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("criterion  1") && out.contains("PASS"), "{out}");

    // an impossible tolerance must turn the same check into a failure
    let strict = d.path().join("strict.json");
    std::fs::write(&strict, r#"{"thresholds": {"exact_tol": -1.0}}"#).unwrap();
    let o = rpl(&["accept", "--only", "1", "--config", strict.to_str().unwrap()], d.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));

    std::fs::write(&strict, r#"{"thresholds": {"no_such_threshold": 1.0}}"#).unwrap();
    assert_eq!(code(&rpl(&["accept", "--only", "1", "--config", strict.to_str().unwrap()], d.path())), 2);
    assert_eq!(code(&rpl(&["accept", "--only", "12"], d.path())), 2);
}

#[test]
fn gen_env_binary_matches_csv() {
    let d = tempfile::tempdir().unwrap();
    let o = rpl(&["gen-env", "--law", "uniform", "--half-width", "2", "--lo", "-3", "--hi", "4", "--seed", "11"], d.path());
    assert_eq!(code(&o), 0);
    let e = rpl_core::io::read_env(std::fs::File::open(d.path().join("env.rplenv")).unwrap()).unwrap();
    assert_eq!(e.values.len(), 8);
    assert_eq!(e.seed, 11);
    let (h, cols) = rpl_core::io::read_numeric_csv(std::fs::File::open(d.path().join("env.csv")).unwrap()).unwrap();
    assert_eq!(h, ["z", "omega"]);
    assert_eq!(cols[0], (-3..=4).map(f64::from).collect::<Vec<_>>());
    assert_eq!(cols[1], e.values);
    assert!(e.values.iter().all(|v| v.abs() <= 2.0));
}

#[test]
fn plot_handles_empty_and_missing_columns() {
    let d = tempfile::tempdir().unwrap();
    let empty = d.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = rpl(&["plot", empty.to_str().unwrap(), "--x", "n", "--y", "residual2", "--logx", "--logy"], d.path());
    assert_eq!(code(&o), 0);
    let svg = read(d.path().join("empty.svg"));
    assert!(svg.starts_with("<svg") && !svg.contains("polyline"));

    let csv = d.path().join("e.csv");
    std::fs::write(&csv, "n,residual2\n1000,0.5\n10000,0.3\n100000,0.2\n").unwrap();
    let o = rpl(&["plot", csv.to_str().unwrap(), "--y", "residual2", "--logx", "--logy"], d.path());
    assert_eq!(code(&o), 0);
    let first = read(d.path().join("e.svg"));
    assert!(first.contains("polyline"));
    rpl(&["plot", csv.to_str().unwrap(), "--y", "residual2", "--logx", "--logy"], d.path());
    assert_eq!(first, read(d.path().join("e.svg")));

    let o = rpl(&["plot", csv.to_str().unwrap(), "--y", "ref_w2"], d.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn endpoint_law_csv_sums_to_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&rpl(&["endpoint-law", "--n", "2000"], d.path())), 0);
    let (h, cols) = rpl_core::io::read_numeric_csv(std::fs::File::open(d.path().join("endpoint-law.csv")).unwrap()).unwrap();
    assert_eq!(h, ["v", "prob", "density"]);
    let total: f64 = cols[1].iter().sum();
    assert!((total - 1.0).abs() < 1e-9, "{total}");
    let (h, cols) = rpl_core::io::read_numeric_csv(std::fs::File::open(d.path().join("marginal.csv")).unwrap()).unwrap();
    assert_eq!(h, ["x", "y", "prob"]);
    assert!((cols[2].iter().sum::<f64>() - 1.0).abs() < 1e-9);
}
