use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn golden(name: &str) -> String {
    fs::read_to_string(data("golden").join(name)).unwrap()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fgivental")).args(args).output().unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

fn p(name: &str) -> String {
    data(name).to_str().unwrap().to_owned()
}

#[test]
fn tree_counts() {
    assert_eq!(stdout(&["trees", "--g", "0", "--n", "3", "--count"]), "4\n");
    assert_eq!(stdout(&["trees", "--g", "1", "--n", "1", "--count"]), "2\n");
    assert_eq!(code(&["trees", "--g", "0", "--n", "1"]), 2);
    assert_eq!(code(&["trees", "--g", "1", "--n", "0", "--count"]), 0);
}

#[test]
fn tree_listings_golden() {
    assert_eq!(stdout(&["trees", "--g", "0", "--n", "3"]), golden("trees_0_3.txt"));
    assert_eq!(stdout(&["trees", "--g", "1", "--n", "1", "--format", "json"]), golden("trees_1_1.jsonl"));
}

#[test]
fn act_identity_is_one_vertex() {
    let out = stdout(&["act", "--spec", &p("trivial1.toml"), "--element", &p("identity1.toml"), "--g", "1", "--n", "1"]);
    assert_eq!(out, golden("act_identity_1_1.jsonl"));
    assert_eq!(out.lines().count(), 1);
    assert!(out.contains(r#""coeff":"1""#) && out.contains(r#""edges":[]"#));
}

#[test]
fn act_rank_one_closed_form_agrees() {
    let base = ["act", "--spec", &p("trivial1.toml"), "--element", &p("rank1_random.toml"), "--g", "1", "--n", "1"];
    let tree_sum = stdout(&base);
    let mut closed = base.to_vec();
    closed.push("--closed-form");
    assert_eq!(tree_sum, stdout(&closed));
    assert_eq!(tree_sum, golden("act_rank1_1_1.jsonl"));
}

#[test]
fn act_rejects_malformed_elements() {
    let spec = p("trivial1.toml");
    assert_eq!(code(&["act", "--spec", &spec, "--element", &p("bad_t1.toml"), "--g", "1", "--n", "1"]), 3);
    let dir = tempfile::tempdir().unwrap();
    let bad_r = dir.path().join("r.toml");
    fs::write(&bad_r, "dim = 1\nr = [[[2]]]\nt = [[0]]\n").unwrap();
    assert_eq!(code(&["act", "--spec", &spec, "--element", bad_r.to_str().unwrap(), "--g", "1", "--n", "1"]), 3);
    fs::write(&bad_r, "dim = 2\nr = [[[1]]]\nt = [[0]]\n").unwrap();
    assert_eq!(code(&["act", "--spec", &spec, "--element", bad_r.to_str().unwrap(), "--g", "1", "--n", "1"]), 3);
    assert_eq!(code(&["act", "--spec", &spec, "--element", &p("identity1.toml"), "--g", "0", "--n", "1"]), 2);
}

#[test]
fn act_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("expr.jsonl");
    let args = ["act", "--spec", &p("trivial1.toml"), "--element", &p("identity1.toml"), "--g", "1", "--n", "1"];
    let mut with_out = args.to_vec();
    with_out.extend(["--out", out.to_str().unwrap()]);
    assert_eq!(stdout(&with_out), "");
    assert_eq!(fs::read_to_string(&out).unwrap(), stdout(&args));
}

#[test]
fn verify_suites_pass() {
    for args in [
        &["verify", "group-laws", "--seed", "7", "--bound", "2"][..],
        &["verify", "theta", "--max-points", "8"],
        &["verify", "rspin", "--r", "2", "--max-points", "8"],
        &["verify", "flatf"],
    ] {
        let out = stdout(args);
        assert!(!out.contains("FAIL"), "{args:?}\n{out}");
        assert!(out.contains("PASS"));
    }
}

#[test]
fn verify_is_deterministic() {
    let args = ["verify", "group-laws", "--seed", "3", "--bound", "1"];
    assert_eq!(stdout(&args), stdout(&args));
}

#[test]
fn reconstruct_rspin_is_identity_r() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rec");
    let o = out.to_str().unwrap();
    stdout(&["reconstruct", "--potential", &p("rspin3.toml"), "--order", "4", "--bound", "2", "--out", o]);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("R.json")).unwrap()).unwrap();
    let coeffs = r["coeffs"].as_array().unwrap();
    assert_eq!(coeffs.len(), 5);
    assert_eq!(coeffs[0], serde_json::json!([["1"]]));
    assert!(coeffs[1..].iter().all(|m| m == &serde_json::json!([["0"]])));
    // Υ_m = 𝟙 · (rm−1)!^{(r)} (−A^{-1})^m with A = 1/9 and 𝟙 = 9 at t = 1.
    let ups: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("Upsilon.json")).unwrap()).unwrap();
    assert_eq!(ups["coeffs"], serde_json::json!([["9"], ["-162"], ["7290"], ["-524880"], ["51963120"]]));
    assert!(fs::metadata(out.join("classes.jsonl")).unwrap().len() > 0);
}

#[test]
fn reconstruct_genus_zero_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rec");
    let o = out.to_str().unwrap();
    stdout(&["reconstruct", "--potential", &p("rspin3.toml"), "--order", "5", "--bound", "3", "--out", o]);
    // ∂^n F(1) for F = t^4/108: 2/9 at n = 3, 4 and 0 at n = 5.
    let expect = [(3, "2/9"), (4, "2/9"), (5, "0")];
    let text = fs::read_to_string(out.join("genus0_integrals.jsonl")).unwrap();
    for (n, v) in expect {
        let line = text
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .find(|j| j["n"] == n)
            .unwrap_or_else(|| panic!("n = {n} missing"));
        assert_eq!(line["integral"], v, "n = {n}");
    }
}

#[test]
fn reconstruct_then_act_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rec");
    let o = out.to_str().unwrap();
    stdout(&["reconstruct", "--potential", &p("rspin2.toml"), "--order", "3", "--bound", "2", "--out", o]);
    let r = out.join("R.json");
    let t = out.join("T.json");
    let acted = stdout(&["act", "--spec", &p("trivial1.toml"), "--R", r.to_str().unwrap(), "--T", t.to_str().unwrap(), "--g", "1", "--n", "1"]);
    assert!(!acted.is_empty());
}

#[test]
fn reconstruct_failures_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("x");
    let out = run(&["reconstruct", "--potential", &p("not_wdvv.toml"), "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("WDVV residual"));
    assert!(!o.exists());
    let origin = dir.path().join("origin.toml");
    fs::write(&origin, fs::read_to_string(data("rspin2.toml")).unwrap().replace("basepoint = [1]", "basepoint = [0]")).unwrap();
    let out = run(&["reconstruct", "--potential", origin.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn reconstruct_decoupled() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rec");
    stdout(&["reconstruct", "--potential", &p("decoupled.toml"), "--order", "3", "--bound", "1", "--out", out.to_str().unwrap()]);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("R.json")).unwrap()).unwrap();
    assert_eq!(r["dim"], 2);
}

#[test]
fn rspin_tables_golden() {
    assert_eq!(stdout(&["rspin-s", "--r", "3", "--M", "12"]), golden("rspin_s_3_12.txt"));
    assert_eq!(stdout(&["rspin-relations", "--r", "2", "--max-points", "8", "--verify"]), golden("rspin_relations_2_8.csv"));
    let csv = golden("rspin_relations_2_8.csv");
    let mut rd = csv::Reader::from_reader(csv.as_bytes());
    assert_eq!(rd.headers().unwrap(), vec!["r", "g", "n", "m", "status", "verified", "witness-count"]);
    for rec in rd.records() {
        let rec = rec.unwrap();
        if &rec[4] == "strict-vanishing" {
            assert_eq!(&rec[5], "true");
        }
    }
}

#[test]
fn oracle_integrals() {
    assert_eq!(stdout(&["oracle", "--n", "5", "--psi", "1,1,0,0,0"]), "2\n");
    assert_eq!(stdout(&["oracle", "--n", "4", "--kappa", "1"]), "1\n");
    assert_eq!(stdout(&["oracle", "--n", "5", "--psi", "1,1,0,0,0", "--kappa", "1"]), "0\n");
    assert_eq!(code(&["oracle", "--n", "2"]), 2);
}

#[test]
fn config_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "format = \"json\"\nthreads = 2\n").unwrap();
    let out = stdout(&["--config", cfg.to_str().unwrap(), "trees", "--g", "1", "--n", "1"]);
    assert_eq!(out, golden("trees_1_1.jsonl"));
    fs::write(&cfg, "bogus = 1\n").unwrap();
    assert_eq!(code(&["--config", cfg.to_str().unwrap(), "trees", "--g", "1", "--n", "1"]), 1);
}

#[test]
fn thread_env_var_is_accepted() {
    let out = Command::new(env!("CARGO_BIN_EXE_fgivental"))
        .args(["trees", "--g", "0", "--n", "3", "--count"])
        .env("FGIVENTAL_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "4\n");
}
