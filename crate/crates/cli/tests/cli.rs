//! End-to-end runs of the `bats` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TABLE1: [[u32; 19]; 11] = [
    [16, 17, 17, 18, 18, 18, 18, 19, 19, 19, 19, 19, 19, 19, 19, 19, 19, 20, 20],
    [17, 17, 18, 18, 18, 19, 19, 19, 19, 19, 19, 19, 20, 20, 20, 20, 20, 20, 20],
    [17, 17, 18, 18, 19, 19, 19, 19, 19, 19, 20, 20, 20, 20, 20, 20, 20, 20, 20],
    [17, 18, 18, 19, 19, 19, 19, 19, 20, 20, 20, 20, 20, 20, 20, 20, 20, 21, 21],
    [17, 18, 18, 19, 19, 19, 20, 20, 20, 20, 20, 20, 20, 21, 21, 21, 21, 21, 21],
    [17, 18, 19, 19, 19, 20, 20, 20, 20, 20, 21, 21, 21, 21, 21, 21, 21, 21, 21],
    [17, 18, 19, 19, 20, 20, 20, 20, 21, 21, 21, 21, 21, 21, 21, 21, 22, 22, 22],
    [17, 18, 19, 20, 20, 20, 20, 21, 21, 21, 21, 21, 21, 22, 22, 22, 22, 22, 22],
    [18, 19, 19, 20, 20, 21, 21, 21, 21, 21, 22, 22, 22, 22, 22, 22, 22, 22, 22],
    [18, 19, 20, 20, 21, 21, 21, 21, 22, 22, 22, 22, 22, 22, 22, 22, 23, 23, 23],
    [18, 19, 20, 20, 21, 21, 21, 22, 22, 22, 22, 22, 23, 23, 23, 23, 23, 23, 23],
];

fn bats(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bats"))
        .args(args)
        .env_remove("BATS_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bats(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    let mut a = args.to_vec();
    a.extend(["--format", "json"]);
    serde_json::from_str(&ok(&a)).unwrap()
}

fn code(args: &[&str]) -> i32 {
    bats(args).status.code().unwrap()
}

fn ints(v: &Value) -> Vec<u64> {
    v.as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect()
}

fn csv_cells(text: &str) -> Vec<Vec<u32>> {
    text.lines().skip(1).map(|l| l.split(',').skip(1).map(|c| c.parse().unwrap()).collect()).collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn centralized_two_hop_solutions() {
    let v = json(&["optimize", "--eps", "0.2,0.2"]);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["config"]["scenario"]["q"], 256);
    assert_eq!(v["config"]["scenario"]["M"], 16);
    assert_eq!(ints(&v["result"]["policy"]), vec![18, 18]);
    assert!(v["result"]["gap"].as_f64().unwrap() >= -1e-9);
    let v = json(&["optimize", "--eps", "0.2,0.1"]);
    assert_eq!(ints(&v["result"]["policy"]), vec![18, 16]);
}

#[test]
fn decentralized_modes() {
    let v = json(&["optimize", "--mode", "ps", "--eps", "0.2", "--hops", "20"]);
    assert!(ints(&v["result"]["policy"]).iter().all(|&t| t == 23));
    let eps = vec!["0.35"; 100].join(",");
    let v = json(&["optimize", "--mode", "pa", "--q", "2", "-M", "8", "--eps", &eps]);
    let t = ints(&v["result"]["policy"]);
    assert_eq!(t.len(), 100);
    assert!(t.iter().all(|&x| x == 25));
}

#[test]
fn bound_dominates_optimized_policies() {
    for eps in ["0.2,0.3", "0.1,0.25,0.3"] {
        let b = json(&["bound", "--eps", eps, "-M", "8", "--q", "2"])["result"]["value"].as_f64().unwrap();
        for mode in ["centralized", "pa"] {
            let v = json(&["optimize", "--mode", mode, "--eps", eps, "-M", "8", "--q", "2"]);
            assert!(b >= v["result"]["objective"].as_f64().unwrap() - 1e-12, "{eps} {mode}");
        }
    }
}

#[test]
fn analyze_exact_and_relaxed() {
    let exact = json(&["analyze", "--eps", "0.2,0.2", "--t", "18,18"]);
    let approx = json(&["analyze", "--eps", "0.2,0.2", "--t", "18,18", "--approx"]);
    assert_eq!(exact["result"]["t_total"], 36);
    let e = exact["result"]["average_rank"].as_f64().unwrap();
    let a = approx["result"]["average_rank"].as_f64().unwrap();
    assert!((e - a).abs() < 1e-2, "{e} vs {a}");
    let dead = json(&["analyze", "--eps", "0.1,1.0", "--t", "5,5"]);
    assert_eq!(dead["result"]["average_rank"].as_f64().unwrap(), 0.0);
    let csv = ok(&["analyze", "--eps", "0", "--t", "2", "-M", "2", "--q", "2", "--format", "csv"]);
    assert_eq!(csv, "rank,probability\n0,0.0625\n1,0.5625\n2,0.375\n");
}

#[test]
fn table_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let clt = dir.path().join("clt.json");
    let rlt = dir.path().join("rlt.json");
    let packed = dir.path().join("packed.json");
    let built = csv_cells(&ok(&["table", "build", "--save", p(&clt), "--format", "csv"]));
    let mut differ = Vec::new();
    for (i, row) in TABLE1.iter().enumerate() {
        for (j, &t) in row.iter().enumerate() {
            if built[i][j] != t {
                differ.push((i, j, built[i][j].abs_diff(t)));
            }
        }
    }
    // the one near-tie cell (eps 0.10, l 18) may round either way
    assert!(differ.iter().all(|&(i, j, d)| (i, j, d) == (0, 16, 1)), "{differ:?}");

    let refined = csv_cells(&ok(&["table", "refine", "--table", p(&clt), "--save", p(&rlt), "--format", "csv"]));
    assert_eq!(refined[10], vec![18, 20, 21, 22, 23, 23]);
    let q = json(&["table", "query", "--table", p(&clt), "--eps", "0.13", "--hops", "9"]);
    assert_eq!(q["result"]["t"], 19);
    let q = json(&["table", "query", "--table", p(&rlt), "--eps", "0.15", "--hops", "5"]);
    assert_eq!((q["result"]["t"].as_u64(), q["result"]["hops"].as_u64()), (Some(20), Some(7)));

    ok(&["table", "compress", "--table", p(&clt), "--save", p(&packed)]);
    for (eps, l) in [("0.1", "2"), ("0.137", "13"), ("0.2", "20"), ("0.16", "30")] {
        let a = json(&["table", "query", "--table", p(&clt), "--eps", eps, "--hops", l]);
        let b = json(&["table", "query", "--table", p(&packed), "--eps", eps, "--hops", l]);
        assert_eq!(a["result"], b["result"]);
    }
    let v = json(&["optimize", "--mode", "table", "--table", p(&rlt), "--eps", "0.2,0.2"]);
    assert_eq!(ints(&v["result"]["policy"]), vec![18, 18]);
}

#[test]
fn table_build_ignores_worker_count() {
    let args = ["table", "build", "--eps-start", "0.3", "--eps-end", "0.33", "--hops", "2-6", "--format", "csv"];
    let one = ok(&[&args[..], &["--jobs", "1"]].concat());
    let two = ok(&[&args[..], &["--jobs", "2"]].concat());
    assert_eq!(one, two);
}

#[test]
fn simulation_is_reproducible() {
    let args = ["simulate", "--eps", "0.1,0.2", "--t", "6,7", "-M", "4", "--q", "16", "--trials", "2000", "--seed", "3"];
    assert_eq!(ok(&[&args[..], &["--format", "json"]].concat()), ok(&[&args[..], &["--format", "json"]].concat()));
    let lossless = json(&["simulate", "--eps", "0,0", "--t", "16,16", "--trials", "500"]);
    assert!(lossless["result"]["avg_rank"].as_f64().unwrap() > 15.9);
    assert_eq!(lossless["config"]["scenario"]["seed"], 0);
}

#[test]
fn seed_comes_from_environment_by_default() {
    let out = Command::new(env!("CARGO_BIN_EXE_bats"))
        .args(["simulate", "--eps", "0.1", "--t", "3", "-M", "2", "--trials", "10", "--format", "json"])
        .env("BATS_SEED", "99")
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["scenario"]["seed"], 99);
    let out = Command::new(env!("CARGO_BIN_EXE_bats"))
        .args(["simulate", "--eps", "0.1", "--t", "3", "-M", "2", "--trials", "10", "--seed", "5", "--format", "json"])
        .env("BATS_SEED", "99")
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["scenario"]["seed"], 5);
}

#[test]
fn scenario_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    std::fs::write(&path, r#"{"q": 2, "M": 8, "eps": [0.2, 0.3], "t": [10, 12], "n1": 100}"#).unwrap();
    let v = json(&["analyze", "--scenario", p(&path)]);
    assert_eq!(v["config"]["scenario"]["q"], 2);
    assert_eq!(v["config"]["scenario"]["n1"], 100.0);
    let v = json(&["analyze", "--scenario", p(&path), "--t", "9,9", "--q", "16"]);
    assert_eq!(ints(&v["config"]["scenario"]["t"]), vec![9, 9]);
    assert_eq!(v["config"]["scenario"]["q"], 16);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["analyze", "--eps", "0.2"]), 2);
    assert_eq!(code(&["optimize", "--mode", "table", "--eps", "0.2"]), 2);
    assert_eq!(code(&["table", "build", "--eps-start", "0.3", "--eps-end", "0.1"]), 2);
    assert_eq!(code(&["bound", "--eps", "0.2", "--format", "csv"]), 2);
    assert_eq!(code(&["analyze", "--eps", "1.5", "--t", "3"]), 3);
    assert_eq!(code(&["analyze", "--eps", "0.2,0.2", "--t", "3"]), 3);
    assert_eq!(code(&["bound", "--eps", "0.2", "--q", "6"]), 3);
    let missing = dir.path().join("missing.json");
    let out = bats(&["table", "query", "--table", p(&missing), "--eps", "0.1", "--hops", "2"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
    let out = bats(&["table", "query", "--table", p(&bad), "--eps", "0.1", "--hops", "2"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json"));
    assert_eq!(code(&["analyze", "--scenario", p(&bad)]), 4);
}

#[test]
fn reproduce_targets() {
    let fig3 = ok(&["reproduce", "fig3"]);
    let rows: Vec<&str> = fig3.lines().collect();
    assert_eq!(rows[0], "eps1,eps2,t1,t2,eta,inv_eta,bound");
    assert!(rows[1].starts_with("0.2,0.2,18,18,"));
    assert!(rows[2].starts_with("0.2,0.1,18,16,"));
    let t2 = csv_cells(&ok(&["reproduce", "table2"]));
    assert_eq!(t2[0], vec![16, 17, 18, 19, 19, 20]);

    let curve = ok(&["reproduce", "efficiency-curve", "--trials", "20", "--batch-sizes", "8", "--hops", "2,7,20"]);
    let mut lines = curve.lines();
    assert_eq!(lines.next().unwrap(), "M,l,trials,eta_bound,eta_pa,eta_clt,eta_rlt,gap_pa_pct,gap_clt_pct,gap_rlt_pct");
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let (bound, gap_clt, gap_rlt) = (f[3], f[8], f[9]);
        assert!(f[4] <= bound + 1e-12 && f[5] <= bound + 1e-12 && f[6] <= bound + 1e-12, "{line}");
        assert!(gap_clt >= -1e-9 && gap_rlt >= gap_clt - 1e-9, "{line}");
    }
    let ranks = ok(&["reproduce", "avg-rank-curve", "--trials", "20", "--batch-sizes", "8", "--hops", "2,10"]);
    for line in ranks.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(f[3] > f[4], "{line}");
    }
}
