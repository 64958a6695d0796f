use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn asset(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

fn degkit(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_degkit"));
    for a in args {
        c.arg(a);
    }
    c.output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    line.split_whitespace()
        .find_map(|t| t.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in {line:?}"))
}

fn gen(dir: &TempDir, name: &str, count: u64, seed: u64) -> PathBuf {
    let p = dir.path().join(name);
    stdout(&degkit(&[
        &"gen-trace",
        &p,
        &"--count",
        &count.to_string(),
        &"--seed",
        &seed.to_string(),
    ]));
    p
}

#[test]
fn missing_trace_exits_1() {
    let o = degkit(&[
        &"analyze",
        &"does-not-exist.jsonl",
        &asset("configs/quad.json"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does-not-exist.jsonl"));
}

#[test]
fn lane_count_mismatch_exits_1() {
    let o = degkit(&[
        &"analyze",
        &asset("fixtures/quad.jsonl"),
        &asset("configs/quad.json"),
        &"--scenarios",
        &asset("fixtures/quad-whatif.json"),
        &"--lanes",
        &"5",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_line_names_line_and_field() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.jsonl");
    fs::write(
        &p,
        "{\"seq\":0,\"pc\":\"0x100\",\"op\":\"IntAlu\",\"dst\":[1]}\n{\"seq\":1,\"pc\":\"0x104\",\"op\":\"IntAlu\",\"mem_size\":\"x\"}\n",
    )
    .unwrap();
    let o = degkit(&[&"analyze", &p, &asset("configs/quad.json")]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("mem_size"), "{err}");
}

#[test]
fn empty_scenario_list_is_baseline_only() {
    let dir = TempDir::new().unwrap();
    let s = dir.path().join("none.json");
    fs::write(&s, "[]").unwrap();
    let out = stdout(&degkit(&[
        &"whatif",
        &asset("fixtures/quad.jsonl"),
        &asset("configs/quad.json"),
        &s,
    ]));
    assert!(out.starts_with("total_cycles=15 cpi=3.75"), "{out}");
    assert!(!out.contains("lane="), "{out}");
}

#[test]
fn config_found_through_search_path() {
    let out = Command::new(env!("CARGO_BIN_EXE_degkit"))
        .args(["analyze"])
        .arg(asset("fixtures/quad.jsonl"))
        .arg("quad")
        .env("DEGKIT_CONFIG_PATH", asset("configs"))
        .output()
        .unwrap();
    assert!(stdout(&out).starts_with("total_cycles=15 "));
}

#[test]
fn ideal_both_dominates_each_ideal() {
    let dir = TempDir::new().unwrap();
    let trace = gen(&dir, "t.jsonl", 4000, 7);
    let mut cfg: Value =
        serde_json::from_str(&fs::read_to_string(asset("configs/ino-gem5-like.json")).unwrap())
            .unwrap();
    cfg["branch"] = json!({ "mode": "Stochastic", "accuracy": 0.6, "seed": 2 });
    let cp = dir.path().join("cfg.json");
    fs::write(&cp, cfg.to_string()).unwrap();
    let out = stdout(&degkit(&[
        &"analyze",
        &trace,
        &cp,
        &"--scenarios",
        &asset("fixtures/ideal-lanes.json"),
    ]));
    let imp: Vec<f64> = out
        .lines()
        .filter(|l| l.starts_with("lane="))
        .map(|l| {
            field(l, "improvement")
                .trim_end_matches('%')
                .parse()
                .unwrap()
        })
        .collect();
    assert_eq!(imp.len(), 3, "{out}");
    assert!(imp[1] > 0.0, "{out}");
    assert!(imp[2] >= imp[0].max(imp[1]), "{out}");
}

#[test]
fn unaware_coverage_grid_starts_at_baseline() {
    let dir = TempDir::new().unwrap();
    let trace = gen(&dir, "t.jsonl", 2000, 3);
    let grid = dir.path().join("grid.json");
    fs::write(
        &grid,
        json!({
            "kind": "value_prediction",
            "coverage": { "start": 0.0, "stop": 1.0, "step": 0.5 },
            "modes": ["criticality_unaware"],
            "seeds": [0, 1]
        })
        .to_string(),
    )
    .unwrap();
    let cfg = asset("configs/ino-gem5-like.json");
    let out = stdout(&degkit(&[
        &"sweep",
        &trace,
        &cfg,
        &grid,
        &"--format",
        &"csv",
    ]));
    let rows: Vec<&str> = out.lines().skip(2).collect();
    assert_eq!(rows.len(), 4, "{out}");
    let cpi = |row: &str| row.split(',').nth(4).unwrap().parse::<f64>().unwrap();
    assert!(rows[0].starts_with("baseline,"));
    assert_eq!(cpi(rows[1]), cpi(rows[0]));
    assert!(cpi(rows[3]) <= cpi(rows[1]));
}

#[test]
fn latency_overrides_share_one_pass() {
    let out = stdout(&degkit(&[
        &"sweep",
        &asset("fixtures/quad.jsonl"),
        &asset("configs/quad.json"),
        &asset("fixtures/mul-latency-grid.json"),
    ]));
    let head = out.lines().next().unwrap();
    assert_eq!(field(head, "points"), "9");
    assert_eq!(field(head, "passes"), "1");
}

#[test]
fn validate_accepts_seeded_traces() {
    let dir = TempDir::new().unwrap();
    let cfgs = ["configs/ino-gem5-like.json", "configs/ooo-gem5-like.json"];
    for seed in 0..100u64 {
        let trace = gen(&dir, &format!("t{seed}.jsonl"), 150, seed);
        let cfg = asset(cfgs[seed as usize % 2]);
        let o = degkit(&[&"validate", &trace, &cfg]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "seed {seed}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(String::from_utf8_lossy(&o.stdout)
            .trim_end()
            .ends_with(" ok"));
    }
}

#[test]
fn validate_flags_wrong_expectation() {
    let ok = degkit(&[
        &"validate",
        &asset("fixtures/quad.jsonl"),
        &asset("configs/quad.json"),
        &"--expected",
        &asset("fixtures/quad.expected.json"),
    ]);
    assert_eq!(ok.status.code(), Some(0));
    let bad = degkit(&[
        &"validate",
        &asset("fixtures/quad.jsonl"),
        &asset("configs/quad.json"),
        &"--expected",
        &asset("fixtures/quad.corrupt-expected.json"),
    ]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn gen_trace_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = gen(&dir, "a.jsonl", 500, 11);
    let b = gen(&dir, "b.jsonl", 500, 11);
    let c = gen(&dir, "c.jsonl", 500, 12);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn dump_graph_writes_edges() {
    let dir = TempDir::new().unwrap();
    let g = dir.path().join("g.json");
    stdout(&degkit(&[
        &"analyze",
        &asset("fixtures/quad.jsonl"),
        &asset("configs/quad.json"),
        &"--dump-graph",
        &g,
    ]));
    let text = fs::read_to_string(&g).unwrap();
    assert!(!text.trim().is_empty());
    assert!(text.contains("F0"), "{}", &text[..text.len().min(200)]);
}

#[test]
fn edge_trace_path() {
    let out = stdout(&degkit(&[
        &"analyze",
        &asset("fixtures/edge-3block.jsonl"),
        &asset("configs/edge-small.json"),
        &"--critical-path",
    ]));
    assert!(out.starts_with("total_cycles=13 "), "{out}");
    assert!(
        out.contains("critical_path=BF0-BF2-E2-E3-BF4-E4-E5-BC4"),
        "{out}"
    );
}
