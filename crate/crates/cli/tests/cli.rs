use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dcglasso"));
    cmd.args(args).env_remove("DCGLASSO_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, name: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    let out = run(&["simulate", "--scenario", "1", "--n", "300", "--seed", "4", "--out", s(&path)], &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn without_timings(path: &Path) -> Value {
    let mut v: Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timings");
    v
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a.csv");
    let b = simulate(dir.path(), "b.csv");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.json")).unwrap(),
        std::fs::read(dir.path().join("b.json")).unwrap()
    );
}

#[test]
fn fit_is_deterministic_across_pool_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv");
    let mut results = Vec::new();
    for (i, threads) in ["1", "3", "3"].iter().enumerate() {
        let out_path = dir.path().join(format!("r{i}.json"));
        let out = run(
            &["fit", s(&data), "--m", "3", "--path-length", "20", "--seed", "2", "--out", s(&out_path)],
            &[("DCGLASSO_THREADS", threads)],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        results.push(without_timings(&out_path));
    }
    assert_eq!(results[0], results[1]);
    assert_eq!(results[1], results[2]);
    let seq = dir.path().join("seq.json");
    let out = run(
        &["fit", s(&data), "--m", "3", "--path-length", "20", "--seed", "2", "--sequential", "--out", s(&seq)],
        &[],
    );
    assert_eq!(code(&out), 0);
    let mut v = without_timings(&seq);
    // the parallelism setting is recorded, everything else must match
    v["config"]["dc"]["parallelism"] = results[0]["config"]["dc"]["parallelism"].clone();
    assert_eq!(v, results[0]);
}

#[test]
fn check_accepts_fresh_fits_and_rejects_edits() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv");
    let res = dir.path().join("r.json");
    assert_eq!(code(&run(&["fit", s(&data), "--m", "2", "--path-length", "20", "--out", s(&res)], &[])), 0);
    let out = run(&["check", s(&data), s(&res)], &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));

    let mut v: Value = serde_json::from_slice(&std::fs::read(&res).unwrap()).unwrap();
    let j = v["support"]["features"][0].as_u64().unwrap() as usize;
    let b = v["beta"][j].as_f64().unwrap();
    v["beta"][j] = Value::from(b + 0.1);
    std::fs::write(&res, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    assert_eq!(code(&run(&["check", s(&data), s(&res)], &[])), 1);
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv");
    let res = dir.path().join("r.json");
    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&run(&["fit", s(&missing), "--out", s(&res)], &[])), 2);
    assert_eq!(code(&run(&["fit", s(&data), "--m", "0", "--out", s(&res)], &[])), 2);
    assert_eq!(code(&run(&["fit", s(&data), "--m", "200", "--out", s(&res)], &[])), 2);
    assert_eq!(code(&run(&["fit", s(&data), "--loss", "logistic", "--out", s(&res)], &[])), 2);
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "m = 2\nshards = 3\n").unwrap();
    assert_eq!(code(&run(&["fit", s(&data), "--config", s(&cfg), "--out", s(&res)], &[])), 2);
    assert_eq!(code(&run(&["fit", s(&data), "--out", s(&res)], &[("DCGLASSO_THREADS", "zero")])), 2);
    assert_eq!(code(&run(&["simulate", "--scenario", "9", "--n", "10", "--out", s(&res)], &[])), 2);
    assert!(!res.exists());
}

#[test]
fn config_file_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv");
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "m = 2\nseed = 9\n[solver]\npath_length = 15\n").unwrap();
    let res = dir.path().join("r.json");
    assert_eq!(code(&run(&["fit", s(&data), "--config", s(&cfg), "--seed", "5", "--out", s(&res)], &[])), 0);
    let v = without_timings(&res);
    assert_eq!(v["config"]["m"], 2);
    assert_eq!(v["config"]["seed"], 5);
    assert_eq!(v["config"]["dc"]["solver"]["path_length"], 15);
}

#[test]
fn all_failed_shards_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("zeros.csv");
    // one class only: no shard can fit a logistic path
    let mut csv = String::from("y,x0,x1\n");
    for i in 0..40 {
        csv.push_str(&format!("0,{},{}\n", i as f64 * 0.1, (i % 7) as f64));
    }
    std::fs::write(&data, csv).unwrap();
    std::fs::write(dir.path().join("zeros.json"), r#"{"groups": [[0], [1]], "overlapping": false}"#).unwrap();
    let res = dir.path().join("r.json");
    let out = run(&["fit", s(&data), "--loss", "logistic", "--m", "2", "--out", s(&res)], &[]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bench_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.toml");
    std::fs::write(
        &grid,
        r#"seed = 1
reps = 1

[solver]
path_length = 15

[[cell]]
scenario = "1"
n = [300]
m = 2

[vote_mc]
p_success = 0.9
m = [1, 5]
reps = 200
"#,
    )
    .unwrap();
    let csv = dir.path().join("out.csv");
    let out = run(&["bench", s(&grid), "--out", s(&csv)], &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("scenario,n,m,method,rep,seed"));
    assert!(lines[1].contains(",fullset,") && lines[2].contains(",dc,"));
    let votes = std::fs::read_to_string(dir.path().join("out.vote.csv")).unwrap();
    assert_eq!(votes.lines().count(), 3);
    assert_eq!(votes.lines().next().unwrap(), "m,reps,rate,bound");
}

#[test]
fn overlap_data_fits_with_either_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("o.csv");
    let out = run(&["simulate", "--overlap", "--p", "40", "--n", "300", "--seed", "1", "--out", s(&data)], &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for strategy in ["select-and-discard", "select-in-groups"] {
        let res = dir.path().join(format!("{strategy}.json"));
        let out = run(
            &["fit", s(&data), "--m", "2", "--path-length", "20", "--strategy", strategy, "--out", s(&res)],
            &[],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let v = without_timings(&res);
        assert_eq!(v["config"]["dc"]["strategy"], strategy);
        assert_eq!(code(&run(&["check", s(&data), s(&res)], &[])), 0);
    }
}
