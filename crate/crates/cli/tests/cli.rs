use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn shtp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shtp"))
        .args(args)
        .output()
        .expect("run shtp")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("shtp-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gen_solve_rollout_oracle_pipeline() {
    let dir = scratch("pipeline");
    let inst = dir.join("inst.toml");
    let plan = dir.join("plan.toml");
    let csv = dir.join("rollout.csv");

    let o = shtp(&["gen", "--seed", "5", "--n-v", "3", "--n-m", "3", "-o", path(&inst)]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");

    let o = shtp(&["solve", path(&inst), "--model", "spr", "-o", path(&plan)]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let solved = stdout(&o);
    let total: f64 = solved
        .lines()
        .find_map(|l| l.strip_prefix("f + g"))
        .and_then(|v| v.trim().parse().ok())
        .expect("f + g line");

    let o = shtp(&["oracle", path(&inst), "--model", "spr"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let exact: f64 = stdout(&o)
        .split_whitespace()
        .nth(1)
        .and_then(|v| v.parse().ok())
        .expect("oracle value");
    assert!(
        (exact - total).abs() < 1e-3 * exact.abs().max(1.0),
        "{exact} vs {total}"
    );

    let o = shtp(&[
        "rollout",
        path(&inst),
        path(&plan),
        "--seed",
        "3",
        "--samples",
        "2000",
        "--csv",
        path(&csv),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(stdout(&o).starts_with("samples 2000 seed 3"));
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.lines().count() >= 2);
}

#[test]
fn gen_is_reproducible() {
    let a = shtp(&["gen", "--seed", "11", "--n-v", "4"]);
    let b = shtp(&["gen", "--seed", "11", "--n-v", "4"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = shtp(&["gen", "--seed", "12", "--n-v", "4"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = scratch("invalid");
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "not an instance").unwrap();
    let o = shtp(&["solve", path(&bad), "--model", "det"]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");

    let o = shtp(&["gen", "--seed", "1", "--n-v", "0"]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");

    let o = shtp(&["gen", "--seed", "1", "--beta", "1.5"]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
}

#[test]
fn infeasible_instance_exits_with_four() {
    let dir = scratch("infeasible");
    let inst = dir.join("inst.toml");
    let o = shtp(&[
        "gen",
        "--seed",
        "2",
        "--n-v",
        "2",
        "--n-m",
        "2",
        "--capacity",
        "1",
        "-o",
        path(&inst),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let o = shtp(&["solve", path(&inst), "--model", "ccp"]);
    assert_eq!(o.status.code(), Some(4), "{o:?}");
}

#[test]
fn zero_time_limit_without_incumbent_exits_with_one() {
    let dir = scratch("limit");
    let inst = dir.join("inst.toml");
    let o = shtp(&["gen", "--seed", "4", "-o", path(&inst)]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let o = shtp(&["solve", path(&inst), "--model", "det", "--time-limit", "0"]);
    assert_eq!(o.status.code(), Some(1), "{o:?}");
}

#[test]
fn suite_writes_tables() {
    let dir = scratch("suite");
    let o = shtp(&[
        "suite",
        "sigma_sweep",
        "--instances",
        "1",
        "--n-v",
        "2",
        "--n-m",
        "2",
        "--models",
        "det,ccp",
        "--out-dir",
        path(&dir),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let table = std::fs::read_to_string(dir.join("sigma_sweep.csv")).unwrap();
    let mut lines = table.lines();
    assert!(lines.next().unwrap().starts_with("# suite=sigma_sweep"));
    assert!(lines.next().unwrap().starts_with("c_sigma,det_f,"));
    assert_eq!(lines.count(), 5);
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let o = shtp(&["suite", "nope"]);
    assert_eq!(o.status.code(), Some(2), "{o:?}");
}
