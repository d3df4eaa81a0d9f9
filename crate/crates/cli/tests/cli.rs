use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn towlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_towlab"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("TOWLAB_OUT_DIR")
        .output()
        .expect("spawn towlab")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = towlab(dir, args);
    assert!(out.status.success(), "towlab {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// `(first column, last column)` of each data row.
fn columns(path: &Path) -> Vec<(f64, f64)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            (cells[0].parse().unwrap(), cells[cells.len() - 1].parse().unwrap())
        })
        .collect()
}

#[test]
fn solve_linear_payoff_gives_the_line() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["solve", "--domain", "interval:0,1", "--p", "2", "--eps", "0.1", "--k", "4", "--payoff", "linear"]);
    let rows = columns(&dir.path().join("solve_field.csv"));
    assert!(!rows.is_empty());
    for (x, v) in rows {
        assert!((x - v).abs() < 1e-8, "u({x}) = {v}");
    }
    let report = json(&dir.path().join("solve_report.json"));
    assert_eq!(report["report"]["converged"], Value::Bool(true));
}

#[test]
fn solve_constant_payoff_takes_one_sweep() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["solve", "--payoff", "const:5", "--p", "3"]);
    let report = json(&dir.path().join("solve_report.json"));
    assert_eq!(report["report"]["sweeps"], 1);
    for (_, v) in columns(&dir.path().join("solve_field.csv")) {
        assert_eq!(v, 5.0);
    }
}

#[test]
fn solve_sweep_table_against_the_line() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["solve", "--p", "3", "--payoff", "step:1", "--sweep-eps", "0.1,0.05,0.025"]);
    let text = std::fs::read_to_string(dir.path().join("solve_sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epsilon,sup_error,sweeps,converged"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 3);
    let errors: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    assert!(rows.iter().all(|r| r[3] == "true"));

    // the line itself is a fixed point at every eps
    ok(dir.path(), &["solve", "--p", "3", "--payoff", "linear", "--sweep-eps", "0.1,0.05", "--name", "exact"]);
    let text = std::fs::read_to_string(dir.path().join("exact_sweep.csv")).unwrap();
    for line in text.lines().skip(1) {
        let err: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(err < 1e-8, "{err}");
    }
}

#[test]
fn value_midpoint_is_one_half() {
    let dir = TempDir::new().unwrap();
    ok(
        dir.path(),
        &["value", "--p", "2", "--start", "0.5", "--strategy-i", "pull:1", "--strategy-ii", "pull:0", "--trials", "20000"],
    );
    let est = &json(&dir.path().join("value_estimate.json"))["estimate"];
    let mean = est["mean"].as_f64().unwrap();
    let se = est["std_error"].as_f64().unwrap();
    assert!((mean - 0.5).abs() <= 4.0 * se, "{mean} +- {se}");
}

#[test]
fn value_constant_payoff_is_exact() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["value", "--p", "3", "--payoff", "const:2.5", "--trials", "200", "--trajectories", "2"]);
    let est = &json(&dir.path().join("value_estimate.json"))["estimate"];
    assert_eq!(est["mean"].as_f64(), Some(2.5));
    assert_eq!(est["std_error"].as_f64(), Some(0.0));
    let traj = std::fs::read_to_string(dir.path().join("value_trajectory_1.csv")).unwrap();
    assert!(traj.starts_with("round,x1,toss,t_remaining\n0,"));
}

#[test]
fn value_greedy_agrees_with_solved_field_under_stencil_noise() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["solve", "--p", "3", "--payoff", "step:0.5", "--k", "2"]);
    let field = columns(&dir.path().join("solve_field.csv"));
    let target = field.iter().find(|(x, _)| (x - 0.3).abs() < 1e-9).unwrap().1;
    ok(
        dir.path(),
        &["value", "--p", "3", "--payoff", "step:0.5", "--k", "2", "--start", "0.3", "--noise", "stencil", "--trials", "20000"],
    );
    let est = &json(&dir.path().join("value_estimate.json"))["estimate"];
    let mean = est["mean"].as_f64().unwrap();
    let se = est["std_error"].as_f64().unwrap();
    assert!((mean - target).abs() <= 4.0 * se + 1e-3, "MC {mean} +- {se} vs DPP {target}");
}

#[test]
fn value_capped_runs_exit_with_three() {
    let dir = TempDir::new().unwrap();
    let out = towlab(dir.path(), &["value", "--strategy-i", "pull:0.5", "--strategy-ii", "pull:0.5", "--p", "100", "--round-cap", "3", "--trials", "50"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn mvp_examples() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["mvp", "--phi", "aronsson", "--x", "1,0", "--p", "inf", "--name", "a"]);
    let limit = json(&dir.path().join("a_limit.json"))["limit"].as_f64().unwrap();
    assert!((limit - 1.0 / 18.0).abs() <= 0.05 / 18.0, "{limit}");

    ok(dir.path(), &["mvp", "--phi", "linear", "--x", "0.3,-0.2", "--p", "3", "--name", "l"]);
    let limit = json(&dir.path().join("l_limit.json"))["limit"].as_f64().unwrap();
    assert!(limit.abs() < 1e-9, "{limit}");

    ok(dir.path(), &["mvp", "--phi", "quadratic", "--x", "0,0", "--p", "2", "--name", "q"]);
    let limit = json(&dir.path().join("q_limit.json"))["limit"].as_f64().unwrap();
    assert!((limit - 0.5).abs() < 1e-3, "{limit}");
    let csv = std::fs::read_to_string(dir.path().join("q_residuals.csv")).unwrap();
    assert!(csv.starts_with("phi,x1,x2,p,epsilon,residual,residual_over_eps2\n"));
}

#[test]
fn cylinder_sweep_is_monotone_with_gamblers_ruin_column() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["cylinder", "--alpha", "1", "--trials", "4000", "--ells", "0.05,0.2,0.8"]);
    let summary = json(&dir.path().join("cylinder_summary.json"));
    assert_eq!(summary["monotone"], Value::Bool(true));
    let l = summary["fitted_l"].as_f64().unwrap();
    for row in summary["rows"].as_array().unwrap() {
        let escape = row["escape"].as_f64().unwrap();
        assert!(escape <= l * row["bound_abscissa"].as_f64().unwrap() + 1e-12);
        let ruin = row["gamblers_ruin"].as_f64().unwrap();
        let est = &row["estimate"];
        assert!((est["mean"].as_f64().unwrap() - ruin).abs() <= 4.0 * est["std_error"].as_f64().unwrap() + 1e-3);
    }
}

#[test]
fn solve_parabolic_constant_datum_is_stationary() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["solve-parabolic", "--payoff", "const:1", "--horizon", "0.3", "--p", "3"]);
    let text = std::fs::read_to_string(dir.path().join("solve-parabolic_spacetime.csv")).unwrap();
    assert!(text.starts_with("x1,t,class,value\n"));
    for line in text.lines().skip(1) {
        assert!(line.ends_with(",1.0000000000000000e0"), "{line}");
    }
    let side = json(&dir.path().join("solve-parabolic_sidecar.json"));
    assert_eq!(side["horizon"].as_f64(), Some(0.3));
}

#[test]
fn solve_parabolic_long_horizon_matches_solve() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["solve", "--payoff", "quadratic", "--p", "3", "--eps", "0.2", "--k", "2", "--tol", "1e-12"]);
    ok(dir.path(), &["solve-parabolic", "--payoff", "quadratic", "--p", "3", "--eps", "0.2", "--k", "2", "--horizon", "12"]);
    let elliptic = columns(&dir.path().join("solve_field.csv"));
    let text = std::fs::read_to_string(dir.path().join("solve-parabolic_spacetime.csv")).unwrap();
    let mut last_t = 0.0f64;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let c: Vec<&str> = line.split(',').collect();
        let t: f64 = c[1].parse().unwrap();
        if t > last_t {
            last_t = t;
            rows.clear();
        }
        if t == last_t {
            rows.push((c[0].parse::<f64>().unwrap(), c[3].parse::<f64>().unwrap()));
        }
    }
    assert_eq!(rows.len(), elliptic.len());
    for ((x, a), (y, b)) in rows.iter().zip(&elliptic) {
        assert_eq!(x, y);
        assert!((a - b).abs() <= 1e-9, "x = {x}: {a} vs {b}");
    }
}

#[test]
fn oracle_fixtures() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["oracle", "--kind", "hitting", "--eps", "0.25"]);
    for (x, v) in columns(&dir.path().join("oracle_hitting.csv")) {
        assert!((x - v).abs() < 1e-14);
    }
    ok(dir.path(), &["oracle", "--kind", "running", "--a", "-2", "--b", "2", "--eps", "1", "--left", "0", "--right", "0"]);
    let running = columns(&dir.path().join("oracle_running.csv"));
    let expected = [0.0, 3.0, 4.0, 3.0, 0.0];
    for ((_, v), e) in running.iter().zip(expected) {
        assert!((v - e).abs() < 1e-12, "{v} vs {e}");
    }
    ok(dir.path(), &["oracle", "--kind", "grid", "--payoff", "linear"]);
    let text = std::fs::read_to_string(dir.path().join("oracle_grid.csv")).unwrap();
    assert!(text.starts_with("x1,x2,boundary,value\n"));
    for line in text.lines().skip(1) {
        let c: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((c[3] - c[0]).abs() < 1e-12, "{line}");
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["value", "--p", "3", "--payoff", "step:0.5", "--trials", "3000", "--seed", "7", "--trajectories", "1"];
    let mut with_one = args.to_vec();
    with_one.extend(["--threads", "1"]);
    let mut with_three = args.to_vec();
    with_three.extend(["--threads", "3"]);
    ok(a.path(), &with_one);
    ok(b.path(), &with_three);
    for file in ["value_estimate.json", "value_trajectory_0.csv"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }

    let strip_time = |p: &Path| {
        let mut v = json(p);
        v["report"].as_object_mut().unwrap().remove("wall_time_s");
        v
    };
    ok(a.path(), &["solve", "--p", "4"]);
    ok(b.path(), &["solve", "--p", "4"]);
    assert_eq!(std::fs::read(a.path().join("solve_field.csv")).unwrap(), std::fs::read(b.path().join("solve_field.csv")).unwrap());
    assert_eq!(strip_time(&a.path().join("solve_report.json")), strip_time(&b.path().join("solve_report.json")));
}

#[test]
fn config_file_precedence_and_dump() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# elliptic run\np = 3\neps = 0.05\npayoff = const:2\n").unwrap();
    let out = towlab(dir.path(), &["solve", "--config", cfg.to_str().unwrap(), "--eps", "0.2", "--dump-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("p=3\n"));
    assert!(text.contains("eps=0.2\n"));
    assert!(text.contains("payoff=const:2\n"));
    assert!(text.contains("k=4\n"));
    assert!(!dir.path().join("solve_field.csv").exists());

    std::fs::write(&cfg, "p = 3\nflavour = vanilla\n").unwrap();
    let out = towlab(dir.path(), &["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("flavour"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    for args in [
        &["solve", "--bogus", "1"][..],
        &["solve", "--p", "1.5"],
        &["solve", "--domain", "square:0,1"],
        &["value", "--start", "2"],
        &["mvp", "--eps", "0.1,0.2,0.05"],
        &["oracle", "--kind", "nope"],
        &["frobnicate"],
    ] {
        let out = towlab(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let out = towlab(dir.path(), &["solve", "--p", "1.5"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("p = 1.5"));
}

#[test]
fn non_convergence_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let out = towlab(dir.path(), &["solve", "--payoff", "quadratic", "--max-sweeps", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("solve_report.json").exists());
}

#[test]
fn help_documents_every_flag() {
    let out = Command::new(env!("CARGO_BIN_EXE_towlab")).args(["value", "--help"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in ["--domain", "--strategy-i", "--strategy-ii", "--noise", "--trials", "--seed", "--t0", "--max-capped", "--threads", "--config", "--dump-config", "--out-dir"] {
        assert!(text.contains(flag), "missing {flag}");
    }
}

#[test]
fn out_dir_environment_override() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_towlab"))
        .args(["oracle"])
        .current_dir(dir.path())
        .env("TOWLAB_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("oracle_hitting.csv").exists());
}
