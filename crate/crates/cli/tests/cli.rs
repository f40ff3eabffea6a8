use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ftgp_cli::output::{ReportDocument, SolutionDocument};

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("problems").join(name)
}

fn ftgp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftgp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn solution(dir: &Path) -> SolutionDocument {
    serde_json::from_str(&std::fs::read_to_string(dir.join("solution.json")).unwrap()).unwrap()
}

fn gp_report(dir: &Path) -> ReportDocument {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn mini_gp_files_reach_their_optima() {
    let dir = tempfile::tempdir().unwrap();
    for (file, expected) in [("mini_gp_1.toml", 2.0), ("mini_gp_2.toml", 2.0), ("mini_gp_3.toml", 4.0)] {
        let o = ftgp(&["gp-solve", problem(file).to_str().unwrap(), "--quiet"], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(o.stdout.is_empty());
        let r = gp_report(dir.path());
        assert_eq!(r.status, "optimal");
        assert!((r.objective_value - expected).abs() / expected <= 1e-6, "{file}: {}", r.objective_value);
    }
}

#[test]
fn coercive_objective_without_constraints() {
    let dir = tempfile::tempdir().unwrap();
    let o = ftgp(&["gp-solve", problem("coercive_gp.toml").to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0);
    let r = gp_report(dir.path());
    assert!((r.objective_value - 2.0).abs() < 1e-8);
    assert!((r.theta_star["x"] - 1.0).abs() < 1e-4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("\"status\": \"optimal\""));
}

#[test]
fn missing_box_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = ftgp(&["gp-solve", problem("unbounded_gp.toml").to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("lower"), "{}", stderr(&o));
}

#[test]
fn mini_budget_matches_the_hand_solution() {
    let dir = tempfile::tempdir().unwrap();
    let o = ftgp(&["solve", problem("mini_budget.toml").to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc = solution(dir.path());
    assert_eq!(doc.kind, "budget");
    assert!((doc.schedule["theta1"] - 0.1).abs() < 1e-6);
    assert!((doc.fts_margins[0] - 0.4).abs() < 1e-6);
    assert!((doc.objective - 0.6).abs() < 1e-6);
    assert_eq!(doc.offset, -1.0);
    for f in ["trajectory.csv", "margins.csv"] {
        assert!(dir.path().join(f).exists());
    }
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("k,state,value\n0,1,1\n"));
}

#[test]
fn mini_performance_matches_the_hand_solution() {
    let dir = tempfile::tempdir().unwrap();
    let o = ftgp(&["solve", problem("mini_performance.toml").to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc = solution(dir.path());
    assert!((doc.schedule["theta1"] - 0.2).abs() < 1e-6);
    assert!((doc.cost - 4.0).abs() < 1e-5);
}

#[test]
fn invalid_epsilon_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = ftgp(&["solve", problem("bad_epsilon.toml").to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("epsilon"), "{}", stderr(&o));
}

#[test]
fn infeasible_problem_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = ftgp(&["solve", problem("infeasible.toml").to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert_eq!(solution(dir.path()).status, "infeasible");
}

#[test]
fn iteration_limit_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = ftgp(&["solve", problem("robust_pair.toml").to_str().unwrap(), "--max-iter", "1"], dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn misspelled_fields_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(problem("mini_budget.toml")).unwrap().replace("bound =", "bownd =");
    let path = dir.path().join("typo.toml");
    std::fs::write(&path, text).unwrap();
    let o = ftgp(&["solve", path.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bownd"), "{}", stderr(&o));
}

#[test]
fn solved_schedules_certify() {
    for file in ["mini_budget.toml", "robust_pair.toml"] {
        let dir = tempfile::tempdir().unwrap();
        let p = problem(file);
        assert_eq!(code(&ftgp(&["solve", p.to_str().unwrap()], dir.path())), 0);
        let sol = dir.path().join("solution.json");
        let o = ftgp(&["certify", p.to_str().unwrap(), sol.to_str().unwrap()], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("certified"));
    }
}

#[test]
fn zero_dynamics_certify_with_full_margins() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("s.json");
    std::fs::write(&sched, r#"{"u": 1.0}"#).unwrap();
    let o = ftgp(&["certify", problem("zero_dynamics.toml").to_str().unwrap(), sched.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(out.contains("margin k=1: 1\n") && out.contains("margin k=2: 1\n"), "{out}");
}

#[test]
fn incomplete_schedule_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("s.json");
    std::fs::write(&sched, r#"{"a0": 1.0}"#).unwrap();
    let o = ftgp(&["certify", problem("robust_pair.toml").to_str().unwrap(), sched.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn identical_runs_write_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        assert_eq!(code(&ftgp(&["solve", problem("robust_pair.toml").to_str().unwrap()], dir.path())), 0);
    }
    for f in ["solution.json", "trajectory.csv", "margins.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn case_study_commands() {
    let dir = tempfile::tempdir().unwrap();
    let default = dir.path().join("default");
    let o = ftgp(&["casestudy", "--quiet"], &default);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let base = solution(&default);
    assert!(base.fts_margins.iter().all(|&m| m > 0.0));

    // The mean log-state sits below the finite-time line at every k >= 1.
    let fig1 = std::fs::read_to_string(default.join("fig1.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(fig1.as_bytes());
    let mut by_k: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let k: usize = rec[0].parse().unwrap();
        let v: f64 = rec[2].parse().unwrap();
        let e = by_k.entry(k).or_insert((f64::NAN, f64::NAN));
        match &rec[1] {
            "mean" => e.0 = v,
            "fts_bound" => e.1 = v,
            _ => {}
        }
    }
    for k in 1..=5 {
        let (mean, bound) = by_k[&k];
        assert!(mean < bound, "k={k}");
    }
    for f in ["fig2.csv", "fig3.csv"] {
        assert!(default.join(f).exists());
    }

    let loose = dir.path().join("loose");
    let o = ftgp(&["casestudy", problem("casestudy_loose.toml").to_str().unwrap()], &loose);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(solution(&loose).cost < base.cost);

    let o = ftgp(&["casestudy", problem("casestudy_untuned.toml").to_str().unwrap()], &dir.path().join("untuned"));
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    // Every scaling at its upper bound breaks the finite-time bound.
    let all_max: BTreeMap<String, f64> = base.schedule.keys().map(|k| (k.clone(), 1.0)).collect();
    let sched = dir.path().join("all_max.json");
    std::fs::write(&sched, serde_json::to_string(&all_max).unwrap()).unwrap();
    let o = ftgp(&["certify", problem("casestudy.toml").to_str().unwrap(), sched.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("violated at k="), "{}", stderr(&o));

    let sol = default.join("solution.json");
    let o = ftgp(&["certify", problem("casestudy.toml").to_str().unwrap(), sol.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}
