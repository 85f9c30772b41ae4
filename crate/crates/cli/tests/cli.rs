use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use platoon_cli::commands::{self, PolicyKind};
use platoon_cli::{Failure, Settings};
use platoon_core::{optimize_delta, EvaluationMode, ModelParams};

fn platoon(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_platoon"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn solve_writes_headed_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = platoon(&["solve", "--L", "3", "--T", "10", "--p", "0.1", "--cex", "15"], dir.path());
    assert!(o.status.success(), "{}", text(&o));
    for name in ["policy.csv", "policy_grid.csv", "solve_report.json", "solve_manifest.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let policy = fs::read_to_string(dir.path().join("policy.csv")).unwrap();
    let mut lines = policy.lines();
    assert_eq!(lines.next(), Some("# command: solve"));
    assert!(lines.next().unwrap().starts_with("# config: {"));
    assert_eq!(lines.next(), Some("state,V,delta,action"));
    assert_eq!(lines.count(), 56);
    let grid = fs::read_to_string(dir.path().join("policy_grid.csv")).unwrap();
    assert_eq!(grid.lines().filter(|l| !l.starts_with('#')).count(), 1 + 56);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("solve_report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["converged"], true);
    assert_eq!(report["states"], 92);
}

#[test]
fn over_budget_refuses() {
    let dir = tempfile::tempdir().unwrap();
    let o = platoon(&["solve", "--L", "12", "--T", "30"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(text(&o).contains("SIZE_EXCEEDED"));
    assert!(text(&o).contains("142233692"));
}

#[test]
fn cost_ordering_violation_is_a_warning() {
    // C_pt(2) = 7/3 < 2 omega at L = 3, C_ex = 7, omega = 1.2.
    let dir = tempfile::tempdir().unwrap();
    let o = platoon(&["solve", "--cex", "7", "--omega", "1.2"], dir.path());
    assert!(o.status.success(), "{}", text(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("solve_report.json")).unwrap()).unwrap();
    assert!(!report["report"]["cost_ordering_violations"].as_array().unwrap().is_empty());
}

#[test]
fn verify_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    // The solved L = 3 policy breaks the shift statements at d_1 = 1 only.
    let strict = platoon(&["verify"], dir.path());
    assert_eq!(strict.status.code(), Some(4), "{}", text(&strict));
    let relaxed = platoon(&["verify", "--exclude-expiring"], dir.path());
    assert!(relaxed.status.success(), "{}", text(&relaxed));
    let reports: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("properties.json")).unwrap()).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 5);
    assert_eq!(reports[0]["property"], "tail_monotonicity");

    // Larger stations are advisory: never a failing exit.
    let advisory = platoon(&["verify", "--L", "4", "--T", "6"], dir.path());
    assert!(advisory.status.success(), "{}", text(&advisory));
    assert!(text(&advisory).contains("(advisory)"));
}

#[test]
fn verify_constructed_policy() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("fixture.csv");
    // Hold everywhere except the single-truck state (6).
    fs::write(&fixture, "state,action\n[6],release\n").unwrap();
    let o = platoon(&["verify", "--policy", fixture.to_str().unwrap(), "--exclude-expiring"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(text(&o).contains("a) TailMonotonicity: 1 violations"), "{}", text(&o));

    let fine = dir.path().join("hold.csv");
    fs::write(&fine, "state,action\n").unwrap();
    let o = platoon(&["verify", "--policy", fine.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", text(&o));
}

#[test]
fn experiment_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let args = ["experiment", "--L", "3,4", "--replications", "3", "--slots", "5000", "--seed", "17"];
    for d in [&a, &b] {
        let o = platoon(&args, d.path());
        assert!(o.status.success(), "{}", text(&o));
    }
    for name in ["summary.csv", "runs_0.csv", "runs_1.csv", "experiment_manifest.json"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        // The manifest records the output directory, so compare past it.
        if name.ends_with(".json") {
            let strip = |v: Vec<u8>| {
                let mut j: serde_json::Value = serde_json::from_slice(&v).unwrap();
                j["config"]["out"] = serde_json::Value::Null;
                j
            };
            assert_eq!(strip(x), strip(y));
        } else {
            let body = |v: &[u8]| {
                String::from_utf8_lossy(v)
                    .lines()
                    .filter(|l| !l.starts_with("# config"))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            assert_eq!(body(&x), body(&y), "{name}");
        }
    }
    let mut other = args.to_vec();
    let last = other.len() - 1;
    other[last] = "18";
    platoon(&other, c.path());
    assert_ne!(
        fs::read(a.path().join("runs_0.csv")).unwrap().split(|&b| b == b'\n').skip(3).collect::<Vec<_>>(),
        fs::read(c.path().join("runs_0.csv")).unwrap().split(|&b| b == b'\n').skip(3).collect::<Vec<_>>()
    );
}

#[test]
fn experiment_same_out_dir_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["experiment", "--L", "3", "--replications", "2", "--slots", "3000"];
    platoon(&args, dir.path());
    let first = fs::read(dir.path().join("summary.csv")).unwrap();
    let runs = fs::read(dir.path().join("runs_0.csv")).unwrap();
    platoon(&args, dir.path());
    assert_eq!(first, fs::read(dir.path().join("summary.csv")).unwrap());
    assert_eq!(runs, fs::read(dir.path().join("runs_0.csv")).unwrap());
}

#[test]
fn dataset_rows_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let settings = Settings {
        capacity: vec![2, 3, 9],
        deadline: vec![6, 20],
        p: vec![0.2, 0.5],
        cex: vec![30.0],
        out: dir.path().to_path_buf(),
        budget: 2_000,
        ..Settings::default()
    };
    let r = commands::dataset(&settings).unwrap();
    let over = settings
        .instances()
        .unwrap()
        .iter()
        .filter(|m| platoon_core::cardinality(m) > 2_000)
        .count();
    assert!(over > 0);
    assert_eq!(r.skipped, over);
    assert_eq!(r.rows.len(), 12 - over);
    for row in &r.rows {
        let m = ModelParams::new(row.capacity, row.deadline, row.p, row.cex, row.omega, row.gamma).unwrap();
        let direct = optimize_delta(&m, EvaluationMode::Exact, 1..=m.deadline()).unwrap();
        assert_eq!(direct.best_delta, row.delta_star);
    }
    let csv = fs::read_to_string(dir.path().join("dataset.csv")).unwrap();
    assert!(csv.contains("L,T,p,C_ex,omega,gamma,delta_star,cost_at_delta_star"));
}

#[test]
fn predictions_feed_the_threshold_policy() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.csv");
    fs::write(&pred, "# from a model\nL,T,p,C_ex,omega,gamma,delta_pred\n30,40,0.3,100,1.5,0.8,9\n").unwrap();
    let settings = Settings {
        capacity: vec![30],
        deadline: vec![40],
        p: vec![0.3],
        cex: vec![100.0],
        omega: vec![1.5],
        gamma: vec![0.8],
        replications: 2,
        slots: 2_000,
        out: dir.path().to_path_buf(),
        ..Settings::default()
    };
    let r = commands::experiment(&settings, &PolicyKind::ALL, Some(&pred)).unwrap();
    let labels: Vec<&str> = r.rows.iter().map(|r| r.policy.as_str()).collect();
    assert_eq!(labels, ["greedy", "deadline", "delta9"]);

    fs::write(&pred, "L,T,p,C_ex,omega,gamma,delta_pred\n30,40,0.3,100,1.5,0.8,41\n").unwrap();
    assert!(commands::experiment(&settings, &PolicyKind::ALL, Some(&pred)).is_err());
}

#[test]
fn delta_search_modes() {
    let dir = tempfile::tempdir().unwrap();
    let settings = Settings {
        capacity: vec![3],
        deadline: vec![10],
        p: vec![0.05],
        cex: vec![100.0],
        replications: 4,
        slots: 20_000,
        out: dir.path().to_path_buf(),
        ..Settings::default()
    };
    let exact = commands::delta_search(&settings, false).unwrap();
    assert_eq!(exact.best_delta, 2);
    assert_eq!(exact.cost_by_delta.len(), 10);
    let sim = commands::delta_search(&settings, true).unwrap();
    assert_eq!(sim.cost_by_delta.len(), 10);

    let big = Settings {
        capacity: vec![12],
        deadline: vec![30],
        ..settings
    };
    let err = commands::delta_search(&big, false).unwrap_err();
    assert!(matches!(err.downcast_ref::<Failure>(), Some(Failure::SizeExceeded { .. })));
}

#[test]
fn config_file_mirrors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "L = 3\nT = 10\np = 0.05\ncex = 100\n").unwrap();
    let o = platoon(&["delta-search", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("best delta 2"));

    fs::write(&cfg, "L = 3\ncapacity = 4\n").unwrap();
    let o = platoon(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
}

#[test]
fn presets_resolve() {
    let dir = tempfile::tempdir().unwrap();
    let o = platoon(
        &["experiment", "--preset", "fig4c", "--L", "3", "--replications", "2", "--slots", "2000", "--policies", "optimal,deadline"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", text(&o));
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.contains("\"preset\":\"fig4c\""));
    assert!(summary.contains("3,10,0.6,30.0,1.0,1.0,optimal"));
    let o = platoon(&["solve", "--preset", "nope"], dir.path());
    assert!(!o.status.success());
}
