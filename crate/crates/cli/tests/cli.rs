use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::Command;

use shapemmr::{assign, TreatmentGrid};
use shapemmr_cli::output::parse_policy_params;
use tempfile::TempDir;

const THREE_LEVEL: &str = r#"
[grid]
values = [0.0, 1.0, 2.0]
observed = [0.0, 2.0]

[shape]
monotone = "decreasing"
curvature = "convex"
bounds = [0.0, 1.0]

[utility]
benefit = [0.0, 1.0, 2.0]
"#;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn shapemmr(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_shapemmr"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

struct Case {
    dir: TempDir,
}

impl Case {
    fn new(config: &str, data: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        fs::write(dir.path().join("data.csv"), data).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, command: &str, extra: &[&str]) -> Run {
        let config = self.path("run.toml");
        let data = self.path("data.csv");
        let out = self.path("out");
        let mut args = vec![
            command,
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        if command != "simulate" {
            args.extend(["--data", data.to_str().unwrap()]);
        }
        args.extend(extra);
        shapemmr(&args)
    }

    fn out(&self, name: &str) -> String {
        fs::read_to_string(self.path("out").join(name)).unwrap()
    }
}

fn records(text: &str) -> Vec<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    rdr.records()
        .map(|r| {
            header
                .iter()
                .cloned()
                .zip(r.unwrap().iter().map(String::from))
                .collect()
        })
        .collect()
}

fn num(r: &BTreeMap<String, String>, key: &str) -> f64 {
    r[key].parse().unwrap()
}

fn three_level() -> Case {
    Case::new(THREE_LEVEL, "treatment,outcome\n0,1\n0,1\n2,0\n2,0\n")
}

#[test]
fn bounds_at_unobserved_level() {
    let case = three_level();
    let run = case.run("bounds", &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let rows = records(&case.out("bounds.csv"));
    assert_eq!(rows.len(), 3);
    let mid = rows.iter().find(|r| r["d"] == "1").unwrap();
    assert_eq!((num(mid, "m_min"), num(mid, "m_max")), (0.0, 0.5));
    assert_eq!((num(mid, "v_min"), num(mid, "v_max")), (0.0, 0.5));
    for r in rows.iter().filter(|r| r["d"] != "1") {
        assert_eq!(r["m_min"], r["m_max"]);
    }
}

#[test]
fn solve_three_level() {
    let case = three_level();
    let run = case.run("solve", &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let policy = records(&case.out("policy.csv"));
    assert_eq!(policy.len(), 4);
    assert!(policy.iter().all(|r| r["d"] == "1"));
    let gamma: Vec<f64> = records(&case.out("gamma.csv"))
        .iter()
        .map(|r| num(r, "gamma"))
        .collect();
    assert_eq!(gamma, vec![0.5, 0.0, 0.5]);
    let worst = records(&case.out("worstcase_1.csv"));
    assert_eq!(worst.len(), 3);
}

#[test]
fn malformed_header_is_rejected() {
    let case = Case::new(THREE_LEVEL, "treatment,outcome,age\n0,1,3\n2,0,4\n");
    let run = case.run("solve", &[]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("`age`"), "{}", run.stderr);
    assert!(!case.path("out").join("policy.csv").exists());
}

#[test]
fn unobserved_treatment_is_rejected() {
    let case = Case::new(THREE_LEVEL, "treatment,outcome\n1,1\n");
    let run = case.run("bounds", &[]);
    assert_eq!(run.code, 2);
    assert!(
        run.stderr.contains("not an observed grid level"),
        "{}",
        run.stderr
    );
    assert_eq!(
        run.stderr.matches("invalid input").count(),
        1,
        "{}",
        run.stderr
    );
}

#[test]
fn unknown_config_key_is_rejected() {
    let case = Case::new(
        &format!("{THREE_LEVEL}\nshrink = true\n"),
        "treatment,outcome\n0,1\n2,0\n",
    );
    let run = case.run("bounds", &[]);
    assert_eq!(run.code, 2, "{}", run.stderr);
}

#[test]
fn report_level_off_grid_is_rejected() {
    let case = Case::new(
        &format!("{THREE_LEVEL}\n[report]\nworstcase_levels = [0.5]\n"),
        "treatment,outcome\n0,1\n2,0\n",
    );
    let run = case.run("solve", &[]);
    assert_eq!(run.code, 2, "{}", run.stderr);
}

#[test]
fn inconsistent_estimate_without_repair_is_infeasible() {
    let config = format!("{THREE_LEVEL}\n[solver]\nproject = false\n");
    let case = Case::new(&config, "treatment,outcome\n0,0\n2,1\n");
    let run = case.run("solve", &[]);
    assert_eq!(run.code, 3, "{}", run.stderr);

    let case = Case::new(THREE_LEVEL, "treatment,outcome\n0,0\n2,1\n");
    let run = case.run("project", &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(
        run.stdout.contains("1 of 1 cells repaired"),
        "{}",
        run.stdout
    );
    let rows = records(&case.out("projection.csv"));
    let projected: Vec<f64> = rows.iter().map(|r| num(r, "projected")).collect();
    assert_eq!(projected, vec![0.5, 0.5]);
}

#[test]
fn zero_threads_is_rejected() {
    let case = three_level();
    assert_eq!(case.run("bounds", &["--threads", "0"]).code, 2);
}

#[test]
fn fully_observed_grid_picks_best_level() {
    let config = r#"
[grid]
values = [0.0, 1.0, 2.0]
observed = [0.0, 1.0, 2.0]

[shape]
bounds = [0.0, 1.0]

[utility]
benefit = [1.0, 1.0, 1.0]
cost = [0.0, 0.3, 0.5]
"#;
    // Mean utilities 0.25, 0.45, 0.25.
    let data = "treatment,outcome\n0,1\n0,0\n0,0\n0,0\n1,1\n1,1\n1,1\n1,0\n2,1\n2,1\n2,1\n2,0\n";
    let case = Case::new(config, data);
    let run = case.run("solve", &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(records(&case.out("policy.csv"))
        .iter()
        .all(|r| r["d"] == "1"));
    let gamma: Vec<f64> = records(&case.out("gamma.csv"))
        .iter()
        .map(|r| num(r, "gamma"))
        .collect();
    let expected = [0.2, 0.0, 0.2];
    for (g, e) in gamma.iter().zip(expected) {
        assert!((g - e).abs() < 1e-12, "{gamma:?}");
    }
}

/// Four covariate cells with exact takeup shares at the two observed prices.
fn score_case() -> Case {
    let config = r#"
[grid]
values = [0.0, 0.5, 1.0, 1.5, 2.0]
observed = [0.0, 2.0]

[shape]
monotone = "decreasing"
curvature = "convex"
bounds = [0.0, 1.0]

[utility]
benefit = [0.0, 0.5, 1.0, 1.5, 2.0]

[policy]
kind = "linear_score"
features = [0]
"#;
    let shares = [(9000, 2382), (8500, 2282), (8000, 2327), (7500, 2336)];
    let mut data = String::from("treatment,outcome,x1\n");
    for (x, (low, high)) in shares.iter().enumerate() {
        for (d, ones) in [(0, low), (2, high)] {
            for i in 0..10_000 {
                data.push_str(&format!("{d},{},{x}\n", u8::from(i < *ones)));
            }
        }
    }
    Case::new(config, &data)
}

#[test]
fn policy_parameters_reproduce_assignment() {
    let case = score_case();
    let run = case.run("solve", &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let policy = parse_policy_params(&case.out("policy_params.csv")).unwrap();
    let grid = TreatmentGrid::new(vec![0.0, 0.5, 1.0, 1.5, 2.0], &[0.0, 2.0]).unwrap();
    let cells = records(&case.out("cells.csv"));
    let rows = records(&case.out("policy.csv"));
    assert_eq!(rows.len(), 80_000);
    let mut levels = std::collections::BTreeSet::new();
    for r in &rows {
        let cell = &cells[r["cell"].parse::<usize>().unwrap()];
        let j = assign(&policy, &[num(cell, "x1")], &grid);
        assert_eq!(grid.value(j), num(r, "d"));
        levels.insert(r["d"].clone());
    }
    assert!(
        levels.len() > 1,
        "expected a non-constant rule, got {levels:?}"
    );
    for r in records(&case.out("gamma.csv")) {
        assert!(num(&r, "gamma") >= 0.0);
    }
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let case = score_case();
    let names = ["policy.csv", "policy_params.csv", "gamma.csv", "cells.csv"];
    let mut seen: Vec<Vec<Vec<u8>>> = Vec::new();
    for threads in ["1", "4"] {
        assert_eq!(case.run("solve", &["--threads", threads]).code, 0);
        seen.push(
            names
                .iter()
                .map(|n| fs::read(case.path("out").join(n)).unwrap())
                .collect(),
        );
    }
    assert_eq!(seen[0], seen[1]);
}

#[test]
fn simulate_writes_summary() {
    let config = r#"
seed = 7

[policy]
kind = "linear_score"
features = [0]

[simulation]
sample_sizes = [200, 800]
replications = 5
"#;
    let case = Case::new(config, "");
    let run = case.run("simulate", &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert!(run.stdout.contains("log-log slope"), "{}", run.stdout);
    let summary = records(&case.out("sim_summary.csv"));
    assert_eq!(
        summary.iter().map(|r| r["n"].clone()).collect::<Vec<_>>(),
        vec!["200", "800"]
    );
    let results = records(&case.out("sim_results.csv"));
    assert_eq!(results.len(), 10);
    assert!(results.iter().all(|r| num(r, "gap") >= -1e-9));
}
