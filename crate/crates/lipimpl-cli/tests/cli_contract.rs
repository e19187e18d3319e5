//! Exit-status table, output round-trips, and sweep behavior of the binary.

use std::path::{Path, PathBuf};
use std::process::Output;

use lipimpl_cli::run::{LipschitzRecord, PropositionRecord, SolveRecord, Summary};

fn run_cli(spec_json: &str, out: &Path, extra: &[&str]) -> Output {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, spec_json).unwrap();
    std::process::Command::new(env!("CARGO_BIN_EXE_lipimpl"))
        .arg("--spec")
        .arg(&spec_path)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn tmp_out() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    (dir, out)
}

#[test]
fn exit_zero_when_certificates_pass() {
    let (_guard, out) = tmp_out();
    let result = run_cli(
        r#"{"schema": 1, "command": "solve", "problem": {"builtin": "cubic"},
            "params": {"x": 0.1}, "seed": 7}"#,
        &out,
        &[],
    );
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    assert!(out.join("point_0000.csv").exists());
    assert!(out.join("summary.json").exists());
}

#[test]
fn exit_one_on_failed_certificate_names_the_record() {
    let (_guard, out) = tmp_out();
    // beta = 0.6 admits the iterates but fails the invariant-ball
    // inequality at x = 0.5.
    let result = run_cli(
        r#"{"schema": 1, "command": "solve", "problem": {"builtin": "cubic"},
            "config": {"beta": 0.6}, "params": {"x": 0.5}, "seed": 7}"#,
        &out,
        &[],
    );
    assert_eq!(result.status.code(), Some(1), "{result:?}");
    let stdout = String::from_utf8(result.stdout).unwrap();
    assert!(stdout.contains("certificate_failed"), "{stdout}");
    assert!(stdout.contains("ball_ok=false"), "{stdout}");

    let summary: Summary =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(!summary.all_certificates_pass);
}

#[test]
fn exit_two_on_spec_errors() {
    let (_guard, out) = tmp_out();
    let result = run_cli(
        r#"{"schema": 1, "command": "solve", "problem": {"builtin": "cubic"},
            "params": {"x": 0.1}, "seed": 7, "bogus": true}"#,
        &out,
        &[],
    );
    assert_eq!(result.status.code(), Some(2), "{result:?}");
    let stderr = String::from_utf8(result.stderr).unwrap();
    assert!(stderr.contains("bogus"), "{stderr}");

    let result = run_cli(r#"{"schema": 9}"#, &out, &[]);
    assert_eq!(result.status.code(), Some(2));

    let result = run_cli("{not json", &out, &[]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8(result.stderr).unwrap();
    assert!(stderr.contains("line"), "{stderr}");
}

#[test]
fn exit_three_on_numerical_errors() {
    let (_guard, out) = tmp_out();
    // Starting essentially on the switching surface with eps = 0.1 sticks.
    let result = run_cli(
        r#"{"schema": 1, "command": "oscillator",
            "problem": {"oscillator": {"eps": 0.1, "v0": [1e-6, 0.0]}}, "seed": 7}"#,
        &out,
        &[],
    );
    assert_eq!(result.status.code(), Some(3), "{result:?}");
    let stderr = String::from_utf8(result.stderr).unwrap();
    assert!(stderr.contains("stick"), "{stderr}");
}

#[test]
fn json_point_files_reparse_into_the_same_record() {
    let (_guard, out) = tmp_out();
    let result = run_cli(
        r#"{"schema": 1, "command": "solve", "problem": {"builtin": "cubic"},
            "params": {"x": 0.3}, "output": {"format": "json"}, "seed": 7}"#,
        &out,
        &[],
    );
    assert_eq!(result.status.code(), Some(0));
    let text = std::fs::read_to_string(out.join("point_0000.json")).unwrap();
    let record: SolveRecord = serde_json::from_str(&text).unwrap();
    let round_tripped: SolveRecord =
        serde_json::from_str(&serde_json::to_string(&record).unwrap()).unwrap();
    assert_eq!(record, round_tripped);

    let summary_text = std::fs::read_to_string(out.join("summary.json")).unwrap();
    let summary: Summary = serde_json::from_str(&summary_text).unwrap();
    let summary_round: Summary =
        serde_json::from_str(&serde_json::to_string(&summary).unwrap()).unwrap();
    assert_eq!(summary, summary_round);
}

#[test]
fn lipschitz_on_trig_family_certifies() {
    let (_guard, out) = tmp_out();
    let result = run_cli(
        r#"{"schema": 1, "command": "lipschitz", "problem": {"builtin": "trig"},
            "params": {"delta": 0.01, "n_pairs": 16, "margin": 0.1},
            "output": {"format": "json"}, "seed": 11}"#,
        &out,
        &[],
    );
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    let record: LipschitzRecord =
        serde_json::from_str(&std::fs::read_to_string(out.join("point_0000.json")).unwrap())
            .unwrap();
    assert!(record.ine_ok);
    assert_eq!(record.modulus, 1.0);
    assert!(record.quotient_sup <= 1.1);
}

#[test]
fn proposition_default_summary_values() {
    let (_guard, out) = tmp_out();
    // Degenerate segment (v2 = v1 = v0) at eps = 0: theta is exactly pi/2
    // and the modulus exactly 1.
    let result = run_cli(
        r#"{"schema": 1, "command": "proposition", "problem": {"builtin": "oscillator"},
            "params": {"eps": 0.0, "margin": 0.1, "n_pairs": 16, "grid": [200, 5]},
            "output": {"format": "json"}, "seed": 11}"#,
        &out,
        &[],
    );
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    let record: PropositionRecord =
        serde_json::from_str(&std::fs::read_to_string(out.join("point_0000.json")).unwrap())
            .unwrap();
    let report = record.report.unwrap();
    assert_eq!(report.theta, std::f64::consts::FRAC_PI_2);
    assert_eq!(report.modulus, 1.0);
    assert!(report.nv_ok);
}

#[test]
fn oscillator_csv_has_constant_states_at_zero_eps() {
    let (_guard, out) = tmp_out();
    let result = run_cli(
        r#"{"schema": 1, "command": "oscillator",
            "problem": {"oscillator": {"eps": 0.0, "v0": [1.0, 0.0], "t_grid": 8}},
            "seed": 7}"#,
        &out,
        &[],
    );
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    let csv = std::fs::read_to_string(out.join("point_0000.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,x1,x2,u,u_dot,y1,y2");
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[1], "1.0000000000000000e0");
        assert_eq!(cells[2], "0.0000000000000000e0");
        // y columns are empty at eps = 0.
        assert_eq!(cells[5], "");
        assert_eq!(cells[6], "");
    }
}

#[test]
fn sweeps_write_one_file_per_point_and_are_worker_deterministic() {
    let spec = r#"{"schema": 1, "command": "solve", "problem": {"builtin": "cubic"},
        "sweep": [{"path": "params.x", "values": [-0.2, 0.0, 0.2, 0.4]}], "seed": 7}"#;

    let (_g1, out_a) = tmp_out();
    let (_g2, out_b) = tmp_out();
    assert_eq!(
        run_cli(spec, &out_a, &["--workers", "3"]).status.code(),
        Some(0)
    );
    assert_eq!(
        run_cli(spec, &out_b, &["--workers", "1"]).status.code(),
        Some(0)
    );

    let mut names: Vec<String> = std::fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        vec![
            "point_0000.csv",
            "point_0001.csv",
            "point_0002.csv",
            "point_0003.csv",
            "summary.json"
        ]
    );
    for name in &names {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "file '{name}' differs across worker counts");
    }
}

#[test]
fn solve_sweep_residuals_match_the_bisection_oracle() {
    let spec = r#"{"schema": 1, "command": "solve", "problem": {"builtin": "cubic"},
        "sweep": [{"path": "params.x",
                   "values": [-0.5, -0.4, -0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5]}],
        "seed": 7}"#;
    let (_guard, out) = tmp_out();
    assert_eq!(run_cli(spec, &out, &[]).status.code(), Some(0));

    for i in 0..11 {
        let csv = std::fs::read_to_string(out.join(format!("point_{i:04}.csv"))).unwrap();
        let row = csv.lines().nth(1).unwrap();
        let cells: Vec<&str> = row.split(',').collect();
        let x: f64 = cells[0].parse().unwrap();
        let y: f64 = cells[1].parse().unwrap();
        let residual: f64 = cells[4].parse().unwrap();
        assert!(residual <= 1e-10, "x = {x}: residual {residual}");
        let hi = x.abs().max(1e-9);
        let oracle = lipimpl_oracles::bisect(|t| t * t * t + t - x, -hi, hi, 1e-12).unwrap();
        assert!(
            (y - oracle).abs() <= 1e-10,
            "x = {x}: y = {y} vs oracle {oracle}"
        );
    }
}

#[test]
fn log_env_var_controls_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    std::fs::write(
        &spec_path,
        r#"{"schema": 1, "command": "solve", "problem": {"builtin": "cubic"},
            "params": {"x": 0.1}, "seed": 7}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let result = std::process::Command::new(env!("CARGO_BIN_EXE_lipimpl"))
        .arg("--spec")
        .arg(&spec_path)
        .arg("--out")
        .arg(&out)
        .env("LIPIMPL_LOG", "info")
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(0));
    let stderr = String::from_utf8(result.stderr).unwrap();
    assert!(stderr.contains("running 1 point(s)"), "{stderr}");
}

#[test]
fn seed_flag_overrides_the_spec_seed() {
    let spec = r#"{"schema": 1, "command": "lipschitz", "problem": {"builtin": "trig"},
        "params": {"delta": 0.01, "n_pairs": 8, "margin": 0.1},
        "output": {"format": "json"}, "seed": 11}"#;
    let (_g1, out_a) = tmp_out();
    let (_g2, out_b) = tmp_out();
    assert_eq!(run_cli(spec, &out_a, &[]).status.code(), Some(0));
    assert_eq!(
        run_cli(spec, &out_b, &["--seed", "12"]).status.code(),
        Some(0)
    );

    let a: LipschitzRecord =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("point_0000.json")).unwrap())
            .unwrap();
    let b: LipschitzRecord =
        serde_json::from_str(&std::fs::read_to_string(out_b.join("point_0000.json")).unwrap())
            .unwrap();
    assert_ne!(
        a.quotient_sup, b.quotient_sup,
        "different seeds must sample differently"
    );
}
