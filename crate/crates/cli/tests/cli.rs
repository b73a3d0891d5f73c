use std::path::Path;
use std::process::Command;

use plap::{Field, Grid};
use plap_cli::fieldio::{read_field, write_field};
use plap_cli::{exit, run, CliError, RunConfig};
use serde_json::Value;

const BASE: &str = r#"
[grid]
kind = "periodic-1d"
nodes = 64

[problem]
p = 2.0
lambda = 0.0

[problem.f]
kind = "pure-power"
q = 4.0
"#;

fn config(command: &str, extra: &str) -> String {
    format!("command = \"{command}\"\n{extra}\n{BASE}")
}

fn parse_err(text: &str) -> String {
    match RunConfig::parse(text) {
        Err(e @ CliError::Config(_)) => e.to_string(),
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn field_round_trip_is_bitwise() {
    let grid = Grid::<f64>::boxed(2, 9, 3.0).unwrap();
    let values: Vec<f64> = (0..grid.num_dofs())
        .map(|i| ((i as f64) * 1.618).sin() * 10f64.powi(i as i32 % 7 - 3) + 1.0 / 3.0)
        .collect();
    let u = Field::new(values).unwrap();
    let mut buf = Vec::new();
    write_field(&u, &grid, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("index,x1,x2,value\n"));
    let back = read_field(buf.as_slice(), &grid).unwrap();
    for (a, b) in u.values().iter().zip(back.values()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn short_field_file_is_rejected() {
    let grid = Grid::<f64>::periodic(4, 1.0).unwrap();
    let text = "index,x1,value\n0,0.0,1.0\n1,0.25,1.0\n";
    let err = read_field(text.as_bytes(), &grid).unwrap_err().to_string();
    assert!(err.contains("2 rows"), "{err}");
}

#[test]
fn nan_entry_is_rejected_with_row_number() {
    let grid = Grid::<f64>::periodic(4, 1.0).unwrap();
    let text = "index,x1,value\n0,0.0,1.0\n1,0.25,NaN\n2,0.5,1.0\n3,0.75,1.0\n";
    let err = read_field(text.as_bytes(), &grid).unwrap_err().to_string();
    assert!(err.contains("row 2") && err.contains("non-finite"), "{err}");
}

#[test]
fn wrong_header_is_rejected() {
    let grid = Grid::<f64>::periodic(4, 1.0).unwrap();
    let err = read_field("i,value\n0,1.0\n".as_bytes(), &grid).unwrap_err().to_string();
    assert!(err.contains("header"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let err = parse_err(&config("eigen", "colour = 3"));
    assert!(err.contains("colour"), "{err}");
    let err = parse_err(&config("eigen", "").replace("q = 4.0", "q = 4.0\nshape = 1"));
    assert!(err.contains("shape") && err.contains("line"), "{err}");
}

#[test]
fn invariants_are_enforced_at_parse_time() {
    let cases = [
        ("p = 2.0", "p = 1.0", "p must exceed 1"),
        ("lambda = 0.0", "lambda = nan", "lambda"),
        ("nodes = 64", "nodes = 0", "node"),
        ("nodes = 64", "nodes = 64\ndims = 2", "dim"),
        ("nodes = 64", "nodes = 64\nextent = -1.0", "extent"),
        ("lambda = 0.0", "lambda = 0.0\nb = -1.0", "b"),
        ("lambda = 0.0", "lambda = 0.0\nb = \"x1 - 0.5\"", "b"),
        ("lambda = 0.0", "lambda = 0.0\nV = \"t\"", "t"),
        ("lambda = 0.0", "lambda = 0.0\nV = \"x2\"", "x2"),
        ("lambda = 0.0", "lambda = 0.0\nV = \"sin(\"", "expression"),
        ("q = 4.0", "q = 2.0", "q"),
    ];
    for (from, to, needle) in cases {
        let err = parse_err(&config("eigen", "").replacen(from, to, 1));
        assert!(err.to_lowercase().contains(&needle.to_lowercase()), "{to}: {err}");
    }
}

#[test]
fn command_sections_are_validated() {
    assert!(parse_err(&config("eval", "")).contains("eval.field"));
    assert!(parse_err(&config("study", "")).contains("study"));
    let err = parse_err(&config("study", "[study]\nkind = \"grid\"\ntask = \"eigen\"\nvalues = [64, 0.5]"));
    assert!(err.contains("study.values[1]"), "{err}");
    let err = parse_err(&config("solve", "[tolerances]\ncerami = -1.0"));
    assert!(err.contains("tolerances.cerami"), "{err}");
    assert!(parse_err(&config("nonsense", "")).contains("nonsense"));
}

#[test]
fn solve_on_constant_solution_spec() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::parse(&config("solve", "")).unwrap();
    let out = run(&cfg, dir.path(), &dir.path().join("a")).unwrap();
    assert_eq!(out.code, exit::SUCCESS);
    let result = read_json(&dir.path().join("a/result.json"));
    let value = result["result"]["value"].as_f64().unwrap();
    assert!(value > 0.0 && value <= 0.25 + 1e-6, "{value}");
    assert!(result["result"]["cerami"].as_f64().unwrap() < 1e-8);
    let trace = std::fs::read_to_string(dir.path().join("a/trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,Phi,cerami,norm\n"));
    for f in ["geometry.json", "solution.csv", "metadata.json"] {
        assert!(dir.path().join("a").join(f).exists(), "{f}");
    }
}

#[test]
fn results_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::parse(&config("solve", "seed = 7")).unwrap();
    run(&cfg, dir.path(), &dir.path().join("a")).unwrap();
    run(&cfg, dir.path(), &dir.path().join("b")).unwrap();
    for f in ["result.json", "geometry.json", "solution.csv", "trace.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn eigen_values_file_starts_with_fourier_values() {
    let dir = tempfile::tempdir().unwrap();
    let text = config("eigen", "").replace("nodes = 64", "nodes = 256");
    let cfg = RunConfig::parse(&text).unwrap();
    run(&cfg, dir.path(), dir.path()).unwrap();
    let values: Vec<f64> = std::fs::read_to_string(dir.path().join("eigenvalues.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!((values[0] - 1.0).abs() < 1e-9);
    assert!((values[1] - 40.478).abs() < 5e-3 && (values[2] - 40.478).abs() < 5e-3, "{values:?}");
    let spectrum = read_json(&dir.path().join("spectrum.json"));
    let field = spectrum["entries"][1]["field"].as_str().unwrap();
    assert!(dir.path().join(field).exists());
}

#[test]
fn eval_reads_field_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::<f64>::periodic(64, 1.0).unwrap();
    let u = Field::constant(64, 1.0);
    write_field(&u, &grid, std::fs::File::create(dir.path().join("u.csv")).unwrap()).unwrap();
    let cfg = RunConfig::parse(&config("eval", "[eval]\nfield = \"u.csv\"")).unwrap();
    run(&cfg, dir.path(), &dir.path().join("out")).unwrap();
    let e = read_json(&dir.path().join("out/energy.json"));
    // u = 1 solves the p = 2, lambda = 0, f = t^3 problem with Phi = 1/4
    assert!((e["energy"]["Phi"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    assert!(e["cerami"].as_f64().unwrap() < 1e-12);
}

#[test]
fn study_writes_combined_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::parse(&config(
        "study",
        "[study]\nkind = \"grid\"\ntask = \"eigen\"\nvalues = [32, 64, 128]",
    ))
    .unwrap();
    let out = run(&cfg, dir.path(), dir.path()).unwrap();
    assert_eq!(out.code, exit::SUCCESS);
    let csv = std::fs::read_to_string(dir.path().join("study.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("nodes,"));
    assert!(dir.path().join("point_002/spectrum.json").exists());
}

fn binary(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_plap")).args(args).output().unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, config("eigen", "bogus = 1")).unwrap();
    let out = binary(&["--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let missing = dir.path().join("missing.toml");
    std::fs::write(&missing, config("eval", "[eval]\nfield = \"nope.csv\"")).unwrap();
    let out = binary(&["--config", missing.to_str().unwrap(), "--output", dir.path().join("m").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let budget = dir.path().join("budget.toml");
    std::fs::write(&budget, config("solve", "[solve]\npath_max_iter = 5\n[tolerances]\ncerami = 1e-300")
            .replace("lambda = 0.0", "lambda = 0.0\nb = \"1 + 0.5*cos(2*pi*x1)\"")).unwrap();
    let out = binary(&["--config", budget.to_str().unwrap(), "--output", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let meta = read_json(&dir.path().join("b/metadata.json"));
    assert_eq!(meta["exit_code"], 2);

    assert!(!binary(&[]).status.success());
}

#[test]
fn verify_on_default_spec_passes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("verify.toml");
    std::fs::write(&path, config("verify", "")).unwrap();
    let out = binary(&[
        "--config",
        path.to_str().unwrap(),
        "--seed",
        "5",
        "--threads",
        "1",
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 10);
    let suites = read_json(&dir.path().join("suites.json"));
    assert_eq!(suites["passed"], true);
    assert_eq!(read_json(&dir.path().join("metadata.json"))["seed"], 5);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 5);
}
