//! End-to-end checks of the command-line interface: exit codes, file
//! round-trips, and reproducible CSV output.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hyperform")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hyperform-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

const FLIP_HALF: &str = r#"{
  "n": 2,
  "triplets": [[0, 0, 0.5], [0, 1, 0.5], [1, 0, 0.5], [1, 1, 0.5]],
  "pi": [0.5, 0.5],
  "reversible": true
}"#;

#[test]
fn validate_reports_bad_rows_with_exit_one() {
    let dir = tmp_dir("validate");
    let bad = dir.join("bad.json");
    write(
        &bad,
        r#"{"n": 2, "triplets": [[0, 0, 0.5], [0, 1, 0.4], [1, 0, 0.5], [1, 1, 0.5]], "pi": [0.5, 0.5]}"#,
    );
    let out = run(&["validate", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("RowSum"), "stderr: {stderr}");

    let good = dir.join("good.json");
    write(&good, FLIP_HALF);
    let out = run(&["validate", "--input", good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn missing_file_is_a_structural_error() {
    let out = run(&["validate", "--input", "/nonexistent/chain.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn spectrum_of_flip_half_has_unit_gap() {
    let dir = tmp_dir("spectrum");
    let chain = dir.join("chain.json");
    write(&chain, FLIP_HALF);
    let out = run(&["spectrum", "--input", chain.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let row = stdout.lines().nth(1).expect("one data row");
    let fields: Vec<&str> = row.split(',').collect();
    let gap: f64 = fields[2].parse().unwrap();
    let t_rel: f64 = fields[3].parse().unwrap();
    assert!((gap - 1.0).abs() < 1e-12);
    assert!((t_rel - 1.0).abs() < 1e-12);
}

#[test]
fn dirichlet_of_indicator_is_quarter() {
    let dir = tmp_dir("dirichlet");
    let chain = dir.join("chain.json");
    let field = dir.join("field.json");
    write(&chain, FLIP_HALF);
    write(&field, r#"{"values": [0.0, 1.0]}"#);
    let out = run(&[
        "dirichlet",
        "--input",
        chain.to_str().unwrap(),
        "--field",
        field.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let value: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((value - 0.25).abs() < 1e-15);
}

#[test]
fn barbell_discrete_pipeline_produces_valid_bound() {
    let dir = tmp_dir("barbell");
    let out = run(&[
        "barbell",
        "--n",
        "8",
        "--flavor",
        "discrete",
        "--output",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    let csv = std::fs::read_to_string(dir.join("results.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    let t_rel: f64 = fields[4].parse().unwrap();
    let b: f64 = fields[5].parse().unwrap();
    let c_pi: f64 = fields[6].parse().unwrap();
    let bound: f64 = fields[7].parse().unwrap();
    assert!(t_rel <= bound + 1e-8);
    assert_eq!(c_pi, 1.0);
    assert!((bound - b * c_pi).abs() < 1e-9 * bound);

    // the exported chain file round-trips through validate
    let chain_file = dir.join("chain.json");
    let out = run(&["validate", "--input", chain_file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));

    // compare on the exported files reproduces B
    let out = run(&[
        "compare",
        "--base",
        chain_file.to_str().unwrap(),
        "--target",
        chain_file.to_str().unwrap(),
        "--family",
        dir.join("family.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
}

#[test]
fn discretize_writes_both_projections() {
    let dir = tmp_dir("discretize");
    let spec = dir.join("kernel.json");
    write(
        &spec,
        r#"{"kernel": "affine-xy", "per_axis": 8, "quadrature_order": 3}"#,
    );
    let out = run(&[
        "discretize",
        "--kernel",
        spec.to_str().unwrap(),
        "--output",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    // the reversibilized chain validates clean, including detailed balance
    let out = run(&["validate", "--input", dir.join("h.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
}

#[test]
fn converge_csv_is_byte_identical_across_runs() {
    let dir = tmp_dir("converge");
    let spec = dir.join("kernel.json");
    write(
        &spec,
        r#"{"kernel": "affine-xy", "per_axis": 8, "quadrature_order": 2}"#,
    );
    let args = [
        "converge",
        "--kernel",
        spec.to_str().unwrap(),
        "--study",
        "drift",
        "--per-axis",
        "8",
        "--per-axis",
        "16",
        "--seed",
        "7",
    ];
    let first = run(&args);
    let second = run(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8_lossy(&first.stdout);
    assert!(text.starts_with("per_axis,delta,value,reference,abs_error\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn split_barbell_pipeline_reports_constant() {
    let dir = tmp_dir("split");
    let out = run(&[
        "barbell",
        "--n",
        "4",
        "--flavor",
        "split",
        "--per-axis",
        "4",
        "--output",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    let csv = std::fs::read_to_string(dir.join("results.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    let b: f64 = fields[3].parse().unwrap();
    assert!(b > 0.0);
    let assumptions = std::fs::read_to_string(dir.join("assumptions.txt")).unwrap();
    assert!(assumptions.contains("pass"));
    // exported config round-trips
    let config = std::fs::read_to_string(dir.join("config.json")).unwrap();
    assert!(config.contains("positive-flow"));
}

#[test]
fn unknown_kernel_name_is_structural() {
    let dir = tmp_dir("badkernel");
    let spec = dir.join("kernel.json");
    write(&spec, r#"{"kernel": "mystery", "per_axis": 4}"#);
    let out = run(&[
        "discretize",
        "--kernel",
        spec.to_str().unwrap(),
        "--output",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
