use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const PAIR: &str = r#"
s_spin = "S"
spinning_hz = 20000.0

[[spin]]
label = "S"
shift_hz = 6000.0

[[spin]]
label = "I"
shift_hz = -6000.0

[[dipolar]]
spins = ["I", "S"]
distance_a = 2.5

[experiment]
n_list = [1, 3, 5, 7, 9, 11, 13, 15]

[powder]
scheme = "golden"
n_ab = 12
n_gamma = 3
"#;

fn tofu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tofu")).args(args).output().expect("run tofu")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tofu-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pair_config(dir: &Path) -> PathBuf {
    let p = dir.join("pair.toml");
    std::fs::write(&p, PAIR).unwrap();
    p
}

/// Header names and numeric rows after the `#` block.
fn csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let mut header = None;
    for line in lines.by_ref() {
        if !line.starts_with('#') {
            header = Some(line);
            break;
        }
    }
    let names: Vec<String> = header.unwrap().split(',').map(str::to_string).collect();
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert!(rows.iter().all(|r| r.len() == names.len()));
    (names, rows)
}

fn column(names: &[String], rows: &[Vec<f64>], name: &str) -> Vec<f64> {
    let i = names.iter().position(|n| n == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i]).collect()
}

fn key(text: &str, k: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(&format!("{k} = "))).unwrap_or_else(|| panic!("no {k}"));
    line.split(" = ").nth(1).unwrap().parse().unwrap()
}

#[test]
fn dephase_is_deterministic_and_threads_do_not_change_output() {
    let dir = scratch("det");
    let cfg = pair_config(&dir);
    let (a, b) = (dir.join("a"), dir.join("b"));
    assert!(tofu(&["dephase", "--config", s(&cfg), "--out", s(&a)]).status.success());
    assert!(tofu(&["dephase", "--config", s(&cfg), "--out", s(&b), "--threads", "1"]).status.success());
    let x = std::fs::read(a.join("dephasing.csv")).unwrap();
    let y = std::fs::read(b.join("dephasing.csv")).unwrap();
    assert_eq!(x, y);
}

#[test]
fn dephase_csv_schema_and_round_trip_through_fit() {
    let dir = scratch("schema");
    let cfg = pair_config(&dir);
    assert!(tofu(&["dephase", "--config", s(&cfg), "--out", s(&dir)]).status.success());
    let path = dir.join("dephasing.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# tool = tofu "));
    assert!(text.contains("# powder = golden:12:3 (36 orientations)"));
    let (names, rows) = csv(&path);
    assert_eq!(names, ["T_seconds", "T_rotor_periods", "main_I", "reference_I", "eta_I"]);
    let periods = column(&names, &rows, "T_rotor_periods");
    assert!((periods[0] - 16.0).abs() < 1e-9 && (periods[7] - 240.0).abs() < 1e-9);
    let out = tofu(&["fit", "--input", s(&path), "--out", s(&dir)]);
    assert!(out.status.success());
    let r = key(&String::from_utf8(out.stdout).unwrap(), "r_angstrom");
    assert!((r - 2.5).abs() < 0.2, "fitted {r}");
}

#[test]
fn chart_defaults_and_fit_round_trip() {
    let dir = scratch("chart");
    assert!(tofu(&["chart", "--out", s(&dir)]).status.success());
    let (names, rows) = csv(&dir.join("chart.csv"));
    assert_eq!(names[2], "eta_1.00A");
    assert_eq!(names.last().unwrap(), "eta_6.00A");
    assert_eq!(rows.len(), 15);
    let out = tofu(&["fit", "--input", s(&dir.join("chart.csv")), "--column", "eta_3.50A", "--out", s(&dir)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!((key(&text, "r_angstrom") - 3.5).abs() < 0.01);
    assert!(std::fs::read_to_string(dir.join("fit.txt")).unwrap() == text);
}

#[test]
fn fig1b_curves() {
    let dir = scratch("fig1b");
    assert!(tofu(&["fig1b", "--out", s(&dir)]).status.success());
    let (names, rows) = csv(&dir.join("fig1b.csv"));
    assert_eq!(rows.len(), 16);
    let pc7 = column(&names, &rows, "postc7_I3");
    let control = column(&names, &rows, "postc7_control_I3");
    assert!(pc7.iter().all(|&v| v > 0.9));
    assert!(control.iter().cloned().fold(f64::INFINITY, f64::min) < 0.5);
    let first = std::fs::read(dir.join("fig1b.csv")).unwrap();
    assert!(tofu(&["fig1b", "--out", s(&dir)]).status.success());
    assert_eq!(first, std::fs::read(dir.join("fig1b.csv")).unwrap());
}

#[test]
fn shape_formats() {
    let dir = scratch("shape");
    assert!(tofu(&["shape", "--out", s(&dir), "--format", "three", "--steps", "64", "--file", "x.txt"])
        .status
        .success());
    let text = std::fs::read_to_string(dir.join("x.txt")).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 64);
    assert!(data.iter().all(|l| l.split_whitespace().count() == 3));
    assert!(text.contains("# tofu.c = 0.25 wr"));
    assert!(tofu(&["shape", "--out", s(&dir), "--condition", "half"]).status.success());
    let text = std::fs::read_to_string(dir.join("tofu_shape.txt")).unwrap();
    assert!(text.contains("# tofu.c = 0.5 wr"));
    assert!(text.lines().filter(|l| !l.starts_with('#')).all(|l| l.split_whitespace().count() == 2));
}

#[test]
fn check_reports_resonance_at_three_wr() {
    let dir = scratch("check");
    let cfg = pair_config(&dir);
    let out = tofu(&["check", "--config", s(&cfg), "--out", s(&dir)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("resonances_dm_k_m = [[1, -4, -2]]"));
    assert!(text.contains("worst = \"pass\""));
}

#[test]
fn config_errors_exit_2() {
    let dir = scratch("errors");
    let cfg = pair_config(&dir);
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "s_spin = \"S\"\nspinning_hz = 20000.0\nbogus = 1\n").unwrap();
    let blocker = dir.join("file");
    std::fs::write(&blocker, "").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["dephase"],
        vec!["dephase", "--config", s(&bad)],
        vec!["dephase", "--config", "/nonexistent/tofu.toml"],
        vec!["dephase", "--config", s(&cfg), "--powder", "cones:1:1"],
        vec!["dephase", "--config", s(&cfg), "--detect", "imag"],
        vec!["check", "--config", s(&cfg), "--condition", "third"],
        vec!["chart", "--out", s(&blocker)],
        vec!["fit", "--input", s(&cfg)],
        vec!["shape", "--threads", "0"],
        vec!["nonsense"],
    ];
    for args in cases {
        let out = tofu(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
