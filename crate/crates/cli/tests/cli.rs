use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn toa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toa")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn prefix(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn data_rows(path: &str) -> usize {
    fs::read_to_string(path).unwrap().lines().skip(1).filter(|l| !l.starts_with('#')).count()
}

/// Largest value of a named column in a reconstruction CSV.
fn column_max(path: &str, name: &str) -> f64 {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let col = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines
        .map(|l| l.split(',').nth(col).unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max)
}

#[test]
fn simulate_writes_paper_sized_files() {
    let dir = TempDir::new().unwrap();
    for (traj, rows) in [("spiral", 86), ("folded", 46)] {
        let scenario = write(&dir, &format!("{traj}.txt"), &format!("trajectory = {traj}\n"));
        let out_prefix = prefix(&dir, traj);
        let out = toa(&["simulate", "--scenario", &scenario, "--out", &out_prefix]);
        assert_eq!(code(&out), 0, "{out:?}");
        let toa_file = format!("{out_prefix}_toa.csv");
        assert_eq!(data_rows(&toa_file), rows);
        let header = fs::read_to_string(&toa_file).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, "T_1,T_2,T_3,T_4,T_5,T_6,T_7");
        assert_eq!(data_rows(&format!("{out_prefix}_truth.csv")), rows);
    }
}

#[test]
fn seven_point_method_with_five_sensors_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let scenario = write(
        &dir,
        "five.txt",
        "method = seven\nsensor = 0 0 0\nsensor = 3 0 0\nsensor = 0 3 0\nsensor = 0 0 3\nsensor = 3 3 3\n",
    );
    let out = toa(&["simulate", "--scenario", &scenario, "--out", &prefix(&dir, "x")]);
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("x_toa.csv").exists());
}

#[test]
fn noise_free_round_trip() {
    let dir = TempDir::new().unwrap();
    let p = prefix(&dir, "clean");
    assert_eq!(code(&toa(&["simulate", "--out", &p])), 0);
    let out = toa(&[
        "reconstruct",
        "--toa",
        &format!("{p}_toa.csv"),
        "--truth",
        &format!("{p}_truth.csv"),
        "--out",
        &p,
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let csv = format!("{p}_reconstruction.csv");
    assert_eq!(data_rows(&csv), 86);
    assert!(column_max(&csv, "err_pos") < 1e-6);
    assert!(column_max(&csv, "err_time") < 1e-6);
}

#[test]
fn noisy_reconstruction_completes() {
    let dir = TempDir::new().unwrap();
    let scenario = write(&dir, "noisy.txt", "noise_level = 0.01\nseed = 42\n");
    let p = prefix(&dir, "noisy");
    assert_eq!(code(&toa(&["simulate", "--scenario", &scenario, "--out", &p])), 0);
    let out = toa(&[
        "reconstruct",
        "--toa",
        &format!("{p}_toa.csv"),
        "--truth",
        &format!("{p}_truth.csv"),
        "--out",
        &p,
    ]);
    assert_eq!(code(&out), 0, "{out:?}");
    let csv = format!("{p}_reconstruction.csv");
    assert_eq!(data_rows(&csv), 86);
    assert!(column_max(&csv, "err_pos").is_finite());
}

#[test]
fn oracle_and_five_point_methods() {
    let dir = TempDir::new().unwrap();
    write(&dir, "short.csv", "t,x,y,z\n0,5,5,6\n0.5,5.5,5.4,5.8\n1,6,5.8,5.5\n");
    let scenario = write(
        &dir,
        "generic.txt",
        "layout_kind = five_point_generic\ntrajectory = short.csv\n\
         sensor = 0 0 0\nsensor = 3 0 0\nsensor = 0 3 0\nsensor = 0 0 3\nsensor = 3 3 3\n",
    );
    let p = prefix(&dir, "g");
    assert_eq!(code(&toa(&["simulate", "--scenario", &scenario, "--method", "five", "--out", &p])), 0);
    for method in ["five", "oracle"] {
        let out = toa(&[
            "reconstruct",
            "--scenario",
            &scenario,
            "--method",
            method,
            "--toa",
            &format!("{p}_toa.csv"),
            "--truth",
            &format!("{p}_truth.csv"),
            "--out",
            &format!("{p}_{method}"),
        ]);
        assert_eq!(code(&out), 0, "{method}: {out:?}");
        let tol = if method == "five" { 1e-8 } else { 1e-3 };
        assert!(column_max(&format!("{p}_{method}_reconstruction.csv"), "err_pos") < tol);
    }
}

#[test]
fn coplanar_subset_fails_numerically() {
    let dir = TempDir::new().unwrap();
    let p = prefix(&dir, "c");
    assert_eq!(code(&toa(&["simulate", "--out", &p])), 0);
    // The first five axis sensors lie in one plane.
    let out = toa(&["reconstruct", "--method", "five", "--toa", &format!("{p}_toa.csv"), "--out", &p]);
    assert_eq!(code(&out), 4);
    assert_eq!(data_rows(&format!("{p}_reconstruction.csv")), 0);
}

#[test]
fn truncated_toa_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.csv", "T_1,T_2,T_3,T_4,T_5,T_6,T_7\n1,2,3,4,5,6,7\n1,2,3\n");
    let out = toa(&["reconstruct", "--toa", &bad, "--out", &prefix(&dir, "b")]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn stability_prints_slope_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let levels = "1e-7,1e-6,1e-5,1e-4,1e-3";
    let run = |name: &str| {
        let p = prefix(&dir, name);
        let out = toa(&["stability", "--levels", levels, "--seed", "7", "--out", &p]);
        assert_eq!(code(&out), 0, "{out:?}");
        let slope: f64 = stdout(&out)
            .split("slope = ")
            .nth(1)
            .and_then(|s| s.split_whitespace().next())
            .unwrap()
            .parse()
            .unwrap();
        assert!((0.9..=1.1).contains(&slope), "{slope}");
        (
            fs::read(format!("{p}_stability.csv")).unwrap(),
            fs::read(format!("{p}_stability.json")).unwrap(),
        )
    };
    assert_eq!(run("first"), run("second"));
}

#[test]
fn stability_rejects_single_level() {
    let dir = TempDir::new().unwrap();
    let out = toa(&["stability", "--levels", "1e-3", "--out", &prefix(&dir, "s")]);
    assert_eq!(code(&out), 2);
}

#[test]
fn simulate_is_byte_stable() {
    let dir = TempDir::new().unwrap();
    let scenario = write(&dir, "noisy.txt", "trajectory = folded\nnoise_level = 0.001\nnoise_model = relative_gaussian\n");
    let files: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|n| {
            let p = prefix(&dir, n);
            assert_eq!(code(&toa(&["simulate", "--scenario", &scenario, "--seed", "3", "--out", &p])), 0);
            fs::read(format!("{p}_toa.csv")).unwrap()
        })
        .collect();
    assert_eq!(files[0], files[1]);
}

#[test]
fn validate_layouts() {
    let dir = TempDir::new().unwrap();
    let out = toa(&["validate", "--print-defaults"]);
    assert_eq!(code(&out), 0);
    let defaults = write(&dir, "defaults.txt", &stdout(&out));
    let out = toa(&["validate", "--scenario", &defaults]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "valid\n");

    let broken = write(
        &dir,
        "broken.txt",
        "layout_kind = seven_point_axes\nsensor = 0 0 0\nsensor = 3 0 0\nsensor = -3 0 0\n\
         sensor = 0 3 0\nsensor = 0 -3 0\nsensor = 0 0 3\nsensor = 0 0 -4\n",
    );
    let out = toa(&["validate", "--scenario", &broken]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("violation: symmetry"), "{}", stdout(&out));

    let missing = dir.path().join("missing.txt");
    let out = toa(&["validate", "--scenario", &missing.to_string_lossy()]);
    assert_eq!(code(&out), 5);
    assert!(!Path::new(&missing).exists());
}
