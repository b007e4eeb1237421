use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_J: &str = r#"
name = "small_j"
[guide]
curve_radius_mm = 71.1
deployable_length_mm = 60
[block]
size_mm = [30, 14, 40]
origin_mm = [-8, -7, 0]
[plan]
type = "j_shape"
depth_mm = 25
[sim]
dt_s = 0.01
voxel_mm = 1.0
"#;

fn ctsdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctsdr")).args(args).env_remove("CTSDR_WORKERS").output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_every_artifact() {
    let dir = TempDir::new().unwrap();
    let sc = write(dir.path(), "j.toml", SMALL_J);
    let out = dir.path().join("out");
    let o = ctsdr(&["run", &sc, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["trajectory.csv", "cavity.ply", "mask.bin", "report.json", "run.log"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let log = fs::read_to_string(out.join("run.log")).unwrap();
    assert!(log.contains("cutter_diameter_mm = 6.75"), "defaults are echoed");
    assert!(String::from_utf8_lossy(&o.stdout).contains("entry diameter"));
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = TempDir::new().unwrap();
    let sc = write(dir.path(), "j.toml", SMALL_J);
    let mut masks = Vec::new();
    for w in ["1", "3"] {
        let out = dir.path().join(w);
        let o = Command::new(env!("CARGO_BIN_EXE_ctsdr"))
            .args(["run", &sc, "--out", out.to_str().unwrap()])
            .env("CTSDR_WORKERS", w)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        masks.push((fs::read(out.join("mask.bin")).unwrap(), fs::read(out.join("report.json")).unwrap()));
    }
    assert_eq!(masks[0], masks[1]);
}

#[test]
fn empty_plan_exits_2_without_artifacts() {
    let dir = TempDir::new().unwrap();
    let text = SMALL_J.replace("type = \"j_shape\"\ndepth_mm = 25", "type = \"stepped_rotation\"\nstep_count = 0");
    let sc = write(dir.path(), "empty.toml", &text);
    let out = dir.path().join("out");
    let o = ctsdr(&["run", &sc, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[validation]"));
    assert!(!out.exists());
}

#[test]
fn unknown_plan_type_and_bad_number_exit_2() {
    let dir = TempDir::new().unwrap();
    let sc = write(dir.path(), "zig.toml", &SMALL_J.replace("j_shape", "zigzag"));
    let o = ctsdr(&["check", &sc]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("spiral"), "{}", stderr(&o));

    let sc = write(dir.path(), "num.toml", &SMALL_J.replace("depth_mm = 25", "depth_mm = 2x5"));
    let o = ctsdr(&["check", &sc]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 11"), "{}", stderr(&o));
}

#[test]
fn under_sampled_run_exits_3_without_artifacts() {
    let dir = TempDir::new().unwrap();
    let sc = write(dir.path(), "coarse.toml", &SMALL_J.replace("dt_s = 0.01", "dt_s = 2.0"));
    let out = dir.path().join("out");
    let o = ctsdr(&["run", &sc, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[runtime]"));
    assert!(!out.exists());
}

#[test]
fn check_reports_spiral_pitch() {
    let dir = TempDir::new().unwrap();
    let text = SMALL_J.replace("type = \"j_shape\"\ndepth_mm = 25", "type = \"spiral\"\ndepth_mm = 20");
    let sc = write(dir.path(), "spiral.toml", &text);
    let o = ctsdr(&["check", &sc]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("73.53") && stdout.contains("false"), "{stdout}");
}

fn summary(dir: &Path, stem: &str) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}_summary.json"))).unwrap()).unwrap()
}

#[test]
fn forces_constant_file_gives_five() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("t_s,fx_n,fy_n,fz_n\n");
    for i in 0..500 {
        text.push_str(&format!("{},3,4,0\n", i as f64 / 1000.0));
    }
    let csv = write(dir.path(), "const.csv", &text);
    let o = ctsdr(&["forces", &csv]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(summary(dir.path(), "const")["max_magnitude_n"].as_f64(), Some(5.0));
    assert!(dir.path().join("const_smoothed.csv").is_file());
}

#[test]
fn forces_ramp_matches_direct_average() {
    let dir = TempDir::new().unwrap();
    let n = 800;
    let fx: Vec<f64> = (0..n).map(|i| 0.01 * i as f64).collect();
    let fz: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
    let mut text = String::from("t_s,fx_n,fy_n,fz_n\n");
    for i in 0..n {
        text.push_str(&format!("{},{},0,{}\n", i as f64 / 1000.0, fx[i], fz[i]));
    }
    let csv = write(dir.path(), "ramp.csv", &text);
    let out = dir.path().join("res");
    let o = ctsdr(&["forces", &csv, "--span", "100", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    // centred window of 99, narrowed symmetrically at the ends
    let avg = |x: &[f64], i: usize| {
        let half = 49.min(i).min(n - 1 - i);
        x[i - half..=i + half].iter().sum::<f64>() / (2 * half + 1) as f64
    };
    let oracle = (0..n).map(|i| avg(&fx, i).hypot(avg(&fz, i))).fold(0.0, f64::max);
    let got = summary(&out, "ramp")["max_magnitude_n"].as_f64().unwrap();
    assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
}

#[test]
fn forces_rejects_empty_and_malformed_files() {
    let dir = TempDir::new().unwrap();
    let o = ctsdr(&["forces", &write(dir.path(), "empty.csv", "")]);
    assert_eq!(o.status.code(), Some(2));
    let o = ctsdr(&["forces", &write(dir.path(), "bad.csv", "t_s,fx_n,fy_n,fz_n\n0,1,2,3\n0.001,1,oops,3\n")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn mesh_re_export_from_mask() {
    let dir = TempDir::new().unwrap();
    let sc = write(dir.path(), "j.toml", SMALL_J);
    let out = dir.path().join("out");
    assert_eq!(ctsdr(&["run", &sc, "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let mask = out.join("mask.bin");
    let ply = dir.path().join("again.ply");
    let o = ctsdr(&["mesh", mask.to_str().unwrap(), "-o", ply.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(&ply).unwrap(), fs::read(out.join("cavity.ply")).unwrap());

    let o = ctsdr(&["mesh", mask.to_str().unwrap(), "--format", "stl"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("mask.stl").is_file());

    let o = ctsdr(&["mesh", &write(dir.path(), "junk.bin", "not a mask\n")]);
    assert_eq!(o.status.code(), Some(2));
}
