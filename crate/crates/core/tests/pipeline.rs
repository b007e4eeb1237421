//! End-to-end runs of the bundled scenarios at coarse resolution.

use std::fs;
use std::path::PathBuf;

use ctsdr_core::scenario::{parse_scenario, run_scenario, RunOptions, Scenario};
use ctsdr_core::{carve, integrate_plan, read_mask, BoneBlock, Config, DrillTool, MotionPlan, MotionSegment, SteeringGuide, TriMesh, VoxelGrid};

const BUNDLED: [&str; 5] = ["u_shape", "branches", "stepped_rotation_full", "stepped_rotation_partial", "spiral"];

fn bundled(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"));
    parse_scenario(&fs::read_to_string(path).unwrap()).unwrap()
}

fn coarse(mut sc: Scenario) -> Scenario {
    sc.sim.voxel_mm = 1.0;
    sc.sim.dt_s = 0.01;
    sc
}

#[test]
fn bundled_scenarios_parse_and_round_trip() {
    for name in BUNDLED {
        let sc = bundled(name);
        assert_eq!(sc.name, name);
        assert_eq!(parse_scenario(&sc.to_toml()).unwrap(), sc, "{name}");
    }
}

#[test]
fn bundled_scenarios_run_to_completion() {
    let dir = tempfile::tempdir().unwrap();
    for name in BUNDLED {
        let out = dir.path().join(name);
        let result = run_scenario(&coarse(bundled(name)), &RunOptions { out_dir: Some(out.clone()), workers: None }).unwrap();
        for file in ["trajectory.csv", "cavity.ply", "mask.bin", "report.json", "run.log"] {
            assert!(out.join(file).is_file(), "{name}: {file}");
        }
        assert!(result.report.removed_count > 0, "{name}");
        let json: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
        for key in ["entry_diameter_mm", "slice_diameters", "max_lateral_reach_mm", "tip_angle_change_deg", "removed_volume_mm3", "fitted_radius_mm", "radius_deviation_pct", "plan_label"] {
            assert!(json.get(key).is_some(), "{name}: {key}");
        }
        let mask = read_mask(fs::File::open(out.join("mask.bin")).map(std::io::BufReader::new).unwrap()).unwrap();
        assert_eq!(mask.mask(), result.grid.mask());
    }
}

#[test]
fn artifacts_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let sc = coarse(bundled("branches"));
    let read = |sub: &str, workers| {
        let out = dir.path().join(sub);
        run_scenario(&sc, &RunOptions { out_dir: Some(out.clone()), workers: Some(workers) }).unwrap();
        ["trajectory.csv", "mask.bin", "report.json", "cavity.ply"].map(|f| fs::read(out.join(f)).unwrap())
    };
    let a = read("a", 1);
    assert_eq!(a, read("b", 1));
    assert_eq!(a, read("c", 4));
}

#[test]
fn spiral_report_flags_pitch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spiral");
    run_scenario(&coarse(bundled("spiral")), &RunOptions { out_dir: Some(out.clone()), workers: None }).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let pitch = &json["spiral_pitch"];
    assert!((pitch["pitch_mm"].as_f64().unwrap() - 73.53).abs() < 0.005);
    assert_eq!(pitch["satisfied"], false);
}

#[test]
fn straight_push_mesh_is_a_closed_sphere() {
    let tool = DrillTool::default();
    let guide = SteeringGuide::new("straight", 1.0e7, 100.0).unwrap();
    let plan = MotionPlan::new("push", guide.clone(), tool.clone(), vec![MotionSegment::new(10.0, 1.6, 0.0, "in")]).unwrap();
    let tl = integrate_plan(&plan, 0.01, Config::default()).unwrap();
    let block = BoneBlock { size_mm: [12.0, 12.0, 30.0], origin_mm: [-6.0, -6.0, 5.0], ..BoneBlock::default_for(&tool) };
    let mut grid = VoxelGrid::new(block, 0.5).unwrap();
    carve(&mut grid, &tl, &guide, &tool).unwrap();
    let mesh = TriMesh::from_grid(&grid);
    assert_eq!(mesh.euler_characteristic(), 2);
    // every edge is shared by exactly two triangles
    let mut edges = std::collections::HashMap::new();
    for t in &mesh.triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    assert!(edges.values().all(|&n| n == 2));
}
