//! Workloads shared by the benchmarks.

use ctsdr_core::planning::integrate_plan;
use ctsdr_core::{plan_j_or_u_shape, BoneBlock, Config, ConfigTimeline, DrillTool, SteeringGuide, VoxelGrid};

/// A J-shape insertion into a block whose entry face cuts the starting cutter.
pub struct CarveCase {
    pub guide: SteeringGuide,
    pub tool: DrillTool,
    pub timeline: ConfigTimeline,
    pub block: BoneBlock,
}

impl CarveCase {
    pub fn j_shape(depth_mm: f64, dt_s: f64) -> Self {
        let guide = SteeringGuide::new("bench", 71.1, 60.0).expect("valid guide");
        let tool = DrillTool::default();
        let plan = plan_j_or_u_shape(&guide, &tool, depth_mm, 1.6).expect("valid plan");
        let timeline = integrate_plan(&plan, dt_s, Config::default()).expect("integrates");
        let block = BoneBlock { size_mm: [40.0, 30.0, 60.0], origin_mm: [-12.0, -15.0, 5.0], ..BoneBlock::default_for(&tool) };
        Self { guide, tool, timeline, block }
    }

    pub fn grid(&self, h_mm: f64) -> VoxelGrid {
        VoxelGrid::new(self.block.clone(), h_mm).expect("valid grid")
    }
}

/// Noisy samples of a circular arc, deterministic in `n`.
pub fn noisy_arc(radius: f64, span_deg: f64, n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let a = (span_deg * i as f64 / (n - 1) as f64).to_radians();
            let wobble = 0.05 * ((i * 37 % 11) as f64 / 5.0 - 1.0);
            [(radius + wobble) * a.cos(), (radius + wobble) * a.sin()]
        })
        .collect()
}

/// A force-like signal with a slow trend and a fast ripple.
pub fn force_signal(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.004 * i as f64 + (i as f64 * 0.7).sin()).collect()
}
