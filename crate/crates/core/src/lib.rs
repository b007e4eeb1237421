//! Simulation of a two-DoF concentric-tube steerable drilling robot.
//!
//! The pipeline is: a [`MotionPlan`] of piecewise-constant insertion and
//! rotation rates is integrated into a [`ConfigTimeline`], each sample is
//! mapped through constant-curvature kinematics to a cutter pose, the
//! ball-nose cutter is swept through a [`VoxelGrid`] of bone, and the
//! resulting cavity is measured into a [`CavityReport`].
//!
//! All lengths are millimetres, times seconds, and angles degrees at the
//! public interface.

// Negated comparisons below are deliberate NaN guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod carve;
pub mod error;
pub mod fit;
pub mod forces;
pub mod kinematics;
pub mod mask_io;
pub mod mesh;
pub mod metrics;
pub mod planning;
pub mod scenario;

pub use carve::{carve, carve_with, BoneBlock, CarveOptions, CarveResult, CutterSolid, Density, EntryFace, VoxelGrid};
pub use error::{Error, Result};
pub use fit::{fit_circle, CircleFit};
pub use forces::{analyze_forces, max_force_magnitude, read_force_csv, smooth, smooth_forces, write_force_csv, ForceSeries, ForceSummary};
pub use kinematics::{cutter_pose, guide_tip_pose, lateral_reach, tip_angle_change, Config, DrillTool, Pose, SteeringGuide};
pub use mask_io::{read_mask, write_mask};
pub use mesh::{export_cavity_mesh, MeshFormat, TriMesh};
pub use metrics::{
    branch_radii, build_cavity_report, channel_centerline, entry_hole_diameter, project_to_bending_plane, ring_planes, slice_diameter,
    spiral_radii, trajectory_fit, BranchRadius, CavityReport, CenterlineSource, SliceDiameter, SpiralRadii,
};
pub use planning::{
    check_spiral_pitch, integrate_plan, plan_branches, plan_j_or_u_shape, plan_spiral, plan_stepped_rotation, ConfigTimeline,
    BranchParams, MotionPlan, MotionSegment, PitchCheck, SteppedRotationParams, SweepDirection,
};
pub use scenario::{parse_scenario, run_scenario, simulate, PlanSpec, RunOptions, RunReport, Scenario};
