//! Declarative experiment files and the run pipeline that turns one into
//! a trajectory, a carved cavity, a mesh and a report.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::carve::{carve_with, BoneBlock, CarveOptions, CarveResult, Density, EntryFace, VoxelGrid, DEFAULT_VOXEL_MM};
use crate::error::{Error, Result};
use crate::kinematics::{guide_tip_pose, Config, DrillTool, SteeringGuide};
use crate::mask_io::mask_bytes;
use crate::mesh::{MeshFormat, TriMesh};
use crate::metrics::{branch_radii, build_cavity_report, spiral_radii, BranchRadius, CavityReport, SpiralRadii};
use crate::planning::{
    check_spiral_pitch, integrate_plan_with, plan_branches, plan_j_or_u_shape, plan_spiral, plan_stepped_rotation,
    BranchParams, ClampEvent, ConfigTimeline, MotionPlan, PitchCheck, SteppedRotationParams, SweepDirection,
    DEFAULT_DT_S, DEFAULT_INSERTION_SPEED, DEFAULT_ROTATION_SPEED, DEFAULT_SPIRAL_INSERTION_SPEED,
    DEFAULT_SPIRAL_ROTATION_SPEED,
};

pub const PLAN_TYPES: [&str; 5] = ["j_shape", "u_shape", "branches", "stepped_rotation", "spiral"];

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const MASK_FILE: &str = "mask.bin";
pub const REPORT_FILE: &str = "report.json";
pub const LOG_FILE: &str = "run.log";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PlanSpec {
    JShape {
        depth_mm: f64,
        insertion_speed_mm_per_s: f64,
    },
    UShape {
        insertion_speed_mm_per_s: f64,
    },
    Branches {
        depth_mm: f64,
        branch_count: usize,
        branch_spacing_deg: f64,
        insertion_speed_mm_per_s: f64,
        retract_speed_mm_per_s: f64,
        reorient_speed_deg_per_s: f64,
    },
    SteppedRotation {
        step_mm: f64,
        step_count: usize,
        sweep_deg: f64,
        insertion_speed_mm_per_s: f64,
        rotation_speed_deg_per_s: f64,
        sweep_direction: SweepDirection,
    },
    Spiral {
        depth_mm: f64,
        insertion_speed_mm_per_s: f64,
        rotation_speed_deg_per_s: f64,
    },
}

impl PlanSpec {
    pub fn type_name(&self) -> &'static str {
        match self {
            PlanSpec::JShape { .. } => "j_shape",
            PlanSpec::UShape { .. } => "u_shape",
            PlanSpec::Branches { .. } => "branches",
            PlanSpec::SteppedRotation { .. } => "stepped_rotation",
            PlanSpec::Spiral { .. } => "spiral",
        }
    }

    pub fn build(&self, guide: &SteeringGuide, tool: &DrillTool) -> Result<MotionPlan> {
        match *self {
            PlanSpec::JShape { depth_mm, insertion_speed_mm_per_s } => {
                plan_j_or_u_shape(guide, tool, depth_mm, insertion_speed_mm_per_s)
            }
            PlanSpec::UShape { insertion_speed_mm_per_s } => {
                plan_j_or_u_shape(guide, tool, guide.deployable_length_mm, insertion_speed_mm_per_s)
            }
            PlanSpec::Branches {
                depth_mm,
                branch_count,
                branch_spacing_deg,
                insertion_speed_mm_per_s,
                retract_speed_mm_per_s,
                reorient_speed_deg_per_s,
            } => plan_branches(
                guide,
                tool,
                &BranchParams {
                    depth_mm,
                    branches: branch_count,
                    spacing_deg: branch_spacing_deg,
                    insertion_speed_mm_per_s,
                    retract_speed_mm_per_s,
                    reorient_speed_deg_per_s,
                },
            ),
            PlanSpec::SteppedRotation {
                step_mm,
                step_count,
                sweep_deg,
                insertion_speed_mm_per_s,
                rotation_speed_deg_per_s,
                sweep_direction,
            } => plan_stepped_rotation(
                guide,
                tool,
                &SteppedRotationParams {
                    step_mm,
                    steps: step_count,
                    sweep_deg,
                    insertion_speed_mm_per_s,
                    rotation_speed_deg_per_s,
                    direction: sweep_direction,
                },
            ),
            PlanSpec::Spiral { depth_mm, insertion_speed_mm_per_s, rotation_speed_deg_per_s } => {
                plan_spiral(guide, tool, depth_mm, insertion_speed_mm_per_s, rotation_speed_deg_per_s)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub dt_s: f64,
    pub voxel_mm: f64,
    /// Treat any insertion clamp as an error.
    pub strict: bool,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self { dt_s: DEFAULT_DT_S, voxel_mm: DEFAULT_VOXEL_MM, strict: false, seed: 0, workers: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub mesh_format: MeshFormat,
}

/// Measured values to compare the simulation against.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_lateral_reach_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tip_angle_change_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_ring_diameter_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_ring_diameter_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_deviation_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spiral_initial_radius_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spiral_final_radius_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub guide: SteeringGuide,
    pub tool: DrillTool,
    pub block: BoneBlock,
    pub plan: PlanSpec,
    pub sim: SimSpec,
    pub output: OutputSpec,
    pub reference: Option<Reference>,
}

// File layout. Every key is optional here so that missing keys can be
// reported by name after parsing.

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    guide: Option<GuideTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tool: Option<ToolTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    block: Option<BlockTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    plan: Option<PlanTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sim: Option<SimTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<OutputTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<Reference>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GuideTable {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    curve_radius_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    deployable_length_mm: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ToolTable {
    #[serde(skip_serializing_if = "Option::is_none")]
    cutter_diameter_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cutter_length_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shank_length_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shank_diameter_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    torque_coil_length_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spindle_rpm: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockTable {
    #[serde(skip_serializing_if = "Option::is_none")]
    size_mm: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    origin_mm: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    density_pcf: Option<Density>,
    #[serde(skip_serializing_if = "Option::is_none")]
    entry_face: Option<EntryFace>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanTable {
    #[serde(rename = "type", skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    depth_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    insertion_speed_mm_per_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    branch_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    branch_spacing_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    retract_speed_mm_per_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reorient_speed_deg_per_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rotation_speed_deg_per_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep_direction: Option<SweepDirection>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimTable {
    #[serde(skip_serializing_if = "Option::is_none")]
    dt_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    voxel_mm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    strict: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputTable {
    #[serde(skip_serializing_if = "Option::is_none")]
    dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mesh_format: Option<MeshFormat>,
}

impl PlanTable {
    fn present(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let mut note = |name, set: bool| {
            if set {
                keys.push(name)
            }
        };
        note("depth_mm", self.depth_mm.is_some());
        note("insertion_speed_mm_per_s", self.insertion_speed_mm_per_s.is_some());
        note("branch_count", self.branch_count.is_some());
        note("branch_spacing_deg", self.branch_spacing_deg.is_some());
        note("retract_speed_mm_per_s", self.retract_speed_mm_per_s.is_some());
        note("reorient_speed_deg_per_s", self.reorient_speed_deg_per_s.is_some());
        note("step_mm", self.step_mm.is_some());
        note("step_count", self.step_count.is_some());
        note("sweep_deg", self.sweep_deg.is_some());
        note("rotation_speed_deg_per_s", self.rotation_speed_deg_per_s.is_some());
        note("sweep_direction", self.sweep_direction.is_some());
        keys
    }

    fn resolve(self) -> Result<PlanSpec> {
        let kind = self.kind.clone().ok_or_else(|| required("plan.type"))?;
        let allowed: &[&str] = match kind.as_str() {
            "j_shape" => &["depth_mm", "insertion_speed_mm_per_s"],
            "u_shape" => &["insertion_speed_mm_per_s"],
            "branches" => &[
                "depth_mm",
                "insertion_speed_mm_per_s",
                "branch_count",
                "branch_spacing_deg",
                "retract_speed_mm_per_s",
                "reorient_speed_deg_per_s",
            ],
            "stepped_rotation" => &[
                "step_mm",
                "step_count",
                "sweep_deg",
                "insertion_speed_mm_per_s",
                "rotation_speed_deg_per_s",
                "sweep_direction",
            ],
            "spiral" => &["depth_mm", "insertion_speed_mm_per_s", "rotation_speed_deg_per_s"],
            other => {
                return Err(Error::Scenario(format!(
                    "unknown plan type {other:?}; valid types are {}",
                    PLAN_TYPES.join(", ")
                )))
            }
        };
        if let Some(key) = self.present().into_iter().find(|k| !allowed.contains(k)) {
            return Err(Error::Scenario(format!("plan.{key} does not apply to plan type {kind}")));
        }
        let v_ins = self.insertion_speed_mm_per_s;
        Ok(match kind.as_str() {
            "j_shape" => PlanSpec::JShape {
                depth_mm: self.depth_mm.ok_or_else(|| required("plan.depth_mm"))?,
                insertion_speed_mm_per_s: v_ins.unwrap_or(DEFAULT_INSERTION_SPEED),
            },
            "u_shape" => PlanSpec::UShape { insertion_speed_mm_per_s: v_ins.unwrap_or(DEFAULT_INSERTION_SPEED) },
            "branches" => {
                let speed = v_ins.unwrap_or(DEFAULT_INSERTION_SPEED);
                PlanSpec::Branches {
                    depth_mm: self.depth_mm.ok_or_else(|| required("plan.depth_mm"))?,
                    branch_count: self.branch_count.unwrap_or(3),
                    branch_spacing_deg: self.branch_spacing_deg.unwrap_or(120.0),
                    insertion_speed_mm_per_s: speed,
                    retract_speed_mm_per_s: self.retract_speed_mm_per_s.unwrap_or(speed),
                    reorient_speed_deg_per_s: self.reorient_speed_deg_per_s.unwrap_or(DEFAULT_ROTATION_SPEED),
                }
            }
            "stepped_rotation" => PlanSpec::SteppedRotation {
                step_mm: self.step_mm.unwrap_or(10.0),
                step_count: self.step_count.ok_or_else(|| required("plan.step_count"))?,
                sweep_deg: self.sweep_deg.unwrap_or(360.0),
                insertion_speed_mm_per_s: v_ins.unwrap_or(DEFAULT_INSERTION_SPEED),
                rotation_speed_deg_per_s: self.rotation_speed_deg_per_s.unwrap_or(DEFAULT_ROTATION_SPEED),
                sweep_direction: self.sweep_direction.unwrap_or_default(),
            },
            _ => PlanSpec::Spiral {
                depth_mm: self.depth_mm.ok_or_else(|| required("plan.depth_mm"))?,
                insertion_speed_mm_per_s: v_ins.unwrap_or(DEFAULT_SPIRAL_INSERTION_SPEED),
                rotation_speed_deg_per_s: self.rotation_speed_deg_per_s.unwrap_or(DEFAULT_SPIRAL_ROTATION_SPEED),
            },
        })
    }

    fn from_spec(spec: &PlanSpec) -> Self {
        let mut t = PlanTable { kind: Some(spec.type_name().to_string()), ..Default::default() };
        match *spec {
            PlanSpec::JShape { depth_mm, insertion_speed_mm_per_s } => {
                t.depth_mm = Some(depth_mm);
                t.insertion_speed_mm_per_s = Some(insertion_speed_mm_per_s);
            }
            PlanSpec::UShape { insertion_speed_mm_per_s } => t.insertion_speed_mm_per_s = Some(insertion_speed_mm_per_s),
            PlanSpec::Branches {
                depth_mm,
                branch_count,
                branch_spacing_deg,
                insertion_speed_mm_per_s,
                retract_speed_mm_per_s,
                reorient_speed_deg_per_s,
            } => {
                t.depth_mm = Some(depth_mm);
                t.branch_count = Some(branch_count);
                t.branch_spacing_deg = Some(branch_spacing_deg);
                t.insertion_speed_mm_per_s = Some(insertion_speed_mm_per_s);
                t.retract_speed_mm_per_s = Some(retract_speed_mm_per_s);
                t.reorient_speed_deg_per_s = Some(reorient_speed_deg_per_s);
            }
            PlanSpec::SteppedRotation {
                step_mm,
                step_count,
                sweep_deg,
                insertion_speed_mm_per_s,
                rotation_speed_deg_per_s,
                sweep_direction,
            } => {
                t.step_mm = Some(step_mm);
                t.step_count = Some(step_count);
                t.sweep_deg = Some(sweep_deg);
                t.insertion_speed_mm_per_s = Some(insertion_speed_mm_per_s);
                t.rotation_speed_deg_per_s = Some(rotation_speed_deg_per_s);
                t.sweep_direction = Some(sweep_direction);
            }
            PlanSpec::Spiral { depth_mm, insertion_speed_mm_per_s, rotation_speed_deg_per_s } => {
                t.depth_mm = Some(depth_mm);
                t.insertion_speed_mm_per_s = Some(insertion_speed_mm_per_s);
                t.rotation_speed_deg_per_s = Some(rotation_speed_deg_per_s);
            }
        }
        t
    }
}

fn required(key: &str) -> Error {
    Error::Scenario(format!("{key} required"))
}

/// Parses a TOML scenario, applies defaults and validates every section.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let doc: FileDoc = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        Error::Parse { line, message: e.message().trim().to_string() }
    })?;

    let g = doc.guide.unwrap_or_default();
    let guide = SteeringGuide {
        name: g.name.unwrap_or_else(|| "guide".into()),
        curve_radius_mm: g.curve_radius_mm.ok_or_else(|| required("guide.curve_radius_mm"))?,
        deployable_length_mm: g.deployable_length_mm.ok_or_else(|| required("guide.deployable_length_mm"))?,
    };

    let t = doc.tool.unwrap_or_default();
    let d = DrillTool::default();
    let tool = DrillTool {
        cutter_diameter_mm: t.cutter_diameter_mm.unwrap_or(d.cutter_diameter_mm),
        cutter_length_mm: t.cutter_length_mm.unwrap_or(d.cutter_length_mm),
        shank_length_mm: t.shank_length_mm.unwrap_or(d.shank_length_mm),
        shank_diameter_mm: t.shank_diameter_mm.unwrap_or(d.shank_diameter_mm),
        torque_coil_length_mm: t.torque_coil_length_mm.unwrap_or(d.torque_coil_length_mm),
        spindle_rpm: t.spindle_rpm.unwrap_or(d.spindle_rpm),
    };

    let b = doc.block.unwrap_or_default();
    let default_block = BoneBlock::default_for(&tool);
    let size_mm = b.size_mm.unwrap_or(default_block.size_mm);
    let block = BoneBlock {
        size_mm,
        origin_mm: b.origin_mm.unwrap_or([-size_mm[0] / 2.0, -size_mm[1] / 2.0, default_block.origin_mm[2]]),
        density_pcf: b.density_pcf.unwrap_or_default(),
        entry_face: b.entry_face.unwrap_or_default(),
    };

    let plan = doc.plan.ok_or_else(|| required("plan.type"))?.resolve()?;

    let s = doc.sim.unwrap_or_default();
    let sd = SimSpec::default();
    let sim = SimSpec {
        dt_s: s.dt_s.unwrap_or(sd.dt_s),
        voxel_mm: s.voxel_mm.unwrap_or(sd.voxel_mm),
        strict: s.strict.unwrap_or(sd.strict),
        seed: s.seed.unwrap_or(sd.seed),
        workers: s.workers,
    };

    let name = doc.name.unwrap_or_else(|| plan.type_name().to_string());
    let o = doc.output.unwrap_or_default();
    let output = OutputSpec {
        dir: o.dir.unwrap_or_else(|| Path::new("out").join(&name)),
        mesh_format: o.mesh_format.unwrap_or_default(),
    };

    let sc = Scenario { name, guide, tool, block, plan, sim, output, reference: doc.reference };
    sc.validate()?;
    Ok(sc)
}

impl Scenario {
    /// Checks every section and that the plan can be built.
    pub fn validate(&self) -> Result<()> {
        let scoped = |section: &str, e: Error| match e {
            Error::Domain(m) | Error::Plan(m) => Error::Scenario(format!("{section}: {m}")),
            other => other,
        };
        self.guide.validate().map_err(|e| scoped("guide", e))?;
        self.tool.validate().map_err(|e| scoped("tool", e))?;
        self.block.validate().map_err(|e| scoped("block", e))?;
        if !(self.sim.dt_s.is_finite() && self.sim.dt_s > 0.0) {
            return Err(Error::Scenario(format!("sim.dt_s must be positive, got {}", self.sim.dt_s)));
        }
        VoxelGrid::dims_for(&self.block, self.sim.voxel_mm).map_err(|e| scoped("sim.voxel_mm", e))?;
        if self.sim.workers == Some(0) {
            return Err(Error::Scenario("sim.workers must be at least 1".into()));
        }
        self.build_plan().map_err(|e| scoped("plan", e))?;
        Ok(())
    }

    pub fn build_plan(&self) -> Result<MotionPlan> {
        let mut plan = self.plan.build(&self.guide, &self.tool)?;
        if self.plan.type_name() == "u_shape" {
            plan.label = "u_shape".into();
        }
        Ok(plan)
    }

    /// TOML text with every default written out.
    pub fn to_toml(&self) -> String {
        let doc = FileDoc {
            name: Some(self.name.clone()),
            guide: Some(GuideTable {
                name: Some(self.guide.name.clone()),
                curve_radius_mm: Some(self.guide.curve_radius_mm),
                deployable_length_mm: Some(self.guide.deployable_length_mm),
            }),
            tool: Some(ToolTable {
                cutter_diameter_mm: Some(self.tool.cutter_diameter_mm),
                cutter_length_mm: Some(self.tool.cutter_length_mm),
                shank_length_mm: Some(self.tool.shank_length_mm),
                shank_diameter_mm: Some(self.tool.shank_diameter_mm),
                torque_coil_length_mm: Some(self.tool.torque_coil_length_mm),
                spindle_rpm: Some(self.tool.spindle_rpm),
            }),
            block: Some(BlockTable {
                size_mm: Some(self.block.size_mm),
                origin_mm: Some(self.block.origin_mm),
                density_pcf: Some(self.block.density_pcf),
                entry_face: Some(self.block.entry_face),
            }),
            plan: Some(PlanTable::from_spec(&self.plan)),
            sim: Some(SimTable {
                dt_s: Some(self.sim.dt_s),
                voxel_mm: Some(self.sim.voxel_mm),
                strict: Some(self.sim.strict),
                seed: Some(self.sim.seed),
                workers: self.sim.workers,
            }),
            output: Some(OutputTable { dir: Some(self.output.dir.clone()), mesh_format: Some(self.output.mesh_format) }),
            reference: self.reference.clone(),
        };
        toml::to_string(&doc).expect("scenario serializes to TOML")
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the scenario's output directory.
    pub out_dir: Option<PathBuf>,
    /// Overrides the scenario's worker count.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub quantity: String,
    pub simulated: f64,
    pub reference: f64,
    pub difference_pct: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanEcho {
    #[serde(flatten)]
    pub spec: PlanSpec,
    pub label: String,
    pub segment_count: usize,
    pub duration_s: f64,
    pub final_config: Config,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridEcho {
    pub voxel_mm: f64,
    pub dims: [usize; 3],
    pub dt_s: f64,
    pub samples: usize,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    #[serde(flatten)]
    pub cavity: CavityReport,
    pub removed_count: usize,
    pub plan: PlanEcho,
    pub guide: SteeringGuide,
    pub tool: DrillTool,
    pub block: BoneBlock,
    pub grid: GridEcho,
    pub carve: CarveResult,
    pub clamp_events: Vec<ClampEvent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spiral_pitch: Option<PitchCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spiral_radii: Option<SpiralRadii>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch_radii: Option<Vec<BranchRadius>>,
    pub comparisons: Vec<Comparison>,
    pub notes: Vec<String>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub report: RunReport,
    pub grid: VoxelGrid,
    pub timeline: ConfigTimeline,
}

/// Runs the full pipeline and writes the artifacts. On failure nothing is
/// left behind in the output directory.
pub fn run_scenario(sc: &Scenario, opts: &RunOptions) -> Result<RunOutput> {
    let started = Instant::now();
    let mut log = String::new();
    let _ = writeln!(log, "# resolved scenario\n{}", sc.to_toml());

    let (report, grid, timeline, timings) = simulate(sc, opts)?;
    for (stage, secs) in &timings {
        let _ = writeln!(log, "{stage}: {secs:.3} s");
    }
    let _ = writeln!(log, "removed voxels: {}", report.removed_count);
    for note in &report.notes {
        let _ = writeln!(log, "note: {note}");
    }

    let mesh = TriMesh::from_grid(&grid);
    let mut mesh_bytes = Vec::new();
    mesh.write(sc.output.mesh_format, &mut mesh_bytes)?;
    let mut report_json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.into()))?;
    report_json.push('\n');
    let mesh_name = format!("cavity.{}", sc.output.mesh_format.extension());
    let _ = writeln!(log, "mesh: {} vertices, {} triangles", mesh.vertices.len(), mesh.triangles.len());
    let _ = writeln!(log, "total: {:.3} s", started.elapsed().as_secs_f64());

    let artifacts: Vec<(&str, Vec<u8>)> = vec![
        (TRAJECTORY_FILE, trajectory_csv(&timeline, &sc.guide)?.into_bytes()),
        (&mesh_name, mesh_bytes),
        (MASK_FILE, mask_bytes(&grid)),
        (REPORT_FILE, report_json.into_bytes()),
        (LOG_FILE, log.into_bytes()),
    ];
    let out_dir = opts.out_dir.clone().unwrap_or_else(|| sc.output.dir.clone());
    let files = write_all(&out_dir, &artifacts)?;
    Ok(RunOutput { out_dir, files, report, grid, timeline })
}

type Timings = Vec<(&'static str, f64)>;

/// The pipeline without any file output.
pub fn simulate(sc: &Scenario, opts: &RunOptions) -> Result<(RunReport, VoxelGrid, ConfigTimeline, Timings)> {
    sc.validate()?;
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |stage: &'static str, timings: &mut Timings| {
        timings.push((stage, clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    let plan = sc.build_plan()?;
    let timeline = integrate_plan_with(&plan, sc.sim.dt_s, Config::default(), sc.sim.strict)?;
    lap("integrate", &mut timings);

    let mut grid = VoxelGrid::new(sc.block.clone(), sc.sim.voxel_mm)?;
    let workers = opts.workers.or(sc.sim.workers);
    let carve = carve_with(&mut grid, &timeline, &sc.guide, &sc.tool, &CarveOptions { workers })?;
    lap("carve", &mut timings);

    let cavity = build_cavity_report(&grid, &timeline, &sc.guide, &sc.tool, &plan.label)?;
    let mut notes = Vec::new();
    if carve.clamped {
        notes.push("insertion was clamped to the guide's deployable range".to_string());
    }
    if carve.boundary_warning {
        notes.push("the cutter starts out overlapping a block face other than the entry face".to_string());
    }

    let (spiral_pitch, spiral) = match sc.plan {
        PlanSpec::Spiral { insertion_speed_mm_per_s, rotation_speed_deg_per_s, .. } => {
            let pitch = check_spiral_pitch(insertion_speed_mm_per_s, rotation_speed_deg_per_s, &sc.tool)?;
            if !pitch.satisfied {
                notes.push(format!(
                    "spiral pitch {:.2} mm exceeds the cutter length {} mm; the helix leaves uncut bone between turns",
                    pitch.pitch_mm, sc.tool.cutter_length_mm
                ));
            }
            (Some(pitch), Some(spiral_radii(&timeline, &sc.guide, &sc.tool, &sc.block)?))
        }
        _ => (None, None),
    };
    let branches = match sc.plan {
        PlanSpec::Branches { .. } => Some(branch_radii(Some(&grid), &timeline, &sc.guide, &sc.tool)?),
        _ => None,
    };
    lap("metrics", &mut timings);

    let comparisons = compare(sc.reference.as_ref(), &cavity, spiral.as_ref(), &mut notes);
    let report = RunReport {
        scenario: sc.name.clone(),
        removed_count: grid.removed_count(),
        plan: PlanEcho {
            spec: sc.plan.clone(),
            label: plan.label.clone(),
            segment_count: plan.segments.len(),
            duration_s: plan.duration_s(),
            final_config: timeline.last(),
        },
        guide: sc.guide.clone(),
        tool: sc.tool.clone(),
        block: sc.block.clone(),
        grid: GridEcho { voxel_mm: grid.h_mm, dims: grid.dims(), dt_s: timeline.dt_s, samples: timeline.len() },
        carve,
        clamp_events: timeline.clamp_events.clone(),
        spiral_pitch,
        spiral_radii: spiral,
        branch_radii: branches,
        comparisons,
        notes,
        cavity,
    };
    Ok((report, grid, timeline, timings))
}

fn compare(
    reference: Option<&Reference>,
    cavity: &CavityReport,
    spiral: Option<&SpiralRadii>,
    notes: &mut Vec<String>,
) -> Vec<Comparison> {
    let Some(r) = reference else { return Vec::new() };
    let mut out = Vec::new();
    if let Some(v) = r.radius_deviation_pct {
        out.push(Comparison {
            quantity: "radius_deviation_pct".into(),
            simulated: cavity.radius_deviation_pct,
            reference: v,
            difference_pct: cavity.radius_deviation_pct - v,
        });
    }
    let mut push = |quantity: String, simulated: f64, reference: f64| {
        let difference_pct = 100.0 * (simulated - reference) / reference;
        out.push(Comparison { quantity, simulated, reference, difference_pct });
        difference_pct
    };
    if let Some(v) = r.max_lateral_reach_mm {
        push("max_lateral_reach_mm".into(), cavity.max_lateral_reach_mm, v);
    }
    if let Some(v) = r.tip_angle_change_deg {
        let diff = push("tip_angle_change_deg".into(), cavity.tip_angle_change_deg, v);
        notes.push(format!(
            "tip angle change: the ideal arc gives {:.1} deg against {v} deg measured ({diff:+.1}%); \
             the constant-curvature model has no guide slip, torsion or load deflection",
            cavity.tip_angle_change_deg
        ));
    }
    if let (Some(v), Some(first)) = (r.first_ring_diameter_mm, cavity.slice_diameters.first()) {
        push("first_ring_diameter_mm".into(), first.diameter_mm, v);
    }
    if let (Some(v), Some(last)) = (r.last_ring_diameter_mm, cavity.slice_diameters.last()) {
        push("last_ring_diameter_mm".into(), last.diameter_mm, v);
    }
    if let (Some(s), Some(v)) = (spiral, r.spiral_initial_radius_mm) {
        push("spiral_initial_radius_mm".into(), s.initial_radius_mm, v);
    }
    if let (Some(s), Some(v)) = (spiral, r.spiral_final_radius_mm) {
        push("spiral_final_radius_mm".into(), s.final_radius_mm, v);
    }
    out
}

pub fn trajectory_csv(timeline: &ConfigTimeline, guide: &SteeringGuide) -> Result<String> {
    let mut out = String::with_capacity(timeline.len() * 120);
    out.push_str("t_s,s_mm,phi_deg,tip_x_mm,tip_y_mm,tip_z_mm,tangent_x,tangent_y,tangent_z\n");
    for sample in &timeline.samples {
        let q = sample.config;
        let pose = guide_tip_pose(guide, q)?;
        let (p, t) = (pose.position, pose.tangent);
        let _ = writeln!(out, "{},{},{},{},{},{},{},{},{}", sample.t_s, q.s_mm, q.phi_deg, p.x, p.y, p.z, t.x, t.y, t.z);
    }
    Ok(out)
}

fn write_all(dir: &Path, artifacts: &[(&str, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    let created = !dir.exists();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, bytes) in artifacts {
        let path = dir.join(name);
        if let Err(e) = fs::write(&path, bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(&path);
            if created {
                let _ = fs::remove_dir(dir);
            }
            return Err(e.into());
        }
        written.push(path);
    }
    Ok(written)
}
