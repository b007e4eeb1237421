//! Motion plans built from piecewise-constant insertion and rotation rates,
//! their exact integration into configuration timelines, and generators for
//! the five drilling procedures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{Config, DrillTool, SteeringGuide};

pub const DEFAULT_INSERTION_SPEED: f64 = 1.6;
pub const DEFAULT_ROTATION_SPEED: f64 = 9.6;
pub const DEFAULT_SPIRAL_INSERTION_SPEED: f64 = 0.96;
pub const DEFAULT_SPIRAL_ROTATION_SPEED: f64 = 4.7;
/// One sample per millisecond, the cadence of the force recordings.
pub const DEFAULT_DT_S: f64 = 1e-3;

/// Constant-rate motion held for a fixed duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSegment {
    pub duration_s: f64,
    pub v_ins_mm_per_s: f64,
    pub w_deg_per_s: f64,
    pub label: String,
}

impl MotionSegment {
    pub fn new(duration_s: f64, v_ins_mm_per_s: f64, w_deg_per_s: f64, label: impl Into<String>) -> Self {
        Self { duration_s, v_ins_mm_per_s, w_deg_per_s, label: label.into() }
    }

    fn validate(&self, index: usize) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Plan(format!("segment {index} has non-positive duration {}", self.duration_s)));
        }
        if !(self.v_ins_mm_per_s.is_finite() && self.w_deg_per_s.is_finite()) {
            return Err(Error::Plan(format!("segment {index} has non-finite rates")));
        }
        Ok(())
    }

    fn advance(&self, from: Config, tau: f64) -> Config {
        Config::new(from.s_mm + self.v_ins_mm_per_s * tau, from.phi_deg + self.w_deg_per_s * tau)
    }

    /// Pure rotation with the guide held at a fixed insertion.
    pub fn is_rotation_only(&self) -> bool {
        self.v_ins_mm_per_s == 0.0 && self.w_deg_per_s != 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPlan {
    pub label: String,
    pub segments: Vec<MotionSegment>,
    pub guide: SteeringGuide,
    pub tool: DrillTool,
}

impl MotionPlan {
    /// Builds a plan that starts from `s = 0`, rejecting segment boundaries
    /// outside the guide's deployable range.
    pub fn new(
        label: impl Into<String>,
        guide: SteeringGuide,
        tool: DrillTool,
        segments: Vec<MotionSegment>,
    ) -> Result<Self> {
        guide.validate()?;
        tool.validate()?;
        let mut s = 0.0;
        let slack = 1e-9 * guide.deployable_length_mm.max(1.0);
        for (i, seg) in segments.iter().enumerate() {
            seg.validate(i)?;
            s += seg.v_ins_mm_per_s * seg.duration_s;
            if s < -slack || s > guide.deployable_length_mm + slack {
                return Err(Error::Plan(format!(
                    "insertion reaches {s:.6} mm after segment {i}, outside [0, {}] mm",
                    guide.deployable_length_mm
                )));
            }
        }
        Ok(Self { label: label.into(), segments, guide, tool })
    }

    pub fn duration_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    /// Net insertion and rotation, ignoring clamping.
    pub fn net_motion(&self) -> (f64, f64) {
        self.segments.iter().fold((0.0, 0.0), |(s, phi), seg| {
            (s + seg.v_ins_mm_per_s * seg.duration_s, phi + seg.w_deg_per_s * seg.duration_s)
        })
    }

    /// Time-reversed plan with negated rates; undoes this plan's motion.
    pub fn reversed(&self) -> Vec<MotionSegment> {
        self.segments
            .iter()
            .rev()
            .map(|seg| MotionSegment::new(seg.duration_s, -seg.v_ins_mm_per_s, -seg.w_deg_per_s, seg.label.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimelineSample {
    pub t_s: f64,
    pub config: Config,
    pub segment: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClampEvent {
    pub segment: usize,
    pub t_s: f64,
    pub s_mm: f64,
}

/// Integrated configuration samples of a plan.
///
/// Samples are spaced `dt_s` apart within each segment; the last step of a
/// segment is shortened so every segment boundary is sampled exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigTimeline {
    pub dt_s: f64,
    pub samples: Vec<TimelineSample>,
    pub segments: Vec<MotionSegment>,
    /// Index into `samples` of each segment's final sample.
    pub boundaries: Vec<usize>,
    pub clamp_events: Vec<ClampEvent>,
}

impl ConfigTimeline {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> Config {
        self.samples[0].config
    }

    pub fn last(&self) -> Config {
        self.samples[self.samples.len() - 1].config
    }

    pub fn configs(&self) -> impl Iterator<Item = Config> + '_ {
        self.samples.iter().map(|s| s.config)
    }

    pub fn label_of(&self, sample: &TimelineSample) -> &str {
        &self.segments[sample.segment].label
    }

    pub fn boundary_configs(&self) -> Vec<Config> {
        self.boundaries.iter().map(|&i| self.samples[i].config).collect()
    }

    pub fn clamped(&self) -> bool {
        !self.clamp_events.is_empty()
    }
}

/// Integrates a plan in closed form, clamping `s` to the guide's range.
pub fn integrate_plan(plan: &MotionPlan, dt_s: f64, initial: Config) -> Result<ConfigTimeline> {
    integrate_plan_with(plan, dt_s, initial, false)
}

/// As [`integrate_plan`]; with `strict` set, any clamp is an error.
pub fn integrate_plan_with(plan: &MotionPlan, dt_s: f64, initial: Config, strict: bool) -> Result<ConfigTimeline> {
    if !(dt_s.is_finite() && dt_s > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {dt_s}")));
    }
    if plan.segments.is_empty() {
        return Err(Error::EmptyPlan);
    }
    let limit = plan.guide.deployable_length_mm;
    let clamp = |q: Config| q.clamped(&plan.guide);
    // rounding residue at a boundary is not a clamp
    let slack = 1e-9 * limit.max(1.0);

    let mut start = clamp(initial);
    let mut clamp_events = Vec::new();
    if (start.s_mm - initial.s_mm).abs() > slack {
        if strict {
            return Err(Error::Clamped { segment: 0, t_s: 0.0, limit_mm: limit });
        }
        clamp_events.push(ClampEvent { segment: 0, t_s: 0.0, s_mm: start.s_mm });
    }
    let mut samples = vec![TimelineSample { t_s: 0.0, config: start, segment: 0 }];
    let mut boundaries = Vec::with_capacity(plan.segments.len());
    let mut t0 = 0.0;

    for (index, seg) in plan.segments.iter().enumerate() {
        let steps = ((seg.duration_s / dt_s) - 1e-9).ceil().max(1.0) as usize;
        let mut clamped_here = false;
        for j in 1..=steps {
            let tau = if j == steps { seg.duration_s } else { j as f64 * dt_s };
            let raw = seg.advance(start, tau);
            let q = clamp(raw);
            if (q.s_mm - raw.s_mm).abs() > slack && !clamped_here {
                clamped_here = true;
                let bound = if raw.s_mm < 0.0 { 0.0 } else { limit };
                let t_hit = t0 + (bound - start.s_mm) / seg.v_ins_mm_per_s;
                let event = ClampEvent { segment: index, t_s: t_hit.max(t0), s_mm: bound };
                if strict {
                    return Err(Error::Clamped { segment: index, t_s: event.t_s, limit_mm: limit });
                }
                clamp_events.push(event);
            }
            samples.push(TimelineSample { t_s: t0 + tau, config: q, segment: index });
        }
        boundaries.push(samples.len() - 1);
        start = clamp(seg.advance(start, seg.duration_s));
        t0 += seg.duration_s;
    }

    Ok(ConfigTimeline { dt_s, samples, segments: plan.segments.clone(), boundaries, clamp_events })
}

fn check_depth(guide: &SteeringGuide, depth_mm: f64) -> Result<()> {
    if !(depth_mm.is_finite() && depth_mm > 0.0) {
        return Err(Error::Plan(format!("depth must be positive, got {depth_mm}")));
    }
    if depth_mm > guide.deployable_length_mm {
        return Err(Error::Plan(format!(
            "depth {depth_mm} mm exceeds guide length {} mm",
            guide.deployable_length_mm
        )));
    }
    Ok(())
}

fn check_speed(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Plan(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// A single insertion to `depth_mm`; the U-shape is a full-length insertion.
pub fn plan_j_or_u_shape(guide: &SteeringGuide, tool: &DrillTool, depth_mm: f64, v_ins: f64) -> Result<MotionPlan> {
    check_depth(guide, depth_mm)?;
    check_speed("insertion speed", v_ins)?;
    let label = if depth_mm == guide.deployable_length_mm { "u_shape" } else { "j_shape" };
    MotionPlan::new(
        label,
        guide.clone(),
        tool.clone(),
        vec![MotionSegment::new(depth_mm / v_ins, v_ins, 0.0, "insert")],
    )
}

/// Repeated insert / retract / reorient passes through a common entry hole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchParams {
    pub depth_mm: f64,
    pub branches: usize,
    pub spacing_deg: f64,
    pub insertion_speed_mm_per_s: f64,
    pub retract_speed_mm_per_s: f64,
    pub reorient_speed_deg_per_s: f64,
}

impl BranchParams {
    pub fn new(depth_mm: f64, spacing_deg: f64) -> Self {
        Self {
            depth_mm,
            branches: 3,
            spacing_deg,
            insertion_speed_mm_per_s: DEFAULT_INSERTION_SPEED,
            retract_speed_mm_per_s: DEFAULT_INSERTION_SPEED,
            reorient_speed_deg_per_s: DEFAULT_ROTATION_SPEED,
        }
    }
}

pub fn plan_branches(guide: &SteeringGuide, tool: &DrillTool, p: &BranchParams) -> Result<MotionPlan> {
    check_depth(guide, p.depth_mm)?;
    if p.branches == 0 {
        return Err(Error::Plan("branch count must be at least 1".into()));
    }
    check_speed("insertion speed", p.insertion_speed_mm_per_s)?;
    check_speed("retraction speed", p.retract_speed_mm_per_s)?;
    if p.branches > 1 {
        check_speed("reorientation speed", p.reorient_speed_deg_per_s)?;
        if !(p.spacing_deg.is_finite() && p.spacing_deg != 0.0 && p.spacing_deg.abs() < 360.0) {
            return Err(Error::Plan(format!("branch spacing must be in (-360, 360) and nonzero, got {}", p.spacing_deg)));
        }
    }
    let insert = MotionSegment::new(p.depth_mm / p.insertion_speed_mm_per_s, p.insertion_speed_mm_per_s, 0.0, "insert");
    let retract =
        MotionSegment::new(p.depth_mm / p.retract_speed_mm_per_s, -p.retract_speed_mm_per_s, 0.0, "retract");
    let w = p.reorient_speed_deg_per_s.copysign(p.spacing_deg);
    let rotate = MotionSegment::new(p.spacing_deg.abs() / p.reorient_speed_deg_per_s, 0.0, w, "reorient");

    let mut segments = Vec::with_capacity(3 * p.branches - 1);
    for b in 0..p.branches {
        segments.push(insert.clone());
        segments.push(retract.clone());
        if b + 1 < p.branches {
            segments.push(rotate.clone());
        }
    }
    MotionPlan::new("branches", guide.clone(), tool.clone(), segments)
}

/// How partial sweeps of a stepped-rotation plan are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepDirection {
    /// Partial sweeps reverse direction every step.
    #[default]
    Alternate,
    Same,
}

impl SweepDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepDirection::Alternate => "alternate",
            SweepDirection::Same => "same",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteppedRotationParams {
    pub step_mm: f64,
    pub steps: usize,
    pub sweep_deg: f64,
    pub insertion_speed_mm_per_s: f64,
    pub rotation_speed_deg_per_s: f64,
    pub direction: SweepDirection,
}

impl SteppedRotationParams {
    pub fn new(steps: usize) -> Self {
        Self {
            step_mm: 10.0,
            steps,
            sweep_deg: 360.0,
            insertion_speed_mm_per_s: DEFAULT_INSERTION_SPEED,
            rotation_speed_deg_per_s: DEFAULT_ROTATION_SPEED,
            direction: SweepDirection::Alternate,
        }
    }
}

/// Alternating insertion steps and in-place rotation sweeps.
pub fn plan_stepped_rotation(guide: &SteeringGuide, tool: &DrillTool, p: &SteppedRotationParams) -> Result<MotionPlan> {
    if p.steps == 0 {
        return Err(Error::Plan("step count must be at least 1".into()));
    }
    if !(p.step_mm.is_finite() && p.step_mm > 0.0) {
        return Err(Error::Plan(format!("step length must be positive, got {}", p.step_mm)));
    }
    let total = p.step_mm * p.steps as f64;
    if total > guide.deployable_length_mm {
        return Err(Error::Plan(format!(
            "{} steps of {} mm exceed guide length {} mm",
            p.steps, p.step_mm, guide.deployable_length_mm
        )));
    }
    if !(p.sweep_deg.is_finite() && p.sweep_deg > 0.0) {
        return Err(Error::Plan(format!("sweep must be positive, got {}", p.sweep_deg)));
    }
    check_speed("insertion speed", p.insertion_speed_mm_per_s)?;
    if !(p.rotation_speed_deg_per_s.is_finite() && p.rotation_speed_deg_per_s != 0.0) {
        return Err(Error::Plan("rotation speed must be nonzero".into()));
    }
    let insert = MotionSegment::new(p.step_mm / p.insertion_speed_mm_per_s, p.insertion_speed_mm_per_s, 0.0, "insert");
    let sweep_time = p.sweep_deg / p.rotation_speed_deg_per_s.abs();
    let rocking = p.sweep_deg < 360.0 && p.direction == SweepDirection::Alternate;

    let mut segments = Vec::with_capacity(2 * p.steps);
    for step in 0..p.steps {
        segments.push(insert.clone());
        let sign = if rocking && step % 2 == 1 { -1.0 } else { 1.0 };
        segments.push(MotionSegment::new(sweep_time, 0.0, sign * p.rotation_speed_deg_per_s, "sweep"));
    }
    MotionPlan::new("stepped_rotation", guide.clone(), tool.clone(), segments)
}

/// Simultaneous insertion and rotation producing a helical tip path.
pub fn plan_spiral(
    guide: &SteeringGuide,
    tool: &DrillTool,
    depth_mm: f64,
    v_ins: f64,
    w_deg_per_s: f64,
) -> Result<MotionPlan> {
    check_depth(guide, depth_mm)?;
    check_speed("insertion speed", v_ins)?;
    if !(w_deg_per_s.is_finite() && w_deg_per_s != 0.0) {
        return Err(Error::Plan("spiral rotation speed must be nonzero".into()));
    }
    MotionPlan::new(
        "spiral",
        guide.clone(),
        tool.clone(),
        vec![MotionSegment::new(depth_mm / v_ins, v_ins, w_deg_per_s, "spiral")],
    )
}

/// Insertion advance per revolution, and whether it stays within one cutter length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchCheck {
    pub pitch_mm: f64,
    pub satisfied: bool,
}

pub fn check_spiral_pitch(v_ins: f64, w_deg_per_s: f64, tool: &DrillTool) -> Result<PitchCheck> {
    if !(w_deg_per_s.is_finite() && w_deg_per_s != 0.0) {
        return Err(Error::Domain("pitch is unbounded for zero rotation speed".into()));
    }
    let pitch_mm = v_ins.abs() * 360.0 / w_deg_per_s.abs();
    Ok(PitchCheck { pitch_mm, satisfied: pitch_mm <= tool.cutter_length_mm })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u_guide() -> SteeringGuide {
        SteeringGuide::new("u", 39.9, 120.0).unwrap()
    }

    fn j_guide() -> SteeringGuide {
        SteeringGuide::new("j", 71.1, 60.0).unwrap()
    }

    fn single(seg: MotionSegment) -> MotionPlan {
        MotionPlan::new("t", u_guide(), DrillTool::default(), vec![seg]).unwrap()
    }

    #[test]
    fn full_insertion_reaches_guide_length() {
        let tl = integrate_plan(&single(MotionSegment::new(75.0, 1.6, 0.0, "in")), 1e-3, Config::default()).unwrap();
        let end = tl.last();
        assert!((end.s_mm - 120.0).abs() < 1e-9);
        assert_eq!(end.phi_deg, 0.0);
        assert!(!tl.clamped());
    }

    #[test]
    fn pure_rotation() {
        let tl = integrate_plan(&single(MotionSegment::new(10.0, 0.0, 9.6, "rot")), 1e-3, Config::default()).unwrap();
        assert!((tl.last().phi_deg - 96.0).abs() < 1e-9);
        assert!(tl.configs().all(|q| q.s_mm == 0.0));
    }

    #[test]
    fn zero_motion_keeps_config() {
        let q0 = Config::new(3.0, 12.0);
        let tl = integrate_plan(&single(MotionSegment::new(5.0, 0.0, 0.0, "hold")), 1e-2, q0).unwrap();
        assert!(tl.configs().all(|q| q == q0));
        assert_eq!(tl.len(), 501);
    }

    #[test]
    fn uniform_spacing_with_short_final_step() {
        let tl = integrate_plan(&single(MotionSegment::new(1.05, 1.0, 0.0, "in")), 0.1, Config::default()).unwrap();
        assert_eq!(tl.samples[0].t_s, 0.0);
        assert_eq!(tl.len(), 12);
        for w in tl.samples[..11].windows(2) {
            assert!((w[1].t_s - w[0].t_s - 0.1).abs() < 1e-12);
        }
        assert!((tl.samples[11].t_s - tl.samples[10].t_s - 0.05).abs() < 1e-12);
        assert_eq!(tl.last().s_mm, 1.05);
    }

    #[test]
    fn clamp_is_recorded_or_rejected() {
        let plan = single(MotionSegment::new(10.0, 1.0, 0.0, "in"));
        let tl = integrate_plan(&plan, 0.01, Config::new(115.0, 0.0)).unwrap();
        assert_eq!(tl.last().s_mm, 120.0);
        assert_eq!(tl.clamp_events.len(), 1);
        assert!((tl.clamp_events[0].t_s - 5.0).abs() < 1e-9);
        assert!(matches!(
            integrate_plan_with(&plan, 0.01, Config::new(115.0, 0.0), true),
            Err(Error::Clamped { segment: 0, .. })
        ));
    }

    #[test]
    fn empty_plan_and_bad_dt() {
        let empty = MotionPlan::new("e", u_guide(), DrillTool::default(), vec![]).unwrap();
        assert!(matches!(integrate_plan(&empty, 1e-3, Config::default()), Err(Error::EmptyPlan)));
        let plan = single(MotionSegment::new(1.0, 1.0, 0.0, "in"));
        assert!(integrate_plan(&plan, 0.0, Config::default()).is_err());
    }

    #[test]
    fn plan_rejects_out_of_range_boundaries() {
        let err = MotionPlan::new("x", u_guide(), DrillTool::default(), vec![MotionSegment::new(1.0, -1.0, 0.0, "r")]);
        assert!(matches!(err, Err(Error::Plan(_))));
        let neg = MotionPlan::new("x", u_guide(), DrillTool::default(), vec![MotionSegment::new(-1.0, 1.0, 0.0, "r")]);
        assert!(neg.is_err());
    }

    #[test]
    fn j_and_u_shape() {
        let tool = DrillTool::default();
        let u = plan_j_or_u_shape(&u_guide(), &tool, 120.0, 1.6).unwrap();
        assert_eq!(u.segments.len(), 1);
        assert!((u.segments[0].duration_s - 75.0).abs() < 1e-12);
        assert_eq!(u.label, "u_shape");
        assert!(plan_j_or_u_shape(&u_guide(), &tool, 0.0, 1.6).is_err());
        assert!(plan_j_or_u_shape(&u_guide(), &tool, 121.0, 1.6).is_err());
        let j = plan_j_or_u_shape(&j_guide(), &tool, 40.0, 1.6).unwrap();
        assert!((j.segments[0].duration_s - 25.0).abs() < 1e-12);
    }

    #[test]
    fn branches_structure() {
        let tool = DrillTool::default();
        let plan = plan_branches(&j_guide(), &tool, &BranchParams::new(40.0, 120.0)).unwrap();
        let labels: Vec<_> = plan.segments.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(
            labels,
            ["insert", "retract", "reorient", "insert", "retract", "reorient", "insert", "retract"]
        );

        let one = plan_branches(&j_guide(), &tool, &BranchParams { branches: 1, ..BranchParams::new(40.0, 120.0) }).unwrap();
        let j = plan_j_or_u_shape(&j_guide(), &tool, 40.0, 1.6).unwrap();
        assert_eq!(one.segments.len(), 2);
        assert_eq!(one.segments[0], j.segments[0]);
        assert_eq!(one.segments[1].v_ins_mm_per_s, -1.6);

        let quarter = plan_branches(&j_guide(), &tool, &BranchParams::new(50.0, 90.0)).unwrap();
        let tl = integrate_plan(&quarter, 1e-2, Config::default()).unwrap();
        assert!((tl.last().phi_deg - 180.0).abs() < 1e-9);
        assert!(tl.last().s_mm.abs() < 1e-9);

        assert!(plan_branches(&j_guide(), &tool, &BranchParams { branches: 0, ..BranchParams::new(40.0, 120.0) }).is_err());
        assert!(plan_branches(&j_guide(), &tool, &BranchParams::new(40.0, 0.0)).is_err());
    }

    #[test]
    fn branch_rotations_only_at_zero_insertion() {
        let plan = plan_branches(&j_guide(), &DrillTool::default(), &BranchParams::new(40.0, 120.0)).unwrap();
        let tl = integrate_plan(&plan, 1e-2, Config::default()).unwrap();
        for w in tl.samples.windows(2) {
            if w[1].config.phi_deg != w[0].config.phi_deg {
                assert!(w[0].config.s_mm.abs() < 1e-9 && w[1].config.s_mm.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stepped_rotation_structure() {
        let tool = DrillTool::default();
        let plan = plan_stepped_rotation(&j_guide(), &tool, &SteppedRotationParams::new(3)).unwrap();
        assert_eq!(plan.segments.len(), 6);
        for seg in plan.segments.iter().skip(1).step_by(2) {
            assert!((seg.duration_s - 37.5).abs() < 1e-12);
            assert!(seg.is_rotation_only());
        }
        let partial = SteppedRotationParams { sweep_deg: 92.46, ..SteppedRotationParams::new(3) };
        let plan = plan_stepped_rotation(&u_guide(), &tool, &partial).unwrap();
        assert!((plan.segments[1].duration_s - 9.63125).abs() < 1e-12);
        let signs: Vec<f64> = plan.segments.iter().skip(1).step_by(2).map(|s| s.w_deg_per_s.signum()).collect();
        assert_eq!(signs, [1.0, -1.0, 1.0]);
        let same = SteppedRotationParams { direction: SweepDirection::Same, ..partial };
        let plan = plan_stepped_rotation(&u_guide(), &tool, &same).unwrap();
        assert!(plan.segments.iter().skip(1).step_by(2).all(|s| s.w_deg_per_s > 0.0));

        assert!(plan_stepped_rotation(&j_guide(), &tool, &SteppedRotationParams::new(0)).is_err());
        assert!(plan_stepped_rotation(&j_guide(), &tool, &SteppedRotationParams::new(7)).is_err());
    }

    #[test]
    fn spiral_plan() {
        let tool = DrillTool::default();
        let plan = plan_spiral(&u_guide(), &tool, 40.0, 0.96, 4.7).unwrap();
        let seg = &plan.segments[0];
        assert!((seg.duration_s - 41.6667).abs() < 1e-4);
        assert!((seg.w_deg_per_s * seg.duration_s - 195.83).abs() < 1e-2);
        assert!(plan_spiral(&u_guide(), &tool, 0.0, 0.96, 4.7).is_err());
        assert!(plan_spiral(&u_guide(), &tool, 40.0, 0.96, 0.0).is_err());
        assert!(plan_spiral(&u_guide(), &tool, 40.0, 0.0, 4.7).is_err());
    }

    #[test]
    fn pitch_check() {
        let tool = DrillTool::default();
        let paper = check_spiral_pitch(0.96, 4.7, &tool).unwrap();
        assert!((paper.pitch_mm - 73.53).abs() < 5e-3);
        assert!(!paper.satisfied);
        let fine = check_spiral_pitch(0.1, 36.0, &tool).unwrap();
        assert!((fine.pitch_mm - 1.0).abs() < 1e-12);
        assert!(fine.satisfied);
        let still = check_spiral_pitch(0.0, 4.7, &tool).unwrap();
        assert_eq!(still.pitch_mm, 0.0);
        assert!(still.satisfied);
        assert!(check_spiral_pitch(0.96, 0.0, &tool).is_err());
    }

    #[test]
    fn boundaries_do_not_depend_on_dt() {
        let plan = plan_stepped_rotation(&j_guide(), &DrillTool::default(), &SteppedRotationParams::new(3)).unwrap();
        let coarse = integrate_plan(&plan, 0.02, Config::default()).unwrap();
        let fine = integrate_plan(&plan, 0.01, Config::default()).unwrap();
        assert_eq!(coarse.boundary_configs(), fine.boundary_configs());
    }
}
