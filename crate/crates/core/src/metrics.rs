//! Cavity metrology: reach, orientation, hole and slice diameters, channel
//! centerlines and radius-of-curvature fits.

use nalgebra::Vector3;
use serde::Serialize;
use std::collections::{BTreeMap, VecDeque};

use crate::carve::{BoneBlock, CutterSolid, VoxelGrid};
use crate::error::{Error, Result};
use crate::fit::{fit_circle, CircleFit};
use crate::kinematics::{cutter_pose, guide_tip_pose, lateral_reach, tip_angle_change, Config, DrillTool, SteeringGuide};
use crate::planning::ConfigTimeline;

/// Spacing of report slices for plans without insertion steps.
pub const SLICE_SPACING_MM: f64 = 10.0;
/// Arc length of one voxel-centerline sector.
const SECTOR_ARC_MM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SliceDiameter {
    pub depth_mm: f64,
    pub diameter_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CavityReport {
    pub entry_diameter_mm: f64,
    pub slice_diameters: Vec<SliceDiameter>,
    pub max_lateral_reach_mm: f64,
    pub tip_angle_change_deg: f64,
    pub removed_volume_mm3: f64,
    pub fitted_radius_mm: f64,
    pub radius_deviation_pct: f64,
    pub plan_label: String,
}

pub fn build_cavity_report(
    grid: &VoxelGrid,
    timeline: &ConfigTimeline,
    guide: &SteeringGuide,
    tool: &DrillTool,
    plan_label: &str,
) -> Result<CavityReport> {
    if grid.removed_count() == 0 {
        return Err(Error::EmptyCavity("no voxels were removed".into()));
    }
    if timeline.is_empty() {
        return Err(Error::Domain("empty timeline".into()));
    }
    let planes = ring_planes(timeline, guide, tool, &grid.block)?;
    let slice_diameters = if planes.is_empty() {
        let mut out = Vec::new();
        let mut depth = SLICE_SPACING_MM;
        while depth < grid.block.size_mm[2] {
            if let Ok(d) = slice_diameter(grid, depth) {
                out.push(SliceDiameter { depth_mm: depth, diameter_mm: d });
            }
            depth += SLICE_SPACING_MM;
        }
        out
    } else {
        planes
            .into_iter()
            .map(|depth_mm| Ok(SliceDiameter { depth_mm, diameter_mm: slice_diameter(grid, depth_mm)? }))
            .collect::<Result<_>>()?
    };
    let fit = trajectory_fit(timeline, guide)?;
    Ok(CavityReport {
        entry_diameter_mm: entry_hole_diameter(grid)?,
        slice_diameters,
        max_lateral_reach_mm: max_lateral_reach(timeline, guide, tool)?,
        tip_angle_change_deg: max_tip_angle_change(timeline, guide)?,
        removed_volume_mm3: grid.removed_volume_mm3(),
        fitted_radius_mm: fit.radius,
        radius_deviation_pct: 100.0 * (fit.radius - guide.curve_radius_mm).abs() / guide.curve_radius_mm,
        plan_label: plan_label.to_string(),
    })
}

/// Lateral reach of the cutter's distal point at full deployment: the
/// largest reach among the samples at the timeline's maximum insertion.
pub fn max_lateral_reach(timeline: &ConfigTimeline, guide: &SteeringGuide, tool: &DrillTool) -> Result<f64> {
    let s_max = timeline.configs().map(|q| q.s_mm).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * s_max.abs().max(1.0);
    let mut best = 0.0f64;
    for q in timeline.configs().filter(|q| q.s_mm >= s_max - tol) {
        best = best.max(lateral_reach(&cutter_pose(guide, tool, q)?));
    }
    Ok(best)
}

/// Largest tip rotation from the initial orientation over the timeline.
pub fn max_tip_angle_change(timeline: &ConfigTimeline, guide: &SteeringGuide) -> Result<f64> {
    let q0 = timeline.first();
    timeline.configs().try_fold(0.0f64, |acc, q| Ok(acc.max(tip_angle_change(q0, q, guide)?)))
}

/// Depths, past the entry face, of the distal hemisphere centre during each
/// rotation performed away from the entry (the insertion-step planes).
pub fn ring_planes(timeline: &ConfigTimeline, guide: &SteeringGuide, tool: &DrillTool, block: &BoneBlock) -> Result<Vec<f64>> {
    let mut planes: Vec<(f64, f64)> = Vec::new();
    let mut first = 0;
    for (seg, &last) in timeline.segments.iter().zip(&timeline.boundaries) {
        let q = timeline.samples[first].config;
        first = last;
        if !seg.is_rotation_only() || q.s_mm <= 1e-9 {
            continue;
        }
        if planes.last().is_some_and(|&(s, _)| (s - q.s_mm).abs() <= 1e-9) {
            continue;
        }
        let tip = guide_tip_pose(guide, q)?;
        let center = tip.position + (tool.cutter_length_mm - tool.cutter_radius()) * tip.tangent;
        planes.push((q.s_mm, center.z - block.entry_z()));
    }
    Ok(planes.into_iter().map(|(_, d)| d).collect())
}

/// Diameter of the entry hole in the first block layer reached by the cutter.
///
/// Only the 8-connected region nearest the insertion axis counts, so a
/// channel that later breaks out through the entry face is ignored.
pub fn entry_hole_diameter(grid: &VoxelGrid) -> Result<f64> {
    let [nx, ny, nz] = grid.dims();
    let k = (0..nz)
        .find(|&k| grid.layer_removed(k).next().is_some())
        .ok_or_else(|| Error::EmptyCavity("no removed voxels".into()))?;
    let cells: Vec<(usize, usize)> = grid.layer_removed(k).collect();
    let axis_dist = |&(i, j): &(usize, usize)| {
        let c = grid.center(i, j, k);
        c.x.hypot(c.y)
    };
    let seed = *cells
        .iter()
        .min_by(|a, b| axis_dist(a).total_cmp(&axis_dist(b)))
        .expect("layer is non-empty");

    let mut seen = vec![false; nx * ny];
    let mut component = Vec::new();
    let mut queue = VecDeque::from([seed]);
    seen[seed.0 + nx * seed.1] = true;
    while let Some((i, j)) = queue.pop_front() {
        component.push((i, j));
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                if a < 0 || b < 0 || a >= nx as i64 || b >= ny as i64 {
                    continue;
                }
                let (a, b) = (a as usize, b as usize);
                if !seen[a + nx * b] && grid.is_removed(a, b, k) {
                    seen[a + nx * b] = true;
                    queue.push_back((a, b));
                }
            }
        }
    }
    let in_component = |i: usize, j: usize| seen[i + nx * j] && grid.is_removed(i, j, k);
    let boundary: Vec<(usize, usize)> = component
        .iter()
        .copied()
        .filter(|&(i, j)| {
            i == 0 || j == 0 || i + 1 == nx || j + 1 == ny || ![(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)]
                .iter()
                .all(|&(a, b)| in_component(a, b))
        })
        .collect();
    let mut best = 0.0f64;
    for (n, &(i, j)) in boundary.iter().enumerate() {
        for &(a, b) in &boundary[n..] {
            let (di, dj) = (i as f64 - a as f64, j as f64 - b as f64);
            best = best.max(di.hypot(dj));
        }
    }
    Ok(best * grid.h_mm + grid.h_mm)
}

/// `2 * (largest distance of a removed centre from the insertion axis) + h`
/// in the layer containing the plane `depth_mm` past the entry face.
pub fn slice_diameter(grid: &VoxelGrid, depth_mm: f64) -> Result<f64> {
    let k = grid
        .layer_at_depth(depth_mm)
        .ok_or_else(|| Error::Domain(format!("depth {depth_mm} mm is outside the block")))?;
    let radius = grid
        .layer_removed(k)
        .map(|(i, j)| {
            let c = grid.center(i, j, k);
            c.x.hypot(c.y)
        })
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
        .ok_or_else(|| Error::EmptyCavity(format!("no removed voxels at depth {depth_mm} mm")))?;
    Ok(2.0 * radius + grid.h_mm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpiralRadii {
    pub initial_radius_mm: f64,
    pub final_radius_mm: f64,
}

/// Reach of the cutter's distal point at the first and last samples where it
/// lies inside the block.
pub fn spiral_radii(timeline: &ConfigTimeline, guide: &SteeringGuide, tool: &DrillTool, block: &BoneBlock) -> Result<SpiralRadii> {
    let mut inside = Vec::new();
    for q in timeline.configs() {
        let p = cutter_pose(guide, tool, q)?;
        if block.contains(&p.position) {
            inside.push(lateral_reach(&p));
        }
    }
    match (inside.first(), inside.last()) {
        (Some(&a), Some(&b)) => Ok(SpiralRadii { initial_radius_mm: a, final_radius_mm: b }),
        _ => Err(Error::EmptyCavity("the cutter never enters the block".into())),
    }
}

pub enum CenterlineSource<'a> {
    /// Guide-tip positions along the timeline.
    Trajectory { timeline: &'a ConfigTimeline, guide: &'a SteeringGuide },
    /// Centroids of removed voxels in sectors along the arc of a single
    /// channel in the bending plane `phi_deg`; taken from the azimuth of the
    /// voxel centroid when `None`.
    Voxels { grid: &'a VoxelGrid, guide: &'a SteeringGuide, tool: &'a DrillTool, phi_deg: Option<f64> },
}

pub fn channel_centerline(source: CenterlineSource<'_>) -> Result<Vec<Vector3<f64>>> {
    match source {
        CenterlineSource::Trajectory { timeline, guide } => {
            let mut out: Vec<Vector3<f64>> = Vec::with_capacity(timeline.len());
            for q in timeline.configs() {
                let p = guide_tip_pose(guide, q)?.position;
                if out.last() != Some(&p) {
                    out.push(p);
                }
            }
            Ok(out)
        }
        CenterlineSource::Voxels { grid, guide, tool, phi_deg } => {
            let phi = match phi_deg {
                Some(p) => p,
                None => mean_voxel_azimuth(grid)?,
            };
            voxel_centerline(grid, guide, tool, phi, true)
        }
    }
}

fn mean_voxel_azimuth(grid: &VoxelGrid) -> Result<f64> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (i, j, k) in grid.removed_voxels() {
        let c = grid.center(i, j, k);
        sx += c.x;
        sy += c.y;
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyCavity("no removed voxels".into()));
    }
    Ok(sy.atan2(sx).to_degrees())
}

/// Sector centroids of the removed voxels near the bending plane `phi_deg`.
/// With `strict`, voxels away from the plane are an error; otherwise they
/// are skipped, which isolates one channel of a branched cavity.
fn voxel_centerline(grid: &VoxelGrid, guide: &SteeringGuide, tool: &DrillTool, phi_deg: f64, strict: bool) -> Result<Vec<Vector3<f64>>> {
    let (sin, cos) = phi_deg.to_radians().sin_cos();
    let radius = guide.curve_radius_mm;
    let band = tool.cutter_radius() + 2.0 * grid.h_mm;
    let sector = SECTOR_ARC_MM / radius;
    let mut sums: BTreeMap<i64, (Vector3<f64>, usize)> = BTreeMap::new();
    for (i, j, k) in grid.removed_voxels() {
        let c = grid.center(i, j, k);
        let rho = c.x * cos + c.y * sin;
        let off = -c.x * sin + c.y * cos;
        if off.abs() > band || rho < -band {
            if strict {
                return Err(Error::AmbiguousCenterline(format!(
                    "removed voxel {:.2} mm out of the bending plane at {phi_deg:.1} deg",
                    off.abs().max(-rho)
                )));
            }
            continue;
        }
        let theta = c.z.atan2(radius - rho);
        let entry = sums.entry((theta / sector).floor() as i64).or_insert((Vector3::zeros(), 0));
        entry.0 += c;
        entry.1 += 1;
    }
    if sums.is_empty() {
        return Err(Error::EmptyCavity(format!("no removed voxels near the bending plane at {phi_deg:.1} deg")));
    }
    // Within one cutter length of either end the channel is cut by the
    // straight cutter at a single pose rather than swept along the arc.
    let reach = (tool.cutter_length_mm / radius).atan();
    let near = *sums.keys().next().expect("non-empty") as f64 * sector;
    let far = *sums.keys().next_back().expect("non-empty") as f64 * sector;
    sums.retain(|&key, _| key as f64 * sector >= near + reach && (key as f64 + 1.0) * sector <= far - reach);
    if sums.is_empty() {
        return Err(Error::Degenerate("channel is shorter than the cutter".into()));
    }
    let mut counts: Vec<usize> = sums.values().map(|v| v.1).collect();
    counts.sort_unstable();
    let median = counts[counts.len() / 2];
    Ok(sums.into_values().filter(|&(_, n)| 2 * n >= median).map(|(sum, n)| sum / n as f64).collect())
}

/// Coordinates `(rho, z)` in the bending plane `phi_deg`.
pub fn project_to_bending_plane(points: &[Vector3<f64>], phi_deg: f64) -> Vec<[f64; 2]> {
    let (sin, cos) = phi_deg.to_radians().sin_cos();
    points.iter().map(|p| [p.x * cos + p.y * sin, p.z]).collect()
}

/// Circle fit of guide-tip positions, each projected onto its own bending plane.
pub fn trajectory_fit(timeline: &ConfigTimeline, guide: &SteeringGuide) -> Result<CircleFit> {
    let configs: Vec<Config> = timeline.configs().collect();
    fit_configs(&configs, guide)
}

fn fit_configs(configs: &[Config], guide: &SteeringGuide) -> Result<CircleFit> {
    let mut sorted: Vec<Config> = configs.to_vec();
    sorted.sort_by(|a, b| a.s_mm.total_cmp(&b.s_mm));
    sorted.dedup_by(|a, b| (a.s_mm - b.s_mm).abs() <= 1e-9);
    let mut pts = Vec::with_capacity(sorted.len());
    for q in sorted {
        let p = guide_tip_pose(guide, q)?.position;
        pts.extend(project_to_bending_plane(&[p], q.phi_deg));
    }
    fit_circle(&pts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchRadius {
    pub phi_deg: f64,
    /// Fit of the guide-tip path of the branch.
    pub trajectory_radius_mm: f64,
    /// Fit of voxel centroids of the branch channel.
    pub voxel_radius_mm: Option<f64>,
}

/// Radius fits per insertion segment, one per drilled channel.
///
/// With a grid, each channel is carved again on its own into an empty grid
/// of the same shape before its centroids are taken, so the entry hole the
/// channels share does not pull the fit.
pub fn branch_radii(grid: Option<&VoxelGrid>, timeline: &ConfigTimeline, guide: &SteeringGuide, tool: &DrillTool) -> Result<Vec<BranchRadius>> {
    let mut out = Vec::new();
    let mut first = 0;
    for (seg, &last) in timeline.segments.iter().zip(&timeline.boundaries) {
        let range = first..=last;
        first = last;
        if !(seg.v_ins_mm_per_s > 0.0 && seg.w_deg_per_s == 0.0) {
            continue;
        }
        let configs: Vec<Config> = timeline.samples[range].iter().map(|s| s.config).collect();
        let phi_deg = configs[0].phi_deg;
        let trajectory_radius_mm = fit_configs(&configs, guide)?.radius;
        let voxel_radius_mm = match grid {
            Some(g) => {
                let mut own = VoxelGrid::new(g.block.clone(), g.h_mm)?;
                let solids = configs.iter().map(|&q| CutterSolid::at(guide, tool, q)).collect::<Result<Vec<_>>>()?;
                own.remove_solids(&solids, None)?;
                let pts = voxel_centerline(&own, guide, tool, phi_deg, false)?;
                fit_circle(&project_to_bending_plane(&pts, phi_deg)).ok().map(|f| f.radius)
            }
            None => None,
        };
        out.push(BranchRadius { phi_deg, trajectory_radius_mm, voxel_radius_mm });
    }
    Ok(out)
}
