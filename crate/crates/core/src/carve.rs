//! Voxel model of the bone block and material removal by the swept cutter.
//!
//! Membership is decided at voxel centres. The cutter is a cylinder of the
//! cutter radius running from the guide tip along the tangent, closed by a
//! distal hemisphere; the union of its placements over a timeline is removed.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

use crate::error::{Error, Result};
use crate::kinematics::{guide_tip_pose, Config, DrillTool, Pose, SteeringGuide};
use crate::planning::ConfigTimeline;

pub const DEFAULT_VOXEL_MM: f64 = 0.25;
const MAX_VOXELS: usize = 1 << 31;

/// Sawbone density grade. Metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Density {
    Pcf5,
    #[default]
    Pcf10,
    Custom,
}

impl fmt::Display for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Density::Pcf5 => f.write_str("5"),
            Density::Pcf10 => f.write_str("10"),
            Density::Custom => f.write_str("custom"),
        }
    }
}

impl Serialize for Density {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Density::Pcf5 => s.serialize_i64(5),
            Density::Pcf10 => s.serialize_i64(10),
            Density::Custom => s.serialize_str("custom"),
        }
    }
}

impl<'de> Deserialize<'de> for Density {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(5) => Ok(Density::Pcf5),
            Raw::Int(10) => Ok(Density::Pcf10),
            Raw::Text(t) => match t.as_str() {
                "5" => Ok(Density::Pcf5),
                "10" => Ok(Density::Pcf10),
                "custom" => Ok(Density::Custom),
                other => Err(serde::de::Error::custom(format!("density must be 5, 10 or \"custom\", got {other:?}"))),
            },
            Raw::Int(other) => Err(serde::de::Error::custom(format!("density must be 5, 10 or \"custom\", got {other}"))),
        }
    }
}

/// Face of the block the drill enters through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EntryFace {
    /// The face at minimum `z`, facing the outer tube.
    #[default]
    #[serde(rename = "-z")]
    NegZ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoneBlock {
    pub size_mm: [f64; 3],
    /// Minimum corner in the base frame.
    pub origin_mm: [f64; 3],
    pub density_pcf: Density,
    pub entry_face: EntryFace,
}

impl BoneBlock {
    /// 60 x 60 x 90 mm block centred on the insertion axis with its entry
    /// face 5 mm beyond the cutter's starting tip.
    pub fn default_for(tool: &DrillTool) -> Self {
        Self {
            size_mm: [60.0, 60.0, 90.0],
            origin_mm: [-30.0, -30.0, tool.cutter_length_mm + 5.0],
            density_pcf: Density::Pcf10,
            entry_face: EntryFace::NegZ,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size_mm.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Domain(format!("block sizes must be positive, got {:?}", self.size_mm)));
        }
        if self.origin_mm.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("block origin must be finite, got {:?}", self.origin_mm)));
        }
        Ok(())
    }

    pub fn min(&self) -> Vector3<f64> {
        Vector3::from(self.origin_mm)
    }

    pub fn max(&self) -> Vector3<f64> {
        self.min() + Vector3::from(self.size_mm)
    }

    pub fn entry_z(&self) -> f64 {
        self.origin_mm[2]
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let (lo, hi) = (self.min(), self.max());
        (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i])
    }
}

/// Placed ball-nose cutter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutterSolid {
    /// Proximal end of the cylinder, at the guide tip.
    pub proximal: Vector3<f64>,
    pub tangent: Vector3<f64>,
    pub radius: f64,
    /// Cylinder length; the hemisphere adds one radius beyond it.
    pub axis_len: f64,
}

impl CutterSolid {
    pub fn new(tip: &Pose, tool: &DrillTool) -> Self {
        let radius = tool.cutter_radius();
        Self { proximal: tip.position, tangent: tip.tangent, radius, axis_len: tool.cutter_length_mm - radius }
    }

    pub fn at(guide: &SteeringGuide, tool: &DrillTool, q: Config) -> Result<Self> {
        Ok(Self::new(&guide_tip_pose(guide, q)?, tool))
    }

    /// Centre of the distal hemisphere.
    pub fn center(&self) -> Vector3<f64> {
        self.proximal + self.axis_len * self.tangent
    }

    pub fn distal(&self) -> Vector3<f64> {
        self.proximal + (self.axis_len + self.radius) * self.tangent
    }

    pub fn volume(&self) -> f64 {
        use std::f64::consts::PI;
        let r = self.radius;
        PI * r * r * self.axis_len + 2.0 / 3.0 * PI * r * r * r
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let w = p - self.proximal;
        let u = w.dot(&self.tangent);
        let r2 = self.radius * self.radius;
        if u < 0.0 {
            false
        } else if u <= self.axis_len {
            w.norm_squared() - u * u <= r2
        } else {
            (p - self.center()).norm_squared() <= r2
        }
    }

    /// Bounding box of the capsule around the cutter axis.
    pub fn aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        let c = self.center();
        let r = Vector3::repeat(self.radius);
        (self.proximal.inf(&c) - r, self.proximal.sup(&c) + r)
    }

    /// `x`-interval where the line `(·, y, z)` meets the capsule enclosing the solid.
    fn row_interval(&self, y: f64, z: f64) -> Option<(f64, f64)> {
        fn merge(hull: &mut Option<(f64, f64)>, lo: f64, hi: f64) {
            if lo <= hi {
                *hull = Some(match *hull {
                    Some((a, b)) => (a.min(lo), b.max(hi)),
                    None => (lo, hi),
                });
            }
        }
        let r2 = self.radius * self.radius;
        let mut hull = None;
        for c in [self.proximal, self.center()] {
            let rem = r2 - (y - c.y).powi(2) - (z - c.z).powi(2);
            if rem >= 0.0 {
                let half = rem.sqrt();
                merge(&mut hull, c.x - half, c.x + half);
            }
        }

        // cylinder: 0 <= u <= axis_len and radial distance <= r, both in x' = x - p.x
        let (p, t) = (self.proximal, self.tangent);
        let (dy, dz) = (y - p.y, z - p.z);
        let k = dy * t.y + dz * t.z;
        let a = 1.0 - t.x * t.x;
        let b = -2.0 * t.x * k;
        let c = dy * dy + dz * dz - k * k - r2;
        let (mut lo, mut hi) = if a > 1e-12 {
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return hull;
            }
            let sq = disc.sqrt();
            ((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a))
        } else if c <= 0.0 {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            return hull;
        };
        if t.x.abs() > 1e-12 {
            let (u0, u1) = ((0.0 - k) / t.x, (self.axis_len - k) / t.x);
            lo = lo.max(u0.min(u1));
            hi = hi.min(u0.max(u1));
        } else if !(0.0..=self.axis_len).contains(&k) {
            return hull;
        }
        merge(&mut hull, lo + p.x, hi + p.x);
        hull
    }
}

/// Occupancy grid of the bone block, `x` fastest.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    pub block: BoneBlock,
    pub h_mm: f64,
    dims: [usize; 3],
    removed: Vec<bool>,
    count: usize,
}

impl VoxelGrid {
    pub fn new(block: BoneBlock, h_mm: f64) -> Result<Self> {
        block.validate()?;
        let dims = Self::dims_for(&block, h_mm)?;
        let len = dims[0] * dims[1] * dims[2];
        Ok(Self { block, h_mm, dims, removed: vec![false; len], count: 0 })
    }

    /// Grid dimensions `ceil(size / h)` per axis.
    pub fn dims_for(block: &BoneBlock, h_mm: f64) -> Result<[usize; 3]> {
        if !(h_mm.is_finite() && h_mm > 0.0) {
            return Err(Error::Domain(format!("voxel size must be positive, got {h_mm}")));
        }
        let dims = block.size_mm.map(|s| ((s / h_mm) - 1e-9).ceil().max(1.0) as usize);
        let total = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        match total {
            Some(n) if n <= MAX_VOXELS => Ok(dims),
            _ => Err(Error::Domain(format!("grid {dims:?} at {h_mm} mm is too large"))),
        }
    }

    /// Rebuilds a grid from a stored removal mask.
    pub fn from_mask(block: BoneBlock, h_mm: f64, removed: Vec<bool>) -> Result<Self> {
        let mut grid = Self::new(block, h_mm)?;
        if removed.len() != grid.removed.len() {
            return Err(Error::MaskFormat(format!(
                "mask holds {} voxels, grid needs {}",
                removed.len(),
                grid.removed.len()
            )));
        }
        grid.count = removed.iter().filter(|&&r| r).count();
        grid.removed = removed;
        Ok(grid)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.removed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.removed.is_empty()
    }

    pub fn removed_count(&self) -> usize {
        self.count
    }

    pub fn removed_volume_mm3(&self) -> f64 {
        self.count as f64 * self.h_mm.powi(3)
    }

    pub fn mask(&self) -> &[bool] {
        &self.removed
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn is_removed(&self, i: usize, j: usize, k: usize) -> bool {
        self.removed[self.index(i, j, k)]
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        let o = self.block.min();
        Vector3::new(
            o.x + (i as f64 + 0.5) * self.h_mm,
            o.y + (j as f64 + 0.5) * self.h_mm,
            o.z + (k as f64 + 0.5) * self.h_mm,
        )
    }

    /// Layer index whose slab contains the plane `depth_mm` past the entry face.
    pub fn layer_at_depth(&self, depth_mm: f64) -> Option<usize> {
        if !(depth_mm >= 0.0) {
            return None;
        }
        let k = (depth_mm / self.h_mm).floor() as usize;
        (k < self.dims[2]).then_some(k)
    }

    /// Removed voxel indices `(i, j)` in layer `k`.
    pub fn layer_removed(&self, k: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let [nx, ny, _] = self.dims;
        let base = nx * ny * k;
        self.removed[base..base + nx * ny]
            .iter()
            .enumerate()
            .filter(|(_, &r)| r)
            .map(move |(idx, _)| (idx % nx, idx / nx))
    }

    pub fn removed_voxels(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let [nx, ny, _] = self.dims;
        self.removed
            .iter()
            .enumerate()
            .filter(|(_, &r)| r)
            .map(move |(idx, _)| (idx % nx, (idx / nx) % ny, idx / (nx * ny)))
    }

    /// Marks every voxel whose centre lies in one of the solids; returns how
    /// many were newly removed. The result is independent of solid order and
    /// of the worker count.
    pub fn remove_solids(&mut self, solids: &[CutterSolid], workers: Option<usize>) -> Result<usize> {
        let added = match workers {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Domain(format!("worker pool: {e}")))?
                .install(|| self.remove_solids_parallel(solids)),
            None => self.remove_solids_parallel(solids),
        };
        self.count += added;
        Ok(added)
    }

    fn remove_solids_parallel(&mut self, solids: &[CutterSolid]) -> usize {
        const SLAB_LAYERS: usize = 2;
        let [nx, ny, nz] = self.dims;
        let h = self.h_mm;
        let origin = self.block.min();
        let layer = nx * ny;

        let to_range = |lo: f64, hi: f64, o: f64, n: usize| -> Option<(usize, usize)> {
            let a = ((lo - o) / h - 0.5).ceil().max(0.0);
            let b = ((hi - o) / h - 0.5).floor();
            if b < 0.0 || a > b || a >= n as f64 {
                return None;
            }
            Some((a as usize, (b as usize).min(n - 1)))
        };
        let boxes: Vec<Option<[(usize, usize); 3]>> = solids
            .iter()
            .map(|s| {
                let (lo, hi) = s.aabb();
                Some([
                    to_range(lo.x, hi.x, origin.x, nx)?,
                    to_range(lo.y, hi.y, origin.y, ny)?,
                    to_range(lo.z, hi.z, origin.z, nz)?,
                ])
            })
            .collect();

        self.removed
            .par_chunks_mut(layer * SLAB_LAYERS)
            .enumerate()
            .map(|(slab, cells)| {
                let k0 = slab * SLAB_LAYERS;
                let k1 = k0 + cells.len() / layer;
                let mut added = 0;
                for (solid, bounds) in solids.iter().zip(&boxes) {
                    let Some([_, (j0, j1), (ka, kb)]) = *bounds else { continue };
                    let (ka, kb) = (ka.max(k0), kb.min(k1 - 1));
                    if ka > kb {
                        continue;
                    }
                    for k in ka..=kb {
                        let z = origin.z + (k as f64 + 0.5) * h;
                        for j in j0..=j1 {
                            let y = origin.y + (j as f64 + 0.5) * h;
                            let Some((xlo, xhi)) = solid.row_interval(y, z) else { continue };
                            let Some((i0, i1)) = to_range(xlo - 1e-9, xhi + 1e-9, origin.x, nx) else { continue };
                            let row = (k - k0) * layer + j * nx;
                            for i in i0..=i1 {
                                let cell = &mut cells[row + i];
                                if *cell {
                                    continue;
                                }
                                let p = Vector3::new(origin.x + (i as f64 + 0.5) * h, y, z);
                                if solid.contains(&p) {
                                    *cell = true;
                                    added += 1;
                                }
                            }
                        }
                    }
                }
                added
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CarveOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CarveResult {
    /// Voxels newly removed by this call.
    pub removed_count: usize,
    /// The timeline clamped insertion somewhere.
    pub clamped: bool,
    /// The cutter started out overlapping a block face other than the entry face.
    pub boundary_warning: bool,
}

/// Cutter placements for every timeline sample.
pub fn cutter_solids(timeline: &ConfigTimeline, guide: &SteeringGuide, tool: &DrillTool) -> Result<Vec<CutterSolid>> {
    timeline.samples.iter().map(|s| CutterSolid::at(guide, tool, s.config)).collect()
}

pub fn carve(grid: &mut VoxelGrid, timeline: &ConfigTimeline, guide: &SteeringGuide, tool: &DrillTool) -> Result<CarveResult> {
    carve_with(grid, timeline, guide, tool, &CarveOptions::default())
}

pub fn carve_with(
    grid: &mut VoxelGrid,
    timeline: &ConfigTimeline,
    guide: &SteeringGuide,
    tool: &DrillTool,
    options: &CarveOptions,
) -> Result<CarveResult> {
    tool.validate()?;
    if timeline.is_empty() {
        return Err(Error::Domain("cannot carve an empty timeline".into()));
    }
    let mut solids = cutter_solids(timeline, guide, tool)?;

    let limit = tool.cutter_diameter_mm / 4.0;
    for (index, pair) in solids.windows(2).enumerate() {
        let step = (pair[1].proximal - pair[0].proximal).norm().max((pair[1].distal() - pair[0].distal()).norm());
        if step > limit {
            return Err(Error::UnderSampled { index, step_mm: step, limit_mm: limit });
        }
    }
    let boundary_warning = crosses_side_faces(&solids[0], &grid.block);

    // repeated placements add nothing
    solids.dedup();
    let removed_count = grid.remove_solids(&solids, options.workers)?;
    Ok(CarveResult { removed_count, clamped: timeline.clamped(), boundary_warning })
}

fn crosses_side_faces(solid: &CutterSolid, block: &BoneBlock) -> bool {
    let (lo, hi) = solid.aabb();
    let (bmin, bmax) = (block.min(), block.max());
    let overlaps = (0..3).all(|i| lo[i] < bmax[i] && hi[i] > bmin[i]);
    overlaps && (lo.x < bmin.x || hi.x > bmax.x || lo.y < bmin.y || hi.y > bmax.y || hi.z > bmax.z)
}
