//! Boundary surface of the removed voxels and mesh file writers.

use std::collections::HashMap;
use std::io::Write;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::carve::VoxelGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshFormat {
    /// Binary little-endian PLY.
    #[default]
    Ply,
    PlyAscii,
    /// Binary STL.
    Stl,
}

impl MeshFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            MeshFormat::Ply => "ply",
            MeshFormat::PlyAscii => "ply-ascii",
            MeshFormat::Stl => "stl",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            MeshFormat::Ply | MeshFormat::PlyAscii => "ply",
            MeshFormat::Stl => "stl",
        }
    }
}

impl FromStr for MeshFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ply" => Ok(MeshFormat::Ply),
            "ply-ascii" => Ok(MeshFormat::PlyAscii),
            "stl" => Ok(MeshFormat::Stl),
            other => Err(Error::Domain(format!("unknown mesh format {other:?}; expected ply, ply-ascii or stl"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 3]>,
    /// Counter-clockwise seen from outside the cavity, into the bone.
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    /// Faces between removed voxels and intact bone or the block exterior.
    pub fn from_grid(grid: &VoxelGrid) -> Self {
        let [nx, ny, nz] = grid.dims();
        let dims = [nx, ny, nz];
        let origin = grid.block.min();
        let h = grid.h_mm;
        let mut ids: HashMap<u64, u32> = HashMap::new();
        let mut mesh = TriMesh::default();
        let mut vertex = |mesh: &mut TriMesh, c: [usize; 3]| -> u32 {
            let key = c[0] as u64 + (nx as u64 + 1) * (c[1] as u64 + (ny as u64 + 1) * c[2] as u64);
            *ids.entry(key).or_insert_with(|| {
                mesh.vertices.push([
                    origin.x + c[0] as f64 * h,
                    origin.y + c[1] as f64 * h,
                    origin.z + c[2] as f64 * h,
                ]);
                (mesh.vertices.len() - 1) as u32
            })
        };

        for (i, j, k) in grid.removed_voxels() {
            let cell = [i, j, k];
            for axis in 0..3 {
                for positive in [false, true] {
                    let open = if positive {
                        cell[axis] + 1 < dims[axis] && {
                            let mut n = cell;
                            n[axis] += 1;
                            grid.is_removed(n[0], n[1], n[2])
                        }
                    } else {
                        cell[axis] > 0 && {
                            let mut n = cell;
                            n[axis] -= 1;
                            grid.is_removed(n[0], n[1], n[2])
                        }
                    };
                    if open {
                        continue;
                    }
                    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                    let mut base = cell;
                    if positive {
                        base[axis] += 1;
                    }
                    let mut corners = [base; 4];
                    corners[1][u] += 1;
                    corners[2][u] += 1;
                    corners[2][v] += 1;
                    corners[3][v] += 1;
                    if !positive {
                        corners.reverse();
                    }
                    let q = corners.map(|c| vertex(&mut mesh, c));
                    mesh.triangles.push([q[0], q[1], q[2]]);
                    mesh.triangles.push([q[0], q[2], q[3]]);
                }
            }
        }
        mesh
    }

    fn corner(&self, idx: u32) -> Vector3<f64> {
        Vector3::from(self.vertices[idx as usize])
    }

    fn normal(&self, t: &[u32; 3]) -> Vector3<f64> {
        let (a, b, c) = (self.corner(t[0]), self.corner(t[1]), self.corner(t[2]));
        (b - a).cross(&(c - a))
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| self.normal(t).norm() / 2.0).sum()
    }

    /// `V - E + F`; 2 for a closed surface of genus zero.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }

    pub fn write<W: Write>(&self, format: MeshFormat, w: W) -> Result<()> {
        match format {
            MeshFormat::Ply => self.write_ply(w, false),
            MeshFormat::PlyAscii => self.write_ply(w, true),
            MeshFormat::Stl => self.write_stl(w),
        }
    }

    fn write_ply<W: Write>(&self, mut w: W, ascii: bool) -> Result<()> {
        let encoding = if ascii { "ascii" } else { "binary_little_endian" };
        write!(
            w,
            "ply\nformat {encoding} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
             element face {}\nproperty list uchar int vertex_indices\nend_header\n",
            self.vertices.len(),
            self.triangles.len()
        )?;
        if ascii {
            for v in &self.vertices {
                writeln!(w, "{} {} {}", v[0] as f32, v[1] as f32, v[2] as f32)?;
            }
            for t in &self.triangles {
                writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
            }
        } else {
            for v in &self.vertices {
                for c in v {
                    w.write_all(&(*c as f32).to_le_bytes())?;
                }
            }
            for t in &self.triangles {
                w.write_all(&[3u8])?;
                for i in t {
                    w.write_all(&(*i as i32).to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    fn write_stl<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = [0u8; 80];
        let label = b"ctsdr cavity";
        header[..label.len()].copy_from_slice(label);
        w.write_all(&header)?;
        w.write_all(&(self.triangles.len() as u32).to_le_bytes())?;
        for t in &self.triangles {
            let n = self.normal(t).normalize();
            for c in n.iter() {
                w.write_all(&(*c as f32).to_le_bytes())?;
            }
            for &i in t {
                for c in self.vertices[i as usize] {
                    w.write_all(&(c as f32).to_le_bytes())?;
                }
            }
            w.write_all(&0u16.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn export_cavity_mesh<W: Write>(grid: &VoxelGrid, format: MeshFormat, w: W) -> Result<TriMesh> {
    let mesh = TriMesh::from_grid(grid);
    mesh.write(format, w)?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carve::BoneBlock;
    use crate::kinematics::DrillTool;

    fn grid_with(cells: &[(usize, usize, usize)]) -> VoxelGrid {
        let block = BoneBlock { size_mm: [2.0, 2.0, 2.0], origin_mm: [0.0, 0.0, 0.0], ..BoneBlock::default_for(&DrillTool::default()) };
        let mut mask = vec![false; 64];
        for &(i, j, k) in cells {
            mask[i + 4 * (j + 4 * k)] = true;
        }
        VoxelGrid::from_mask(block, 0.5, mask).unwrap()
    }

    #[test]
    fn single_voxel_is_a_cube() {
        let mesh = TriMesh::from_grid(&grid_with(&[(1, 1, 1)]));
        assert_eq!(mesh.triangles.len(), 12);
        assert_eq!(mesh.vertices.len(), 8);
        assert!((mesh.area() - 6.0 * 0.25).abs() < 1e-12);
        assert_eq!(mesh.euler_characteristic(), 2);
    }

    #[test]
    fn shared_face_is_dropped() {
        let mesh = TriMesh::from_grid(&grid_with(&[(1, 1, 1), (2, 1, 1)]));
        assert_eq!(mesh.triangles.len(), 20);
        assert_eq!(mesh.vertices.len(), 12);
        assert!((mesh.area() - 10.0 * 0.25).abs() < 1e-12);
        assert_eq!(mesh.euler_characteristic(), 2);
    }

    #[test]
    fn normals_point_out_of_cavity() {
        let grid = grid_with(&[(1, 1, 1)]);
        let mesh = TriMesh::from_grid(&grid);
        let c = grid.center(1, 1, 1);
        for t in &mesh.triangles {
            let centroid = (mesh.corner(t[0]) + mesh.corner(t[1]) + mesh.corner(t[2])) / 3.0;
            assert!(mesh.normal(t).dot(&(centroid - c)) > 0.0);
        }
    }

    #[test]
    fn boundary_voxels_are_closed_by_block_faces() {
        let mesh = TriMesh::from_grid(&grid_with(&[(0, 0, 0)]));
        assert_eq!(mesh.triangles.len(), 12);
    }

    #[test]
    fn writers_produce_expected_sizes() {
        let mesh = TriMesh::from_grid(&grid_with(&[(1, 1, 1), (2, 1, 1)]));
        let mut stl = Vec::new();
        mesh.write(MeshFormat::Stl, &mut stl).unwrap();
        assert_eq!(stl.len(), 84 + 50 * mesh.triangles.len());

        let mut ply = Vec::new();
        mesh.write(MeshFormat::Ply, &mut ply).unwrap();
        let header_end = ply.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
        assert_eq!(ply.len() - header_end, 12 * mesh.vertices.len() + 13 * mesh.triangles.len());

        let mut ascii = Vec::new();
        mesh.write(MeshFormat::PlyAscii, &mut ascii).unwrap();
        let text = String::from_utf8(ascii).unwrap();
        assert!(text.contains("element face 20"));
        assert_eq!(text.lines().filter(|l| l.starts_with("3 ")).count(), 20);
    }

    #[test]
    fn format_names() {
        for f in [MeshFormat::Ply, MeshFormat::PlyAscii, MeshFormat::Stl] {
            assert_eq!(f.as_str().parse::<MeshFormat>().unwrap(), f);
        }
        assert!("obj".parse::<MeshFormat>().is_err());
    }
}
