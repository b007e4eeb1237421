//! On-disk removal mask: a short text header followed by one bit per voxel,
//! `x` fastest, least significant bit first.

use std::io::{BufRead, Write};

use crate::carve::{BoneBlock, Density, EntryFace, VoxelGrid};
use crate::error::{Error, Result};

const MAGIC: &str = "ctsdr-mask 1";
const ENCODING: &str = "bitpacked-lsb";

pub fn write_mask<W: Write>(grid: &VoxelGrid, mut w: W) -> Result<()> {
    let [nx, ny, nz] = grid.dims();
    let b = &grid.block;
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "dims {nx} {ny} {nz}")?;
    writeln!(w, "h_mm {}", grid.h_mm)?;
    writeln!(w, "origin_mm {} {} {}", b.origin_mm[0], b.origin_mm[1], b.origin_mm[2])?;
    writeln!(w, "size_mm {} {} {}", b.size_mm[0], b.size_mm[1], b.size_mm[2])?;
    writeln!(w, "density_pcf {}", b.density_pcf)?;
    writeln!(w, "encoding {ENCODING}")?;
    writeln!(w, "end_header")?;
    w.write_all(&pack(grid.mask()))?;
    w.flush()?;
    Ok(())
}

pub fn mask_bytes(grid: &VoxelGrid) -> Vec<u8> {
    let mut out = Vec::new();
    write_mask(grid, &mut out).expect("writing to memory");
    out
}

pub fn read_mask<R: BufRead>(mut r: R) -> Result<VoxelGrid> {
    let mut line = String::new();
    let mut next_line = |r: &mut R| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::MaskFormat("truncated header".into()));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    };
    if next_line(&mut r)? != MAGIC {
        return Err(Error::MaskFormat("not a ctsdr mask file".into()));
    }
    let mut dims = None;
    let mut h = None;
    let mut origin = None;
    let mut size = None;
    let mut density = Density::default();
    loop {
        let text = next_line(&mut r)?;
        if text == "end_header" {
            break;
        }
        let (key, rest) = text.split_once(' ').unwrap_or((text.as_str(), ""));
        match key {
            "dims" => dims = Some(numbers::<usize, 3>(key, rest)?),
            "h_mm" => h = Some(numbers::<f64, 1>(key, rest)?[0]),
            "origin_mm" => origin = Some(numbers::<f64, 3>(key, rest)?),
            "size_mm" => size = Some(numbers::<f64, 3>(key, rest)?),
            "density_pcf" => {
                density = match rest.trim() {
                    "5" => Density::Pcf5,
                    "10" => Density::Pcf10,
                    "custom" => Density::Custom,
                    other => return Err(Error::MaskFormat(format!("unknown density {other:?}"))),
                }
            }
            "encoding" if rest.trim() == ENCODING => {}
            "encoding" => return Err(Error::MaskFormat(format!("unsupported encoding {:?}", rest.trim()))),
            other => return Err(Error::MaskFormat(format!("unknown header key {other:?}"))),
        }
    }
    let missing = |k: &str| Error::MaskFormat(format!("header lacks {k}"));
    let dims = dims.ok_or_else(|| missing("dims"))?;
    let h = h.ok_or_else(|| missing("h_mm"))?;
    let origin = origin.ok_or_else(|| missing("origin_mm"))?;
    let size = size.unwrap_or(dims.map(|d| d as f64 * h));
    let block = BoneBlock { size_mm: size, origin_mm: origin, density_pcf: density, entry_face: EntryFace::NegZ };
    let expected = VoxelGrid::dims_for(&block, h).map_err(|e| Error::MaskFormat(e.to_string()))?;
    if expected != dims {
        return Err(Error::MaskFormat(format!("dims {dims:?} do not match block at {h} mm ({expected:?})")));
    }
    let len = dims.iter().product::<usize>();
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() != len.div_ceil(8) {
        return Err(Error::MaskFormat(format!("expected {} data bytes, found {}", len.div_ceil(8), data.len())));
    }
    VoxelGrid::from_mask(block, h, unpack(&data, len))
}

fn numbers<T: std::str::FromStr, const N: usize>(key: &str, rest: &str) -> Result<[T; N]> {
    let parsed: Vec<T> = rest
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::MaskFormat(format!("bad value {t:?} for {key}"))))
        .collect::<Result<_>>()?;
    parsed.try_into().map_err(|_| Error::MaskFormat(format!("{key} needs {N} values")))
}

fn pack(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| chunk.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i)))
        .collect()
}

fn unpack(bytes: &[u8], len: usize) -> Vec<bool> {
    (0..len).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect()
}
