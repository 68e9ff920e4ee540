//! Binary feature-grid (`FGRD`) and depth (`DPTH`) files, plus PGM heat maps.
//!
//! All integers and floats are little-endian. FGRD layout:
//! `"FGRD" | version u32 | height u32 | width u32 | dim u32 |
//! f32 × height·width·dim | meta_len u32 | meta JSON bytes`.
//! DPTH layout: `"DPTH" | version u32 | height u32 | width u32 |
//! f32 × height·width` with NaN for invalid pixels.

use super::{DepthMask, FeatureGrid, SimilarityMap};
use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Error, Debug)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed payload: {0}")]
    Malformed(String),
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s(r: &mut impl Read, n: usize) -> io::Result<Vec<f32>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn write_f32s(w: &mut impl Write, xs: &[f32]) -> io::Result<()> {
    let mut bytes = Vec::with_capacity(xs.len() * 4);
    for x in xs {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&bytes)
}

fn read_header(r: &mut impl Read, magic: &[u8; 4]) -> Result<(), FormatError> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)?;
    if &found != magic {
        return Err(FormatError::BadMagic {
            expected: *magic,
            found,
        });
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    Ok(())
}

fn checked_len(dims: &[u32]) -> Result<usize, FormatError> {
    dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d as usize)
            .filter(|n| *n <= (1 << 31))
            .ok_or_else(|| FormatError::Malformed("dimensions too large".into()))
    })
}

pub fn write_grid(w: &mut impl Write, grid: &FeatureGrid) -> Result<(), FormatError> {
    w.write_all(b"FGRD")?;
    for x in [
        FORMAT_VERSION,
        grid.height() as u32,
        grid.width() as u32,
        grid.dim() as u32,
    ] {
        w.write_all(&x.to_le_bytes())?;
    }
    write_f32s(w, grid.data())?;
    let meta = serde_json::to_vec(&grid.meta).expect("string map serializes");
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(&meta)?;
    Ok(())
}

pub fn read_grid(r: &mut impl Read) -> Result<FeatureGrid, FormatError> {
    read_header(r, b"FGRD")?;
    let height = read_u32(r)?;
    let width = read_u32(r)?;
    let dim = read_u32(r)?;
    let n = checked_len(&[height, width, dim])?;
    let data = read_f32s(r, n)?;
    let meta_len = read_u32(r)? as usize;
    let mut meta_bytes = vec![0u8; meta_len];
    r.read_exact(&mut meta_bytes)?;
    let meta: BTreeMap<String, String> = if meta_len == 0 {
        BTreeMap::new()
    } else {
        serde_json::from_slice(&meta_bytes)
            .map_err(|e| FormatError::Malformed(format!("metadata: {e}")))?
    };
    let mut grid = FeatureGrid::new(height as usize, width as usize, dim as usize, data)
        .map_err(|e| FormatError::Malformed(e.to_string()))?;
    grid.meta = meta;
    Ok(grid)
}

pub fn write_depth(w: &mut impl Write, mask: &DepthMask) -> Result<(), FormatError> {
    w.write_all(b"DPTH")?;
    for x in [FORMAT_VERSION, mask.height() as u32, mask.width() as u32] {
        w.write_all(&x.to_le_bytes())?;
    }
    write_f32s(w, mask.raw())?;
    Ok(())
}

pub fn read_depth(r: &mut impl Read) -> Result<DepthMask, FormatError> {
    read_header(r, b"DPTH")?;
    let height = read_u32(r)?;
    let width = read_u32(r)?;
    let n = checked_len(&[height, width])?;
    let depth = read_f32s(r, n)?;
    DepthMask::new(height as usize, width as usize, depth)
        .map_err(|e| FormatError::Malformed(e.to_string()))
}

pub fn load_grid(path: &Path) -> Result<FeatureGrid, FormatError> {
    read_grid(&mut io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_grid(path: &Path, grid: &FeatureGrid) -> Result<(), FormatError> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    write_grid(&mut w, grid)?;
    w.flush()?;
    Ok(())
}

pub fn load_depth(path: &Path) -> Result<DepthMask, FormatError> {
    read_depth(&mut io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_depth(path: &Path, mask: &DepthMask) -> Result<(), FormatError> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    write_depth(&mut w, mask)?;
    w.flush()?;
    Ok(())
}

/// Binary PGM of a similarity map: score -1 → 1, score 1 → 255, excluded → 0.
pub fn write_similarity_pgm(w: &mut impl Write, sim: &SimilarityMap) -> io::Result<()> {
    write!(w, "P5\n{} {}\n255\n", sim.width(), sim.height())?;
    let bytes: Vec<u8> = sim
        .scores()
        .iter()
        .map(|s| match s {
            Some(s) => (1.0 + (s.clamp(-1.0, 1.0) + 1.0) * 127.0).round() as u8,
            None => 0,
        })
        .collect();
    w.write_all(&bytes)
}
