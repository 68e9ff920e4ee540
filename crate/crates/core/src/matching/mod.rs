//! Dense-descriptor keypoint transfer.
//!
//! A reference keypoint's descriptor is averaged over a small window,
//! compared against every valid pixel of the target grid by cosine
//! similarity, and the resulting map is reduced to a pixel either by
//! argmax or by a temperature-scaled soft-argmax.

pub mod io;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Soft-argmax temperature used by default.
pub const DEFAULT_TEMPERATURE: f64 = 0.01;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum MatchError {
    #[error("pixel ({u}, {v}) outside {width}x{height} grid")]
    OutOfBounds {
        u: usize,
        v: usize,
        width: usize,
        height: usize,
    },
    #[error("descriptor dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("grid is {grid_w}x{grid_h} but mask is {mask_w}x{mask_h}")]
    ShapeMismatch {
        grid_w: usize,
        grid_h: usize,
        mask_w: usize,
        mask_h: usize,
    },
    #[error("reference descriptor has zero norm")]
    ZeroReferenceDescriptor,
    #[error("no valid candidate pixels")]
    NoValidPixels,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Row-major per-pixel descriptor array (pixel-major, descriptor-minor).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f32>,
    pub meta: BTreeMap<String, String>,
}

impl FeatureGrid {
    pub fn new(
        height: usize,
        width: usize,
        dim: usize,
        data: Vec<f32>,
    ) -> Result<Self, MatchError> {
        if height == 0 || width == 0 || dim == 0 {
            return Err(MatchError::InvalidGrid("dimensions must be positive".into()));
        }
        if data.len() != height * width * dim {
            return Err(MatchError::InvalidGrid(format!(
                "expected {} values, got {}",
                height * width * dim,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(MatchError::InvalidGrid("non-finite descriptor value".into()));
        }
        Ok(FeatureGrid {
            height,
            width,
            dim,
            data,
            meta: BTreeMap::new(),
        })
    }

    pub fn zeros(height: usize, width: usize, dim: usize) -> Self {
        FeatureGrid::new(height, width, dim, vec![0.0; height * width * dim])
            .expect("positive dimensions")
    }

    pub fn with_meta(mut self, key: &str, value: &str) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn descriptor(&self, u: usize, v: usize) -> &[f32] {
        let start = (v * self.width + u) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn descriptor_mut(&mut self, u: usize, v: usize) -> &mut [f32] {
        let start = (v * self.width + u) * self.dim;
        &mut self.data[start..start + self.dim]
    }

    fn check_bounds(&self, u: usize, v: usize) -> Result<(), MatchError> {
        if u >= self.width || v >= self.height {
            return Err(MatchError::OutOfBounds {
                u,
                v,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }
}

/// Per-pixel depth in meters; NaN, zero or negative marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMask {
    height: usize,
    width: usize,
    depth: Vec<f32>,
}

impl DepthMask {
    pub fn new(height: usize, width: usize, depth: Vec<f32>) -> Result<Self, MatchError> {
        if depth.len() != height * width {
            return Err(MatchError::InvalidGrid(format!(
                "expected {} depth values, got {}",
                height * width,
                depth.len()
            )));
        }
        Ok(DepthMask {
            height,
            width,
            depth,
        })
    }

    /// Every pixel valid at the given depth.
    pub fn uniform(height: usize, width: usize, depth: f32) -> Self {
        DepthMask {
            height,
            width,
            depth: vec![depth; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn raw(&self) -> &[f32] {
        &self.depth
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        let d = self.depth[v * self.width + u];
        d.is_finite() && d > 0.0
    }

    /// Depth in meters at a valid pixel.
    pub fn depth(&self, u: usize, v: usize) -> Option<f64> {
        self.is_valid(u, v)
            .then(|| self.depth[v * self.width + u] as f64)
    }

    pub fn invalidate(&mut self, u: usize, v: usize) {
        self.depth[v * self.width + u] = f32::NAN;
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite() && **d > 0.0).count()
    }
}

/// Cosine scores per pixel; `None` marks an excluded pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    height: usize,
    width: usize,
    score: Vec<Option<f64>>,
}

impl SimilarityMap {
    pub fn new(height: usize, width: usize, score: Vec<Option<f64>>) -> Self {
        assert_eq!(score.len(), height * width, "score length must be height*width");
        SimilarityMap {
            height,
            width,
            score,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        self.score[v * self.width + u]
    }

    pub fn scores(&self) -> &[Option<f64>] {
        &self.score
    }

    /// Row-major iterator over `(u, v, score)` of valid pixels.
    pub fn valid(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.score
            .iter()
            .enumerate()
            .filter_map(move |(i, s)| s.map(|s| (i % self.width, i / self.width, s)))
    }

    /// Adds `c` to every valid score.
    pub fn shifted(&self, c: f64) -> SimilarityMap {
        SimilarityMap {
            height: self.height,
            width: self.width,
            score: self.score.iter().map(|s| s.map(|s| s + c)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Hard,
    Soft,
}

impl std::str::FromStr for MatchMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hard" => Ok(MatchMode::Hard),
            "soft" => Ok(MatchMode::Soft),
            other => Err(format!("unknown match mode `{other}` (hard|soft)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelMatch {
    pub u: f64,
    pub v: f64,
    pub peak_score: f64,
    pub mode: MatchMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub mode: MatchMode,
    pub temperature: f64,
    /// Half-width of the reference averaging window; 1 gives 3x3.
    pub radius: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            mode: MatchMode::Soft,
            temperature: DEFAULT_TEMPERATURE,
            radius: 1,
        }
    }
}

/// Mean descriptor over the `(2r+1)²` window around `(u, v)`, clipped to
/// the grid.
pub fn window_average(
    grid: &FeatureGrid,
    u: usize,
    v: usize,
    radius: usize,
) -> Result<Vec<f64>, MatchError> {
    grid.check_bounds(u, v)?;
    let u0 = u.saturating_sub(radius);
    let v0 = v.saturating_sub(radius);
    let u1 = (u + radius).min(grid.width - 1);
    let v1 = (v + radius).min(grid.height - 1);
    let mut acc = vec![0.0f64; grid.dim];
    let mut count = 0usize;
    for vv in v0..=v1 {
        for uu in u0..=u1 {
            for (a, &x) in acc.iter_mut().zip(grid.descriptor(uu, vv)) {
                *a += x as f64;
            }
            count += 1;
        }
    }
    let n = count as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Cosine similarity of `ref_desc` against every valid pixel of `target`.
/// Pixels with invalid depth or a zero descriptor are excluded.
pub fn cosine_map(
    ref_desc: &[f64],
    target: &FeatureGrid,
    mask: &DepthMask,
) -> Result<SimilarityMap, MatchError> {
    if ref_desc.len() != target.dim {
        return Err(MatchError::DimMismatch {
            expected: target.dim,
            got: ref_desc.len(),
        });
    }
    if mask.width != target.width || mask.height != target.height {
        return Err(MatchError::ShapeMismatch {
            grid_w: target.width,
            grid_h: target.height,
            mask_w: mask.width,
            mask_h: mask.height,
        });
    }
    let ref_norm = ref_desc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(ref_norm > 0.0) {
        return Err(MatchError::ZeroReferenceDescriptor);
    }
    let score = target
        .data
        .chunks_exact(target.dim)
        .enumerate()
        .map(|(i, d)| {
            let (u, v) = (i % target.width, i / target.width);
            if !mask.is_valid(u, v) {
                return None;
            }
            let mut dot = 0.0f64;
            let mut nn = 0.0f64;
            for (r, &x) in ref_desc.iter().zip(d) {
                let x = x as f64;
                dot += r * x;
                nn += x * x;
            }
            if nn == 0.0 {
                return None;
            }
            Some((dot / (ref_norm * nn.sqrt())).clamp(-1.0, 1.0))
        })
        .collect();
    Ok(SimilarityMap {
        height: target.height,
        width: target.width,
        score,
    })
}

/// Pixel of maximum score; ties go to the first pixel in row-major order.
pub fn hard_match(sim: &SimilarityMap) -> Result<PixelMatch, MatchError> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (u, v, s) in sim.valid() {
        if best.is_none_or(|(_, _, b)| s > b) {
            best = Some((u, v, s));
        }
    }
    let (u, v, s) = best.ok_or(MatchError::NoValidPixels)?;
    Ok(PixelMatch {
        u: u as f64,
        v: v as f64,
        peak_score: s,
        mode: MatchMode::Hard,
    })
}

/// Softmax-weighted expectation of valid pixel coordinates.
///
/// Scores are shifted by their maximum before exponentiation and summed in
/// row-major order.
pub fn soft_match(sim: &SimilarityMap, temperature: f64) -> Result<PixelMatch, MatchError> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(MatchError::NonPositiveTemperature(temperature));
    }
    let peak = sim
        .valid()
        .map(|(_, _, s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Err(MatchError::NoValidPixels);
    }
    let (mut z, mut su, mut sv) = (0.0f64, 0.0f64, 0.0f64);
    for (u, v, s) in sim.valid() {
        let w = ((s - peak) / temperature).exp();
        z += w;
        su += w * u as f64;
        sv += w * v as f64;
    }
    Ok(PixelMatch {
        u: su / z,
        v: sv / z,
        peak_score: peak,
        mode: MatchMode::Soft,
    })
}

/// Transfers the reference pixel `ref_px = (u, v)` into the target grid.
pub fn match_keypoint(
    reference: &FeatureGrid,
    ref_px: (usize, usize),
    target: &FeatureGrid,
    target_mask: &DepthMask,
    cfg: &MatchConfig,
) -> Result<PixelMatch, MatchError> {
    let (m, _) = match_keypoint_with_map(reference, ref_px, target, target_mask, cfg)?;
    Ok(m)
}

/// Like [`match_keypoint`], also returning the similarity map.
pub fn match_keypoint_with_map(
    reference: &FeatureGrid,
    ref_px: (usize, usize),
    target: &FeatureGrid,
    target_mask: &DepthMask,
    cfg: &MatchConfig,
) -> Result<(PixelMatch, SimilarityMap), MatchError> {
    if cfg.mode == MatchMode::Soft && !(cfg.temperature > 0.0) {
        return Err(MatchError::NonPositiveTemperature(cfg.temperature));
    }
    let desc = window_average(reference, ref_px.0, ref_px.1, cfg.radius)?;
    let sim = cosine_map(&desc, target, target_mask)?;
    let m = match cfg.mode {
        MatchMode::Hard => hard_match(&sim)?,
        MatchMode::Soft => soft_match(&sim, cfg.temperature)?,
    };
    Ok((m, sim))
}
