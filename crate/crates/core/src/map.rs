//! The UVGS map container: a `height x width x layers x 14` attribute grid
//! with an explicit occupancy mask and the metadata needed to undo the
//! `[-1, 1]` normalisation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::ATTRIBUTE_COUNT;
use crate::spherical::{f32_at_least, UvIndex};

/// Channel count of a UVGS cell.
pub const CHANNELS: usize = ATTRIBUTE_COUNT;

/// Map size used throughout the reference setup (512 x 512).
pub const DEFAULT_UV_SIZE: u32 = 512;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("invalid map dimensions {width}x{height}x{layers}")]
    InvalidDims { width: u32, height: u32, layers: u32 },
    #[error("map is already normalized")]
    AlreadyNormalized,
    #[error("map is not normalized")]
    NotNormalized,
    #[error("baseline size must be positive")]
    ZeroBaseline,
}

/// Grid size: `width` columns (azimuth), `height` rows (polar), `layers`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapDims {
    pub width: u32,
    pub height: u32,
    pub layers: u32,
}

impl MapDims {
    pub const fn new(width: u32, height: u32, layers: u32) -> Self {
        Self {
            width,
            height,
            layers,
        }
    }

    /// Number of cells, `width * height * layers`.
    pub fn capacity(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height) * u64::from(self.layers)
    }

    pub(crate) fn validate(&self) -> Result<(), MapError> {
        // linear cell indices are stored as u32 on disk
        if self.width == 0
            || self.height == 0
            || self.layers == 0
            || self.capacity() > u64::from(u32::MAX)
        {
            return Err(MapError::InvalidDims {
                width: self.width,
                height: self.height,
                layers: self.layers,
            });
        }
        Ok(())
    }

    /// Linear cell index `v * width * layers + u * layers + layer`.
    pub fn linear_index(&self, idx: UvIndex) -> usize {
        (idx.v as usize * self.width as usize + idx.u as usize) * self.layers as usize
            + idx.layer as usize
    }

    pub fn uv_index(&self, linear: usize) -> UvIndex {
        let layers = self.layers as usize;
        let pixel = linear / layers;
        UvIndex {
            u: (pixel % self.width as usize) as u32,
            v: (pixel / self.width as usize) as u32,
            layer: (linear % layers) as u32,
        }
    }
}

impl Default for MapDims {
    fn default() -> Self {
        Self::new(DEFAULT_UV_SIZE, DEFAULT_UV_SIZE, 1)
    }
}

/// Attribute groups of a cell, in channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttributeGroup {
    Position,
    Rotation,
    Scale,
    Opacity,
    Color,
}

impl AttributeGroup {
    pub const ALL: [AttributeGroup; 5] = [
        Self::Position,
        Self::Rotation,
        Self::Scale,
        Self::Opacity,
        Self::Color,
    ];

    /// Channel range of the group within a cell.
    pub fn channels(self) -> std::ops::Range<usize> {
        match self {
            Self::Position => 0..3,
            Self::Rotation => 3..7,
            Self::Scale => 7..10,
            Self::Opacity => 10..11,
            Self::Color => 11..14,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Position => "position",
            Self::Rotation => "rotation",
            Self::Scale => "scale",
            Self::Opacity => "opacity",
            Self::Color => "color",
        }
    }
}

impl std::str::FromStr for AttributeGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| format!("unknown attribute group '{s}'"))
    }
}

/// Structured attribute grid of a Gaussian cloud.
///
/// Cells are stored row-major: `v`, then `u`, then `layer`, then channel.
/// An unoccupied cell holds fourteen zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct UvgsMap {
    dims: MapDims,
    values: Vec<f32>,
    occupancy: Vec<bool>,
    center: [f32; 3],
    radius: f32,
    normalized: bool,
    /// `(ln s_min, ln s_max)` over occupied cells; set by [`UvgsMap::normalize`].
    scale_bounds: [f32; 2],
}

impl UvgsMap {
    pub fn empty(dims: MapDims) -> Result<Self, MapError> {
        dims.validate()?;
        let cells = dims.capacity() as usize;
        Ok(Self {
            dims,
            values: vec![0.0; cells * CHANNELS],
            occupancy: vec![false; cells],
            center: [0.0; 3],
            radius: 0.0,
            normalized: false,
            scale_bounds: [0.0; 2],
        })
    }

    /// Assembles a map from raw parts, as read from storage. The caller is
    /// responsible for the occupancy/value consistency.
    pub(crate) fn from_parts(
        dims: MapDims,
        values: Vec<f32>,
        occupancy: Vec<bool>,
        center: [f32; 3],
        radius: f32,
        normalized: bool,
        scale_bounds: [f32; 2],
    ) -> Self {
        debug_assert_eq!(occupancy.len() as u64, dims.capacity());
        debug_assert_eq!(values.len(), occupancy.len() * CHANNELS);
        Self {
            dims,
            values,
            occupancy,
            center,
            radius,
            normalized,
            scale_bounds,
        }
    }

    pub fn dims(&self) -> MapDims {
        self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn center(&self) -> [f32; 3] {
        self.center
    }

    pub fn radius(&self) -> f32 {
        self.radius
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn scale_bounds(&self) -> [f32; 2] {
        self.scale_bounds
    }

    pub(crate) fn set_frame(&mut self, center: [f32; 3], radius: f32) {
        self.center = center;
        self.radius = radius;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Cell contents by linear index, `None` if unoccupied.
    pub fn cell_at(&self, linear: usize) -> Option<&[f32; CHANNELS]> {
        if !self.occupancy[linear] {
            return None;
        }
        let start = linear * CHANNELS;
        Some(self.values[start..start + CHANNELS].try_into().unwrap())
    }

    pub fn cell(&self, idx: UvIndex) -> Option<&[f32; CHANNELS]> {
        self.cell_at(self.dims.linear_index(idx))
    }

    /// Stores a cell and marks it occupied.
    pub fn set_cell(&mut self, idx: UvIndex, attrs: &[f32; CHANNELS]) {
        let linear = self.dims.linear_index(idx);
        self.occupancy[linear] = true;
        self.values[linear * CHANNELS..(linear + 1) * CHANNELS].copy_from_slice(attrs);
    }

    /// Occupied cells as `(linear index, attributes)` in ascending index order.
    pub fn occupied_cells(&self) -> impl Iterator<Item = (usize, &[f32; CHANNELS])> + '_ {
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(|(i, _)| (i, self.cell_at(i).unwrap()))
    }

    fn occupied_cells_mut(&mut self) -> impl Iterator<Item = &mut [f32]> + '_ {
        self.values
            .chunks_exact_mut(CHANNELS)
            .zip(&self.occupancy)
            .filter(|(_, &o)| o)
            .map(|(c, _)| c)
    }

    /// Maps every occupied channel into `[-1, 1]`.
    ///
    /// Position is expressed relative to the bounding sphere, scale is
    /// affinely mapped in log space between the map's extreme scales,
    /// opacity and color go through `2x - 1`. Rotation is already unit.
    pub fn normalize(&self) -> Result<UvgsMap, MapError> {
        if self.normalized {
            return Err(MapError::AlreadyNormalized);
        }
        let center = self.center.map(f64::from);

        // the sphere must cover every stored position, whatever the source of the map
        let mut radius = f64::from(self.radius);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (_, cell) in self.occupied_cells() {
            let d = (0..3)
                .map(|k| (f64::from(cell[k]) - center[k]).powi(2))
                .sum::<f64>()
                .sqrt();
            radius = radius.max(d);
            for &s in &cell[7..10] {
                let ls = f64::from(s).ln();
                lo = lo.min(ls);
                hi = hi.max(ls);
            }
        }
        let radius = f32_at_least(radius);
        let bounds = if lo.is_finite() {
            let lo32 = lo as f32;
            let lo32 = if f64::from(lo32) > lo { lo32.next_down() } else { lo32 };
            [lo32, f32_at_least(hi)]
        } else {
            [0.0, 0.0]
        };
        let (lo, hi) = (f64::from(bounds[0]), f64::from(bounds[1]));
        let span = hi - lo;
        let r = f64::from(radius);

        let mut out = self.clone();
        for cell in out.occupied_cells_mut() {
            for k in 0..3 {
                let t = if r > 0.0 {
                    (f64::from(cell[k]) - center[k]) / r
                } else {
                    0.0
                };
                cell[k] = t.clamp(-1.0, 1.0) as f32;
            }
            for k in 7..10 {
                let t = if span > 0.0 {
                    2.0 * (f64::from(cell[k]).ln() - lo) / span - 1.0
                } else {
                    0.0
                };
                cell[k] = t.clamp(-1.0, 1.0) as f32;
            }
            for k in 10..14 {
                cell[k] = (2.0 * f64::from(cell[k]) - 1.0).clamp(-1.0, 1.0) as f32;
            }
        }
        out.radius = radius;
        out.scale_bounds = bounds;
        out.normalized = true;
        Ok(out)
    }

    /// Inverse of [`UvgsMap::normalize`].
    pub fn denormalize(&self) -> Result<UvgsMap, MapError> {
        if !self.normalized {
            return Err(MapError::NotNormalized);
        }
        let center = self.center.map(f64::from);
        let r = f64::from(self.radius);
        let (lo, hi) = (
            f64::from(self.scale_bounds[0]),
            f64::from(self.scale_bounds[1]),
        );
        let mut out = self.clone();
        for cell in out.occupied_cells_mut() {
            for k in 0..3 {
                cell[k] = (center[k] + f64::from(cell[k]) * r) as f32;
            }
            for k in 7..10 {
                let ls = lo + (f64::from(cell[k]) + 1.0) * 0.5 * (hi - lo);
                cell[k] = (ls.exp() as f32).max(f32::MIN_POSITIVE);
            }
            for k in 10..14 {
                cell[k] = ((f64::from(cell[k]) + 1.0) * 0.5) as f32;
            }
        }
        out.normalized = false;
        Ok(out)
    }

    pub fn occupancy_stats(&self) -> OccupancyStats {
        let layers = self.dims.layers as usize;
        let mut per_layer = vec![0u64; layers];
        for (i, &o) in self.occupancy.iter().enumerate() {
            if o {
                per_layer[i % layers] += 1;
            }
        }
        let occupied: u64 = per_layer.iter().sum();
        let capacity = self.dims.capacity();
        OccupancyStats {
            occupied,
            capacity,
            fill_ratio: occupied as f64 / capacity as f64,
            per_layer,
        }
    }
}

/// Occupancy bookkeeping of a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyStats {
    pub occupied: u64,
    pub capacity: u64,
    pub fill_ratio: f64,
    pub per_layer: Vec<u64>,
}

/// Compression percentage of `compressed_bytes` against `baseline_bytes`:
/// `(1 - compressed / baseline) * 100`. Negative when the result is larger.
pub fn compare_sizes(baseline_bytes: u64, compressed_bytes: u64) -> Result<f64, MapError> {
    if baseline_bytes == 0 {
        return Err(MapError::ZeroBaseline);
    }
    Ok((1.0 - compressed_bytes as f64 / baseline_bytes as f64) * 100.0)
}
