//! Inverse spherical mapping and round-trip bookkeeping.
//!
//! Positions are stored verbatim in the map, so inverting it is a matter of
//! gathering the occupied cells back into a cloud.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{CenterMode, Gaussian, GaussianCloud, ATTRIBUTE_COUNT};
use crate::map::{AttributeGroup, UvgsMap};
use crate::spherical::pixel_of;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InverseError {
    #[error("map is normalized; denormalize it before reconstruction")]
    NormalizedInput,
}

/// One Gaussian per occupied cell, in ascending linear cell order.
pub fn reconstruct_cloud(map: &UvgsMap) -> Result<GaussianCloud, InverseError> {
    reconstruct_with_center_mode(map, CenterMode::Centroid)
}

pub fn reconstruct_with_center_mode(
    map: &UvgsMap,
    mode: CenterMode,
) -> Result<GaussianCloud, InverseError> {
    if map.is_normalized() {
        return Err(InverseError::NormalizedInput);
    }
    let gaussians = map
        .occupied_cells()
        .map(|(_, cell)| Gaussian::from_array(cell))
        .collect();
    Ok(GaussianCloud::with_center_mode(gaussians, mode))
}

/// Linear indices of occupied cells whose stored position does not project
/// back into the cell's own pixel under the map's recorded center.
pub fn inconsistent_cells(map: &UvgsMap) -> Result<Vec<usize>, InverseError> {
    if map.is_normalized() {
        return Err(InverseError::NormalizedInput);
    }
    let dims = map.dims();
    Ok(map
        .occupied_cells()
        .filter(|(i, cell)| {
            let idx = dims.uv_index(*i);
            pixel_of([cell[0], cell[1], cell[2]], map.center(), dims.width, dims.height)
                != (idx.u, idx.v)
        })
        .map(|(i, _)| i)
        .collect())
}

/// Per-group maximum absolute attribute error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AttributeErrors {
    pub position: f64,
    pub rotation: f64,
    pub scale: f64,
    pub opacity: f64,
    pub color: f64,
}

impl AttributeErrors {
    fn update(&mut self, a: &[f32; ATTRIBUTE_COUNT], b: &[f32; ATTRIBUTE_COUNT]) {
        for group in AttributeGroup::ALL {
            let err = group
                .channels()
                .map(|c| (f64::from(a[c]) - f64::from(b[c])).abs())
                .fold(0.0, f64::max);
            let slot = match group {
                AttributeGroup::Position => &mut self.position,
                AttributeGroup::Rotation => &mut self.rotation,
                AttributeGroup::Scale => &mut self.scale,
                AttributeGroup::Opacity => &mut self.opacity,
                AttributeGroup::Color => &mut self.color,
            };
            *slot = slot.max(err);
        }
    }

    pub fn max(&self) -> f64 {
        [
            self.position,
            self.rotation,
            self.scale,
            self.opacity,
            self.color,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// How much of a cloud survived a map round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub input_count: usize,
    pub reconstructed_count: usize,
    pub dropped_count: usize,
    /// Reconstructed and input clouds are equal as multisets, bit for bit.
    pub exact_match: bool,
    pub max_abs_error: AttributeErrors,
    /// Every reconstructed attribute vector occurs in the input multiset.
    pub containment: bool,
}

impl RoundtripReport {
    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        let e = &self.max_abs_error;
        format!(
            "input_count={}\nreconstructed_count={}\ndropped_count={}\nexact_match={}\n\
             containment={}\nmax_err_position={:e}\nmax_err_rotation={:e}\n\
             max_err_scale={:e}\nmax_err_opacity={:e}\nmax_err_color={:e}\n",
            self.input_count,
            self.reconstructed_count,
            self.dropped_count,
            self.exact_match,
            self.containment,
            e.position,
            e.rotation,
            e.scale,
            e.opacity,
            e.color
        )
    }
}

/// Uniform-grid nearest-neighbour lookup over Gaussian positions.
struct PositionIndex<'a> {
    points: &'a [Gaussian],
    cell: f64,
    origin: [f64; 3],
    buckets: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> PositionIndex<'a> {
    fn new(points: &'a [Gaussian]) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for g in points {
            for k in 0..3 {
                lo[k] = lo[k].min(f64::from(g.position[k]));
                hi[k] = hi[k].max(f64::from(g.position[k]));
            }
        }
        let extent = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
        let per_axis = (points.len() as f64).cbrt().max(1.0);
        let cell = if extent > 0.0 { extent / per_axis } else { 1.0 };
        let mut index = Self {
            points,
            cell,
            origin: lo,
            buckets: HashMap::new(),
        };
        for (i, g) in points.iter().enumerate() {
            let key = index.key(g.position);
            index.buckets.entry(key).or_default().push(i);
        }
        index
    }

    fn key(&self, p: [f32; 3]) -> [i64; 3] {
        [0, 1, 2].map(|k| ((f64::from(p[k]) - self.origin[k]) / self.cell).floor() as i64)
    }

    fn nearest(&self, p: [f32; 3]) -> Option<usize> {
        if self.points.is_empty() {
            return None;
        }
        let dist2 = |i: usize| -> f64 {
            (0..3)
                .map(|k| (f64::from(self.points[i].position[k]) - f64::from(p[k])).powi(2))
                .sum()
        };
        let center = self.key(p);
        // rings beyond this cover no bucket at all
        let last_ring = self
            .buckets
            .keys()
            .map(|k| (0..3).map(|a| (k[a] - center[a]).abs()).max().unwrap())
            .max()
            .unwrap_or(0);
        let mut best: Option<(f64, usize)> = None;
        for ring in 0..=last_ring {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let key = [center[0] + dx, center[1] + dy, center[2] + dz];
                        for &i in self.buckets.get(&key).into_iter().flatten() {
                            let d = dist2(i);
                            if best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                                best = Some((d, i));
                            }
                        }
                    }
                }
            }
            // anything outside this cube is at least ring * cell away
            if best.is_some_and(|(d, _)| d.sqrt() <= ring as f64 * self.cell) {
                break;
            }
        }
        best.map(|(_, i)| i)
    }
}

/// Compares a reconstruction against its source cloud.
///
/// Each reconstructed Gaussian is first matched to an identical, not yet
/// used input Gaussian; the rest fall back to the nearest input position.
pub fn roundtrip_report(original: &GaussianCloud, reconstructed: &GaussianCloud) -> RoundtripReport {
    let mut pool: HashMap<[u32; ATTRIBUTE_COUNT], usize> = HashMap::new();
    for g in original.gaussians() {
        *pool.entry(g.bits()).or_default() += 1;
    }
    let mut unmatched = Vec::new();
    for g in reconstructed.gaussians() {
        match pool.get_mut(&g.bits()) {
            Some(n) if *n > 0 => *n -= 1,
            _ => unmatched.push(*g),
        }
    }
    let containment = unmatched.is_empty();

    let mut errors = AttributeErrors::default();
    if !unmatched.is_empty() {
        let index = PositionIndex::new(original.gaussians());
        for g in &unmatched {
            if let Some(i) = index.nearest(g.position) {
                errors.update(&g.to_array(), &original.gaussians()[i].to_array());
            }
        }
    }
    RoundtripReport {
        input_count: original.len(),
        reconstructed_count: reconstructed.len(),
        dropped_count: original.len().saturating_sub(reconstructed.len()),
        exact_match: containment && original.len() == reconstructed.len(),
        max_abs_error: errors,
        containment,
    }
}
