//! Gaussian primitives, activation conventions and clouds.
//!
//! A [`Gaussian`] holds the fourteen *activated* attributes of one splat in
//! the fixed order `[position(3), rotation(4), scale(3), opacity(1), color(3)]`.
//! A [`RawGaussian`] holds the unactivated values as they are stored in a
//! fitted 3DGS checkpoint (log scale, logit opacity, SH DC color).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Zeroth-order spherical harmonic constant, `1 / (2 sqrt(pi))`.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

/// Number of scalar attributes per Gaussian.
pub const ATTRIBUTE_COUNT: usize = 14;

/// Opacities are clamped to `[OPACITY_EPS, 1 - OPACITY_EPS]` before the logit.
pub const OPACITY_EPS: f64 = 1e-6;

/// Default opacity threshold used when filtering near-transparent Gaussians.
pub const DEFAULT_OPACITY_THRESHOLD: f32 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ActivationError {
    #[error("rotation quaternion has (near) zero norm")]
    ZeroRotation,
}

/// One activated Gaussian primitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub position: [f32; 3],
    /// Unit quaternion `(w, x, y, z)` with canonical sign.
    pub rotation: [f32; 4],
    pub scale: [f32; 3],
    pub opacity: f32,
    pub color: [f32; 3],
}

/// Unactivated Gaussian as found in a 3DGS PLY.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawGaussian {
    pub position: [f32; 3],
    pub rotation: [f32; 4],
    pub log_scale: [f32; 3],
    pub opacity_logit: f32,
    pub f_dc: [f32; 3],
    /// Higher-order SH bands; parsed but not used.
    pub f_rest: Vec<f32>,
}

impl Gaussian {
    /// Concatenated attribute vector in the canonical channel order.
    pub fn to_array(&self) -> [f32; ATTRIBUTE_COUNT] {
        let p = self.position;
        let r = self.rotation;
        let s = self.scale;
        let c = self.color;
        [
            p[0], p[1], p[2], r[0], r[1], r[2], r[3], s[0], s[1], s[2], self.opacity, c[0], c[1],
            c[2],
        ]
    }

    /// Inverse of [`Gaussian::to_array`]; values are taken verbatim.
    pub fn from_array(a: &[f32; ATTRIBUTE_COUNT]) -> Self {
        Self {
            position: [a[0], a[1], a[2]],
            rotation: [a[3], a[4], a[5], a[6]],
            scale: [a[7], a[8], a[9]],
            opacity: a[10],
            color: [a[11], a[12], a[13]],
        }
    }

    /// Checks the type invariants (unit canonical rotation, positive scale,
    /// opacity and color in the unit interval, finite position).
    pub fn is_valid(&self) -> bool {
        let norm = self
            .rotation
            .iter()
            .map(|&v| f64::from(v).powi(2))
            .sum::<f64>()
            .sqrt();
        self.position.iter().all(|v| v.is_finite())
            && (norm - 1.0).abs() <= 1e-6
            && canonical_quaternion(self.rotation) == self.rotation
            && self.scale.iter().all(|&s| s > 0.0 && s.is_finite())
            && (0.0..=1.0).contains(&self.opacity)
            && self.color.iter().all(|c| (0.0..=1.0).contains(c))
    }

    /// Bit-level key; equal keys mean identical attribute vectors.
    pub fn bits(&self) -> [u32; ATTRIBUTE_COUNT] {
        self.to_array().map(f32::to_bits)
    }
}

/// Total order used wherever a deterministic ordering of Gaussians is needed.
pub fn lexicographic_cmp(
    a: &[f32; ATTRIBUTE_COUNT],
    b: &[f32; ATTRIBUTE_COUNT],
) -> std::cmp::Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Flips the quaternion so that `w >= 0`; when `w == 0` the first nonzero
/// component is made positive.
pub fn canonical_quaternion(q: [f32; 4]) -> [f32; 4] {
    let lead = q.iter().copied().find(|&v| v != 0.0).unwrap_or(0.0);
    let sign = if lead < 0.0 { -1.0 } else { 1.0 };
    // signed zeros are folded to +0 so that q and -q agree bit for bit
    q.map(|v| if v == 0.0 { 0.0 } else { sign * v })
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Applies the 3DGS activations: sigmoid opacity, exponential scale,
/// normalised rotation and SH-DC to RGB.
pub fn activate(raw: &RawGaussian) -> Result<Gaussian, ActivationError> {
    let r = raw.rotation.map(f64::from);
    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm >= 1e-12) {
        return Err(ActivationError::ZeroRotation);
    }
    let rotation = canonical_quaternion(r.map(|v| (v / norm) as f32));
    let scale = raw
        .log_scale
        .map(|v| (f64::from(v).exp() as f32).max(f32::MIN_POSITIVE));
    let opacity = logistic(f64::from(raw.opacity_logit)) as f32;
    let color = raw
        .f_dc
        .map(|v| (0.5 + SH_C0 * f64::from(v)).clamp(0.0, 1.0) as f32);
    Ok(Gaussian {
        position: raw.position,
        rotation,
        scale,
        opacity,
        color,
    })
}

/// Functional inverse of [`activate`] (up to the opacity clamp).
pub fn deactivate(g: &Gaussian) -> RawGaussian {
    let o = f64::from(g.opacity).clamp(OPACITY_EPS, 1.0 - OPACITY_EPS);
    RawGaussian {
        position: g.position,
        rotation: g.rotation,
        log_scale: g.scale.map(|s| f64::from(s).ln() as f32),
        opacity_logit: logit(o) as f32,
        f_dc: g.color.map(|c| ((f64::from(c) - 0.5) / SH_C0) as f32),
        f_rest: Vec::new(),
    }
}

/// How the bounding-sphere center of a cloud is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CenterMode {
    /// Arithmetic mean of the Gaussian positions.
    #[default]
    Centroid,
    /// Midpoint of the axis-aligned bounding box.
    BoundingBox,
}

impl std::str::FromStr for CenterMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "centroid" => Ok(Self::Centroid),
            "bbox" => Ok(Self::BoundingBox),
            other => Err(format!("unknown center mode '{other}' (expected centroid|bbox)")),
        }
    }
}

/// Mean of the positions and the largest distance from it.
///
/// The sum is taken over each coordinate sorted ascending, so the result
/// depends only on the multiset of positions, not their order.
pub fn centroid_and_radius(positions: &[[f32; 3]]) -> ([f64; 3], f64) {
    if positions.is_empty() {
        return ([0.0; 3], 0.0);
    }
    let mut center = [0.0f64; 3];
    let mut column: Vec<f32> = Vec::with_capacity(positions.len());
    for (axis, c) in center.iter_mut().enumerate() {
        column.clear();
        column.extend(positions.iter().map(|p| p[axis]));
        column.sort_unstable_by(f32::total_cmp);
        *c = column.iter().map(|&v| f64::from(v)).sum::<f64>() / positions.len() as f64;
    }
    (center, max_distance(positions, center))
}

/// Bounding-box midpoint and the largest distance from it.
pub fn bbox_center_and_radius(positions: &[[f32; 3]]) -> ([f64; 3], f64) {
    if positions.is_empty() {
        return ([0.0; 3], 0.0);
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in positions {
        for k in 0..3 {
            lo[k] = lo[k].min(f64::from(p[k]));
            hi[k] = hi[k].max(f64::from(p[k]));
        }
    }
    let center = [0, 1, 2].map(|k| 0.5 * (lo[k] + hi[k]));
    (center, max_distance(positions, center))
}

fn max_distance(positions: &[[f32; 3]], center: [f64; 3]) -> f64 {
    positions
        .iter()
        .map(|p| {
            (0..3)
                .map(|k| (f64::from(p[k]) - center[k]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// An ordered set of Gaussians plus its bounding sphere.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianCloud {
    gaussians: Vec<Gaussian>,
    center: [f64; 3],
    radius: f64,
    center_mode: CenterMode,
}

impl GaussianCloud {
    pub fn new(gaussians: Vec<Gaussian>) -> Self {
        Self::with_center_mode(gaussians, CenterMode::Centroid)
    }

    pub fn with_center_mode(gaussians: Vec<Gaussian>, center_mode: CenterMode) -> Self {
        let positions: Vec<[f32; 3]> = gaussians.iter().map(|g| g.position).collect();
        let (center, radius) = match center_mode {
            CenterMode::Centroid => centroid_and_radius(&positions),
            CenterMode::BoundingBox => bbox_center_and_radius(&positions),
        };
        Self {
            gaussians,
            center,
            radius,
            center_mode,
        }
    }

    pub fn gaussians(&self) -> &[Gaussian] {
        &self.gaussians
    }

    pub fn into_gaussians(self) -> Vec<Gaussian> {
        self.gaussians
    }

    pub fn center(&self) -> [f64; 3] {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center_mode(&self) -> CenterMode {
        self.center_mode
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Same Gaussians with the bounding sphere recomputed under `mode`.
    pub fn recentered(self, mode: CenterMode) -> Self {
        Self::with_center_mode(self.gaussians, mode)
    }
}

/// Keeps the Gaussians with opacity strictly above `threshold`.
pub fn threshold_opacity(cloud: &GaussianCloud, threshold: f32) -> GaussianCloud {
    let kept = cloud
        .gaussians()
        .iter()
        .filter(|g| g.opacity > threshold)
        .copied()
        .collect();
    GaussianCloud::with_center_mode(kept, cloud.center_mode())
}
