//! A small CPU splat renderer and image metrics.
//!
//! Gaussians are projected with the usual EWA linearisation, sorted globally
//! by view depth and alpha-composited front to back. It is meant for
//! comparing two clouds under the same camera, not for matching the output
//! of a tile-based GPU rasterizer.

use std::f64::consts::PI;

use nalgebra::{Matrix2x3, Matrix3, Vector3};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{lexicographic_cmp, Gaussian, GaussianCloud};

/// Added to the diagonal of every screen-space covariance, in px^2.
pub const COVARIANCE_REGULARIZATION: f64 = 0.3;
pub const MAX_ALPHA: f64 = 0.99;
pub const MIN_ALPHA: f64 = 1.0 / 255.0;
/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;
/// Stand-in radius for degenerate (single point) clouds when building a rig.
pub const MIN_RIG_RADIUS: f64 = 1e-6;

const STRIP_ROWS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((u32, u32), (u32, u32)),
    #[error("camera rig is empty")]
    EmptyRig,
}

/// Pinhole camera looking at a target; image `y` grows downwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    /// Vertical field of view in radians.
    pub vertical_fov: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
}

impl Camera {
    pub fn focal_px(&self) -> f64 {
        0.5 * f64::from(self.height) / (0.5 * self.vertical_fov).tan()
    }

    pub fn principal_point(&self) -> [f64; 2] {
        [0.5 * f64::from(self.width), 0.5 * f64::from(self.height)]
    }

    /// World-to-camera rotation; rows are the right, down and forward axes.
    pub fn world_to_camera(&self) -> Matrix3<f64> {
        let forward = (Vector3::from(self.look_at) - Vector3::from(self.position)).normalize();
        let mut right = forward.cross(&Vector3::from(self.up));
        if right.norm() < 1e-9 {
            // up is parallel to the view direction
            let alt = if forward.z.abs() < 0.9 {
                Vector3::z()
            } else {
                Vector3::y()
            };
            right = forward.cross(&alt);
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
    }

    pub fn is_valid(&self) -> bool {
        self.position != self.look_at
            && self.vertical_fov > 0.0
            && self.vertical_fov < PI
            && self.width >= 1
            && self.height >= 1
            && self.near > 0.0
    }
}

/// Rig parameters shared by every camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigSpec {
    pub count: usize,
    pub distance_factor: f64,
    pub vertical_fov: f64,
    pub image_size: u32,
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            count: 88,
            distance_factor: 2.5,
            vertical_fov: 50f64.to_radians(),
            image_size: 256,
        }
    }
}

/// `count` cameras on a Fibonacci sphere around `center`, all aimed at it.
pub fn make_rig(center: [f64; 3], radius: f64, count: usize, distance_factor: f64) -> Vec<Camera> {
    make_rig_with(
        center,
        radius,
        &RigSpec {
            count,
            distance_factor,
            ..RigSpec::default()
        },
    )
}

pub fn make_rig_with(center: [f64; 3], radius: f64, spec: &RigSpec) -> Vec<Camera> {
    let distance = spec.distance_factor * radius.max(MIN_RIG_RADIUS);
    crate::synth::fibonacci_sphere(spec.count)
        .into_iter()
        .map(|d| Camera {
            position: [0, 1, 2].map(|k| center[k] + distance * d[k]),
            look_at: center,
            up: [0.0, 0.0, 1.0],
            vertical_fov: spec.vertical_fov,
            width: spec.image_size,
            height: spec.image_size,
            near: 0.01 * distance,
        })
        .collect()
}

/// A Gaussian after projection to the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian {
    /// Pixel coordinates of the projected mean.
    pub mean: [f64; 2],
    /// Regularised screen-space covariance, px^2.
    pub covariance: [[f64; 2]; 2],
    /// View-space depth along the optical axis.
    pub depth: f64,
}

fn rotation_matrix(q: [f32; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q.map(f64::from);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// World covariance `R diag(s)^2 R^T`.
pub fn world_covariance(g: &Gaussian) -> Matrix3<f64> {
    let r = rotation_matrix(g.rotation);
    let s2 = Matrix3::from_diagonal(&Vector3::from(g.scale.map(|s| f64::from(s).powi(2))));
    r * s2 * r.transpose()
}

struct CameraFrame {
    rotation: Matrix3<f64>,
    position: Vector3<f64>,
    focal: f64,
    principal: [f64; 2],
    near: f64,
}

impl CameraFrame {
    fn new(cam: &Camera) -> Self {
        Self {
            rotation: cam.world_to_camera(),
            position: Vector3::from(cam.position),
            focal: cam.focal_px(),
            principal: cam.principal_point(),
            near: cam.near,
        }
    }

    fn project(&self, g: &Gaussian) -> Option<ProjectedGaussian> {
        let t = self.rotation * (Vector3::from(g.position.map(f64::from)) - self.position);
        if t.z <= self.near {
            return None;
        }
        let f = self.focal;
        let jacobian = Matrix2x3::new(
            f / t.z,
            0.0,
            -f * t.x / (t.z * t.z),
            0.0,
            f / t.z,
            -f * t.y / (t.z * t.z),
        );
        // J W R diag(s), so that the covariance is B B^T and symmetric by construction
        let scale = Matrix3::from_diagonal(&Vector3::from(g.scale.map(f64::from)));
        let b = jacobian * self.rotation * rotation_matrix(g.rotation) * scale;
        let cov = b * b.transpose();
        let off = cov[(0, 1)];
        Some(ProjectedGaussian {
            mean: [
                f * t.x / t.z + self.principal[0],
                f * t.y / t.z + self.principal[1],
            ],
            covariance: [
                [cov[(0, 0)] + COVARIANCE_REGULARIZATION, off],
                [off, cov[(1, 1)] + COVARIANCE_REGULARIZATION],
            ],
            depth: t.z,
        })
    }
}

/// Projects one Gaussian; `None` when it lies at or behind the near plane.
pub fn project_gaussian(g: &Gaussian, cam: &Camera) -> Option<ProjectedGaussian> {
    CameraFrame::new(cam).project(g)
}

/// Float RGB image, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB triples.
    pub rgb: Vec<f32>,
}

impl RenderedImage {
    pub fn filled(width: u32, height: u32, color: [f32; 3]) -> Self {
        let rgb = (0..width as usize * height as usize)
            .flat_map(|_| color)
            .collect();
        Self { width, height, rgb }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f32; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.rgb
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn to_rgba8(&self) -> Vec<u8> {
        self.to_rgb8()
            .chunks_exact(3)
            .flat_map(|p| [p[0], p[1], p[2], 255])
            .collect()
    }

    pub fn write_png<W: std::io::Write>(&self, w: W) -> Result<(), png::EncodingError> {
        let mut encoder = png::Encoder::new(w, self.width, self.height);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(&self.to_rgb8())?;
        writer.finish()
    }
}

/// Range of transmittance values seen while compositing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmittanceStats {
    pub min: f64,
    pub max: f64,
    /// Composite steps at which transmittance grew.
    pub increases: u64,
    /// Composite steps performed.
    pub steps: u64,
}

impl Default for TransmittanceStats {
    fn default() -> Self {
        Self {
            min: 1.0,
            max: 1.0,
            increases: 0,
            steps: 0,
        }
    }
}

impl TransmittanceStats {
    fn merge(self, other: Self) -> Self {
        Self {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
            increases: self.increases + other.increases,
            steps: self.steps + other.steps,
        }
    }
}

#[derive(Clone, Copy)]
struct Splat {
    mean: [f64; 2],
    /// Inverse covariance entries `(a, b, c)` of `[[a, b], [b, c]]`.
    conic: [f64; 3],
    /// Largest Mahalanobis square at which alpha can still reach [`MIN_ALPHA`].
    cutoff: f64,
    rect: [u32; 4],
    opacity: f64,
    color: [f64; 3],
    depth: f64,
    source: u32,
}

fn make_splat(g: &Gaussian, p: &ProjectedGaussian, width: u32, height: u32) -> Option<Splat> {
    let opacity = f64::from(g.opacity);
    // alpha never exceeds the opacity, so faint splats cannot contribute
    if opacity * (1.0 + 1e-9) < MIN_ALPHA {
        return None;
    }
    let [[a, b], [_, c]] = p.covariance;
    let det = a * c - b * b;
    if !(det > 0.0) {
        return None;
    }
    let cutoff = 2.0 * (opacity / MIN_ALPHA).ln() * (1.0 + 1e-9) + 1e-9;
    let mid = 0.5 * (a + c);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    // the 3-sigma box, shrunk to where alpha can pass the cutoff
    let extent = (lambda_max * cutoff.min(9.0)).sqrt();
    let x0 = (p.mean[0] - extent).floor().max(0.0);
    let y0 = (p.mean[1] - extent).floor().max(0.0);
    let x1 = (p.mean[0] + extent).ceil().min(f64::from(width));
    let y1 = (p.mean[1] + extent).ceil().min(f64::from(height));
    if !(x0 < x1 && y0 < y1) {
        return None;
    }
    Some(Splat {
        mean: p.mean,
        conic: [c / det, -b / det, a / det],
        cutoff,
        rect: [x0 as u32, y0 as u32, x1 as u32, y1 as u32],
        opacity,
        color: g.color.map(f64::from),
        depth: p.depth,
        source: 0,
    })
}

/// Composites `splats` (front to back) into rows `y0..y1`.
fn composite_strip(
    splats: &[Splat],
    order: &[u32],
    width: u32,
    y0: u32,
    y1: u32,
    background: [f32; 3],
) -> (Vec<f32>, TransmittanceStats) {
    let w = width as usize;
    let rows = (y1 - y0) as usize;
    let mut color = vec![[0.0f64; 3]; w * rows];
    let mut trans = vec![1.0f64; w * rows];
    let mut stats = TransmittanceStats::default();
    for &i in order {
        let s = &splats[i as usize];
        let [a, b, c] = s.conic;
        for y in s.rect[1].max(y0)..s.rect[3].min(y1) {
            let dy = f64::from(y) + 0.5 - s.mean[1];
            let row = (y - y0) as usize * w;
            for x in s.rect[0]..s.rect[2] {
                let dx = f64::from(x) + 0.5 - s.mean[0];
                let q = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy;
                if q > s.cutoff {
                    continue;
                }
                let power = -0.5 * q;
                let alpha = (s.opacity * power.exp()).min(MAX_ALPHA);
                if alpha < MIN_ALPHA {
                    continue;
                }
                let px = row + x as usize;
                let t = trans[px];
                for k in 0..3 {
                    color[px][k] += s.color[k] * alpha * t;
                }
                let next = t * (1.0 - alpha);
                trans[px] = next;
                stats.steps += 1;
                stats.min = stats.min.min(next);
                stats.max = stats.max.max(next);
                if next > t {
                    stats.increases += 1;
                }
            }
        }
    }
    let rgb = color
        .iter()
        .zip(&trans)
        .flat_map(|(c, &t)| {
            [0, 1, 2].map(|k| (c[k] + t * f64::from(background[k])).clamp(0.0, 1.0) as f32)
        })
        .collect();
    (rgb, stats)
}

/// Renders `cloud` and reports the transmittance range seen on the way.
pub fn render_inspect(
    cloud: &GaussianCloud,
    cam: &Camera,
    background: [f32; 3],
) -> (RenderedImage, TransmittanceStats) {
    let (width, height) = (cam.width, cam.height);
    let frame = CameraFrame::new(cam);

    let project = |(i, g): (usize, &Gaussian)| {
        let p = frame.project(g)?;
        let splat = make_splat(g, &p, width, height)?;
        Some(Splat {
            source: i as u32,
            ..splat
        })
    };
    #[cfg(feature = "parallel")]
    let splats: Vec<Splat> = cloud
        .gaussians()
        .par_iter()
        .enumerate()
        .filter_map(project)
        .collect();
    #[cfg(not(feature = "parallel"))]
    let splats: Vec<Splat> = cloud
        .gaussians()
        .iter()
        .enumerate()
        .filter_map(project)
        .collect();

    // ties on depth are broken by the attributes, never by input position
    let gaussians = cloud.gaussians();
    let mut order: Vec<(f64, u32)> = splats
        .iter()
        .enumerate()
        .map(|(i, s)| (s.depth, i as u32))
        .collect();
    order.sort_unstable_by(|(da, a), (db, b)| {
        da.total_cmp(db).then_with(|| {
            lexicographic_cmp(
                &gaussians[splats[*a as usize].source as usize].to_array(),
                &gaussians[splats[*b as usize].source as usize].to_array(),
            )
        })
    });

    let strips = height.div_ceil(STRIP_ROWS) as usize;
    // front-to-back order, laid out contiguously
    let splats: Vec<Splat> = order.iter().map(|&(_, i)| splats[i as usize]).collect();
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); strips];
    for (i, s) in splats.iter().enumerate() {
        let first = (s.rect[1] / STRIP_ROWS) as usize;
        let last = ((s.rect[3] - 1) / STRIP_ROWS) as usize;
        for bin in &mut bins[first..=last] {
            bin.push(i as u32);
        }
    }

    let run = |(k, order): (usize, &Vec<u32>)| {
        let y0 = k as u32 * STRIP_ROWS;
        let y1 = (y0 + STRIP_ROWS).min(height);
        composite_strip(&splats, order, width, y0, y1, background)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<(Vec<f32>, TransmittanceStats)> = bins.par_iter().enumerate().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<(Vec<f32>, TransmittanceStats)> = bins.iter().enumerate().map(run).collect();

    let mut rgb = Vec::with_capacity(width as usize * height as usize * 3);
    let mut stats = TransmittanceStats::default();
    for (part, s) in parts {
        rgb.extend_from_slice(&part);
        stats = stats.merge(s);
    }
    (RenderedImage { width, height, rgb }, stats)
}

pub fn render(cloud: &GaussianCloud, cam: &Camera, background: [f32; 3]) -> RenderedImage {
    render_inspect(cloud, cam, background).0
}

/// Peak-signal-to-noise ratio with peak 1, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &RenderedImage, b: &RenderedImage) -> Result<f64, RenderError> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(RenderError::DimensionMismatch(
            (a.width, a.height),
            (b.width, b.height),
        ));
    }
    if a.rgb.is_empty() {
        return Ok(PSNR_CAP_DB);
    }
    let sse: f64 = a
        .rgb
        .iter()
        .zip(&b.rgb)
        .map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2))
        .sum();
    let mse = sse / a.rgb.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Mean PSNR between renders of the two clouds over every camera of `rig`.
pub fn fidelity_score(
    original: &GaussianCloud,
    reconstructed: &GaussianCloud,
    rig: &[Camera],
) -> Result<f64, RenderError> {
    fidelity_score_on(original, reconstructed, rig, [0.0; 3])
}

pub fn fidelity_score_on(
    original: &GaussianCloud,
    reconstructed: &GaussianCloud,
    rig: &[Camera],
    background: [f32; 3],
) -> Result<f64, RenderError> {
    if rig.is_empty() {
        return Err(RenderError::EmptyRig);
    }
    let score = |cam: &Camera| {
        psnr(
            &render(original, cam, background),
            &render(reconstructed, cam, background),
        )
    };
    #[cfg(feature = "parallel")]
    let scores: Result<Vec<f64>, RenderError> = rig.par_iter().map(score).collect();
    #[cfg(not(feature = "parallel"))]
    let scores: Result<Vec<f64>, RenderError> = rig.iter().map(score).collect();
    let scores = scores?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
