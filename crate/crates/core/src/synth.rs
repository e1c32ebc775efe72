//! Deterministic synthetic Gaussian clouds for tests and demos.

use std::collections::HashSet;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gaussian::{canonical_quaternion, Gaussian, GaussianCloud};
use crate::spherical::pixel_of;

/// Where the Gaussian centers are placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Arrangement {
    /// Quasi-uniform directions that occupy pairwise distinct pixels of a
    /// `uv_width x uv_height` map, as long as `count <= uv_width * uv_height / 4`.
    ///
    /// Each Fibonacci direction is snapped to the center of the nearest pixel
    /// whose antipodal pixel is also free, and the Gaussian is mirrored
    /// through the origin. The mirrored pairs keep the centroid at the origin
    /// so that no point drifts across a bin boundary.
    FibonacciSphere { uv_width: u32, uv_height: u32 },
    /// Uniform in the shell `inner_fraction * radius <= |p| <= radius`
    /// (`0` gives the full ball).
    UniformBall { inner_fraction: f32 },
    /// `directions` fixed rays, Gaussians spread along them at random depths.
    FixedDirections { directions: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OpacityLaw {
    Constant(f32),
    Uniform { min: f32, max: f32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub count: usize,
    pub arrangement: Arrangement,
    pub opacity: OpacityLaw,
    pub seed: u64,
    /// Outer radius of the cloud in world units.
    pub radius: f32,
    /// Per-axis scale range as a fraction of `radius`, sampled log-uniformly.
    pub scale_range: (f32, f32),
}

impl SynthSpec {
    pub fn new(count: usize, arrangement: Arrangement, seed: u64) -> Self {
        Self {
            count,
            arrangement,
            opacity: OpacityLaw::Uniform {
                min: 0.05,
                max: 1.0,
            },
            seed,
            radius: 1.0,
            scale_range: (0.002, 0.01),
        }
    }
}

fn fibonacci_direction(i: usize, n: usize, z_range: (f64, f64)) -> [f64; 3] {
    let golden = PI * (3.0 - 5f64.sqrt());
    let t = (i as f64 + 0.5) / n as f64;
    let z = z_range.0 + (z_range.1 - z_range.0) * t;
    let planar = (1.0 - z * z).max(0.0).sqrt();
    let theta = golden * i as f64;
    [planar * theta.cos(), planar * theta.sin(), z]
}

/// Directions of `n` points spread over the whole sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    (0..n).map(|i| fibonacci_direction(i, n, (1.0, -1.0))).collect()
}

fn pixel_center_direction(u: u32, v: u32, width: u32, height: u32) -> [f64; 3] {
    let theta = (f64::from(u) + 0.5) / f64::from(width) * 2.0 * PI - PI;
    let phi = (f64::from(v) + 0.5) / f64::from(height) * PI;
    [phi.sin() * theta.cos(), phi.sin() * theta.sin(), phi.cos()]
}

fn scaled(d: [f64; 3], r: f64) -> [f32; 3] {
    d.map(|c| (c * r) as f32)
}

/// Pixel-snapped, antipodally paired Fibonacci positions.
fn fibonacci_positions(
    count: usize,
    width: u32,
    height: u32,
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<[f32; 3]> {
    let pairs = count / 2;
    let mut taken: HashSet<(u32, u32)> = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    let origin = [0.0f32; 3];

    // first candidate pixel at ring r around (u0, v0), or None
    let search = |u0: u32, v0: u32, taken: &HashSet<(u32, u32)>, paired: bool, rho: f64| {
        let max_ring = width.max(height) as i64;
        for ring in 0..=max_ring {
            for dv in -ring..=ring {
                for du in -ring..=ring {
                    if du.abs().max(dv.abs()) != ring {
                        continue;
                    }
                    let v = i64::from(v0) + dv;
                    if v < 0 || v >= i64::from(height) {
                        continue;
                    }
                    let u = (i64::from(u0) + du).rem_euclid(i64::from(width)) as u32;
                    let v = v as u32;
                    let p = scaled(pixel_center_direction(u, v, width, height), rho);
                    let own = pixel_of(p, origin, width, height);
                    if own != (u, v) || taken.contains(&own) {
                        continue;
                    }
                    if !paired {
                        return Some((p, None));
                    }
                    let q = p.map(|c| -c);
                    let mirror = pixel_of(q, origin, width, height);
                    if mirror != own && !taken.contains(&mirror) {
                        return Some((p, Some(q)));
                    }
                }
            }
            if ring >= i64::from(width) && ring >= i64::from(height) {
                break;
            }
        }
        None
    };

    for i in 0..pairs {
        let rho = radius * rng.gen_range(0.5..=1.0);
        let dir = fibonacci_direction(i, pairs, (1.0, 0.0));
        let p0 = scaled(dir, rho);
        let (u0, v0) = pixel_of(p0, origin, width, height);
        match search(u0, v0, &taken, true, rho) {
            Some((p, Some(q))) => {
                taken.insert(pixel_of(p, origin, width, height));
                taken.insert(pixel_of(q, origin, width, height));
                out.push(p);
                out.push(q);
            }
            // grid exhausted: fall back to plain mirrored Fibonacci points
            _ => {
                out.push(p0);
                out.push(p0.map(|c| -c));
            }
        }
    }
    if count % 2 == 1 {
        // a lone point close to the origin moves the centroid along its own ray only
        let rho = radius * 1e-3;
        let (u0, v0) = pixel_of(scaled([0.0, 0.0, 1.0], 1.0), origin, width, height);
        let p = match search(u0, v0, &taken, false, rho) {
            Some((p, _)) => p,
            None => scaled([0.0, 0.0, 1.0], rho),
        };
        out.push(p);
    }
    out
}

fn unit_gaussian_direction(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let d: [f64; 3] = [
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        ];
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if n > 1e-3 && n <= 1.0 {
            return d.map(|c| c / n);
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [f32; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..=1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return canonical_quaternion(q.map(|v| (v / n) as f32));
        }
    }
}

/// Generates a cloud described by `spec`. The same spec always yields the
/// same cloud, bit for bit.
pub fn synth_cloud(spec: &SynthSpec) -> GaussianCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let radius = f64::from(spec.radius);
    let positions: Vec<[f32; 3]> = match spec.arrangement {
        Arrangement::FibonacciSphere {
            uv_width,
            uv_height,
        } => fibonacci_positions(
            spec.count,
            uv_width.max(1),
            uv_height.max(1),
            radius,
            &mut rng,
        ),
        Arrangement::UniformBall { inner_fraction } => {
            let inner3 = f64::from(inner_fraction.clamp(0.0, 1.0)).powi(3);
            (0..spec.count)
                .map(|_| {
                    let d = unit_gaussian_direction(&mut rng);
                    let r = radius * (inner3 + rng.gen::<f64>() * (1.0 - inner3)).cbrt();
                    scaled(d, r)
                })
                .collect()
        }
        Arrangement::FixedDirections { directions } => {
            let dirs = fibonacci_sphere(directions.max(1) as usize);
            (0..spec.count)
                .map(|i| scaled(dirs[i % dirs.len()], radius * rng.gen_range(0.2..=1.0)))
                .collect()
        }
    };

    let (lo, hi) = (
        f64::from(spec.scale_range.0.max(1e-6)).ln(),
        f64::from(spec.scale_range.1.max(spec.scale_range.0).max(1e-6)).ln(),
    );
    let gaussians = positions
        .into_iter()
        .map(|position| {
            let scale = std::array::from_fn(|_| {
                let t: f64 = rng.gen();
                ((lo + t * (hi - lo)).exp() * radius) as f32
            });
            let opacity = match spec.opacity {
                OpacityLaw::Constant(o) => o,
                OpacityLaw::Uniform { min, max } => {
                    if max > min {
                        rng.gen_range(min..=max)
                    } else {
                        min
                    }
                }
            }
            .clamp(0.0, 1.0);
            Gaussian {
                position,
                rotation: random_rotation(&mut rng),
                scale: scale.map(|s: f32| s.max(f32::MIN_POSITIVE)),
                opacity,
                color: std::array::from_fn(|_| rng.gen_range(0.0..=1.0)),
            }
        })
        .collect();
    GaussianCloud::new(gaussians)
}
