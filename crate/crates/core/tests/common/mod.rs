#![allow(dead_code)]

use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvgs::gaussian::canonical_quaternion;
use uvgs::spherical::map_cloud;
use uvgs::{Gaussian, GaussianCloud, MapDims, UvgsMap};

pub fn unit_quaternion() -> impl Strategy<Value = [f32; 4]> {
    prop::array::uniform4(-1.0f32..1.0)
        .prop_filter("near-zero quaternion", |q| {
            q.iter().map(|v| v * v).sum::<f32>() > 1e-3
        })
        .prop_map(|q| {
            let n = q.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt();
            canonical_quaternion(q.map(|v| (f64::from(v) / n) as f32))
        })
}

/// Valid activated Gaussians with opacity inside `opacity`.
pub fn gaussian_in(
    extent: f32,
    opacity: std::ops::Range<f32>,
) -> impl Strategy<Value = Gaussian> {
    (
        prop::array::uniform3(-extent..extent),
        unit_quaternion(),
        prop::array::uniform3(-7.0f32..1.0),
        opacity,
        prop::array::uniform3(0.0f32..=1.0),
    )
        .prop_map(|(position, rotation, log_scale, opacity, color)| Gaussian {
            position,
            rotation,
            scale: log_scale.map(f32::exp),
            opacity,
            color,
        })
}

pub fn gaussian() -> impl Strategy<Value = Gaussian> {
    gaussian_in(10.0, 0.0..1.0)
}

pub fn cloud(max: usize) -> impl Strategy<Value = GaussianCloud> {
    prop::collection::vec(gaussian(), 0..max).prop_map(GaussianCloud::new)
}

/// Multiset of 14-vectors, compared bit for bit.
pub fn multiset(cloud: &GaussianCloud) -> HashMap<[u32; 14], usize> {
    let mut m = HashMap::new();
    for g in cloud.gaussians() {
        *m.entry(g.bits()).or_insert(0) += 1;
    }
    m
}

pub fn random_gaussian(rng: &mut ChaCha8Rng, extent: f32) -> Gaussian {
    let q: [f32; 4] = loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-3 {
            break canonical_quaternion(q.map(|v| (v / n) as f32));
        }
    };
    Gaussian {
        position: std::array::from_fn(|_| rng.gen_range(-extent..extent)),
        rotation: q,
        scale: std::array::from_fn(|_| rng.gen_range(-7.0f32..1.0).exp()),
        opacity: rng.gen_range(0.0..=1.0),
        color: std::array::from_fn(|_| rng.gen_range(0.0..=1.0)),
    }
}

/// A random raw map built the way real maps are: by mapping a random cloud.
/// Small grids make collisions and multi-layer pixels common.
pub fn fuzzed_map(seed: u64) -> UvgsMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = MapDims::new(
        rng.gen_range(1..=24),
        rng.gen_range(1..=24),
        rng.gen_range(1..=4),
    );
    let count = match rng.gen_range(0..10) {
        0 => 0,
        1 => rng.gen_range(1..4),
        _ => rng.gen_range(1..600),
    };
    let offset: [f32; 3] = std::array::from_fn(|_| rng.gen_range(-5.0..5.0));
    let extent = rng.gen_range(0.01f32..3.0);
    let gaussians = (0..count)
        .map(|_| {
            let mut g = random_gaussian(&mut rng, extent);
            for k in 0..3 {
                g.position[k] += offset[k];
            }
            g
        })
        .collect();
    let threshold = if rng.gen_bool(0.5) { 0.01 } else { 0.0 };
    map_cloud(&GaussianCloud::new(gaussians), dims, threshold).unwrap()
}
