//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runtime budgets are part of each criterion.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvgs::codec::{self, CodecError, Layout};
use uvgs::render::{make_rig_with, render, render_inspect, Camera, RenderedImage, RigSpec};
use uvgs::spherical::{map_cloud, to_spherical, to_uv_indices};
use uvgs::synth::{synth_cloud, Arrangement, OpacityLaw, SynthSpec};
use uvgs::{
    fidelity_score, psnr, reconstruct_cloud, roundtrip_report, Gaussian, GaussianCloud, MapDims,
    UvIndex, UvgsMap,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lossless_roundtrip() -> Outcome {
    let dims = MapDims::new(512, 512, 1);
    // a lighter rig than the default keeps 50 clouds inside the time budget
    let rig_spec = RigSpec {
        count: 24,
        image_size: 32,
        ..RigSpec::default()
    };
    let mut total = 0;
    let mut largest = 0;
    for seed in 0..50u64 {
        let count = 1_000 * (seed as usize + 1);
        let spec = SynthSpec::new(
            count,
            Arrangement::FibonacciSphere {
                uv_width: 512,
                uv_height: 512,
            },
            seed,
        );
        let cloud = synth_cloud(&SynthSpec {
            opacity: OpacityLaw::Uniform { min: 0.05, max: 1.0 },
            ..spec
        });
        let map = map_cloud(&cloud, dims, 0.01).map_err(|e| e.to_string())?;
        let rec = reconstruct_cloud(&map).map_err(|e| e.to_string())?;
        check(common::multiset(&rec) == common::multiset(&cloud), || {
            format!("seed {seed}: multisets differ ({} vs {})", rec.len(), cloud.len())
        })?;
        let rig = make_rig_with(cloud.center(), cloud.radius(), &rig_spec);
        let score = fidelity_score(&cloud, &rec, &rig).map_err(|e| e.to_string())?;
        check(score == 99.0, || format!("seed {seed}: fidelity {score} dB"))?;
        total += cloud.len();
        largest = largest.max(cloud.len());
    }
    Ok(format!(
        "50 clouds, {total} Gaussians (max {largest}) bit-exact, fidelity 99 dB on {} views",
        rig_spec.count
    ))
}

fn permutation_invariance() -> Outcome {
    let spec = SynthSpec::new(
        10_000,
        Arrangement::UniformBall {
            inner_fraction: 0.0,
        },
        7,
    );
    let cloud = synth_cloud(&spec);
    let dims = MapDims::new(512, 512, 2);
    let reference = codec::serialize(&map_cloud(&cloud, dims, 0.01).unwrap(), Layout::Dense);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut gaussians = cloud.into_gaussians();
    for i in 0..100 {
        gaussians.shuffle(&mut rng);
        let map = map_cloud(&GaussianCloud::new(gaussians.clone()), dims, 0.01).unwrap();
        check(codec::serialize(&map, Layout::Dense) == reference, || {
            format!("shuffle {i} changed the container bytes")
        })?;
    }
    Ok(format!(
        "100 shuffles of 10000 Gaussians, identical {}-byte containers",
        reference.len()
    ))
}

fn k_layer_trend() -> Outcome {
    let spec = SynthSpec::new(
        200_000,
        Arrangement::UniformBall {
            inner_fraction: 0.95,
        },
        2024,
    );
    let cloud = synth_cloud(&spec);
    let rig = make_rig_with(cloud.center(), cloud.radius(), &RigSpec::default());
    let mut rows = Vec::new();
    for k in [1u32, 2, 4] {
        let map = map_cloud(&cloud, MapDims::new(256, 256, k), 0.01).unwrap();
        let rec = reconstruct_cloud(&map).unwrap();
        let report = roundtrip_report(&cloud, &rec);
        check(report.containment, || format!("K={k}: invented Gaussians"))?;
        let score = fidelity_score(&cloud, &rec, &rig).unwrap();
        rows.push((k, rec.len(), score));
    }
    let text = rows
        .iter()
        .map(|(k, n, s)| format!("K={k}: {n} kept, {s:.3} dB"))
        .collect::<Vec<_>>()
        .join("; ");
    for w in rows.windows(2) {
        check(w[1].1 > w[0].1, || format!("count not increasing: {text}"))?;
        check(w[1].2 >= w[0].2, || format!("fidelity decreased: {text}"))?;
    }
    Ok(text)
}

fn capacity() -> Outcome {
    let stats = UvgsMap::empty(MapDims::new(512, 512, 1))
        .unwrap()
        .occupancy_stats();
    check(stats.capacity == 262_144, || {
        format!("capacity {}", stats.capacity)
    })?;
    check(stats.occupied == 0 && stats.per_layer == vec![0], || {
        "empty map reports occupancy".into()
    })?;
    Ok(format!("512x512x1 capacity {}", stats.capacity))
}

fn put_u32(bytes: &mut [u8], at: usize, v: u32) {
    bytes[at..at + 4].copy_from_slice(&v.to_le_bytes());
}

fn put_f32(bytes: &mut [u8], at: usize, v: f32) {
    bytes[at..at + 4].copy_from_slice(&v.to_le_bytes());
}

/// A small map with an occupied cell at linear index 0 and free cells after it.
fn mutant_base() -> UvgsMap {
    let mut map = UvgsMap::empty(MapDims::new(3, 3, 1)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for u in [0, 2] {
        let g = common::random_gaussian(&mut rng, 1.0);
        map.set_cell(UvIndex { u, v: 0, layer: 0 }, &g.to_array());
    }
    map
}

type Mutant = (&'static str, Vec<u8>, fn(&CodecError) -> bool);

fn mutants() -> Vec<Mutant> {
    let map = mutant_base();
    let dense = codec::serialize(&map, Layout::Dense);
    let sparse = codec::serialize(&map, Layout::Sparse);
    let normalized = codec::serialize(&map.normalize().unwrap(), Layout::Dense);
    let h = codec::HEADER_LEN;
    let mask = h;
    let payload = h + 2;
    let edit = |base: &Vec<u8>, f: &dyn Fn(&mut Vec<u8>)| {
        let mut b = base.clone();
        f(&mut b);
        b
    };
    use CodecError as E;
    vec![
        ("empty input", vec![], |e| matches!(e, E::BadMagic)),
        ("bad magic", edit(&dense, &|b| b[0] = b'X'), |e| matches!(e, E::BadMagic)),
        ("version 2", edit(&dense, &|b| b[4] = 2), |e| matches!(e, E::UnsupportedVersion(2))),
        ("version 0", edit(&dense, &|b| b[4] = 0), |e| matches!(e, E::UnsupportedVersion(0))),
        ("unknown flag", edit(&dense, &|b| b[5] |= 0x80), |e| matches!(e, E::InvalidHeader(_))),
        ("super flag on a map", edit(&dense, &|b| b[5] |= codec::FLAG_SUPER), |e| {
            matches!(e, E::Unsupported(_))
        }),
        ("reserved bytes", edit(&dense, &|b| b[7] = 1), |e| matches!(e, E::InvalidHeader(_))),
        ("zero width", edit(&dense, &|b| put_u32(b, 8, 0)), |e| matches!(e, E::InvalidHeader(_))),
        ("channel count", edit(&dense, &|b| put_u32(b, 20, 13)), |e| {
            matches!(e, E::Unsupported(_))
        }),
        ("huge dimensions", edit(&dense, &|b| {
            put_u32(b, 8, 65_535);
            put_u32(b, 12, 65_535);
        }), |e| matches!(e, E::TruncatedPayload { .. })),
        ("NaN radius", edit(&dense, &|b| put_f32(b, 36, f32::NAN)), |e| {
            matches!(e, E::InvalidHeader(_))
        }),
        ("reversed scale bounds", edit(&dense, &|b| {
            put_f32(b, 40, 1.0);
            put_f32(b, 44, -1.0);
        }), |e| matches!(e, E::InvalidHeader(_))),
        ("mask padding bit", edit(&dense, &|b| b[mask + 1] |= 0x80), |e| {
            matches!(e, E::InvalidHeader(_))
        }),
        ("occupied bit cleared", edit(&dense, &|b| b[mask] &= !1), |e| {
            matches!(e, E::InconsistentOccupancy(0))
        }),
        ("free cell marked occupied", edit(&dense, &|b| b[mask] |= 2), |e| {
            matches!(e, E::InconsistentOccupancy(1))
        }),
        ("payload truncated", edit(&dense, &|b| {
            b.pop();
        }), |e| matches!(e, E::TruncatedPayload { .. })),
        ("trailing byte", edit(&dense, &|b| b.push(0)), |e| matches!(e, E::TrailingBytes(1))),
        ("sparse count too large", edit(&sparse, &|b| put_u32(b, payload, 3)), |e| {
            matches!(e, E::TruncatedPayload { .. })
        }),
        ("NaN in occupied cell", edit(&dense, &|b| put_f32(b, payload, f32::NAN)), |e| {
            matches!(e, E::InvalidValue { cell: 0, channel: 0, .. })
        }),
        ("normalized value out of range", edit(&normalized, &|b| put_f32(b, payload + 4 * 10, 2.0)), |e| {
            matches!(e, E::InvalidValue { cell: 0, channel: 10, .. })
        }),
    ]
}

fn serialization() -> Outcome {
    let mut cells = 0usize;
    for seed in 0..1000u64 {
        let mut map = common::fuzzed_map(seed);
        if seed % 2 == 1 {
            map = map.normalize().unwrap();
        }
        for layout in [Layout::Dense, Layout::Sparse] {
            let bytes = codec::serialize(&map, layout);
            let back = codec::deserialize(&bytes).map_err(|e| format!("seed {seed}: {e}"))?;
            check(back == map && codec::serialize(&back, layout) == bytes, || {
                format!("seed {seed} {layout:?}: not bit-exact")
            })?;
        }
        cells += map.occupied_count();
    }
    let mutants = mutants();
    for (name, bytes, expected) in &mutants {
        let result = catch_unwind(|| codec::deserialize(bytes))
            .map_err(|_| format!("mutant '{name}' panicked"))?;
        match result {
            Err(e) if expected(&e) => {}
            Err(e) => return Err(format!("mutant '{name}': unexpected error {e:?}")),
            Ok(_) => return Err(format!("mutant '{name}' was accepted")),
        }
    }
    Ok(format!(
        "1000 maps ({cells} occupied cells) bit-exact in both layouts, {} mutants rejected with typed errors",
        mutants.len()
    ))
}

fn normalization() -> Outcome {
    let mut worst = 0.0f32;
    for seed in 0..100u64 {
        let map = common::fuzzed_map(10_000 + seed);
        let norm = map.normalize().unwrap();
        for (i, cell) in norm.occupied_cells() {
            check(cell.iter().all(|v| (-1.0..=1.0).contains(v)), || {
                format!("seed {seed}: cell {i} out of range: {cell:?}")
            })?;
        }
        let back = norm.denormalize().unwrap();
        check(back.occupancy() == map.occupancy(), || {
            format!("seed {seed}: occupancy changed")
        })?;
        for ((_, a), (_, b)) in back.occupied_cells().zip(map.occupied_cells()) {
            for c in 0..14 {
                worst = worst.max((a[c] - b[c]).abs());
            }
        }
    }
    check(worst <= 1e-5, || format!("max error {worst:e}"))?;
    Ok(format!("100 maps, max channel error {worst:.2e}"))
}

/// Brute-force peak of the ray-integrated density of one Gaussian, sampled on
/// a grid `factor` times finer than the image, in image pixel units.
fn brute_force_peak(g: &Gaussian, cam: &Camera, factor: u32) -> [f64; 2] {
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let unit = |a: [f64; 3]| {
        let n = dot(a, a).sqrt();
        a.map(|v| v / n)
    };
    // rotate a vector by the unit quaternion (w, x, y, z)
    let rot = |v: [f64; 3]| {
        let [w, x, y, z] = g.rotation.map(f64::from);
        let u = [x, y, z];
        let t = cross(u, v).map(|c| 2.0 * c);
        let tt = cross(u, t);
        [0, 1, 2].map(|k| v[k] + w * t[k] + tt[k])
    };
    // precision matrix R diag(1/s^2) R^T applied as a quadratic form
    let axes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]].map(rot);
    let inv_var = g.scale.map(|s| 1.0 / f64::from(s).powi(2));
    let form = |a: [f64; 3], b: [f64; 3]| {
        (0..3)
            .map(|i| inv_var[i] * dot(axes[i], a) * dot(axes[i], b))
            .sum::<f64>()
    };

    let forward = unit(sub(cam.look_at, cam.position));
    let right = unit(cross(forward, cam.up));
    let down = cross(forward, right);
    let f = 0.5 * f64::from(cam.height) / (0.5 * cam.vertical_fov).tan();
    let (cx, cy) = (0.5 * f64::from(cam.width), 0.5 * f64::from(cam.height));
    let o = sub(cam.position, g.position.map(f64::from));

    let mut best = (f64::NEG_INFINITY, [0.0; 2]);
    for sy in 0..cam.height * factor {
        for sx in 0..cam.width * factor {
            let x = (f64::from(sx) + 0.5) / f64::from(factor);
            let y = (f64::from(sy) + 0.5) / f64::from(factor);
            let (a, b) = ((x - cx) / f, (y - cy) / f);
            let d = unit([0, 1, 2].map(|k| forward[k] + a * right[k] + b * down[k]));
            // log of the closed-form line integral along o + t d
            let (qa, qb, qc) = (form(d, d), form(d, o), form(o, o));
            let log_density = -0.5 * (qc - qb * qb / qa) - 0.5 * qa.ln();
            if log_density > best.0 {
                best = (log_density, [x, y]);
            }
        }
    }
    best.1
}

fn brightest_pixel(img: &RenderedImage) -> [f64; 2] {
    let mut best = (f32::NEG_INFINITY, [0.0; 2]);
    for y in 0..img.height {
        for x in 0..img.width {
            let v: f32 = img.pixel(x, y).iter().sum();
            if v > best.0 {
                best = (v, [f64::from(x) + 0.5, f64::from(y) + 0.5]);
            }
        }
    }
    best.1
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn renderer_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let camera = |position: [f64; 3], size: u32| Camera {
        position,
        look_at: [0.0; 3],
        up: [0.0, 0.0, 1.0],
        vertical_fov: 50f64.to_radians(),
        width: size,
        height: size,
        near: 0.01,
    };

    // on-axis anisotropic Gaussian, plus off-axis ones as a check on the oracle itself
    let mut worst_peak = 0.0f64;
    for i in 0..6 {
        let mut g = common::random_gaussian(&mut rng, 0.4);
        if i == 0 {
            g.position = [0.0; 3];
        }
        g.scale = g.scale.map(|_| rng.gen_range(0.04..0.2));
        g.opacity = 0.9;
        g.color = [1.0; 3];
        let cam = camera([0.5, -3.5, 1.2], 64);
        let img = render(&GaussianCloud::new(vec![g]), &cam, [0.0; 3]);
        let peak = brightest_pixel(&img);
        let oracle = brute_force_peak(&g, &cam, 4);
        let d = distance(peak, oracle);
        worst_peak = worst_peak.max(d);
        check(d <= 1.0, || {
            format!("scene {i}: render peak {peak:?} vs oracle {oracle:?}")
        })?;
        if i == 0 {
            let pp = [32.0, 32.0];
            check(distance(peak, pp) <= 1.0 && distance(oracle, pp) <= 1.0, || {
                format!("on-axis peak {peak:?}, oracle {oracle:?}")
            })?;
        }
    }

    let black = RenderedImage::filled(16, 16, [0.0; 3]);
    let grey = RenderedImage::filled(16, 16, [0.5; 3]);
    let db = psnr(&black, &grey).unwrap();
    check((db - 6.0206).abs() <= 1e-3, || format!("psnr {db}"))?;

    let mut steps = 0;
    for scene in 0..10u64 {
        let mut scene_rng = ChaCha8Rng::seed_from_u64(500 + scene);
        let count = scene_rng.gen_range(50..3000);
        let gaussians: Vec<Gaussian> = (0..count)
            .map(|_| {
                let mut g = common::random_gaussian(&mut scene_rng, 1.0);
                g.scale = g.scale.map(|_| scene_rng.gen_range(0.01..0.3));
                g
            })
            .collect();
        let cloud = GaussianCloud::new(gaussians);
        let rig = make_rig_with(
            cloud.center(),
            cloud.radius(),
            &RigSpec {
                count: 3,
                image_size: 96,
                ..RigSpec::default()
            },
        );
        for cam in &rig {
            let bg = [scene_rng.gen(), scene_rng.gen(), scene_rng.gen()];
            let (img, stats) = render_inspect(&cloud, cam, bg);
            check(
                stats.min >= 0.0 && stats.max <= 1.0 && stats.increases == 0,
                || format!("scene {scene}: transmittance {stats:?}"),
            )?;
            check(img.rgb.iter().all(|v| (0.0..=1.0).contains(v)), || {
                format!("scene {scene}: color outside [0, 1]")
            })?;
            steps += stats.steps;
        }
    }
    Ok(format!(
        "peak offset <= {worst_peak:.3} px, PSNR(0, 0.5) = {db:.4} dB, transmittance in [0, 1] over {steps} composite steps"
    ))
}

fn spherical_oracle() -> Outcome {
    let data = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/data/spherical_oracle.csv"
    ))
    .map_err(|e| e.to_string())?;
    let bits = |s: &str| f64::from_bits(u64::from_str_radix(s, 16).unwrap());
    let mut worst = 0.0f64;
    let mut rows = 0;
    let mut seen = HashMap::new();
    for line in data.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let p = [bits(f[0]), bits(f[1]), bits(f[2])];
        let c = [bits(f[3]), bits(f[4]), bits(f[5])];
        let num = |i: usize| f[i].parse::<f64>().unwrap();
        let (theta, phi, rho) = (num(6), num(7), num(8));
        let sc = to_spherical(p, c);
        let err = (sc.theta - theta).abs().max((sc.phi - phi).abs());
        worst = worst.max(err);
        check(err <= 1e-9, || format!("{line}: got {sc:?}"))?;
        check((sc.rho - rho).abs() <= 1e-12 * rho.max(1e-300), || {
            format!("{line}: rho {}", sc.rho)
        })?;
        for (w, h) in [(512, 512), (1, 1), (7, 3), (4096, 2048)] {
            let (u, v) = to_uv_indices(&sc, w, h);
            check(u < w && v < h, || format!("{line}: ({u}, {v}) out of {w}x{h}"))?;
        }
        let (u, v) = to_uv_indices(&sc, 512, 512);
        if f[11] == "0" {
            let expected = (num(9) as u32, num(10) as u32);
            check((u, v) == expected, || {
                format!("{line}: cell ({u}, {v}), expected {expected:?}")
            })?;
        }
        *seen.entry((v == 0 || v == 511, u == 0 || u == 511)).or_insert(0) += 1;
        rows += 1;
    }
    check(rows == 10_000, || format!("{rows} rows"))?;
    Ok(format!(
        "{rows} points, max angle error {worst:.2e} rad, {} pole-row and {} seam-column cells",
        seen.iter().filter(|(k, _)| k.0).map(|(_, n)| n).sum::<usize>(),
        seen.iter().filter(|(k, _)| k.1).map(|(_, n)| n).sum::<usize>()
    ))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 8] = [
        ("lossless round trip", Duration::from_secs(60), lossless_roundtrip),
        ("permutation invariance", Duration::from_secs(10), permutation_invariance),
        ("K-layer trend", Duration::from_secs(300), k_layer_trend),
        ("capacity", Duration::from_secs(1), capacity),
        ("serialization", Duration::from_secs(60), serialization),
        ("normalization", Duration::from_secs(30), normalization),
        ("renderer oracles", Duration::from_secs(60), renderer_oracles),
        ("spherical-math oracle", Duration::from_secs(5), spherical_oracle),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > budget => Err(format!(
                "over budget: {:.1} s > {} s",
                elapsed.as_secs_f64(),
                budget.as_secs()
            )),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{:.2} s]", elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{:.2} s]", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
