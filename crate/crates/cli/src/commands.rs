use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use thiserror::Error;
use uvgs::codec::{self, Layout};
use uvgs::gaussian::CenterMode;
use uvgs::inverse::{inconsistent_cells, reconstruct_with_center_mode};
use uvgs::render::{make_rig_with, render, RigSpec};
use uvgs::synth::{synth_cloud, Arrangement, OpacityLaw, SynthSpec};
use uvgs::{
    compare_sizes, fidelity_score, map_cloud, parse_ply, preview, roundtrip_report, write_ply,
    GaussianCloud, MapDims, MapError, UvgsMap,
};

use crate::args::*;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Args(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Format(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Args(_) => 4,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn format_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Format(format!("{}: {e}", path.display()))
}

fn load_ply(path: &Path, mode: CenterMode) -> Result<GaussianCloud> {
    let cloud = parse_ply(&read(path)?).map_err(|e| format_err(path, e))?;
    Ok(cloud.recentered(mode))
}

/// Reads a UVGS1 map, undoing normalization if needed.
fn load_raw_map(path: &Path) -> Result<UvgsMap> {
    let map = codec::deserialize(&read(path)?).map_err(|e| format_err(path, e))?;
    if map.is_normalized() {
        map.denormalize().map_err(|e| format_err(path, e))
    } else {
        Ok(map)
    }
}

fn dims(map: &MapArgs, layers: u32) -> MapDims {
    MapDims::new(map.uv_size[0], map.uv_size[1], layers)
}

fn map_with(cloud: &GaussianCloud, args: &MapArgs, layers: u32) -> Result<UvgsMap> {
    map_cloud(cloud, dims(args, layers), args.opacity_threshold).map_err(|e| match e {
        MapError::InvalidDims { .. } => CliError::Args(e.to_string()),
        other => CliError::Format(other.to_string()),
    })
}

/// Prints `lines` and mirrors them to the requested report files.
fn emit(lines: &[(String, String)], json: Value, report: &ReportArgs) -> Result<()> {
    let text: String = lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    print!("{text}");
    if let Some(path) = &report.report {
        write(path, text.as_bytes())?;
    }
    if let Some(path) = &report.json {
        let mut body = serde_json::to_string_pretty(&json).expect("report is valid JSON");
        body.push('\n');
        write(path, body.as_bytes())?;
    }
    Ok(())
}

fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

pub fn convert(args: &ConvertArgs) -> Result<()> {
    let input = read(&args.input)?;
    let cloud = parse_ply(&input)
        .map_err(|e| format_err(&args.input, e))?
        .recentered(args.map.center_mode.into());
    let mut map = map_with(&cloud, &args.map, args.map.layers)?;
    if args.normalize {
        map = map.normalize().map_err(|e| CliError::Format(e.to_string()))?;
    }
    let layout = if args.sparse {
        Layout::Sparse
    } else {
        Layout::Dense
    };
    let bytes = codec::serialize(&map, layout);
    write(&args.output, &bytes)?;

    let stats = map.occupancy_stats();
    let cp = compare_sizes(input.len() as u64, bytes.len() as u64)
        .map_err(|e| format_err(&args.input, e))?;
    let mut lines = vec![
        kv("input_gaussians", cloud.len()),
        kv("occupied", stats.occupied),
        kv("capacity", stats.capacity),
        kv("fill_ratio", format!("{:.6}", stats.fill_ratio)),
    ];
    for (layer, n) in stats.per_layer.iter().enumerate() {
        lines.push(kv(&format!("occupied_layer_{layer}"), n));
    }
    lines.extend([
        kv("ply_bytes", input.len()),
        kv("uvgs_bytes", bytes.len()),
        kv("compression_percent", format!("{cp:.3}")),
    ]);
    let json = json!({
        "input_gaussians": cloud.len(),
        "stats": stats,
        "ply_bytes": input.len(),
        "uvgs_bytes": bytes.len(),
        "compression_percent": cp,
        "normalized": map.is_normalized(),
        "layout": if args.sparse { "sparse" } else { "dense" },
    });
    emit(&lines, json, &args.report)
}

pub fn invert(args: &InvertArgs) -> Result<()> {
    let map = load_raw_map(&args.input)?;
    let cloud = reconstruct_with_center_mode(&map, CenterMode::Centroid)
        .map_err(|e| format_err(&args.input, e))?;
    write(&args.output, &write_ply(&cloud))?;
    let mut lines = vec![kv("reconstructed_count", cloud.len())];
    let mut json = json!({ "reconstructed_count": cloud.len() });
    if args.check {
        let bad = inconsistent_cells(&map).map_err(|e| format_err(&args.input, e))?;
        lines.push(kv("inconsistent_cells", bad.len()));
        json["inconsistent_cells"] = json!(bad);
    }
    emit(&lines, json, &args.report)
}

pub fn roundtrip(args: &RoundtripArgs) -> Result<()> {
    let cloud = load_ply(&args.input, args.map.center_mode.into())?;
    let rig = make_rig_with(
        cloud.center(),
        cloud.radius(),
        &RigSpec {
            count: args.rig.cameras as usize,
            image_size: args.rig.image_size,
            ..RigSpec::default()
        },
    );
    let sweep = args
        .k_sweep
        .clone()
        .unwrap_or_else(|| vec![args.map.layers]);
    let mut lines = Vec::new();
    let mut rows = Vec::new();
    for layers in sweep {
        let map = map_with(&cloud, &args.map, layers)?;
        let rec = reconstruct_with_center_mode(&map, args.map.center_mode.into())
            .map_err(|e| CliError::Format(e.to_string()))?;
        let report = roundtrip_report(&cloud, &rec);
        let psnr = fidelity_score(&cloud, &rec, &rig).map_err(|e| CliError::Args(e.to_string()))?;
        lines.push(kv("layers", layers));
        lines.extend(report.to_text().lines().filter_map(|l| {
            l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string()))
        }));
        lines.push(kv("mean_psnr_db", format!("{psnr:.4}")));
        rows.push(json!({ "layers": layers, "report": report, "mean_psnr_db": psnr }));
    }
    emit(&lines, json!({ "cameras": rig.len(), "runs": rows }), &args.report)
}

pub fn render_view(args: &RenderArgs) -> Result<()> {
    let is_ply = args
        .input
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    let cloud = if is_ply {
        load_ply(&args.input, CenterMode::Centroid)?
    } else {
        let map = load_raw_map(&args.input)?;
        reconstruct_with_center_mode(&map, CenterMode::Centroid)
            .map_err(|e| format_err(&args.input, e))?
    };
    let rig = make_rig_with(
        cloud.center(),
        cloud.radius(),
        &RigSpec {
            count: args.rig.cameras as usize,
            image_size: args.rig.image_size,
            ..RigSpec::default()
        },
    );
    let cam = rig.get(args.view as usize).ok_or_else(|| {
        CliError::Args(format!(
            "--view {} out of range for a {}-camera rig",
            args.view,
            rig.len()
        ))
    })?;
    let bg = [args.background[0], args.background[1], args.background[2]];
    let img = render(&cloud, cam, bg);
    let mut png = Vec::new();
    img.write_png(&mut png)
        .map_err(|e| CliError::Format(e.to_string()))?;
    write(&args.output, &png)?;
    println!("gaussians={}", cloud.len());
    println!("view={}", args.view);
    println!("width={}\nheight={}", img.width, img.height);
    Ok(())
}

pub fn stats(args: &StatsArgs) -> Result<()> {
    let bytes = read(&args.input)?;
    let map = codec::deserialize(&bytes).map_err(|e| format_err(&args.input, e))?;
    let stats = map.occupancy_stats();
    let d = map.dims();
    let dense = codec::serialized_len(&map, Layout::Dense);
    let sparse = codec::serialized_len(&map, Layout::Sparse);
    let mut lines = vec![
        kv("width", d.width),
        kv("height", d.height),
        kv("layers", d.layers),
        kv("normalized", map.is_normalized()),
        kv("occupied", stats.occupied),
        kv("capacity", stats.capacity),
        kv("fill_ratio", format!("{:.6}", stats.fill_ratio)),
    ];
    for (layer, n) in stats.per_layer.iter().enumerate() {
        lines.push(kv(&format!("occupied_layer_{layer}"), n));
    }
    lines.extend([
        kv("file_bytes", bytes.len()),
        kv("dense_bytes", dense),
        kv("sparse_bytes", sparse),
    ]);
    if let (Some(group), Some(out)) = (args.preview, &args.preview_out) {
        let mut png = Vec::new();
        preview(&map, group.into())
            .write_png(&mut png)
            .map_err(|e| CliError::Format(e.to_string()))?;
        write(out, &png)?;
    }
    let json = json!({
        "dims": [d.width, d.height, d.layers],
        "normalized": map.is_normalized(),
        "stats": stats,
        "file_bytes": bytes.len(),
        "dense_bytes": dense,
        "sparse_bytes": sparse,
    });
    emit(&lines, json, &args.report)
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    if args.opacity_min > args.opacity_max {
        return Err(CliError::Format(format!(
            "opacity range {}..{} is empty",
            args.opacity_min, args.opacity_max
        )));
    }
    let (w, h) = (args.uv_size[0], args.uv_size[1]);
    let arrangement = match args.arrangement {
        ArrangementArg::Fibonacci => {
            let limit = u64::from(w) * u64::from(h) / 4;
            if args.count as u64 > limit {
                return Err(CliError::Format(format!(
                    "fibonacci arrangement is collision-free only up to {limit} Gaussians at {w}x{h}"
                )));
            }
            Arrangement::FibonacciSphere {
                uv_width: w,
                uv_height: h,
            }
        }
        ArrangementArg::Ball => Arrangement::UniformBall {
            inner_fraction: 0.0,
        },
        ArrangementArg::Shell => Arrangement::UniformBall {
            inner_fraction: 0.95,
        },
        ArrangementArg::Rays => Arrangement::FixedDirections {
            directions: args.rays,
        },
    };
    let spec = SynthSpec {
        opacity: OpacityLaw::Uniform {
            min: args.opacity_min,
            max: args.opacity_max,
        },
        ..SynthSpec::new(args.count, arrangement, args.seed)
    };
    let cloud = synth_cloud(&spec);
    write(&args.output, &write_ply(&cloud))?;
    println!("gaussians={}", cloud.len());
    Ok(())
}
