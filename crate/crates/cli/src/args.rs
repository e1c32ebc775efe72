use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use uvgs::{AttributeGroup, CenterMode};

#[derive(Parser, Debug)]
#[command(name = "uvgs", version, about = "Spherical UV maps for Gaussian splat clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Map a PLY cloud to a UVGS1 file.
    Convert(ConvertArgs),
    /// Reconstruct a PLY cloud from a UVGS1 file.
    Invert(InvertArgs),
    /// Map, reconstruct and score a cloud in one go.
    Roundtrip(RoundtripArgs),
    /// Render one rig view of a PLY or UVGS1 file to PNG.
    Render(RenderArgs),
    /// Occupancy and size statistics of a UVGS1 file.
    Stats(StatsArgs),
    /// Write a deterministic synthetic PLY cloud.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CenterArg {
    Centroid,
    Bbox,
}

impl From<CenterArg> for CenterMode {
    fn from(c: CenterArg) -> Self {
        match c {
            CenterArg::Centroid => CenterMode::Centroid,
            CenterArg::Bbox => CenterMode::BoundingBox,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GroupArg {
    Position,
    Rotation,
    Scale,
    Opacity,
    Color,
}

impl From<GroupArg> for AttributeGroup {
    fn from(g: GroupArg) -> Self {
        match g {
            GroupArg::Position => AttributeGroup::Position,
            GroupArg::Rotation => AttributeGroup::Rotation,
            GroupArg::Scale => AttributeGroup::Scale,
            GroupArg::Opacity => AttributeGroup::Opacity,
            GroupArg::Color => AttributeGroup::Color,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ArrangementArg {
    /// Collision-free directions for the declared --uv-size.
    Fibonacci,
    /// Uniform in the unit ball.
    Ball,
    /// Uniform in a thin outer shell of the unit ball.
    Shell,
    /// Gaussians stacked along a few fixed rays.
    Rays,
}

fn threshold(s: &str) -> Result<f32, String> {
    let v: f32 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

fn fraction(s: &str) -> Result<f32, String> {
    threshold(s)
}

fn positive(s: &str) -> Result<u32, String> {
    match s.parse::<u32>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Args, Debug, Clone)]
pub struct MapArgs {
    /// Map width (theta bins) and height (phi bins).
    #[arg(long, num_args = 2, value_names = ["M", "N"], value_parser = positive, default_values_t = [512, 512])]
    pub uv_size: Vec<u32>,

    /// Gaussians kept per pixel.
    #[arg(long, value_parser = positive, default_value_t = 1)]
    pub layers: u32,

    /// Gaussians with opacity at or below this are dropped first.
    #[arg(long, value_parser = threshold, default_value_t = 0.01)]
    pub opacity_threshold: f32,

    #[arg(long, value_enum, default_value_t = CenterArg::Centroid)]
    pub center_mode: CenterArg,
}

#[derive(Args, Debug, Clone)]
pub struct RigArgs {
    /// Cameras on the evaluation rig.
    #[arg(long, value_parser = positive, default_value_t = 88)]
    pub cameras: u32,

    /// Square image size of every view, px.
    #[arg(long, value_parser = positive, default_value_t = 256)]
    pub image_size: u32,
}

#[derive(Args, Debug, Clone)]
pub struct ReportArgs {
    /// Also write the key=value report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Write the report as JSON to this file.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub map: MapArgs,
    /// Store only occupied cells.
    #[arg(long)]
    pub sparse: bool,
    /// Normalize every attribute to [-1, 1] before writing.
    #[arg(long)]
    pub normalize: bool,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Args, Debug)]
pub struct InvertArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Report inconsistent cells (stored position outside its own pixel).
    #[arg(long)]
    pub check: bool,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Args, Debug)]
pub struct RoundtripArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub rig: RigArgs,
    /// Run once per layer count instead of --layers, e.g. --k-sweep 1 2 4.
    #[arg(long, num_args = 1.., value_parser = positive)]
    pub k_sweep: Option<Vec<u32>>,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// A .ply cloud or a UVGS1 map.
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub rig: RigArgs,
    /// Rig camera to render.
    #[arg(long, default_value_t = 0)]
    pub view: u32,
    /// Background color.
    #[arg(long, num_args = 3, value_names = ["R", "G", "B"], value_parser = fraction, default_values_t = [0.0, 0.0, 0.0])]
    pub background: Vec<f32>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    pub input: PathBuf,
    /// Write a PNG preview of layer 0 of this attribute group.
    #[arg(long, value_enum, requires = "preview_out")]
    pub preview: Option<GroupArg>,
    #[arg(long)]
    pub preview_out: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = ArrangementArg::Fibonacci)]
    pub arrangement: ArrangementArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Map size the fibonacci arrangement is made collision-free for.
    #[arg(long, num_args = 2, value_names = ["M", "N"], value_parser = positive, default_values_t = [512, 512])]
    pub uv_size: Vec<u32>,
    /// Number of rays for the rays arrangement.
    #[arg(long, value_parser = positive, default_value_t = 64)]
    pub rays: u32,
    #[arg(long, value_parser = fraction, default_value_t = 0.05)]
    pub opacity_min: f32,
    #[arg(long, value_parser = fraction, default_value_t = 1.0)]
    pub opacity_max: f32,
}
