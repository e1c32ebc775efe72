//! Spherical UV maps for 3D Gaussian Splatting scenes.
//!
//! A cloud of Gaussians is projected onto a `M x N x K` grid around its
//! center: each pixel keeps its `K` most opaque Gaussians, one per layer, as
//! 14 raw attributes. The map can be inverted back into a cloud, normalised,
//! serialised as a `UVGS1` container and rendered for comparison.

pub mod codec;
pub mod gaussian;
pub mod inverse;
pub mod map;
pub mod ply;
pub mod preview;
pub mod render;
pub mod spherical;
pub mod synth;

pub use codec::{deserialize, serialize, CodecError, Layout, SuperUvgsImage};
pub use gaussian::{
    activate, deactivate, threshold_opacity, CenterMode, Gaussian, GaussianCloud, RawGaussian,
};
pub use inverse::{reconstruct_cloud, roundtrip_report, RoundtripReport};
pub use map::{compare_sizes, AttributeGroup, MapDims, MapError, OccupancyStats, UvgsMap};
pub use ply::{parse_ply, write_ply, PlyError};
pub use preview::{export_preview, preview, PreviewImage};
pub use render::{fidelity_score, make_rig, psnr, render, Camera, RenderedImage};
pub use spherical::{map_cloud, SphericalCoord, UvIndex};
pub use synth::{synth_cloud, Arrangement, SynthSpec};
