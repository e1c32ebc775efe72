//! Target-independent state behind the browser demo.

use uvgs::codec::{self, Layout};
use uvgs::render::{make_rig_with, render, RigSpec};
use uvgs::synth::{synth_cloud, Arrangement, SynthSpec};
use uvgs::{
    map_cloud, parse_ply, preview, psnr, reconstruct_cloud, AttributeGroup, GaussianCloud,
    MapDims, UvgsMap,
};

/// A loaded cloud, its current map and the reconstruction of that map.
pub struct Session {
    cloud: GaussianCloud,
    map: UvgsMap,
    reconstructed: GaussianCloud,
}

/// One rig view of the original and the reconstruction.
pub struct Comparison {
    pub size: u32,
    pub original: Vec<u8>,
    pub reconstructed: Vec<u8>,
    pub psnr: f64,
}

pub fn arrangement(name: &str, width: u32, height: u32) -> Result<Arrangement, String> {
    match name {
        "fibonacci" => Ok(Arrangement::FibonacciSphere {
            uv_width: width,
            uv_height: height,
        }),
        "ball" => Ok(Arrangement::UniformBall {
            inner_fraction: 0.0,
        }),
        "shell" => Ok(Arrangement::UniformBall {
            inner_fraction: 0.95,
        }),
        "rays" => Ok(Arrangement::FixedDirections { directions: 64 }),
        other => Err(format!("unknown arrangement '{other}'")),
    }
}

impl Session {
    pub fn synthetic(count: usize, arrangement: Arrangement, seed: u64) -> Self {
        Self::from_cloud(synth_cloud(&SynthSpec::new(count, arrangement, seed)))
    }

    pub fn from_ply(bytes: &[u8]) -> Result<Self, String> {
        parse_ply(bytes)
            .map(Self::from_cloud)
            .map_err(|e| e.to_string())
    }

    fn from_cloud(cloud: GaussianCloud) -> Self {
        let map = UvgsMap::empty(MapDims::new(1, 1, 1)).expect("1x1x1 is valid");
        Self {
            cloud,
            map,
            reconstructed: GaussianCloud::default(),
        }
    }

    pub fn cloud_len(&self) -> usize {
        self.cloud.len()
    }

    pub fn map(&self) -> &UvgsMap {
        &self.map
    }

    pub fn reconstructed_len(&self) -> usize {
        self.reconstructed.len()
    }

    /// Rebuilds the map and its reconstruction.
    pub fn remap(&mut self, width: u32, height: u32, layers: u32, threshold: f32) -> Result<(), String> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(format!("threshold {threshold} is not in [0, 1]"));
        }
        self.map = map_cloud(&self.cloud, MapDims::new(width, height, layers), threshold)
            .map_err(|e| e.to_string())?;
        self.reconstructed = reconstruct_cloud(&self.map).map_err(|e| e.to_string())?;
        Ok(())
    }

    /// RGBA preview of layer 0 of `group`.
    pub fn preview_rgba(&self, group: &str) -> Result<Vec<u8>, String> {
        let group: AttributeGroup = group.parse()?;
        Ok(preview(&self.map, group).to_rgba())
    }

    pub fn compare(&self, view: u32, cameras: u32, size: u32) -> Result<Comparison, String> {
        if size == 0 || cameras == 0 {
            return Err("rig needs at least one camera and one pixel".into());
        }
        let rig = make_rig_with(
            self.cloud.center(),
            self.cloud.radius(),
            &RigSpec {
                count: cameras as usize,
                image_size: size,
                ..RigSpec::default()
            },
        );
        let cam = rig
            .get(view as usize)
            .ok_or_else(|| format!("view {view} out of range"))?;
        let a = render(&self.cloud, cam, [0.0; 3]);
        let b = render(&self.reconstructed, cam, [0.0; 3]);
        let db = psnr(&a, &b).map_err(|e| e.to_string())?;
        Ok(Comparison {
            size,
            original: a.to_rgba8(),
            reconstructed: b.to_rgba8(),
            psnr: db,
        })
    }

    /// The current map as a UVGS1 container.
    pub fn container(&self, sparse: bool, normalize: bool) -> Result<Vec<u8>, String> {
        let layout = if sparse { Layout::Sparse } else { Layout::Dense };
        if normalize {
            let map = self.map.normalize().map_err(|e| e.to_string())?;
            Ok(codec::serialize(&map, layout))
        } else {
            Ok(codec::serialize(&self.map, layout))
        }
    }
}
