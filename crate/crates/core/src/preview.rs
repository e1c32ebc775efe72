//! 8-bit previews of one attribute group of layer 0.

use std::io::Write;
use std::path::Path;

use crate::map::{AttributeGroup, UvgsMap};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreviewImage {
    pub width: u32,
    pub height: u32,
    /// 1 for opacity, 3 otherwise.
    pub channels: u8,
    /// Row-major, `channels` bytes per pixel.
    pub data: Vec<u8>,
}

impl PreviewImage {
    /// Expands to RGBA for canvas-style consumers.
    pub fn to_rgba(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width as usize * self.height as usize * 4);
        for px in self.data.chunks_exact(self.channels as usize) {
            match px {
                [g] => out.extend_from_slice(&[*g, *g, *g, 255]),
                [r, g, b] => out.extend_from_slice(&[*r, *g, *b, 255]),
                _ => unreachable!("previews have 1 or 3 channels"),
            }
        }
        out
    }

    pub fn write_png<W: Write>(&self, w: W) -> Result<(), png::EncodingError> {
        let mut encoder = png::Encoder::new(w, self.width, self.height);
        encoder.set_color(if self.channels == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header()?;
        writer.write_image_data(&self.data)?;
        writer.finish()
    }
}

fn to_byte(t: f64) -> u8 {
    (t.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Affine map of the group's values to `[0, 1]` for display.
///
/// Normalized maps are shown as `[-1, 1] -> [0, 1]`. For raw maps, position
/// is taken relative to the bounding sphere, scale spans the log-range of the
/// occupied cells, and opacity/color are already unit-range. Rotation shows
/// the vector part `(x, y, z)`.
fn display_transform(map: &UvgsMap, group: AttributeGroup) -> impl Fn(usize, f32) -> f64 + '_ {
    let normalized = map.is_normalized();
    let center = map.center().map(f64::from);
    let radius = f64::from(map.radius());
    let (lo, hi) = if group == AttributeGroup::Scale && !normalized {
        map.occupied_cells()
            .flat_map(|(_, c)| c[7..10].iter().map(|&s| f64::from(s).ln()))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    } else {
        (0.0, 0.0)
    };
    move |channel: usize, value: f32| {
        let v = f64::from(value);
        if normalized {
            return 0.5 * (v + 1.0);
        }
        match group {
            AttributeGroup::Position => {
                if radius > 0.0 {
                    0.5 * ((v - center[channel]) / radius + 1.0)
                } else {
                    0.5
                }
            }
            AttributeGroup::Rotation => 0.5 * (v + 1.0),
            AttributeGroup::Scale => {
                if hi > lo {
                    (v.ln() - lo) / (hi - lo)
                } else {
                    0.5
                }
            }
            AttributeGroup::Opacity | AttributeGroup::Color => v,
        }
    }
}

/// Rasterises layer 0 of `group`; empty cells are black.
pub fn preview(map: &UvgsMap, group: AttributeGroup) -> PreviewImage {
    let dims = map.dims();
    let channels: Vec<usize> = match group {
        AttributeGroup::Rotation => vec![4, 5, 6],
        g => g.channels().collect(),
    };
    let transform = display_transform(map, group);
    let pixels = dims.width as usize * dims.height as usize;
    let mut data = vec![0u8; pixels * channels.len()];
    for pixel in 0..pixels {
        let linear = pixel * dims.layers as usize;
        if let Some(cell) = map.cell_at(linear) {
            for (k, &c) in channels.iter().enumerate() {
                data[pixel * channels.len() + k] = to_byte(transform(c, cell[c]));
            }
        }
    }
    PreviewImage {
        width: dims.width,
        height: dims.height,
        channels: channels.len() as u8,
        data,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PreviewError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Png(#[from] png::EncodingError),
}

/// Writes [`preview`] as a PNG file.
pub fn export_preview(
    map: &UvgsMap,
    group: AttributeGroup,
    path: impl AsRef<Path>,
) -> Result<(), PreviewError> {
    let file = std::fs::File::create(path)?;
    preview(map, group).write_png(std::io::BufWriter::new(file))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MapDims;
    use crate::spherical::UvIndex;

    fn cell(opacity: f32, color: [f32; 3]) -> [f32; 14] {
        [
            0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, opacity, color[0], color[1], color[2],
        ]
    }

    #[test]
    fn empty_map_is_black() {
        let map = UvgsMap::empty(MapDims::new(5, 3, 2)).unwrap();
        for g in AttributeGroup::ALL {
            let img = preview(&map, g);
            assert_eq!((img.width, img.height), (5, 3));
            assert!(img.data.iter().all(|&b| b == 0));
        }
    }

    #[test]
    fn single_opaque_cell() {
        let mut map = UvgsMap::empty(MapDims::new(4, 4, 1)).unwrap();
        map.set_cell(UvIndex { u: 0, v: 0, layer: 0 }, &cell(1.0, [0.2, 0.4, 0.6]));
        let img = preview(&map, AttributeGroup::Opacity);
        assert_eq!(img.channels, 1);
        assert_eq!(img.data[0], 255);
        assert!(img.data[1..].iter().all(|&b| b == 0));
        assert_eq!(img.to_rgba()[..4], [255, 255, 255, 255]);
    }

    #[test]
    fn only_layer_zero_is_shown() {
        let mut map = UvgsMap::empty(MapDims::new(2, 2, 2)).unwrap();
        map.set_cell(UvIndex { u: 1, v: 1, layer: 1 }, &cell(1.0, [1.0; 3]));
        assert!(preview(&map, AttributeGroup::Color).data.iter().all(|&b| b == 0));
    }
}
