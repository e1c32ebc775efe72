//! `UVGS1` binary container.
//!
//! Little-endian layout:
//!
//! ```text
//! "UVGS" | version u8 = 1 | flags u8 | reserved u16 = 0
//! M u32 | N u32 | K u32 | C u32
//! center 3 x f32 | radius f32 | ln s_min f32 | ln s_max f32
//! occupancy bitmask, ceil(M*N*K / 8) bytes, LSB first
//! payload
//! ```
//!
//! Flags: bit 0 normalized, bit 1 sparse payload, bit 2 three-channel
//! Super UVGS image. A dense payload is `M*N*K*C` f32 values in
//! `(v, u, layer, channel)` order. A sparse payload is a `u32` record count
//! followed by `(linear index u32, C x f32)` records in ascending index order.

use thiserror::Error;

use crate::map::{MapDims, UvgsMap, CHANNELS};

pub const MAGIC: &[u8; 4] = b"UVGS";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 48;

pub const FLAG_NORMALIZED: u8 = 1;
pub const FLAG_SPARSE: u8 = 1 << 1;
pub const FLAG_SUPER: u8 = 1 << 2;

/// Channel count of a Super UVGS image.
pub const SUPER_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    #[default]
    Dense,
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("bad magic: not a UVGS container")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported container: {0}")]
    Unsupported(String),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("payload truncated: need {needed} bytes, have {available}")]
    TruncatedPayload { needed: usize, available: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("occupancy mask disagrees with payload at cell {0}")]
    InconsistentOccupancy(usize),
    #[error("invalid value {value} at cell {cell}, channel {channel}")]
    InvalidValue {
        cell: usize,
        channel: usize,
        value: f32,
    },
}

struct Header {
    flags: u8,
    dims: MapDims,
    channels: u32,
    center: [f32; 3],
    radius: f32,
    scale_bounds: [f32; 2],
}

fn write_header(out: &mut Vec<u8>, h: &Header) {
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(h.flags);
    out.extend_from_slice(&0u16.to_le_bytes());
    for v in [h.dims.width, h.dims.height, h.dims.layers, h.channels] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in h
        .center
        .iter()
        .chain(std::iter::once(&h.radius))
        .chain(&h.scale_bounds)
    {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn mask_len(cells: usize) -> usize {
    cells.div_ceil(8)
}

fn write_mask(out: &mut Vec<u8>, occupancy: &[bool]) {
    let start = out.len();
    out.resize(start + mask_len(occupancy.len()), 0);
    for (i, _) in occupancy.iter().enumerate().filter(|(_, &o)| o) {
        out[start + i / 8] |= 1 << (i % 8);
    }
}

/// Serializes `map` into a `UVGS1` container.
pub fn serialize(map: &UvgsMap, layout: Layout) -> Vec<u8> {
    let mut flags = 0;
    if map.is_normalized() {
        flags |= FLAG_NORMALIZED;
    }
    if layout == Layout::Sparse {
        flags |= FLAG_SPARSE;
    }
    let cells = map.occupancy().len();
    let payload = match layout {
        Layout::Dense => cells * CHANNELS * 4,
        Layout::Sparse => 4 + map.occupied_count() * (4 + CHANNELS * 4),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + mask_len(cells) + payload);
    write_header(
        &mut out,
        &Header {
            flags,
            dims: map.dims(),
            channels: CHANNELS as u32,
            center: map.center(),
            radius: map.radius(),
            scale_bounds: map.scale_bounds(),
        },
    );
    write_mask(&mut out, map.occupancy());
    match layout {
        Layout::Dense => {
            for v in map.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Layout::Sparse => {
            out.extend_from_slice(&(map.occupied_count() as u32).to_le_bytes());
            for (i, cell) in map.occupied_cells() {
                out.extend_from_slice(&(i as u32).to_le_bytes());
                for v in cell {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    out
}

/// Serialized size without materialising the bytes.
pub fn serialized_len(map: &UvgsMap, layout: Layout) -> usize {
    let cells = map.occupancy().len();
    HEADER_LEN
        + mask_len(cells)
        + match layout {
            Layout::Dense => cells * CHANNELS * 4,
            Layout::Sparse => 4 + map.occupied_count() * (4 + CHANNELS * 4),
        }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let available = self.data.len() - self.pos;
        if n > available {
            return Err(CodecError::TruncatedPayload {
                needed: n,
                available,
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, CodecError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    /// Fails early if fewer than `count * size` bytes remain, before anything
    /// is allocated.
    fn require_items(&self, count: usize, size: usize) -> Result<(), CodecError> {
        self.require(count.saturating_mul(size))
    }

    fn require(&self, n: usize) -> Result<(), CodecError> {
        let available = self.data.len() - self.pos;
        if n > available {
            return Err(CodecError::TruncatedPayload {
                needed: n,
                available,
            });
        }
        Ok(())
    }
}

fn read_header(cur: &mut Cursor<'_>) -> Result<Header, CodecError> {
    if cur.data.len() < MAGIC.len() || &cur.data[..4] != MAGIC {
        return Err(CodecError::BadMagic);
    }
    cur.pos = 4;
    let fixed = cur.take(4)?;
    let (version, flags) = (fixed[0], fixed[1]);
    if version != VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    if flags & !(FLAG_NORMALIZED | FLAG_SPARSE | FLAG_SUPER) != 0 {
        return Err(CodecError::InvalidHeader(format!(
            "unknown flag bits {flags:#04x}"
        )));
    }
    if fixed[2] != 0 || fixed[3] != 0 {
        return Err(CodecError::InvalidHeader("reserved field is nonzero".into()));
    }
    let dims = MapDims::new(cur.u32()?, cur.u32()?, cur.u32()?);
    let channels = cur.u32()?;
    if dims.validate().is_err() {
        return Err(CodecError::InvalidHeader(format!(
            "bad dimensions {}x{}x{}",
            dims.width, dims.height, dims.layers
        )));
    }
    let center = [cur.f32()?, cur.f32()?, cur.f32()?];
    let radius = cur.f32()?;
    let scale_bounds = [cur.f32()?, cur.f32()?];
    if center.iter().any(|v| !v.is_finite()) || !(radius >= 0.0 && radius.is_finite()) {
        return Err(CodecError::InvalidHeader("bad center or radius".into()));
    }
    if scale_bounds.iter().any(|v| !v.is_finite()) || scale_bounds[0] > scale_bounds[1] {
        return Err(CodecError::InvalidHeader("bad scale bounds".into()));
    }
    Ok(Header {
        flags,
        dims,
        channels,
        center,
        radius,
        scale_bounds,
    })
}

fn read_mask(cur: &mut Cursor<'_>, cells: usize) -> Result<Vec<bool>, CodecError> {
    let bytes = cur.take(mask_len(cells))?;
    if cells % 8 != 0 && bytes[cells / 8] >> (cells % 8) != 0 {
        return Err(CodecError::InvalidHeader(
            "padding bits of the occupancy mask are set".into(),
        ));
    }
    Ok((0..cells).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
}

fn read_floats(cur: &mut Cursor<'_>, n: usize) -> Result<Vec<f32>, CodecError> {
    let bytes = cur.take(n.checked_mul(4).ok_or(CodecError::TruncatedPayload {
        needed: usize::MAX,
        available: cur.data.len() - cur.pos,
    })?)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn finish(cur: &Cursor<'_>) -> Result<(), CodecError> {
    match cur.data.len() - cur.pos {
        0 => Ok(()),
        extra => Err(CodecError::TrailingBytes(extra)),
    }
}

/// Parses a `UVGS1` container holding a 14-channel map.
pub fn deserialize(bytes: &[u8]) -> Result<UvgsMap, CodecError> {
    let mut cur = Cursor {
        data: bytes,
        pos: 0,
    };
    let header = read_header(&mut cur)?;
    if header.flags & FLAG_SUPER != 0 || header.channels != CHANNELS as u32 {
        return Err(CodecError::Unsupported(format!(
            "expected a {CHANNELS}-channel UVGS map, found {} channels",
            header.channels
        )));
    }
    let normalized = header.flags & FLAG_NORMALIZED != 0;
    let cells = header.dims.capacity() as usize;
    cur.require(mask_len(cells))?;
    let occupancy = read_mask(&mut cur, cells)?;

    let values = if header.flags & FLAG_SPARSE == 0 {
        cur.require_items(cells, CHANNELS * 4)?;
        read_floats(&mut cur, cells * CHANNELS)?
    } else {
        let count = cur.u32()? as usize;
        let record = 4 + CHANNELS * 4;
        cur.require_items(count, record)?;
        let mut values = vec![0.0f32; cells * CHANNELS];
        let mut written = vec![false; cells];
        let mut previous: Option<usize> = None;
        for _ in 0..count {
            let index = cur.u32()? as usize;
            if index >= cells || previous.is_some_and(|p| index <= p) || !occupancy[index] {
                return Err(CodecError::InconsistentOccupancy(index.min(cells)));
            }
            previous = Some(index);
            written[index] = true;
            for c in 0..CHANNELS {
                values[index * CHANNELS + c] = cur.f32()?;
            }
        }
        if let Some(missing) = (0..cells).find(|&i| occupancy[i] && !written[i]) {
            return Err(CodecError::InconsistentOccupancy(missing));
        }
        values
    };
    finish(&cur)?;
    validate_cells(&values, &occupancy, normalized)?;

    Ok(UvgsMap::from_parts(
        header.dims,
        values,
        occupancy,
        header.center,
        header.radius,
        normalized,
        header.scale_bounds,
    ))
}

fn validate_cells(values: &[f32], occupancy: &[bool], normalized: bool) -> Result<(), CodecError> {
    for (cell, (chunk, &occupied)) in values.chunks_exact(CHANNELS).zip(occupancy).enumerate() {
        if !occupied {
            if chunk.iter().any(|v| v.to_bits() != 0) {
                return Err(CodecError::InconsistentOccupancy(cell));
            }
            continue;
        }
        // an all-zero cell is a legal normalized value but never a real Gaussian
        if !normalized && chunk.iter().all(|&v| v == 0.0) {
            return Err(CodecError::InconsistentOccupancy(cell));
        }
        for (channel, &value) in chunk.iter().enumerate() {
            let bad = !value.is_finite() || (normalized && !(-1.0..=1.0).contains(&value));
            if bad {
                return Err(CodecError::InvalidValue {
                    cell,
                    channel,
                    value,
                });
            }
        }
    }
    Ok(())
}

/// A 3-channel Super UVGS image with values strictly inside `(-1, 1)`.
///
/// Stored in the same container with `C = 3`, `K = 1` and flag bit 2; the
/// occupancy mask is fully set and the frame metadata of the source map is
/// carried along so the decoded map can be denormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperUvgsImage {
    pub width: u32,
    pub height: u32,
    /// `(v, u, channel)` order.
    pub values: Vec<f32>,
    pub center: [f32; 3],
    pub radius: f32,
    pub scale_bounds: [f32; 2],
}

pub fn serialize_super(image: &SuperUvgsImage) -> Vec<u8> {
    let dims = MapDims::new(image.width, image.height, 1);
    let cells = dims.capacity() as usize;
    let mut out = Vec::with_capacity(HEADER_LEN + mask_len(cells) + image.values.len() * 4);
    write_header(
        &mut out,
        &Header {
            flags: FLAG_SUPER | FLAG_NORMALIZED,
            dims,
            channels: SUPER_CHANNELS as u32,
            center: image.center,
            radius: image.radius,
            scale_bounds: image.scale_bounds,
        },
    );
    write_mask(&mut out, &vec![true; cells]);
    for v in &image.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn deserialize_super(bytes: &[u8]) -> Result<SuperUvgsImage, CodecError> {
    let mut cur = Cursor {
        data: bytes,
        pos: 0,
    };
    let h = read_header(&mut cur)?;
    if h.flags & FLAG_SUPER == 0 || h.channels != SUPER_CHANNELS as u32 {
        return Err(CodecError::Unsupported(format!(
            "expected a {SUPER_CHANNELS}-channel Super UVGS image, found {} channels",
            h.channels
        )));
    }
    if h.flags & FLAG_SPARSE != 0 || h.dims.layers != 1 {
        return Err(CodecError::Unsupported(
            "Super UVGS images are single-layer and dense".into(),
        ));
    }
    let cells = h.dims.capacity() as usize;
    cur.require(mask_len(cells))?;
    let mask = read_mask(&mut cur, cells)?;
    if let Some(i) = mask.iter().position(|&o| !o) {
        return Err(CodecError::InconsistentOccupancy(i));
    }
    cur.require_items(cells, SUPER_CHANNELS * 4)?;
    let values = read_floats(&mut cur, cells * SUPER_CHANNELS)?;
    finish(&cur)?;
    if let Some(i) = values.iter().position(|v| !(v.abs() < 1.0)) {
        return Err(CodecError::InvalidValue {
            cell: i / SUPER_CHANNELS,
            channel: i % SUPER_CHANNELS,
            value: values[i],
        });
    }
    Ok(SuperUvgsImage {
        width: h.dims.width,
        height: h.dims.height,
        values,
        center: h.center,
        radius: h.radius,
        scale_bounds: h.scale_bounds,
    })
}
