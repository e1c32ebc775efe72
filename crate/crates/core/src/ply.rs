//! Binary little-endian PLY reader and writer for 3DGS checkpoints.

use thiserror::Error;

use crate::gaussian::{activate, deactivate, ActivationError, GaussianCloud, RawGaussian};

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("malformed PLY header: {0}")]
    MalformedHeader(String),
    #[error("vertex element is missing required property '{0}'")]
    MissingProperty(String),
    #[error("non-finite value in property '{property}' of vertex {vertex}")]
    NonFiniteValue { vertex: usize, property: String },
    #[error("unsupported PLY format '{0}' (only binary_little_endian 1.0 is accepted)")]
    UnsupportedFormat(String),
    #[error("PLY payload truncated: expected more data for element '{0}'")]
    Truncated(String),
    #[error("vertex {index}: {source}")]
    Activation {
        index: usize,
        source: ActivationError,
    },
}

const REQUIRED: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => f64::from(b[0] as i8),
            Self::U8 => f64::from(b[0]),
            Self::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Self::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Self::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum PropertyKind {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Property {
    name: String,
    kind: PropertyKind,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

fn split_header(bytes: &[u8]) -> Result<(&str, &[u8]), PlyError> {
    const END: &[u8] = b"end_header";
    let pos = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| PlyError::MalformedHeader("missing end_header".into()))?;
    let mut body = pos + END.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) != Some(&b'\n') {
        return Err(PlyError::MalformedHeader(
            "end_header not terminated by newline".into(),
        ));
    }
    let header = std::str::from_utf8(&bytes[..pos])
        .map_err(|_| PlyError::MalformedHeader("header is not valid UTF-8".into()))?;
    Ok((header, &bytes[body + 1..]))
}

fn parse_header(header: &str) -> Result<Vec<Element>, PlyError> {
    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(PlyError::MalformedHeader("missing 'ply' magic".into()));
    }
    let mut format_seen = false;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, version] => {
                if *fmt != "binary_little_endian" || *version != "1.0" {
                    return Err(PlyError::UnsupportedFormat(format!("{fmt} {version}")));
                }
                format_seen = true;
            }
            ["element", name, count] => {
                let count = count.parse().map_err(|_| {
                    PlyError::MalformedHeader(format!("bad element count '{count}'"))
                })?;
                elements.push(Element {
                    name: (*name).to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", count, item, name] => {
                let element = elements.last_mut().ok_or_else(|| {
                    PlyError::MalformedHeader("property before any element".into())
                })?;
                let (Some(count), Some(item)) = (Scalar::parse(count), Scalar::parse(item)) else {
                    return Err(PlyError::MalformedHeader(format!(
                        "bad list property types on '{name}'"
                    )));
                };
                element.properties.push(Property {
                    name: (*name).to_string(),
                    kind: PropertyKind::List { count, item },
                });
            }
            ["property", ty, name] => {
                let element = elements.last_mut().ok_or_else(|| {
                    PlyError::MalformedHeader("property before any element".into())
                })?;
                let ty = Scalar::parse(ty).ok_or_else(|| {
                    PlyError::MalformedHeader(format!("unknown property type '{ty}'"))
                })?;
                element.properties.push(Property {
                    name: (*name).to_string(),
                    kind: PropertyKind::Scalar(ty),
                });
            }
            _ => {
                return Err(PlyError::MalformedHeader(format!(
                    "unrecognised header line '{line}'"
                )))
            }
        }
    }
    if !format_seen {
        return Err(PlyError::MalformedHeader("missing format line".into()));
    }
    Ok(elements)
}

/// Cursor over the binary body.
struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, element: &str) -> Result<&'a [u8], PlyError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| PlyError::Truncated(element.to_string()))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn scalar(&mut self, ty: Scalar, element: &str) -> Result<f64, PlyError> {
        Ok(ty.read(self.take(ty.size(), element)?))
    }

    fn skip_property(&mut self, kind: &PropertyKind, element: &str) -> Result<(), PlyError> {
        match *kind {
            PropertyKind::Scalar(ty) => {
                self.take(ty.size(), element)?;
            }
            PropertyKind::List { count, item } => {
                let n = self.scalar(count, element)?;
                if !(n >= 0.0) {
                    return Err(PlyError::MalformedHeader(format!(
                        "negative list length in '{element}'"
                    )));
                }
                let bytes = (n as usize)
                    .checked_mul(item.size())
                    .ok_or_else(|| PlyError::Truncated(element.to_string()))?;
                self.take(bytes, element)?;
            }
        }
        Ok(())
    }
}

/// Parses the raw (unactivated) vertex records in file order.
pub fn parse_ply_raw(bytes: &[u8]) -> Result<Vec<RawGaussian>, PlyError> {
    let (header, body) = split_header(bytes)?;
    let elements = parse_header(header)?;
    let vertex_index = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| PlyError::MalformedHeader("no 'vertex' element".into()))?;
    let vertex = &elements[vertex_index];

    // slot in the vertex record for every property, None if it is a list
    let mut slots = [usize::MAX; 14];
    for (slot, name) in slots.iter_mut().zip(REQUIRED) {
        let idx = vertex
            .properties
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| PlyError::MissingProperty(name.to_string()))?;
        if !matches!(vertex.properties[idx].kind, PropertyKind::Scalar(_)) {
            return Err(PlyError::MalformedHeader(format!(
                "property '{name}' must be a scalar"
            )));
        }
        *slot = idx;
    }
    let rest_slots: Vec<usize> = vertex
        .properties
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            p.name.starts_with("f_rest_") && matches!(p.kind, PropertyKind::Scalar(_))
        })
        .map(|(i, _)| i)
        .collect();

    let mut reader = Reader { data: body, pos: 0 };
    for element in &elements[..vertex_index] {
        for _ in 0..element.count {
            for p in &element.properties {
                reader.skip_property(&p.kind, &element.name)?;
            }
        }
    }

    let fixed_stride: Option<usize> = vertex
        .properties
        .iter()
        .map(|p| match p.kind {
            PropertyKind::Scalar(ty) => Some(ty.size()),
            PropertyKind::List { .. } => None,
        })
        .sum();
    if let Some(stride) = fixed_stride {
        let needed = stride
            .checked_mul(vertex.count)
            .ok_or_else(|| PlyError::Truncated("vertex".into()))?;
        if body.len() - reader.pos < needed {
            return Err(PlyError::Truncated("vertex".into()));
        }
    }

    let mut out = Vec::with_capacity(if fixed_stride.is_some() { vertex.count } else { 0 });
    let mut values = vec![0.0f64; vertex.properties.len()];
    for v in 0..vertex.count {
        for (value, p) in values.iter_mut().zip(&vertex.properties) {
            match p.kind {
                PropertyKind::Scalar(ty) => {
                    *value = reader.scalar(ty, "vertex")?;
                    if !value.is_finite() {
                        return Err(PlyError::NonFiniteValue {
                            vertex: v,
                            property: p.name.clone(),
                        });
                    }
                }
                PropertyKind::List { .. } => reader.skip_property(&p.kind, "vertex")?,
            }
        }
        let get = |k: usize| values[slots[k]] as f32;
        out.push(RawGaussian {
            position: [get(0), get(1), get(2)],
            f_dc: [get(3), get(4), get(5)],
            opacity_logit: get(6),
            log_scale: [get(7), get(8), get(9)],
            rotation: [get(10), get(11), get(12), get(13)],
            f_rest: rest_slots.iter().map(|&i| values[i] as f32).collect(),
        });
    }
    Ok(out)
}

/// Parses a 3DGS PLY into activated Gaussians, preserving file order.
pub fn parse_ply(bytes: &[u8]) -> Result<GaussianCloud, PlyError> {
    let gaussians = parse_ply_raw(bytes)?
        .iter()
        .enumerate()
        .map(|(index, raw)| activate(raw).map_err(|source| PlyError::Activation { index, source }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GaussianCloud::new(gaussians))
}

/// Writes the deactivated attributes of `cloud` as a binary PLY.
pub fn write_ply(cloud: &GaussianCloud) -> Vec<u8> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    for name in ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity"] {
        header.push_str(&format!("property float {name}\n"));
    }
    for name in ["scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"] {
        header.push_str(&format!("property float {name}\n"));
    }
    header.push_str("end_header\n");

    let mut out = Vec::with_capacity(header.len() + cloud.len() * 14 * 4);
    out.extend_from_slice(header.as_bytes());
    for g in cloud.gaussians() {
        let raw = deactivate(g);
        let record = raw
            .position
            .iter()
            .chain(&raw.f_dc)
            .chain(std::iter::once(&raw.opacity_logit))
            .chain(&raw.log_scale)
            .chain(&raw.rotation);
        for v in record {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}
