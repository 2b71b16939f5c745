//! The `OCCV` v1 on-disk container.
//!
//! Layout:
//!
//! | bytes        | content                                        |
//! |--------------|------------------------------------------------|
//! | `0..4`       | magic `OCCV`                                   |
//! | `4..8`       | header length `H`, `u32` little-endian          |
//! | `8..8+H`     | UTF-8 JSON header                              |
//! | `8+H..`      | raw little-endian payload in grid linear order |
//!
//! Header keys: `version`, `kind` (`occ` | `flow` | `mask` | `feat`), `dims`,
//! `origin`, `voxel_size`, `num_classes`, `free_class`, `channels` (feat
//! only) and `dtype` (`u8` | `f32` | `f64`). Labels and masks are one byte
//! per voxel, flow is two components per voxel, features are `channels`
//! components per voxel. Writers always emit `f64` for float payloads;
//! readers also accept `f32`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    FeatureGrid, FlowField, GridSpec, OccupancyGrid, VoxelMask, DEFAULT_FREE_CLASS,
    DEFAULT_NUM_CLASSES,
};

pub const MAGIC: [u8; 4] = *b"OCCV";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Container {
    Occupancy(OccupancyGrid),
    Flow(FlowField),
    Mask(VoxelMask),
    Features(FeatureGrid),
}

#[derive(Debug, Clone, Copy)]
pub enum ContainerRef<'a> {
    Occupancy(&'a OccupancyGrid),
    Flow(&'a FlowField),
    Mask(&'a VoxelMask),
    Features(&'a FeatureGrid),
}

impl<'a> From<&'a OccupancyGrid> for ContainerRef<'a> {
    fn from(v: &'a OccupancyGrid) -> Self {
        ContainerRef::Occupancy(v)
    }
}

impl<'a> From<&'a FlowField> for ContainerRef<'a> {
    fn from(v: &'a FlowField) -> Self {
        ContainerRef::Flow(v)
    }
}

impl<'a> From<&'a VoxelMask> for ContainerRef<'a> {
    fn from(v: &'a VoxelMask) -> Self {
        ContainerRef::Mask(v)
    }
}

impl<'a> From<&'a FeatureGrid> for ContainerRef<'a> {
    fn from(v: &'a FeatureGrid) -> Self {
        ContainerRef::Features(v)
    }
}

impl<'a> From<&'a Container> for ContainerRef<'a> {
    fn from(v: &'a Container) -> Self {
        match v {
            Container::Occupancy(g) => ContainerRef::Occupancy(g),
            Container::Flow(g) => ContainerRef::Flow(g),
            Container::Mask(g) => ContainerRef::Mask(g),
            Container::Features(g) => ContainerRef::Features(g),
        }
    }
}

impl Container {
    pub fn kind_name(&self) -> &'static str {
        ContainerRef::from(self).kind().name()
    }

    pub fn into_occupancy(self) -> Result<OccupancyGrid> {
        match self {
            Container::Occupancy(g) => Ok(g),
            other => Err(Error::KindMismatch { expected: "occ", found: other.kind_name() }),
        }
    }

    pub fn into_flow(self) -> Result<FlowField> {
        match self {
            Container::Flow(g) => Ok(g),
            other => Err(Error::KindMismatch { expected: "flow", found: other.kind_name() }),
        }
    }

    pub fn into_mask(self) -> Result<VoxelMask> {
        match self {
            Container::Mask(g) => Ok(g),
            other => Err(Error::KindMismatch { expected: "mask", found: other.kind_name() }),
        }
    }

    pub fn into_features(self) -> Result<FeatureGrid> {
        match self {
            Container::Features(g) => Ok(g),
            other => Err(Error::KindMismatch { expected: "feat", found: other.kind_name() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Occ,
    Flow,
    Mask,
    Feat,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Occ => "occ",
            Kind::Flow => "flow",
            Kind::Mask => "mask",
            Kind::Feat => "feat",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Dtype {
    U8,
    F32,
    F64,
}

impl Dtype {
    fn name(self) -> &'static str {
        match self {
            Dtype::U8 => "u8",
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    kind: Kind,
    dims: Vec<usize>,
    origin: [f64; 3],
    voxel_size: f64,
    num_classes: u8,
    free_class: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channels: Option<usize>,
    dtype: Dtype,
}

impl ContainerRef<'_> {
    fn kind(&self) -> Kind {
        match self {
            ContainerRef::Occupancy(_) => Kind::Occ,
            ContainerRef::Flow(_) => Kind::Flow,
            ContainerRef::Mask(_) => Kind::Mask,
            ContainerRef::Features(_) => Kind::Feat,
        }
    }

    fn spec(&self) -> &GridSpec {
        match self {
            ContainerRef::Occupancy(g) => g.spec(),
            ContainerRef::Flow(g) => g.spec(),
            ContainerRef::Mask(g) => g.spec(),
            ContainerRef::Features(g) => g.spec(),
        }
    }

    fn header(&self) -> Header {
        let spec = self.spec();
        let (num_classes, free_class) = match self {
            ContainerRef::Occupancy(g) => (g.num_classes(), g.free_class()),
            _ => (DEFAULT_NUM_CLASSES, DEFAULT_FREE_CLASS),
        };
        let (channels, dtype) = match self {
            ContainerRef::Occupancy(_) | ContainerRef::Mask(_) => (None, Dtype::U8),
            ContainerRef::Flow(_) => (None, Dtype::F64),
            ContainerRef::Features(g) => (Some(g.channels()), Dtype::F64),
        };
        Header {
            version: VERSION,
            kind: self.kind(),
            dims: spec.dims.to_vec(),
            origin: spec.origin,
            voxel_size: spec.voxel_size,
            num_classes,
            free_class,
            channels,
            dtype,
        }
    }
}

/// Serializes an object to container bytes.
pub fn encode<'a>(item: impl Into<ContainerRef<'a>>) -> Vec<u8> {
    let item = item.into();
    let header = serde_json::to_vec(&item.header()).expect("header serialization cannot fail");
    let mut out = Vec::with_capacity(8 + header.len() + item.spec().len() * 16);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    match item {
        ContainerRef::Occupancy(g) => out.extend_from_slice(g.labels()),
        ContainerRef::Mask(m) => out.extend(m.bits().iter().map(|&b| b as u8)),
        ContainerRef::Flow(f) => {
            for v in f.values().iter().flatten() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        ContainerRef::Features(f) => {
            for v in f.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Parses container bytes, validating every header field against the payload.
pub fn decode(bytes: &[u8]) -> Result<Container> {
    if bytes.len() < 8 {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(Error::BadMagic { found: bytes[..4].try_into().unwrap() });
        }
        return Err(Error::Truncated { expected: 8, found: bytes.len() });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header_end = 8usize
        .checked_add(header_len)
        .ok_or_else(|| Error::Header("header length overflows".into()))?;
    if bytes.len() < header_end {
        return Err(Error::Truncated { expected: header_end, found: bytes.len() });
    }
    let raw: serde_json::Value = serde_json::from_slice(&bytes[8..header_end])
        .map_err(|e| Error::Header(e.to_string()))?;
    if let Some(version) = raw.get("version").and_then(|v| v.as_u64()) {
        if version != VERSION as u64 {
            return Err(Error::VersionMismatch { found: version as u32, expected: VERSION });
        }
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| Error::Header(e.to_string()))?;

    let dtype_ok = match header.kind {
        Kind::Occ | Kind::Mask => header.dtype == Dtype::U8,
        Kind::Flow | Kind::Feat => matches!(header.dtype, Dtype::F32 | Dtype::F64),
    };
    if !dtype_ok {
        return Err(Error::DtypeMismatch {
            kind: header.kind.name().into(),
            dtype: header.dtype.name().into(),
        });
    }
    let dims: [usize; 3] = header
        .dims
        .as_slice()
        .try_into()
        .map_err(|_| Error::DimsMismatch(format!("expected 3 dims, found {}", header.dims.len())))?;
    if dims.contains(&0) {
        return Err(Error::DimsMismatch(format!("dims must be positive, found {dims:?}")));
    }
    let spec = GridSpec::new(header.origin, header.voxel_size, dims)?;

    let components = match header.kind {
        Kind::Occ | Kind::Mask => 1,
        Kind::Flow => 2,
        Kind::Feat => match header.channels {
            Some(c) if c >= 1 => c,
            Some(_) => return Err(Error::DimsMismatch("channels must be >= 1".into())),
            None => return Err(Error::Header("feat container requires `channels`".into())),
        },
    };
    let expected = spec
        .len()
        .checked_mul(components)
        .and_then(|n| n.checked_mul(header.dtype.size()))
        .ok_or_else(|| Error::DimsMismatch("payload size overflows".into()))?;
    let payload = &bytes[header_end..];
    if payload.len() < expected {
        return Err(Error::Truncated { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(Error::TrailingData { extra: payload.len() - expected });
    }

    Ok(match header.kind {
        Kind::Occ => {
            Container::Occupancy(OccupancyGrid::new(spec, payload.to_vec(), header.num_classes, header.free_class)?)
        }
        Kind::Mask => {
            if let Some((index, &value)) = payload.iter().enumerate().find(|(_, &b)| b > 1) {
                return Err(Error::InvalidMaskByte { value, index });
            }
            Container::Mask(VoxelMask::new(spec, payload.iter().map(|&b| b == 1).collect())?)
        }
        Kind::Flow => {
            let flat = decode_floats(payload, header.dtype)?;
            let flow = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
            Container::Flow(FlowField::new(spec, flow)?)
        }
        Kind::Feat => Container::Features(FeatureGrid::new(spec, components, decode_floats(payload, header.dtype)?)?),
    })
}

fn decode_floats(payload: &[u8], dtype: Dtype) -> Result<Vec<f64>> {
    let values: Vec<f64> = match dtype {
        Dtype::F64 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::U8 => unreachable!("u8 float payload rejected earlier"),
    };
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(values)
}

pub fn save_container<'a>(path: impl AsRef<Path>, item: impl Into<ContainerRef<'a>>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(item)).map_err(|e| Error::io(path, e))
}

pub fn load_container(path: impl AsRef<Path>) -> Result<Container> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
