//! On-disk formats.
//!
//! Volumes are a JSON header (`format: "vvol"`) next to a headerless raw file of
//! little-endian `f32`s. Point sets are a single JSON document (`format: "vpts"`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{Point, PointSet};
use crate::volume::{Coordinate, Dims, Volume3};

pub const VOLUME_FORMAT: &str = "vvol";
pub const POINTS_FORMAT: &str = "vpts";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct VolumeHeader {
    format: String,
    version: u32,
    dims: [usize; 3],
    dtype: String,
    order: String,
    voxel_size_nm: f64,
    data: String,
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Checks the `format`/`version` envelope before the body is parsed so that a
/// newer file is reported as unsupported rather than malformed.
fn check_envelope(path: &Path, value: &serde_json::Value, format: &str) -> Result<()> {
    let found = value.get("format").and_then(|f| f.as_str()).unwrap_or("");
    if found != format {
        return Err(Error::Unsupported {
            what: "format",
            found: format!("{found:?} in {} (expected {format:?})", path.display()),
        });
    }
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => Ok(()),
        other => Err(Error::Unsupported {
            what: "version",
            found: format!("{other:?} in {}", path.display()),
        }),
    }
}

fn parse_enveloped<T: DeserializeOwned>(path: &Path, format: &str) -> Result<T> {
    let value: serde_json::Value = read_json(path)?;
    check_envelope(path, &value, format)?;
    serde_json::from_value(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Header path for a volume prefix: `out/vol` → `out/vol.json`.
pub fn volume_header_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, ".json")
}

/// `labels` → `labels.json`; paths already ending in `.json` are kept.
pub fn with_json(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "json") {
        path.to_path_buf()
    } else {
        with_suffix(path, ".json")
    }
}

pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `path` (the JSON header) and the raw data beside it, named after the
/// header with a `.raw` extension.
pub fn save_volume(volume: &Volume3, path: &Path) -> Result<()> {
    let raw_path = path.with_extension("raw");
    let raw_name = raw_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::invalid(format!("unusable volume path {}", path.display())))?
        .to_string();
    let mut bytes = Vec::with_capacity(volume.data().len() * 4);
    for v in volume.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&raw_path, bytes).map_err(|e| Error::io(&raw_path, e))?;
    let header = VolumeHeader {
        format: VOLUME_FORMAT.into(),
        version: FORMAT_VERSION,
        dims: volume.dims().as_array(),
        dtype: "f32le".into(),
        order: "x-fastest".into(),
        voxel_size_nm: volume.voxel_size_nm(),
        data: raw_name,
    };
    write_json(path, &header)
}

pub fn load_volume(path: &Path) -> Result<Volume3> {
    let header: VolumeHeader = parse_enveloped(path, VOLUME_FORMAT)?;
    if header.dtype != "f32le" {
        return Err(Error::Unsupported {
            what: "dtype",
            found: header.dtype,
        });
    }
    if header.order != "x-fastest" {
        return Err(Error::Unsupported {
            what: "order",
            found: header.order,
        });
    }
    let [nx, ny, nz] = header.dims;
    let dims = Dims::new(nx, ny, nz);
    dims.validate()?;
    let raw_path = path.parent().unwrap_or_else(|| Path::new("")).join(&header.data);
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let expected = dims.len() as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: raw_path,
            expected,
            found: bytes.len() as u64,
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Volume3::from_data(dims, data)?.with_voxel_size(header.voxel_size_nm)
}

#[derive(Debug, Serialize, Deserialize)]
struct RawPoint {
    x: i64,
    y: i64,
    z: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence: Option<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PointsFile {
    format: String,
    version: u32,
    points: Vec<RawPoint>,
}

pub fn points_to_json(points: &PointSet) -> serde_json::Value {
    let file = PointsFile {
        format: POINTS_FORMAT.into(),
        version: FORMAT_VERSION,
        points: points
            .iter()
            .map(|p| RawPoint {
                x: p.position.x as i64,
                y: p.position.y as i64,
                z: p.position.z as i64,
                confidence: p.confidence,
            })
            .collect(),
    };
    serde_json::to_value(file).expect("point set serializes")
}

pub fn save_points(points: &PointSet, path: &Path) -> Result<()> {
    points.validate()?;
    write_json(path, &points_to_json(points))
}

pub fn load_points(path: &Path) -> Result<PointSet> {
    let file: PointsFile = parse_enveloped(path, POINTS_FORMAT)?;
    let mut out = Vec::with_capacity(file.points.len());
    for (i, p) in file.points.into_iter().enumerate() {
        if p.x < 0 || p.y < 0 || p.z < 0 {
            return Err(Error::invalid(format!(
                "{}: point {i} has negative coordinate ({}, {}, {})",
                path.display(),
                p.x,
                p.y,
                p.z
            )));
        }
        out.push(Point {
            position: Coordinate::new(p.x as usize, p.y as usize, p.z as usize),
            confidence: p.confidence,
        });
    }
    let set = PointSet::new(out);
    set.validate()?;
    Ok(set)
}
