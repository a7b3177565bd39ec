//! Raw volume and mask files.
//!
//! A volume named `lesion` is stored as `lesion.json` (header) plus
//! `lesion.bin` (little-endian buffer). Images use `f32`, masks `u8` holding
//! only 0 or 1. Header: `{"dims":[nx,ny,nz],"spacing":[sx,sy,sz],"dtype":"f32"}`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Dims, ImageVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    U8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub dtype: DType,
}

/// Resolves `name`, `name.json` or `name.bin` to the `(json, bin)` pair.
pub fn file_pair(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("bin") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut json = stem.clone().into_os_string();
    json.push(".json");
    let mut bin = stem.into_os_string();
    bin.push(".bin");
    (json.into(), bin.into())
}

/// Writes through a sibling temp file and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_header(json: &Path, expect: DType) -> Result<(Dims, [f64; 3])> {
    let text = fs::read_to_string(json).map_err(|e| Error::io(json, e))?;
    let header: Header = serde_json::from_str(&text).map_err(|e| Error::Header {
        path: json.to_path_buf(),
        message: e.to_string(),
    })?;
    let bad = |message: String| Error::Header {
        path: json.to_path_buf(),
        message,
    };
    if header.dtype != expect {
        return Err(bad(format!(
            "dtype {:?}, expected {:?}",
            header.dtype, expect
        )));
    }
    if header.dims.len() != 3 || header.spacing.len() != 3 {
        return Err(bad("dims and spacing must have three entries".into()));
    }
    let dims = Dims::new(header.dims[0], header.dims[1], header.dims[2])?;
    let spacing = [header.spacing[0], header.spacing[1], header.spacing[2]];
    if !spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(Error::InvalidSpacing(spacing));
    }
    Ok((dims, spacing))
}

fn write_header(json: &Path, dims: Dims, spacing: [f64; 3], dtype: DType) -> Result<()> {
    let header = Header {
        dims: dims.0.to_vec(),
        spacing: spacing.to_vec(),
        dtype,
    };
    let text = serde_json::to_string(&header).expect("header serializes");
    write_atomic(json, text.as_bytes())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<ImageVolume> {
    let (json, bin) = file_pair(path.as_ref());
    let (dims, spacing) = read_header(&json, DType::F32)?;
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() % 4 != 0 || bytes.len() / 4 != dims.len() {
        return Err(Error::LengthMismatch {
            path: bin,
            expected: dims.len(),
            found: bytes.len() / 4,
        });
    }
    let voxels = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    ImageVolume::new(dims, spacing, voxels)
}

/// Saves intensities as `f32`; values that are not exactly representable
/// are rounded.
pub fn save_volume(v: &ImageVolume, path: impl AsRef<Path>) -> Result<()> {
    let (json, bin) = file_pair(path.as_ref());
    let mut bytes = Vec::with_capacity(v.voxels().len() * 4);
    for &x in v.voxels() {
        bytes.extend_from_slice(&(x as f32).to_le_bytes());
    }
    write_atomic(&bin, &bytes)?;
    write_header(&json, v.dims(), v.spacing(), DType::F32)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<(BinaryMask, [f64; 3])> {
    let (json, bin) = file_pair(path.as_ref());
    let (dims, spacing) = read_header(&json, DType::U8)?;
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() != dims.len() {
        return Err(Error::LengthMismatch {
            path: bin,
            expected: dims.len(),
            found: bytes.len(),
        });
    }
    let mut voxels = Vec::with_capacity(bytes.len());
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            0 => voxels.push(false),
            1 => voxels.push(true),
            other => {
                return Err(Error::Header {
                    path: bin,
                    message: format!("mask byte {other} at {i} is not 0/1"),
                })
            }
        }
    }
    Ok((BinaryMask::new(dims, voxels)?, spacing))
}

pub fn save_mask(m: &BinaryMask, spacing: [f64; 3], path: impl AsRef<Path>) -> Result<()> {
    let (json, bin) = file_pair(path.as_ref());
    let bytes: Vec<u8> = m.voxels().iter().map(|&v| v as u8).collect();
    write_atomic(&bin, &bytes)?;
    write_header(&json, m.dims(), spacing, DType::U8)
}
