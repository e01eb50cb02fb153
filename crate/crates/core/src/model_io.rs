//! Binary model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes        | field                                      |
//! |--------------|--------------------------------------------|
//! | 4            | magic `SHEX`                               |
//! | 4            | format version, `u32` (currently 1)        |
//! | 8 × 3        | `d`, `q`, `s` as `u64`                     |
//! | 8 × s·d      | sample points, row-major `f64`             |
//! | 8 × s        | weights `z`, `f64`                         |
//! | 8            | FNV-1a 64 checksum of the payload          |
//!
//! The payload covered by the checksum is everything between the version
//! field and the checksum (the `d, q, s` header, points and weights).

use std::hash::Hasher;
use std::io::Write;
use std::path::Path;

use fnv::FnvHasher;

use crate::error::{Error, Result};
use crate::harmonic::{ProblemParams, MAX_DEGREE};
use crate::regression::ExpansionModel;
use crate::sampling::SampleSet;

pub const MAGIC: &[u8; 4] = b"SHEX";
pub const FORMAT_VERSION: u32 = 1;

const PREAMBLE: usize = 8;
const HEADER: usize = 24;

fn checksum(payload: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(payload);
    h.finish()
}

pub fn serialize_model(model: &ExpansionModel) -> Vec<u8> {
    let params = model.params();
    let points = model.points();
    let s = points.len();
    let mut out = Vec::with_capacity(PREAMBLE + HEADER + 8 * (s * params.d() + s) + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [params.d(), params.q(), s] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for x in points.coords().iter().chain(model.weights()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let sum = checksum(&out[PREAMBLE..]);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

fn read_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

pub fn deserialize_model(bytes: &[u8]) -> Result<ExpansionModel> {
    if bytes.len() < PREAMBLE {
        return Err(Error::format(format!(
            "truncated preamble: {} of {PREAMBLE} bytes",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format("bad magic bytes, expected \"SHEX\""));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    if bytes.len() < PREAMBLE + HEADER {
        return Err(Error::format("truncated header: d, q, s"));
    }
    let d = read_u64(bytes, PREAMBLE);
    let q = read_u64(bytes, PREAMBLE + 8);
    let s = read_u64(bytes, PREAMBLE + 16);
    if d < 2 {
        return Err(Error::format(format!(
            "header field d = {d} must be at least 2"
        )));
    }
    if q > MAX_DEGREE as u64 {
        return Err(Error::format(format!(
            "header field q = {q} exceeds {MAX_DEGREE}"
        )));
    }
    if s == 0 {
        return Err(Error::format("header field s = 0"));
    }
    let n_coords = s
        .checked_mul(d)
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| Error::format("header fields s·d overflow"))? as usize;
    let s = s as usize;

    let body = &bytes[PREAMBLE + HEADER..];
    let point_bytes = 8 * n_coords;
    let weight_bytes = 8 * s;
    if body.len() < point_bytes {
        return Err(Error::format(format!(
            "points: expected {n_coords} coordinates, found {}",
            body.len() / 8
        )));
    }
    if body.len() < point_bytes + weight_bytes {
        return Err(Error::format(format!(
            "weights: expected {s} records, found {}",
            (body.len() - point_bytes) / 8
        )));
    }
    let end = point_bytes + weight_bytes;
    if body.len() < end + 8 {
        return Err(Error::format("checksum: missing or truncated"));
    }
    if body.len() > end + 8 {
        return Err(Error::format(format!(
            "{} trailing bytes after checksum",
            body.len() - end - 8
        )));
    }
    let stored = read_u64(body, end);
    let actual = checksum(&bytes[PREAMBLE..PREAMBLE + HEADER + end]);
    if stored != actual {
        return Err(Error::format(format!(
            "checksum: stored {stored:#018x}, computed {actual:#018x}"
        )));
    }

    let coords = read_f64s(&body[..point_bytes]);
    let weights = read_f64s(&body[point_bytes..end]);
    let params =
        ProblemParams::new(d as usize, q as usize).map_err(|e| Error::format(e.to_string()))?;
    ExpansionModel::new(SampleSet::from_raw(d as usize, coords), weights, params)
}

/// Writes the model through a temporary file in the destination directory
/// and renames it into place.
pub fn write_model(model: &ExpansionModel, path: &Path) -> Result<()> {
    let bytes = serialize_model(model);
    write_atomic(path, &bytes)
}

pub fn read_model(path: &Path) -> Result<ExpansionModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    deserialize_model(&bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp_path = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp_path)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp_path, path)
    })();
    result.map_err(|e| {
        let _ = std::fs::remove_file(&tmp_path);
        Error::io(path, e)
    })
}
