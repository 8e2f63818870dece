//! Checksummed raw deformation-field files.
//!
//! | offset        | size      | content                                          |
//! |---------------|-----------|--------------------------------------------------|
//! | 0             | 8         | magic `SSLFIELD`                                 |
//! | 8             | 4         | header length `n`, u32 little-endian             |
//! | 12            | n         | UTF-8 JSON header (see [`FieldHeader`])          |
//! | 12 + n        | 12·H·W·Z  | payload, f32 little-endian, `(d, y, x, z)` order |
//! | end − 4       | 4         | CRC-32 (IEEE) of the payload, u32 little-endian  |

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sslhop_core::tensor::{Field3D, DIRECTIONS};

use crate::error::{Error, Result};

pub const FIELD_MAGIC: &[u8; 8] = b"SSLFIELD";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    ED,
    ES,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldHeader {
    /// Always `[3, H, W, Z]`.
    pub dims: [usize; 4],
    /// Always `"f32"`.
    pub dtype: String,
    /// Always `"little"`.
    pub endian: String,
    pub phase: Phase,
    pub subject_id: String,
}

/// Identifies the subject and phase a field belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldMeta {
    pub phase: Phase,
    pub subject_id: String,
}

pub fn encode_field(field: &Field3D, meta: &FieldMeta) -> Result<Vec<u8>> {
    let [h, w, z] = field.dims();
    let header = FieldHeader {
        dims: [DIRECTIONS, h, w, z],
        dtype: "f32".into(),
        endian: "little".into(),
        phase: meta.phase,
        subject_id: meta.subject_id.clone(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::BadHeader(e.to_string()))?;
    let n = field.as_slice().len();
    let mut out = Vec::with_capacity(16 + header.len() + 4 * n);
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let payload_start = out.len();
    for &v in field.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&out[payload_start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Parse a field file held in memory. `path` is only used in errors.
pub fn decode_field(bytes: &[u8], path: &Path) -> Result<(Field3D, FieldHeader)> {
    if bytes.len() < 12 || &bytes[..8] != FIELD_MAGIC {
        return Err(Error::BadHeader(format!("{}: missing field magic", path.display())));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = 12 + hlen;
    if bytes.len() < body + 4 {
        return Err(Error::BadHeader(format!("{}: header runs past end of file", path.display())));
    }
    let header: FieldHeader = serde_json::from_slice(&bytes[12..body])
        .map_err(|e| Error::BadHeader(format!("{}: {e}", path.display())))?;
    if header.dtype != "f32" || header.endian != "little" {
        return Err(Error::BadHeader(format!(
            "{}: unsupported dtype/endianness {}/{}",
            path.display(),
            header.dtype,
            header.endian
        )));
    }
    let [d, h, w, z] = header.dims;
    if d != DIRECTIONS || h == 0 || w == 0 || z == 0 {
        return Err(Error::BadHeader(format!("{}: invalid dims {:?}", path.display(), header.dims)));
    }
    let count = d * h * w * z;
    let payload = &bytes[body..bytes.len() - 4];
    if payload.len() != 4 * count {
        return Err(Error::ShapeMismatch(format!(
            "{}: header dims {:?} need {} payload bytes, found {}",
            path.display(),
            header.dims,
            4 * count,
            payload.len()
        )));
    }
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(payload) != stored {
        return Err(Error::ChecksumMismatch(path.to_path_buf()));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        let voxel = [pos / (h * w * z), (pos / (w * z)) % h, (pos / z) % w, pos % z];
        return Err(Error::NonFiniteValues {
            path: path.to_path_buf(),
            voxel,
        });
    }
    let field = Field3D::from_vec([h, w, z], data)?;
    Ok((field, header))
}

pub fn write_field(field: &Field3D, meta: &FieldMeta, path: &Path) -> Result<()> {
    let bytes = encode_field(field, meta)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_field(path: &Path) -> Result<Field3D> {
    read_field_with_header(path).map(|(f, _)| f)
}

pub fn read_field_with_header(path: &Path) -> Result<(Field3D, FieldHeader)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_field(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> FieldMeta {
        FieldMeta {
            phase: Phase::ED,
            subject_id: "s001".into(),
        }
    }

    #[test]
    fn pi_round_trip() {
        let f = Field3D::from_fn([4, 4, 4], |_, _, _, _| std::f64::consts::PI).unwrap();
        let bytes = encode_field(&f, &meta()).unwrap();
        let (back, header) = decode_field(&bytes, Path::new("mem")).unwrap();
        let pi32 = f64::from(std::f64::consts::PI as f32);
        assert!(back.as_slice().iter().all(|&v| v == pi32));
        assert_eq!(header.subject_id, "s001");
        assert_eq!(header.phase, Phase::ED);
        // a second pass is exact
        assert_eq!(encode_field(&back, &meta()).unwrap(), bytes);
    }

    #[test]
    fn truncated_payload_is_shape_mismatch() {
        let f = Field3D::zeros([2, 2, 2]).unwrap();
        let bytes = encode_field(&f, &meta()).unwrap();
        let cut = &bytes[..bytes.len() - 4];
        assert!(matches!(decode_field(cut, Path::new("mem")), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let f = Field3D::from_fn([2, 2, 2], |d, y, x, z| (d + y + x + z) as f64).unwrap();
        let mut bytes = encode_field(&f, &meta()).unwrap();
        let i = bytes.len() - 10;
        bytes[i] ^= 0x40;
        assert!(matches!(decode_field(&bytes, Path::new("mem")), Err(Error::ChecksumMismatch(_))));
    }

    #[test]
    fn nan_reports_voxel() {
        let f = Field3D::zeros([2, 3, 4]).unwrap();
        let mut bytes = encode_field(&f, &meta()).unwrap();
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        // voxel (d=1, y=1, x=2, z=3)
        let idx = ((2 + 1) * 3 + 2) * 4 + 3;
        let at = 12 + header_len + 4 * idx;
        bytes[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        let payload_end = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[12 + header_len..payload_end]);
        bytes[payload_end..].copy_from_slice(&crc.to_le_bytes());
        match decode_field(&bytes, Path::new("mem")) {
            Err(Error::NonFiniteValues { voxel, .. }) => assert_eq!(voxel, [1, 1, 2, 3]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(decode_field(b"NOTAFIELD....", Path::new("mem")), Err(Error::BadHeader(_))));
    }
}
