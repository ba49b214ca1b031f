//! Middlebury `.flo`: little-endian `f32` magic 202021.25, `i32` width,
//! `i32` height, then `height * width` interleaved `(u, v)` `f32` pairs.

use std::path::Path;

use crate::error::{Error, Result};

use super::FlowField;

pub const MAGIC: f32 = 202021.25;
pub const HEADER_LEN: usize = 12;

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        kind: "flo",
        offset,
        reason: reason.into(),
    }
}

fn f32_at(bytes: &[u8], offset: usize) -> f32 {
    f32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

fn i32_at(bytes: &[u8], offset: usize) -> i32 {
    i32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

pub fn decode(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(bytes.len(), "truncated header"));
    }
    let magic = f32_at(bytes, 0);
    if magic.to_bits() != MAGIC.to_bits() {
        return Err(format_err(0, format!("bad magic {magic}")));
    }
    let width = i32_at(bytes, 4);
    let height = i32_at(bytes, 8);
    if width <= 0 {
        return Err(format_err(4, format!("width {width} must be positive")));
    }
    if height <= 0 {
        return Err(format_err(8, format!("height {height} must be positive")));
    }
    let (width, height) = (width as usize, height as usize);
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| format_err(4, "dimensions overflow"))?;
    if bytes.len() < expected {
        return Err(format_err(bytes.len(), format!("truncated: expected {expected} bytes")));
    }
    if bytes.len() > expected {
        return Err(format_err(expected, "trailing bytes after flow data"));
    }

    let mut data = Vec::with_capacity(width * height);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(8).enumerate() {
        let offset = HEADER_LEN + 8 * i;
        let d = [f32_at(chunk, 0), f32_at(chunk, 4)];
        if let Some(k) = d.iter().position(|c| !c.is_finite()) {
            return Err(format_err(offset + 4 * k, format!("non-finite component {}", d[k])));
        }
        data.push(d);
    }
    FlowField::new(height, width, data)
}

pub fn encode(f: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * f.data().len());
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.extend_from_slice(&(f.width() as i32).to_le_bytes());
    out.extend_from_slice(&(f.height() as i32).to_le_bytes());
    for d in f.data() {
        out.extend_from_slice(&d[0].to_le_bytes());
        out.extend_from_slice(&d[1].to_le_bytes());
    }
    out
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write_flo(f: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(f)).map_err(|e| Error::io(path, e))
}
