//! Middlebury `.flo` optical flow.
//!
//! Layout: `f32` magic 202021.25, `i32` width, `i32` height, then
//! `width * height` interleaved `(du, dv)` `f32` pairs, row-major, all
//! little-endian.

use super::{BundleError, FlowField};

pub const FLO_MAGIC: f32 = 202021.25;

// Guards against allocating absurd buffers from a corrupt header.
const MAX_DIMENSION: i32 = 1 << 16;

pub fn parse_flo(bytes: &[u8]) -> Result<FlowField, BundleError> {
    if bytes.len() < 12 {
        return Err(BundleError::Format("truncated .flo header".into()));
    }
    let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().unwrap() };
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        if f32::from_be_bytes(word(0)) == FLO_MAGIC {
            return Err(BundleError::Unsupported("big-endian .flo".into()));
        }
        return Err(BundleError::Format(format!("bad .flo magic {magic}")));
    }
    let width = i32::from_le_bytes(word(4));
    let height = i32::from_le_bytes(word(8));
    if !(1..=MAX_DIMENSION).contains(&width) || !(1..=MAX_DIMENSION).contains(&height) {
        return Err(BundleError::Format(format!(".flo dimensions {width}x{height} out of range")));
    }
    let n = width as usize * height as usize;
    let body = &bytes[12..];
    if body.len() < n * 8 {
        return Err(BundleError::Format(format!(".flo body shorter than {width}x{height}")));
    }
    let values = body[..n * 8]
        .chunks_exact(8)
        .map(|c| {
            [
                f32::from_le_bytes(c[0..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..8].try_into().unwrap()),
            ]
        })
        .collect();
    Ok(FlowField::new(width as u32, height as u32, values))
}

pub fn write_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + flow.values.len() * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height as i32).to_le_bytes());
    for [du, dv] in &flow.values {
        out.extend_from_slice(&du.to_le_bytes());
        out.extend_from_slice(&dv.to_le_bytes());
    }
    out
}
