//! Grayscale PFM (`Pf`) depth maps.
//!
//! Header is `Pf\n<width> <height>\n<scale>\n`, a negative scale meaning
//! little-endian samples. Rows are stored bottom-to-top.

use super::{BundleError, DepthMap};

pub fn parse_pfm(bytes: &[u8]) -> Result<DepthMap, BundleError> {
    let mut pos = 0;
    let mut token = || -> Result<&str, BundleError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(BundleError::Format("truncated PFM header".into()));
        }
        let tok = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| BundleError::Format("non-ASCII PFM header".into()))?;
        Ok(tok)
    };

    match token()? {
        "Pf" => {}
        "PF" => return Err(BundleError::Unsupported("color PFM (PF) is not a depth map".into())),
        other => return Err(BundleError::Format(format!("bad PFM magic {other:?}"))),
    }
    let width: u32 = parse_num(token()?)?;
    let height: u32 = parse_num(token()?)?;
    let scale: f32 = parse_num(token()?)?;
    if width == 0 || height == 0 {
        return Err(BundleError::Format("PFM with zero dimension".into()));
    }
    if !(scale < 0.0) {
        return Err(BundleError::Unsupported("big-endian PFM (positive scale)".into()));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;

    let n = width as usize * height as usize;
    let raster = bytes
        .get(pos..)
        .filter(|r| r.len() >= n * 4)
        .ok_or_else(|| BundleError::Format(format!("PFM raster shorter than {width}x{height}")))?;

    let mut values = vec![0f32; n];
    for (i, chunk) in raster[..n * 4].chunks_exact(4).enumerate() {
        let file_row = i / width as usize;
        let col = i % width as usize;
        let row = height as usize - 1 - file_row;
        values[row * width as usize + col] = f32::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(DepthMap::new(width, height, values))
}

pub fn write_pfm(depth: &DepthMap) -> Vec<u8> {
    let header = format!("Pf\n{} {}\n-1.0\n", depth.width, depth.height);
    let mut out = Vec::with_capacity(header.len() + depth.values.len() * 4);
    out.extend_from_slice(header.as_bytes());
    for row in (0..depth.height as usize).rev() {
        let start = row * depth.width as usize;
        for v in &depth.values[start..start + depth.width as usize] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn parse_num<T: std::str::FromStr>(tok: &str) -> Result<T, BundleError> {
    tok.parse()
        .map_err(|_| BundleError::Format(format!("bad PFM header field {tok:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_round_trip() {
        let d = DepthMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let bytes = write_pfm(&d);
        assert!(bytes.starts_with(b"Pf\n2 2\n-1.0\n"));
        // Bottom row (3, 4) is stored first.
        let raster = &bytes[bytes.len() - 16..];
        assert_eq!(f32::from_le_bytes(raster[0..4].try_into().unwrap()), 3.0);
        assert_eq!(parse_pfm(&bytes).unwrap(), d);
    }

    #[test]
    fn special_values_survive_bit_exact() {
        let d = DepthMap::new(3, 1, vec![f32::MIN_POSITIVE, -0.0, 1.0e-40]);
        let back = parse_pfm(&write_pfm(&d)).unwrap();
        let bits = |m: &DepthMap| m.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&d));
    }

    #[test]
    fn rejects_big_endian_and_color_and_bad_magic() {
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1f32.to_be_bytes());
        assert!(matches!(parse_pfm(&bytes), Err(BundleError::Unsupported(_))));
        assert!(matches!(parse_pfm(b"PF\n1 1\n-1.0\n0000"), Err(BundleError::Unsupported(_))));
        assert!(matches!(parse_pfm(b"P6\n1 1\n255\n000"), Err(BundleError::Format(_))));
        assert!(matches!(parse_pfm(b"Pf\n4 4\n-1.0\n0000"), Err(BundleError::Format(_))));
    }
}
