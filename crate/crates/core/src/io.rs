//! Plain image formats: binary PPM (colour), PGM (labels, ids) and PFM
//! (float depth). Encoders and decoders round-trip bit for bit.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Format(String),
}

fn format_err<T>(msg: impl Into<String>) -> Result<T, ImageIoError> {
    Err(ImageIoError::Format(msg.into()))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ImageIoError> {
    std::fs::write(path, bytes).map_err(|source| ImageIoError::Io { path: path.display().to_string(), source })
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, ImageIoError> {
    std::fs::read(path).map_err(|source| ImageIoError::Io { path: path.display().to_string(), source })
}

/// Splits a netpbm-style header of `fields` whitespace-separated tokens
/// (comments allowed) from the payload, which starts after exactly one
/// whitespace byte.
fn split_header(bytes: &[u8], fields: usize) -> Result<(Vec<String>, &[u8]), ImageIoError> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < fields {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return format_err("truncated header");
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return format_err("missing payload");
    }
    Ok((tokens, &bytes[i + 1..]))
}

fn dims(tokens: &[String]) -> Result<(u32, u32), ImageIoError> {
    let parse = |s: &str| s.parse::<u32>().map_err(|_| ImageIoError::Format(format!("bad dimension {s:?}")));
    let (w, h) = (parse(&tokens[1])?, parse(&tokens[2])?);
    if w == 0 || h == 0 {
        return format_err("zero image dimension");
    }
    Ok((w, h))
}

/// 8-bit channel value of a colour in `[0, 1]`.
pub fn quantize(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ppm(width: u32, height: u32, rgb: &[[u8; 3]]) -> Vec<u8> {
    assert_eq!(rgb.len(), (width * height) as usize, "pixel count");
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend(rgb.iter().flatten());
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<(u32, u32, Vec<[u8; 3]>), ImageIoError> {
    let (t, payload) = split_header(bytes, 4)?;
    if t[0] != "P6" || t[3] != "255" {
        return format_err("expected an 8-bit binary PPM");
    }
    let (w, h) = dims(&t)?;
    let n = (w * h) as usize;
    if payload.len() != 3 * n {
        return format_err(format!("PPM payload has {} bytes, expected {}", payload.len(), 3 * n));
    }
    Ok((w, h, payload.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()))
}

pub fn encode_pgm(width: u32, height: u32, values: &[u8]) -> Vec<u8> {
    assert_eq!(values.len(), (width * height) as usize, "pixel count");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(values);
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>), ImageIoError> {
    let (t, payload) = split_header(bytes, 4)?;
    if t[0] != "P5" || t[3] != "255" {
        return format_err("expected an 8-bit binary PGM");
    }
    let (w, h) = dims(&t)?;
    if payload.len() != (w * h) as usize {
        return format_err(format!("PGM payload has {} bytes, expected {}", payload.len(), w * h));
    }
    Ok((w, h, payload.to_vec()))
}

/// Single-channel little-endian PFM. Rows are stored bottom to top as the
/// format requires; `values` is top to bottom.
pub fn encode_pfm(width: u32, height: u32, values: &[f32]) -> Vec<u8> {
    assert_eq!(values.len(), (width * height) as usize, "pixel count");
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    for row in values.chunks_exact(width as usize).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<(u32, u32, Vec<f32>), ImageIoError> {
    let (t, payload) = split_header(bytes, 4)?;
    if t[0] != "Pf" {
        return format_err("expected a single-channel PFM");
    }
    let (w, h) = dims(&t)?;
    let scale: f32 = t[3].parse().map_err(|_| ImageIoError::Format(format!("bad PFM scale {:?}", t[3])))?;
    if scale == 0.0 {
        return format_err("PFM scale is zero");
    }
    let n = (w * h) as usize;
    if payload.len() != 4 * n {
        return format_err(format!("PFM payload has {} bytes, expected {}", payload.len(), 4 * n));
    }
    let read = |c: &[u8]| {
        let b = [c[0], c[1], c[2], c[3]];
        if scale < 0.0 {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        }
    };
    let rows: Vec<Vec<f32>> = payload.chunks_exact(4 * w as usize).map(|r| r.chunks_exact(4).map(read).collect()).collect();
    Ok((w, h, rows.into_iter().rev().flatten().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_comments_are_skipped() {
        let mut b = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        b.extend([7, 9]);
        assert_eq!(decode_pgm(&b).unwrap(), (2, 1, vec![7, 9]));
    }

    #[test]
    fn wrong_sizes_are_rejected() {
        let mut b = encode_pgm(2, 2, &[1, 2, 3, 4]);
        b.pop();
        assert!(decode_pgm(&b).is_err());
        assert!(decode_ppm(&encode_pgm(1, 1, &[0])).is_err());
    }

    #[test]
    fn pfm_rows_are_bottom_up() {
        let b = encode_pfm(1, 2, &[1.0, 2.0]);
        let payload = &b[b.len() - 8..];
        assert_eq!(f32::from_le_bytes(payload[..4].try_into().unwrap()), 2.0);
    }

    #[test]
    fn quantize_rounds_and_clamps() {
        assert_eq!(quantize(-1.0), 0);
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(2.0), 255);
    }

    proptest! {
        #[test]
        fn pfm_round_trip_is_bit_exact(w in 1u32..6, h in 1u32..6, bits in prop::collection::vec(any::<u32>(), 36)) {
            let vals: Vec<f32> = bits.iter().take((w * h) as usize).map(|&b| f32::from_bits(b)).collect();
            let (w2, h2, back) = decode_pfm(&encode_pfm(w, h, &vals)).unwrap();
            prop_assert_eq!((w2, h2), (w, h));
            let a: Vec<u32> = vals.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn ppm_and_pgm_round_trip(w in 1u32..6, h in 1u32..6, bytes in prop::collection::vec(any::<u8>(), 108)) {
            let n = (w * h) as usize;
            let rgb: Vec<[u8; 3]> = bytes.chunks_exact(3).take(n).map(|c| [c[0], c[1], c[2]]).collect();
            prop_assert_eq!(decode_ppm(&encode_ppm(w, h, &rgb)).unwrap(), (w, h, rgb));
            let grey = bytes[..n].to_vec();
            prop_assert_eq!(decode_pgm(&encode_pgm(w, h, &grey)).unwrap(), (w, h, grey));
        }
    }
}
