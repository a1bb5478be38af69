// Grayscale Portable Float Map ("Pf").
//
// Header: "Pf\n<w> <h>\n<scale>\n", negative scale = little endian. Rows are
// stored bottom-to-top. The writer always emits little endian with scale -1.0.

use std::fs;
use std::path::Path;

use super::{io_err, DepthMap, RasterError, Result};

pub fn encode_pfm(d: &DepthMap) -> Vec<u8> {
    let header = format!("Pf\n{} {}\n-1.0\n", d.width(), d.height());
    let mut out = Vec::with_capacity(header.len() + d.values().len() * 4);
    out.extend_from_slice(header.as_bytes());
    for row in d.values().chunks_exact(d.width()).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DepthMap> {
    let mut rest = bytes;
    let mut tokens = Vec::with_capacity(4);
    // Magic, width, height and scale are whitespace-separated; exactly one
    // whitespace byte follows the scale before the raster begins.
    while tokens.len() < 4 {
        let start = rest
            .iter()
            .position(|b| !b.is_ascii_whitespace())
            .ok_or_else(|| RasterError::MalformedPfm("truncated header".into()))?;
        rest = &rest[start..];
        let end = rest
            .iter()
            .position(|b| b.is_ascii_whitespace())
            .ok_or_else(|| RasterError::MalformedPfm("truncated header".into()))?;
        let token = std::str::from_utf8(&rest[..end])
            .map_err(|_| RasterError::MalformedPfm("non-ASCII header".into()))?;
        tokens.push(token.to_owned());
        rest = &rest[end + 1..];
    }

    match tokens[0].as_str() {
        "Pf" => {}
        "PF" => return Err(RasterError::MalformedPfm("color PFM (PF) is not a depth map".into())),
        other => return Err(RasterError::MalformedPfm(format!("bad magic {other:?}"))),
    }
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| RasterError::MalformedPfm(format!("bad dimension {s:?}")))
    };
    let width = parse_dim(&tokens[1])?;
    let height = parse_dim(&tokens[2])?;
    let scale: f32 = tokens[3]
        .parse()
        .ok()
        .filter(|s: &f32| s.is_finite() && *s != 0.0)
        .ok_or_else(|| RasterError::MalformedPfm(format!("bad scale {:?}", tokens[3])))?;
    let little_endian = scale < 0.0;

    let count = width
        .checked_mul(height)
        .ok_or_else(|| RasterError::MalformedPfm("dimensions overflow".into()))?;
    if rest.len() < count * 4 {
        return Err(RasterError::MalformedPfm(format!(
            "expected {} bytes of samples, found {}",
            count * 4,
            rest.len()
        )));
    }

    let mut values = vec![0.0f32; count];
    for (row_idx, row) in rest[..count * 4].chunks_exact(width * 4).enumerate() {
        let y = height - 1 - row_idx;
        for (x, b) in row.chunks_exact(4).enumerate() {
            let b = [b[0], b[1], b[2], b[3]];
            values[y * width + x] =
                if little_endian { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        }
    }
    DepthMap::new(width, height, values)
}

pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_pfm(&bytes)
}

pub fn write_pfm(path: &Path, d: &DepthMap) -> Result<()> {
    fs::write(path, encode_pfm(d)).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_verbatim() {
        let d = DepthMap::new(2, 2, vec![0.5, 1.0, 1.5, 2.0]).unwrap();
        let bytes = encode_pfm(&d);
        assert!(bytes.starts_with(b"Pf\n2 2\n-1.0\n"));
        // bottom row first
        assert_eq!(&bytes[12..16], &1.5f32.to_le_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().values(), &[0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn big_endian_accepted() {
        let mut bytes = b"Pf\n1 2\n1.0\n".to_vec();
        bytes.extend_from_slice(&3.0f32.to_be_bytes());
        bytes.extend_from_slice(&4.0f32.to_be_bytes());
        let d = decode_pfm(&bytes).unwrap();
        assert_eq!(d.values(), &[4.0, 3.0]);
    }

    #[test]
    fn nan_rejected() {
        let mut bytes = b"Pf\n2 1\n-1.0\n".to_vec();
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_pfm(&bytes), Err(RasterError::InvalidDepth { .. })));
    }

    #[test]
    fn malformed_headers() {
        assert!(decode_pfm(b"P6\n1 1\n-1.0\n\0\0\0\0").is_err());
        assert!(decode_pfm(b"PF\n1 1\n-1.0\n").is_err());
        assert!(decode_pfm(b"Pf\n0 1\n-1.0\n").is_err());
        assert!(decode_pfm(b"Pf\n2 2\n-1.0\n\0\0\0\0").is_err());
        assert!(decode_pfm(b"Pf\n2").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_bit_exact(w in 1usize..9, h in 1usize..9, seed in proptest::collection::vec(0.0f32..1e6, 81)) {
            let d = DepthMap::new(w, h, seed[..w * h].to_vec()).unwrap();
            let back = decode_pfm(&encode_pfm(&d)).unwrap();
            let a: Vec<u32> = d.values().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
