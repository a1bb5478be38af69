use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use png::{BitDepth, ColorType, Transformations};

use super::{io_err, DepthMap, RasterError, Result, RgbImage};

struct Decoded {
    width: usize,
    height: usize,
    color: ColorType,
    /// Samples scaled to `[0, 1]`, interleaved per `color`.
    samples: Vec<f64>,
    /// Raw integer samples, interleaved per `color`.
    raw: Vec<u16>,
    bits: u8,
}

fn decode(path: &Path) -> Result<Decoded> {
    let png_err = |e: png::DecodingError| RasterError::Png {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let file = File::open(path).map_err(io_err(path))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(png_err)?;

    let info = reader.info();
    let source_bits = info.bit_depth as u8;
    if info.color_type != ColorType::Indexed && !matches!(info.bit_depth, BitDepth::Eight | BitDepth::Sixteen) {
        return Err(RasterError::UnsupportedBitDepth { path: path.to_path_buf(), bits: source_bits });
    }

    let size = reader.output_buffer_size().ok_or_else(|| RasterError::Png {
        path: path.to_path_buf(),
        reason: "image too large".into(),
    })?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(png_err)?;
    let bytes = &buf[..frame.buffer_size()];

    let (raw, bits): (Vec<u16>, u8) = match frame.bit_depth {
        BitDepth::Sixteen => (
            bytes.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect(),
            16,
        ),
        BitDepth::Eight => (bytes.iter().map(|&b| b as u16).collect(), 8),
        other => {
            return Err(RasterError::UnsupportedBitDepth {
                path: path.to_path_buf(),
                bits: other as u8,
            })
        }
    };
    let max = ((1u32 << bits) - 1) as f64;
    let samples = raw.iter().map(|&s| s as f64 / max).collect();
    Ok(Decoded {
        width: frame.width as usize,
        height: frame.height as usize,
        color: frame.color_type,
        samples,
        raw,
        bits,
    })
}

/// Loads an 8- or 16-bit PNG as RGB in `[0, 1]`.
///
/// Grayscale is replicated across channels and alpha is dropped.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let d = decode(path)?;
    let channels = d.color.samples();
    let pixels = d
        .samples
        .chunks_exact(channels)
        .map(|px| match d.color {
            ColorType::Grayscale | ColorType::GrayscaleAlpha => {
                let g = px[0] as f32;
                [g, g, g]
            }
            _ => [px[0] as f32, px[1] as f32, px[2] as f32],
        })
        .collect();
    RgbImage::new(d.width, d.height, pixels)
}

/// Sidecar holding the de-quantization range of a 16-bit depth PNG:
/// `depth.png` pairs with `depth.range`.
pub fn range_sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("range")
}

fn read_sidecar(png: &Path) -> Result<(f64, f64)> {
    let sidecar = range_sidecar_path(png);
    let text = match fs::read_to_string(&sidecar) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(RasterError::MissingSidecar { png: png.to_path_buf(), sidecar })
        }
        Err(e) => return Err(io_err(&sidecar)(e)),
    };
    let malformed = |reason: &str| RasterError::MalformedSidecar {
        path: sidecar.clone(),
        reason: reason.to_owned(),
    };
    let nums: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| malformed("expected two decimal floats \"min max\""))?;
    match *nums.as_slice() {
        [lo, hi] if lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi => Ok((lo, hi)),
        [_, _] => Err(malformed("range must satisfy 0 <= min <= max")),
        _ => Err(malformed("expected two decimal floats \"min max\"")),
    }
}

pub(super) fn load_depth_png16(path: &Path) -> Result<DepthMap> {
    let (lo, hi) = read_sidecar(path)?;
    let d = decode(path)?;
    if d.bits != 16 || d.color != ColorType::Grayscale {
        return Err(RasterError::Png {
            path: path.to_path_buf(),
            reason: format!("depth PNG must be 16-bit grayscale, found {}-bit {:?}", d.bits, d.color),
        });
    }
    let values = d
        .raw
        .iter()
        .map(|&q| (lo + (q as f64 / 65535.0) * (hi - lo)) as f32)
        .collect();
    DepthMap::new(d.width, d.height, values)
}

/// Writes a depth map as 16-bit grayscale PNG plus its `.range` sidecar.
pub fn write_depth_png16(path: &Path, d: &DepthMap) -> Result<()> {
    let (lo, hi) = d.range();
    let span = (hi - lo) as f64;
    let data: Vec<u8> = d
        .values()
        .iter()
        .flat_map(|&v| {
            let q = if span > 0.0 { ((v - lo) as f64 / span * 65535.0).round() as u16 } else { 0 };
            q.to_be_bytes()
        })
        .collect();
    write_png(path, d.width(), d.height(), ColorType::Grayscale, BitDepth::Sixteen, &data)?;
    let sidecar = range_sidecar_path(path);
    fs::write(&sidecar, format!("{lo} {hi}\n")).map_err(io_err(&sidecar))
}

/// Writes an 8-bit RGB PNG.
pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<()> {
    let data: Vec<u8> = img
        .pixels()
        .iter()
        .flatten()
        .map(|&c| (c * 255.0).round() as u8)
        .collect();
    write_png(path, img.width(), img.height(), ColorType::Rgb, BitDepth::Eight, &data)
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    data: &[u8],
) -> Result<()> {
    let enc_err = |e: png::EncodingError| RasterError::Png {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let file = File::create(path).map_err(io_err(path))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let mut writer = encoder.write_header().map_err(enc_err)?;
    writer.write_image_data(data).map_err(enc_err)?;
    writer.finish().map_err(enc_err)
}
