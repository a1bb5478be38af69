//! RGB and depth rasters: loading, saving and bilinear resampling.
//!
//! Depth rasters travel between tools as little-endian grayscale PFM files.
//! A 16-bit grayscale PNG with a `.range` sidecar holding `min max` is also
//! accepted; its samples are de-quantized linearly onto that range.

mod pfm;
mod png_io;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};
pub use png_io::{load_rgb, range_sidecar_path, write_depth_png16, write_rgb_png};

/// Required alignment of the RGB input dimensions.
pub const DIMENSION_MULTIPLE: usize = 32;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PNG {path}: {reason}")]
    Png { path: PathBuf, reason: String },
    #[error("unsupported PNG bit depth {bits} in {path} (expected 8 or 16)")]
    UnsupportedBitDepth { path: PathBuf, bits: u8 },
    #[error("unsupported raster format for {0} (expected .pfm or .png)")]
    UnsupportedFormat(PathBuf),
    #[error("malformed PFM: {0}")]
    MalformedPfm(String),
    #[error("depth PNG {png} has no range sidecar at {sidecar}")]
    MissingSidecar { png: PathBuf, sidecar: PathBuf },
    #[error("malformed range sidecar {path}: {reason}")]
    MalformedSidecar { path: PathBuf, reason: String },
    #[error("depth sample {index} is {value}, expected a finite non-negative value")]
    InvalidDepth { index: usize, value: f32 },
    #[error("color sample {index} is {value}, expected a value in [0, 1]")]
    InvalidColor { index: usize, value: f32 },
    #[error("invalid raster dimensions {width}x{height} for {len} samples")]
    Dimensions { width: usize, height: usize, len: usize },
    #[error("image {width}x{height} is smaller than {min} pixels in some dimension")]
    TooSmall { width: usize, height: usize, min: usize },
}

pub type Result<T> = std::result::Result<T, RasterError>;

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[f32; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[f32; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(RasterError::Dimensions { width, height, len: pixels.len() });
        }
        for (i, px) in pixels.iter().enumerate() {
            for &c in px {
                if !(0.0..=1.0).contains(&c) {
                    return Err(RasterError::InvalidColor { index: i, value: c });
                }
            }
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, color: [f32; 3]) -> Result<Self> {
        Self::new(width, height, vec![color; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.pixels
    }

    pub fn get(&self, u: usize, v: usize) -> [f32; 3] {
        self.pixels[v * self.width + u]
    }
}

/// Row-major single-channel raster of relative depths.
///
/// Values are unitless, finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(RasterError::Dimensions { width, height, len: values.len() });
        }
        if let Some((index, &value)) =
            values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(RasterError::InvalidDepth { index, value });
        }
        Ok(Self { width, height, values })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Result<Self> {
        let values = (0..height)
            .flat_map(|v| (0..width).map(move |u| (u, v)))
            .map(|(u, v)| f(u, v))
            .collect();
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.values[v * self.width + u]
    }

    /// `(min, max)` over all samples.
    pub fn range(&self) -> (f32, f32) {
        self.values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, values: Vec<f32>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self { width, height, values }
    }
}

/// Loads a depth raster, dispatching on the file extension (`.pfm` or `.png`).
pub fn load_depth(path: &Path) -> Result<DepthMap> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pfm") => read_pfm(path),
        Some("png") => png_io::load_depth_png16(path),
        _ => Err(RasterError::UnsupportedFormat(path.to_path_buf())),
    }
}

/// Resamples a depth map to `target_w x target_h`.
///
/// Corner-aligned: output pixel `u` samples input x = `u * (w_in - 1) / (w_out - 1)`,
/// so the corner pixels of the output land exactly on the corner pixels of the
/// input. A target dimension of 1 samples the centre of the input span.
pub fn resize_bilinear(d: &DepthMap, target_w: usize, target_h: usize) -> Result<DepthMap> {
    if target_w == 0 || target_h == 0 {
        return Err(RasterError::Dimensions { width: target_w, height: target_h, len: 0 });
    }
    let values = resample(&d.values, d.width, d.height, 1, target_w, target_h);
    Ok(DepthMap::from_raw_unchecked(target_w, target_h, values))
}

/// Floors both image dimensions to a multiple of 32 by bilinear resampling.
pub fn resize_to_multiple_of_32(img: &RgbImage) -> Result<RgbImage> {
    let (w, h) = (img.width, img.height);
    if w < DIMENSION_MULTIPLE || h < DIMENSION_MULTIPLE {
        return Err(RasterError::TooSmall { width: w, height: h, min: DIMENSION_MULTIPLE });
    }
    let tw = w / DIMENSION_MULTIPLE * DIMENSION_MULTIPLE;
    let th = h / DIMENSION_MULTIPLE * DIMENSION_MULTIPLE;
    if (tw, th) == (w, h) {
        return Ok(img.clone());
    }
    let flat: Vec<f32> = img.pixels.iter().flatten().copied().collect();
    let out = resample(&flat, w, h, 3, tw, th);
    let pixels = out
        .chunks_exact(3)
        .map(|c| [c[0].clamp(0.0, 1.0), c[1].clamp(0.0, 1.0), c[2].clamp(0.0, 1.0)])
        .collect();
    Ok(RgbImage { width: tw, height: th, pixels })
}

fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out == 1 {
        (n_in - 1) as f64 * 0.5
    } else {
        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
    }
}

fn taps(i: usize, n_in: usize, n_out: usize) -> (usize, usize, f64) {
    let x = source_coord(i, n_in, n_out);
    let x0 = (x.floor() as usize).min(n_in - 1);
    let x1 = (x0 + 1).min(n_in - 1);
    (x0, x1, x - x0 as f64)
}

/// Interleaved bilinear resampling, rows computed in parallel.
fn resample(
    src: &[f32],
    w: usize,
    h: usize,
    channels: usize,
    tw: usize,
    th: usize,
) -> Vec<f32> {
    let xs: Vec<_> = (0..tw).map(|u| taps(u, w, tw)).collect();
    let mut out = vec![0.0f32; tw * th * channels];
    out.par_chunks_mut(tw * channels).enumerate().for_each(|(v, row)| {
        let (y0, y1, fy) = taps(v, h, th);
        for (u, &(x0, x1, fx)) in xs.iter().enumerate() {
            for c in 0..channels {
                let at = |x: usize, y: usize| src[(y * w + x) * channels + c] as f64;
                let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                row[u * channels + c] = (top * (1.0 - fy) + bottom * fy) as f32;
            }
        }
    });
    out
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RasterError + '_ {
    move |source| RasterError::Io { path: path.to_path_buf(), source }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ramp_midpoint_under_corner_alignment() {
        let d = DepthMap::new(2, 1, vec![0.0, 1.0]).unwrap();
        let r = resize_bilinear(&d, 3, 1).unwrap();
        assert_eq!(r.values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn identity_size_is_exact() {
        let d = DepthMap::from_fn(7, 5, |u, v| (u * 3 + v) as f32 * 0.37).unwrap();
        let r = resize_bilinear(&d, 7, 5).unwrap();
        assert_eq!(r, d);
    }

    #[test]
    fn zero_target_rejected() {
        let d = DepthMap::new(2, 2, vec![1.0; 4]).unwrap();
        assert!(resize_bilinear(&d, 0, 3).is_err());
        assert!(resize_bilinear(&d, 3, 0).is_err());
    }

    #[test]
    fn multiple_of_32() {
        let img = RgbImage::filled(640, 480, [0.2, 0.4, 0.6]).unwrap();
        let out = resize_to_multiple_of_32(&img).unwrap();
        assert_eq!((out.width(), out.height()), (640, 480));
        assert_eq!(out, img);

        let img = RgbImage::filled(650, 487, [0.2, 0.4, 0.6]).unwrap();
        let out = resize_to_multiple_of_32(&img).unwrap();
        assert_eq!((out.width(), out.height()), (640, 480));

        let img = RgbImage::filled(31, 64, [0.0; 3]).unwrap();
        assert!(matches!(resize_to_multiple_of_32(&img), Err(RasterError::TooSmall { .. })));
    }

    #[test]
    fn depth_invariants() {
        assert!(DepthMap::new(2, 1, vec![0.0, f32::NAN]).is_err());
        assert!(DepthMap::new(2, 1, vec![0.0, -1.0]).is_err());
        assert!(DepthMap::new(2, 2, vec![0.0; 3]).is_err());
        assert!(RgbImage::new(1, 1, vec![[1.5, 0.0, 0.0]]).is_err());
    }

    proptest! {
        #[test]
        fn constant_stays_constant(c in 0.0f32..100.0, w in 1usize..20, h in 1usize..20,
                                   tw in 1usize..40, th in 1usize..40) {
            let d = DepthMap::new(w, h, vec![c; w * h]).unwrap();
            let r = resize_bilinear(&d, tw, th).unwrap();
            prop_assert_eq!((r.width(), r.height()), (tw, th));
            for &v in r.values() {
                prop_assert!((v - c).abs() <= 1e-6 * c.max(1.0));
            }
        }

        #[test]
        fn resize_stays_within_input_range(
            vals in proptest::collection::vec(0.0f32..10.0, 12),
            tw in 1usize..30, th in 1usize..30,
        ) {
            let d = DepthMap::new(4, 3, vals).unwrap();
            let (lo, hi) = d.range();
            let r = resize_bilinear(&d, tw, th).unwrap();
            let (rlo, rhi) = r.range();
            prop_assert!(rlo >= lo && rhi <= hi);
        }

        #[test]
        fn aligned_dimensions(w in 32usize..200, h in 32usize..200) {
            let img = RgbImage::filled(w, h, [0.5; 3]).unwrap();
            let out = resize_to_multiple_of_32(&img).unwrap();
            prop_assert_eq!(out.width() % 32, 0);
            prop_assert_eq!(out.height() % 32, 0);
            prop_assert!(out.width() <= w && w - out.width() < 32);
        }
    }
}
