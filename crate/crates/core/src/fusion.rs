//! Pixel-wise fusion of two relative depth maps and range normalization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{resize_bilinear, DepthMap, RasterError};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("fusion weight alpha={0} outside [0, 1]")]
    Alpha(f64),
    #[error("target depth range [{d_min}, {d_max}] is empty or not finite")]
    Range { d_min: f64, d_max: f64 },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Weight of the structural (GLPN) map and the target depth interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionParams {
    pub alpha: f64,
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self { alpha: 0.97, d_min: 0.6, d_max: 1.0 }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(FusionError::Alpha(self.alpha));
        }
        if !(self.d_min.is_finite() && self.d_max.is_finite() && self.d_min < self.d_max) {
            return Err(FusionError::Range { d_min: self.d_min, d_max: self.d_max });
        }
        Ok(())
    }
}

/// `alpha * d_glpn + (1 - alpha) * resize(d_da)`, on the grid of `d_glpn`.
pub fn fuse(d_glpn: &DepthMap, d_da: &DepthMap, params: &FusionParams) -> Result<DepthMap, FusionError> {
    params.validate()?;
    let (w, h) = (d_glpn.width(), d_glpn.height());
    let resized;
    let detail = if (d_da.width(), d_da.height()) == (w, h) {
        d_da
    } else {
        resized = resize_bilinear(d_da, w, h)?;
        &resized
    };
    let a = params.alpha;
    let values = d_glpn
        .values()
        .iter()
        .zip(detail.values())
        .map(|(&g, &d)| (a * g as f64 + (1.0 - a) * d as f64) as f32)
        .collect();
    Ok(DepthMap::from_raw_unchecked(w, h, values))
}

/// Affinely maps `[min(d), max(d)]` onto `[d_min, d_max]`.
///
/// The extremes land exactly on the bounds. A constant map has no range to
/// stretch and becomes the midpoint of the target interval.
pub fn normalize_range(d: &DepthMap, params: &FusionParams) -> Result<DepthMap, FusionError> {
    params.validate()?;
    let (lo, hi) = d.range();
    let (lo, hi) = (lo as f64, hi as f64);
    let (d_min, d_max) = (params.d_min, params.d_max);
    let values = if hi > lo {
        let span = hi - lo;
        let target = d_max - d_min;
        d.values()
            .iter()
            .map(|&v| {
                let v = v as f64;
                if v == hi {
                    d_max as f32
                } else {
                    // monotone in v; the clamp only guards the top end against rounding
                    (d_min + (v - lo) / span * target).min(d_max) as f32
                }
            })
            .collect()
    } else {
        vec![(0.5 * (d_min + d_max)) as f32; d.values().len()]
    };
    Ok(DepthMap::from_raw_unchecked(d.width(), d.height(), values))
}

pub fn fuse_and_normalize(
    d_glpn: &DepthMap,
    d_da: &DepthMap,
    params: &FusionParams,
) -> Result<DepthMap, FusionError> {
    normalize_range(&fuse(d_glpn, d_da, params)?, params)
}
