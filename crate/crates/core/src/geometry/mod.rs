//! Pinhole back-projection, point clouds and their neighbourhood-based cleanup.

mod kdtree;
mod normals;
mod outliers;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{DepthMap, RgbImage};

pub use kdtree::{KdTree, Neighbor};
pub use normals::{estimate_normals, NormalStats};
pub use outliers::{remove_statistical_outliers, OutlierParams};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("depth map is {depth_w}x{depth_h} but image is {image_w}x{image_h}")]
    DimensionMismatch { depth_w: usize, depth_h: usize, image_w: usize, image_h: usize },
    #[error("invalid camera intrinsics: {0}")]
    Intrinsics(String),
    #[error("cannot project a point with non-positive depth z={0}")]
    NonPositiveDepth(f64),
    #[error("{points} points is too few for {k} neighbours")]
    TooFewPoints { points: usize, k: usize },
    #[error("invalid parameter: {0}")]
    Params(String),
    #[error("point cloud attribute `{attribute}` has {len} entries for {points} points")]
    AttributeLength { attribute: &'static str, len: usize, points: usize },
    #[error("point {index} is not finite")]
    NonFinite { index: usize },
    #[error("normal {index} is not unit length")]
    NotUnit { index: usize },
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let cam = Self { fx, fy, cx, cy };
        cam.validate()?;
        Ok(cam)
    }

    /// Unknown-camera convention: `fx = fy = max(w, h)`, principal point at the image centre.
    pub fn default_for(width: usize, height: usize) -> Self {
        let f = width.max(height) as f64;
        Self { fx: f, fy: f, cx: width as f64 / 2.0, cy: height as f64 / 2.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fx.is_finite() && self.fy > 0.0 && self.fy.is_finite()) {
            return Err(GeometryError::Intrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(GeometryError::Intrinsics("principal point must be finite".into()));
        }
        Ok(())
    }
}

/// Points with optional per-point colors and unit normals (parallel arrays).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    positions: Vec<Point3<f64>>,
    colors: Option<Vec<[f32; 3]>>,
    normals: Option<Vec<Vector3<f64>>>,
}

impl PointCloud {
    pub fn new(
        positions: Vec<Point3<f64>>,
        colors: Option<Vec<[f32; 3]>>,
        normals: Option<Vec<Vector3<f64>>>,
    ) -> Result<Self> {
        let n = positions.len();
        if let Some(index) = positions.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFinite { index });
        }
        if let Some(c) = &colors {
            if c.len() != n {
                return Err(GeometryError::AttributeLength { attribute: "colors", len: c.len(), points: n });
            }
        }
        if let Some(ns) = &normals {
            if ns.len() != n {
                return Err(GeometryError::AttributeLength { attribute: "normals", len: ns.len(), points: n });
            }
            if let Some(index) = ns.iter().position(|v| (v.norm() - 1.0).abs() > 1e-4) {
                return Err(GeometryError::NotUnit { index });
            }
        }
        Ok(Self { positions, colors, normals })
    }

    pub fn from_positions(positions: Vec<Point3<f64>>) -> Result<Self> {
        Self::new(positions, None, None)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3<f64>] {
        &self.positions
    }

    pub fn colors(&self) -> Option<&[[f32; 3]]> {
        self.colors.as_deref()
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn with_normals(self, normals: Vec<Vector3<f64>>) -> Result<Self> {
        Self::new(self.positions, self.colors, Some(normals))
    }

    /// Keeps the points whose mask entry is true, preserving order.
    pub fn retain_mask(&self, keep: &[bool]) -> Self {
        debug_assert_eq!(keep.len(), self.len());
        fn pick<T: Clone>(v: &[T], keep: &[bool]) -> Vec<T> {
            v.iter().zip(keep).filter(|(_, &k)| k).map(|(x, _)| x.clone()).collect()
        }
        Self {
            positions: pick(&self.positions, keep),
            colors: self.colors.as_ref().map(|c| pick(c, keep)),
            normals: self.normals.as_ref().map(|n| pick(n, keep)),
        }
    }
}

/// Lifts every pixel to camera space: `X = (u - cx) D / fx`, `Y = (v - cy) D / fy`, `Z = D`.
///
/// Points are emitted in row-major pixel order with the pixel's color.
pub fn back_project(d: &DepthMap, img: &RgbImage, cam: &CameraIntrinsics) -> Result<PointCloud> {
    if (d.width(), d.height()) != (img.width(), img.height()) {
        return Err(GeometryError::DimensionMismatch {
            depth_w: d.width(),
            depth_h: d.height(),
            image_w: img.width(),
            image_h: img.height(),
        });
    }
    cam.validate()?;
    let mut positions = Vec::with_capacity(d.values().len());
    for v in 0..d.height() {
        for u in 0..d.width() {
            positions.push(back_project_pixel(u as f64, v as f64, d.get(u, v) as f64, cam));
        }
    }
    Ok(PointCloud { positions, colors: Some(img.pixels().to_vec()), normals: None })
}

pub fn back_project_pixel(u: f64, v: f64, depth: f64, cam: &CameraIntrinsics) -> Point3<f64> {
    Point3::new((u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth)
}

/// Inverse of [`back_project_pixel`]: returns `(u, v, depth)`.
pub fn project(p: &Point3<f64>, cam: &CameraIntrinsics) -> Result<(f64, f64, f64)> {
    if !(p.z > 0.0) {
        return Err(GeometryError::NonPositiveDepth(p.z));
    }
    Ok((cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy, p.z))
}
