use nalgebra::{Matrix3, Point3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use super::{GeometryError, KdTree, PointCloud, Result};

/// Ratio below which the middle covariance eigenvalue counts as zero
/// (neighbourhood collapses onto a line or a point).
const COLLINEAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NormalStats {
    /// Points whose neighbourhood was collinear; their normal is the unit
    /// vector toward the camera instead of a plane fit.
    pub degenerate: usize,
}

/// PCA normals over each point and its `k` nearest neighbours, oriented
/// toward the camera at the origin (`n . p <= 0`).
pub fn estimate_normals(pc: &PointCloud, k: usize) -> Result<(PointCloud, NormalStats)> {
    if k < 3 {
        return Err(GeometryError::Params(format!("normals.k must be >= 3, got {k}")));
    }
    if pc.len() <= k {
        return Err(GeometryError::TooFewPoints { points: pc.len(), k });
    }
    let tree = KdTree::build(pc.positions());
    let positions = pc.positions();

    let fitted: Vec<(Vector3<f64>, bool)> = positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = tree.knn(p, k, Some(i));
            let hood = std::iter::once(p).chain(nn.iter().map(|n| &positions[n.index]));
            match plane_normal(hood, k + 1) {
                Some(n) => (orient_toward_origin(n, p), false),
                None => (toward_origin(p), true),
            }
        })
        .collect();

    let degenerate = fitted.iter().filter(|(_, d)| *d).count();
    let normals = fitted.into_iter().map(|(n, _)| n).collect();
    Ok((pc.clone().with_normals(normals)?, NormalStats { degenerate }))
}

fn plane_normal<'a>(points: impl Iterator<Item = &'a Point3<f64>> + Clone, count: usize) -> Option<Vector3<f64>> {
    let centroid = points.clone().fold(Vector3::zeros(), |acc, p| acc + p.coords) / count as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    cov /= count as f64;

    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (mid, max) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if max <= 0.0 || mid <= COLLINEAR_RATIO * max {
        return None;
    }
    let n = eig.eigenvectors.column(order[0]).into_owned();
    let len = n.norm();
    (len > 0.0).then(|| n / len)
}

fn orient_toward_origin(n: Vector3<f64>, p: &Point3<f64>) -> Vector3<f64> {
    if n.dot(&p.coords) > 0.0 {
        -n
    } else {
        n
    }
}

fn toward_origin(p: &Point3<f64>) -> Vector3<f64> {
    let len = p.coords.norm();
    if len > 0.0 {
        -p.coords / len
    } else {
        -Vector3::z()
    }
}
