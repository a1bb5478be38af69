use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GeometryError, KdTree, PointCloud, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutlierParams {
    #[serde(rename = "k")]
    pub k_neighbors: usize,
    pub std_ratio: f64,
}

impl Default for OutlierParams {
    fn default() -> Self {
        Self { k_neighbors: 20, std_ratio: 2.0 }
    }
}

impl OutlierParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors < 1 {
            return Err(GeometryError::Params("outliers.k must be >= 1".into()));
        }
        if !(self.std_ratio > 0.0 && self.std_ratio.is_finite()) {
            return Err(GeometryError::Params(format!(
                "outliers.std_ratio must be positive, got {}",
                self.std_ratio
            )));
        }
        Ok(())
    }
}

/// Mean distance from each point to its `k` nearest other points.
pub(crate) fn mean_neighbor_distances(tree: &KdTree, pc: &PointCloud, k: usize) -> Vec<f64> {
    pc.positions()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = tree.knn(p, k, Some(i));
            nn.iter().map(|n| n.dist2.sqrt()).sum::<f64>() / nn.len() as f64
        })
        .collect()
}

/// Drops points whose mean k-NN distance exceeds `mean + std_ratio * std`
/// of that statistic over the whole cloud (sample standard deviation).
///
/// Returns the surviving cloud (order preserved) and the removed indices.
pub fn remove_statistical_outliers(
    pc: &PointCloud,
    params: &OutlierParams,
) -> Result<(PointCloud, Vec<usize>)> {
    params.validate()?;
    let k = params.k_neighbors;
    if pc.len() <= k {
        return Err(GeometryError::TooFewPoints { points: pc.len(), k });
    }
    let tree = KdTree::build(pc.positions());
    let means = mean_neighbor_distances(&tree, pc, k);

    // Sequential sums keep the threshold independent of thread scheduling.
    let n = means.len() as f64;
    let mu = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / (n - 1.0);
    let threshold = mu + params.std_ratio * var.sqrt();

    let keep: Vec<bool> = means.iter().map(|&m| m <= threshold).collect();
    let removed = keep.iter().enumerate().filter(|(_, &k)| !k).map(|(i, _)| i).collect();
    Ok((pc.retain_mask(&keep), removed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn grid_10x10() -> Vec<Point3<f64>> {
        (0..100).map(|i| Point3::new((i % 10) as f64, (i / 10) as f64, 0.0)).collect()
    }

    #[test]
    fn too_few_points() {
        let pc = PointCloud::from_positions(grid_10x10()[..8].to_vec()).unwrap();
        let p = OutlierParams { k_neighbors: 8, std_ratio: 2.0 };
        assert!(matches!(remove_statistical_outliers(&pc, &p), Err(GeometryError::TooFewPoints { .. })));
    }

    #[test]
    fn invalid_params() {
        let pc = PointCloud::from_positions(grid_10x10()).unwrap();
        assert!(remove_statistical_outliers(&pc, &OutlierParams { k_neighbors: 0, std_ratio: 1.0 }).is_err());
        assert!(remove_statistical_outliers(&pc, &OutlierParams { k_neighbors: 3, std_ratio: 0.0 }).is_err());
    }

    #[test]
    fn colors_filtered_consistently() {
        let mut pts = grid_10x10();
        pts.push(Point3::new(4.5, 4.5, 100.0));
        let colors: Vec<[f32; 3]> = (0..pts.len()).map(|i| [i as f32 / 101.0, 0.0, 0.0]).collect();
        let pc = PointCloud::new(pts, Some(colors), None).unwrap();
        let (kept, removed) =
            remove_statistical_outliers(&pc, &OutlierParams { k_neighbors: 8, std_ratio: 2.0 }).unwrap();
        assert_eq!(removed, vec![100]);
        assert_eq!(kept.len(), 100);
        assert_eq!(kept.colors().unwrap()[99], [99.0 / 101.0, 0.0, 0.0]);
    }

    #[test]
    fn equal_neighbour_distances_remove_nothing() {
        let cube: Vec<_> = (0..8).map(|i| Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, (i >> 2) as f64)).collect();
        let tetra = vec![
            Point3::new(1.0, 1.0, 1.0),
            Point3::new(1.0, -1.0, -1.0),
            Point3::new(-1.0, 1.0, -1.0),
            Point3::new(-1.0, -1.0, 1.0),
        ];
        for (pts, k) in [(cube, 3), (tetra, 3)] {
            let pc = PointCloud::from_positions(pts).unwrap();
            let (kept, removed) =
                remove_statistical_outliers(&pc, &OutlierParams { k_neighbors: k, std_ratio: 2.0 }).unwrap();
            assert!(removed.is_empty());
            assert_eq!(kept.positions(), pc.positions());
        }
    }

    #[test]
    fn second_pass_on_grid_matches_brute_force() {
        // Without the far point, the grid's corners have the largest mean
        // distance and sit above mean + 2 std for k = 8.
        let pts = grid_10x10();
        let k = 8;
        let means: Vec<f64> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut d: Vec<(f64, usize)> =
                    pts.iter().enumerate().filter(|(j, _)| *j != i).map(|(j, q)| ((p - q).norm(), j)).collect();
                d.sort_by(|a, b| a.partial_cmp(b).unwrap());
                d[..k].iter().map(|x| x.0).sum::<f64>() / k as f64
            })
            .collect();
        let mu = means.iter().sum::<f64>() / 100.0;
        let sd = (means.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / 99.0).sqrt();
        let expected: Vec<usize> = (0..100).filter(|&i| means[i] > mu + 2.0 * sd).collect();
        assert_eq!(expected, vec![0, 9, 90, 99]);

        let pc = PointCloud::from_positions(pts).unwrap();
        let (_, removed) = remove_statistical_outliers(&pc, &OutlierParams { k_neighbors: k, std_ratio: 2.0 }).unwrap();
        assert_eq!(removed, expected);
    }
}
