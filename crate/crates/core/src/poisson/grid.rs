use nalgebra::{Point3, Vector3};

use super::{PoissonError, Result};

/// Smallest grid resolution (cells per axis) accepted by [`VoxelGrid`].
pub const MIN_RESOLUTION: usize = 8;

/// Cubic lattice of `(resolution + 1)^3` nodes spaced `cell_size` apart.
///
/// Node `(i, j, k)` sits at `origin + (i, j, k) * cell_size`; linear index is
/// `i + n * (j + n * k)` with `n = resolution + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid {
    resolution: usize,
    origin: Point3<f64>,
    cell_size: f64,
}

impl VoxelGrid {
    pub fn new(resolution: usize, origin: Point3<f64>, cell_size: f64) -> Result<Self> {
        if resolution < MIN_RESOLUTION {
            return Err(PoissonError::Params(format!(
                "grid resolution {resolution} below minimum {MIN_RESOLUTION}"
            )));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) || !origin.coords.iter().all(|c| c.is_finite()) {
            return Err(PoissonError::Params(format!("invalid grid cell size {cell_size}")));
        }
        Ok(Self { resolution, origin, cell_size })
    }

    /// Cube of `2^depth` cells around the bounding box of `points`, each side
    /// padded by `pad_fraction` times the largest extent.
    ///
    /// A cloud with zero extent (a single location) is treated as unit extent.
    pub fn enclosing(points: &[Point3<f64>], depth: u32, pad_fraction: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(PoissonError::EmptyCloud);
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let mut extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        if extent == 0.0 {
            extent = 1.0;
        }
        let side = extent * (1.0 + 2.0 * pad_fraction);
        let center = Point3::from((lo.coords + hi.coords) * 0.5);
        let origin = center - Vector3::repeat(side * 0.5);
        let resolution = 1usize << depth;
        let grid = Self::new(resolution, origin, side / resolution as f64)?;
        if let Some(index) = points.iter().position(|p| !grid.contains_strictly(p)) {
            return Err(PoissonError::OutsideGrid { index });
        }
        Ok(grid)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.resolution + 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().pow(3)
    }

    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn side(&self) -> f64 {
        self.cell_size * self.resolution as f64
    }

    pub fn center(&self) -> Point3<f64> {
        self.origin + Vector3::repeat(self.side() * 0.5)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.nodes_per_axis();
        i + n * (j + n * k)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let n = self.nodes_per_axis();
        [index % n, (index / n) % n, index / (n * n)]
    }

    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        self.origin + Vector3::new(i as f64, j as f64, k as f64) * self.cell_size
    }

    pub fn contains_strictly(&self, p: &Point3<f64>) -> bool {
        let side = self.side();
        (0..3).all(|a| p[a] > self.origin[a] && p[a] < self.origin[a] + side)
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let side = self.side();
        (0..3).all(|a| p[a] >= self.origin[a] && p[a] <= self.origin[a] + side)
    }

    /// Cell containing `p` and the fractional offset inside it; `None` outside the grid.
    pub(crate) fn locate(&self, p: &Point3<f64>) -> Option<([usize; 3], [f64; 3])> {
        if !self.contains(p) {
            return None;
        }
        let mut cell = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let g = (p[a] - self.origin[a]) / self.cell_size;
            let c = (g.floor().max(0.0) as usize).min(self.resolution - 1);
            cell[a] = c;
            frac[a] = (g - c as f64).clamp(0.0, 1.0);
        }
        Some((cell, frac))
    }

    /// Trilinear stencil of `p`: the 8 surrounding node indices with their weights.
    pub(crate) fn trilinear(&self, p: &Point3<f64>) -> Option<[(usize, f64); 8]> {
        let ([ci, cj, ck], [fx, fy, fz]) = self.locate(p)?;
        let mut out = [(0usize, 0.0f64); 8];
        for (c, slot) in out.iter_mut().enumerate() {
            let (di, dj, dk) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            let w = if di == 1 { fx } else { 1.0 - fx }
                * if dj == 1 { fy } else { 1.0 - fy }
                * if dk == 1 { fz } else { 1.0 - fz };
            *slot = (self.index(ci + di, cj + dj, ck + dk), w);
        }
        Some(out)
    }
}

/// Per-node scalars on a [`VoxelGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: VoxelGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: VoxelGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(PoissonError::FieldSize { expected: grid.node_count(), found: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(PoissonError::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: VoxelGrid) -> Self {
        Self { grid, values: vec![0.0; grid.node_count()] }
    }

    pub fn from_fn(grid: VoxelGrid, f: impl Fn(Point3<f64>) -> f64) -> Self {
        let values = (0..grid.node_count())
            .map(|idx| {
                let [i, j, k] = grid.coords(idx);
                f(grid.node_position(i, j, k))
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Trilinear interpolation; `None` outside the grid.
    pub fn sample(&self, p: &Point3<f64>) -> Option<f64> {
        let stencil = self.grid.trilinear(p)?;
        Some(stencil.iter().map(|&(idx, w)| w * self.values[idx]).sum())
    }

    pub(crate) fn from_raw(grid: VoxelGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Self { grid, values }
    }

    pub(crate) fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Per-node 3-vectors on a [`VoxelGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: VoxelGrid,
    vectors: Vec<Vector3<f64>>,
}

impl VectorField {
    pub fn new(grid: VoxelGrid, vectors: Vec<Vector3<f64>>) -> Result<Self> {
        if vectors.len() != grid.node_count() {
            return Err(PoissonError::FieldSize { expected: grid.node_count(), found: vectors.len() });
        }
        Ok(Self { grid, vectors })
    }

    pub fn from_fn(grid: VoxelGrid, f: impl Fn(Point3<f64>) -> Vector3<f64>) -> Self {
        let vectors = (0..grid.node_count())
            .map(|idx| {
                let [i, j, k] = grid.coords(idx);
                f(grid.node_position(i, j, k))
            })
            .collect();
        Self { grid, vectors }
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn vectors(&self) -> &[Vector3<f64>] {
        &self.vectors
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.vectors[self.grid.index(i, j, k)]
    }
}
