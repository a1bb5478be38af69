//! Poisson surface reconstruction on a uniform grid.
//!
//! The oriented cloud is splatted into a vector field, its divergence becomes
//! the right-hand side of `laplacian(chi) = div(V)`, and the indicator `chi`
//! is solved with zero Dirichlet boundary by conjugate gradient. The surface
//! is the `chi = iso` level set extracted by marching cubes.
//!
//! Sign convention: `chi` is larger inside the object. Input normals point
//! outward (toward the camera for single-view clouds), so `V` is built from
//! the inward normals `-n`, whose field matches `grad(chi)`.

mod grid;
mod marching_cubes;
mod solver;
mod tables;

use std::time::Instant;

use nalgebra::Vector3;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::PointCloud;
use crate::mesh::TriangleMesh;

pub use grid::{ScalarField, VectorField, VoxelGrid, MIN_RESOLUTION};
pub use marching_cubes::{marching_cubes, MarchingStats};
pub use solver::{laplacian, SolveReport, DIVERGENCE_WINDOW};

pub const MIN_DEPTH: u32 = 4;
pub const MAX_DEPTH: u32 = 9;

#[derive(Debug, Error)]
pub enum PoissonError {
    #[error("invalid poisson parameter: {0}")]
    Params(String),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point cloud has no normals")]
    MissingNormals,
    #[error("point {index} lies outside the voxel grid")]
    OutsideGrid { index: usize },
    #[error("field has {found} entries, grid has {expected} nodes")]
    FieldSize { expected: usize, found: usize },
    #[error("field value {index} is not finite")]
    NonFinite { index: usize },
    #[error(
        "conjugate gradient diverged after {iterations} iterations \
         (relative residual {residual:.3e}, initial {initial_residual:.3e})"
    )]
    Diverged { iterations: usize, residual: f64, initial_residual: f64 },
}

pub type Result<T> = std::result::Result<T, PoissonError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IsoStrategy {
    /// Mean of the interpolated indicator over all input points.
    MeanAtSamples,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoissonParams {
    /// Grid resolution is `2^depth` cells per axis.
    pub depth: u32,
    pub pad_fraction: f64,
    pub cg_tolerance: f64,
    pub cg_max_iters: usize,
    pub iso_strategy: IsoStrategy,
}

impl Default for PoissonParams {
    fn default() -> Self {
        Self {
            depth: 6,
            pad_fraction: 0.15,
            cg_tolerance: 1e-6,
            cg_max_iters: 3000,
            iso_strategy: IsoStrategy::MeanAtSamples,
        }
    }
}

impl PoissonParams {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_DEPTH..=MAX_DEPTH).contains(&self.depth) {
            return Err(PoissonError::Params(format!(
                "depth {} outside [{MIN_DEPTH}, {MAX_DEPTH}]",
                self.depth
            )));
        }
        if !(self.pad_fraction > 0.0 && self.pad_fraction.is_finite()) {
            return Err(PoissonError::Params(format!("pad_fraction must be positive, got {}", self.pad_fraction)));
        }
        if !(self.cg_tolerance > 0.0) {
            return Err(PoissonError::Params(format!("cg_tolerance must be positive, got {}", self.cg_tolerance)));
        }
        if let IsoStrategy::Fixed(v) = self.iso_strategy {
            if !v.is_finite() {
                return Err(PoissonError::Params("fixed isovalue must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Distributes each normal to its 8 surrounding nodes with trilinear weights,
/// then scales the field by `1 / cell_size`.
pub fn splat_normals(pc: &PointCloud, grid: &VoxelGrid) -> Result<VectorField> {
    let normals = pc.normals().ok_or(PoissonError::MissingNormals)?;
    let mut vectors = vec![Vector3::zeros(); grid.node_count()];
    for (index, (p, n)) in pc.positions().iter().zip(normals).enumerate() {
        let stencil = grid.trilinear(p).ok_or(PoissonError::OutsideGrid { index })?;
        for (node, w) in stencil {
            vectors[node] += n * w;
        }
    }
    let inv_h = 1.0 / grid.cell_size();
    vectors.iter_mut().for_each(|v| *v *= inv_h);
    VectorField::new(*grid, vectors)
}

/// Finite-difference divergence: central in the interior, one-sided on boundary nodes.
pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = *v.grid();
    let n = grid.nodes_per_axis();
    let h = grid.cell_size();
    let partial = |idx: [usize; 3], axis: usize| -> f64 {
        let at = |c: usize| {
            let mut q = idx;
            q[axis] = c;
            v.at(q[0], q[1], q[2])[axis]
        };
        let c = idx[axis];
        if c == 0 {
            (at(1) - at(0)) / h
        } else if c == n - 1 {
            (at(n - 1) - at(n - 2)) / h
        } else {
            (at(c + 1) - at(c - 1)) / (2.0 * h)
        }
    };
    let values = (0..grid.node_count())
        .map(|idx| {
            let ijk = grid.coords(idx);
            partial(ijk, 0) + partial(ijk, 1) + partial(ijk, 2)
        })
        .collect();
    ScalarField::from_raw(grid, values)
}

/// Solves `laplacian(chi) = rhs` with `chi = 0` on the boundary of `rhs`'s grid.
pub fn solve_poisson(rhs: &ScalarField, params: &PoissonParams) -> Result<(ScalarField, SolveReport)> {
    solver::solve(rhs, params.cg_tolerance, params.cg_max_iters)
}

pub fn select_isovalue(chi: &ScalarField, pc: &PointCloud, params: &PoissonParams) -> Result<f64> {
    match params.iso_strategy {
        IsoStrategy::Fixed(v) => Ok(v),
        IsoStrategy::MeanAtSamples => {
            if pc.is_empty() {
                return Err(PoissonError::EmptyCloud);
            }
            let mut sum = 0.0;
            for (index, p) in pc.positions().iter().enumerate() {
                sum += chi.sample(p).ok_or(PoissonError::OutsideGrid { index })?;
            }
            Ok(sum / pc.len() as f64)
        }
    }
}

/// Grid, splat, divergence and solve: the indicator field of an oriented cloud.
pub fn indicator_field(pc: &PointCloud, params: &PoissonParams) -> Result<(ScalarField, SolveReport)> {
    params.validate()?;
    if pc.is_empty() {
        return Err(PoissonError::EmptyCloud);
    }
    let grid = VoxelGrid::enclosing(pc.positions(), params.depth, params.pad_fraction)?;
    let field = splat_normals(pc, &grid)?;
    let inward: Vec<f64> = divergence(&field).into_values().into_iter().map(|d| -d).collect();
    solve_poisson(&ScalarField::from_raw(grid, inward), params)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionDiagnostics {
    pub resolution: usize,
    pub cell_size: f64,
    pub grid_origin: [f64; 3],
    pub solve: SolveReport,
    pub isovalue: f64,
    pub marching: MarchingStats,
    pub vertices: usize,
    pub triangles: usize,
    pub solve_seconds: f64,
    pub extract_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub mesh: TriangleMesh,
    pub grid: VoxelGrid,
    pub diagnostics: ReconstructionDiagnostics,
}

pub fn reconstruct(pc: &PointCloud, params: &PoissonParams) -> Result<Reconstruction> {
    let started = Instant::now();
    let (chi, solve) = indicator_field(pc, params)?;
    let solve_seconds = started.elapsed().as_secs_f64();

    let started = Instant::now();
    let isovalue = select_isovalue(&chi, pc, params)?;
    let (mesh, marching) = marching_cubes(&chi, isovalue);
    let extract_seconds = started.elapsed().as_secs_f64();

    let grid = *chi.grid();
    let diagnostics = ReconstructionDiagnostics {
        resolution: grid.resolution(),
        cell_size: grid.cell_size(),
        grid_origin: grid.origin().coords.into(),
        solve,
        isovalue,
        marching,
        vertices: mesh.vertices().len(),
        triangles: mesh.triangles().len(),
        solve_seconds,
        extract_seconds,
    };
    log::info!(
        "poisson: {}^3 grid, {} CG iterations, residual {:.2e}, iso {:.4}, {} vertices / {} triangles",
        diagnostics.resolution,
        diagnostics.solve.iterations,
        diagnostics.solve.relative_residual,
        isovalue,
        diagnostics.vertices,
        diagnostics.triangles
    );
    Ok(Reconstruction { mesh, grid, diagnostics })
}
