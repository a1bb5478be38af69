//! Colored 3D meshes of artworks from one RGB image and two relative depth maps.
//!
//! Stages, in pipeline order: [`fusion`] of the depth maps, [`geometry`]
//! (back-projection, outlier removal, normals), [`poisson`] reconstruction and
//! marching cubes, [`mesh`] trimming, coloring and PLY export. [`eval`] scores
//! renders against artworks from precomputed embeddings.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod mesh;
pub mod pipeline;
pub mod poisson;
pub mod raster;
