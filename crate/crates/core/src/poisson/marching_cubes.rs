use std::collections::HashMap;

use nalgebra::Point3;
use serde::Serialize;

use super::tables::{EDGE_TABLE, TRIANGLE_TABLE};
use super::ScalarField;
use crate::mesh::TriangleMesh;

const CORNERS: [[i64; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Edge crossings are kept at least this fraction of an edge away from its
/// endpoints, so merged vertices never coincide and no triangle collapses.
const EDGE_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MarchingStats {
    /// The isovalue lay outside `[min, max]` of the field; the mesh is empty.
    pub iso_out_of_range: bool,
    /// The inside region touched the grid boundary and was capped there.
    pub capped_at_boundary: bool,
}

/// Extracts the `chi = iso` surface with the classic 256-case tables.
///
/// Nodes with `chi >= iso` are inside. Triangles wind counter-clockwise seen
/// from outside, i.e. their normals point down the gradient of `chi`. Crossings
/// on shared cell edges map to a single vertex. Space beyond the grid counts as
/// outside, so the result is always closed: an inside region reaching the
/// boundary is capped half a cell beyond the outermost nodes.
pub fn marching_cubes(chi: &ScalarField, iso: f64) -> (TriangleMesh, MarchingStats) {
    let mut stats = MarchingStats::default();
    let (lo, hi) = chi.min_max();
    if !(iso >= lo && iso <= hi) {
        stats.iso_out_of_range = true;
        return (TriangleMesh::empty(), stats);
    }

    let grid = *chi.grid();
    let n = grid.nodes_per_axis() as i64;
    let value = |i: i64, j: i64, k: i64| -> Option<f64> {
        if i < 0 || j < 0 || k < 0 || i >= n || j >= n || k >= n {
            None
        } else {
            Some(chi.at(i as usize, j as usize, k as usize))
        }
    };
    let position = |i: i64, j: i64, k: i64| -> Point3<f64> {
        let h = grid.cell_size();
        grid.origin() + nalgebra::Vector3::new(i as f64, j as f64, k as f64) * h
    };

    stats.capped_at_boundary = (0..grid.node_count()).any(|idx| {
        let [i, j, k] = grid.coords(idx);
        let on_boundary = [i, j, k].iter().any(|&c| c == 0 || c as i64 == n - 1);
        on_boundary && chi.values()[idx] >= iso
    });
    let (first, last) = if stats.capped_at_boundary { (-1, n - 1) } else { (0, n - 2) };

    // Extended lattice (one virtual layer on each side) for edge keys.
    let m = n + 2;
    let edge_key = |a: [i64; 3], axis: usize| -> u64 {
        let lin = (a[0] + 1) + m * ((a[1] + 1) + m * (a[2] + 1));
        lin as u64 * 3 + axis as u64
    };

    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut edge_vertex: HashMap<u64, u32> = HashMap::new();

    for ck in first..=last {
        for cj in first..=last {
            for ci in first..=last {
                let mut vals = [None; 8];
                let mut case = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    let v = value(ci + off[0], cj + off[1], ck + off[2]);
                    vals[c] = v;
                    if !matches!(v, Some(x) if x >= iso) {
                        case |= 1 << c;
                    }
                }
                if EDGE_TABLE[case] == 0 {
                    continue;
                }

                let mut cell_vertex = [u32::MAX; 12];
                for (e, &(ca, cb)) in EDGES.iter().enumerate() {
                    if EDGE_TABLE[case] & (1 << e) == 0 {
                        continue;
                    }
                    // Canonical orientation: from the lower corner along the edge axis.
                    let (mut a, mut b) = (ca, cb);
                    let oa = CORNERS[a];
                    let ob = CORNERS[b];
                    if ob < oa {
                        std::mem::swap(&mut a, &mut b);
                    }
                    let pa = [ci + CORNERS[a][0], cj + CORNERS[a][1], ck + CORNERS[a][2]];
                    let pb = [ci + CORNERS[b][0], cj + CORNERS[b][1], ck + CORNERS[b][2]];
                    let axis = (0..3).find(|&x| pa[x] != pb[x]).unwrap();
                    let key = edge_key(pa, axis);
                    let id = *edge_vertex.entry(key).or_insert_with(|| {
                        let t = match (vals[a], vals[b]) {
                            (Some(va), Some(vb)) => {
                                ((iso - va) / (vb - va)).clamp(EDGE_MARGIN, 1.0 - EDGE_MARGIN)
                            }
                            (Some(_), None) | (None, Some(_)) => 0.5,
                            (None, None) => unreachable!("edge between two virtual nodes never crosses"),
                        };
                        let xa = position(pa[0], pa[1], pa[2]);
                        let xb = position(pb[0], pb[1], pb[2]);
                        vertices.push(xa + (xb - xa) * t);
                        (vertices.len() - 1) as u32
                    });
                    cell_vertex[e] = id;
                }

                for tri in TRIANGLE_TABLE[case].chunks_exact(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    let a = cell_vertex[tri[0] as usize];
                    let b = cell_vertex[tri[1] as usize];
                    let c = cell_vertex[tri[2] as usize];
                    if a != b && b != c && a != c {
                        triangles.push([a, b, c]);
                    }
                }
            }
        }
    }

    let mesh = TriangleMesh::new(vertices, triangles, None)
        .expect("marching cubes produces valid indices");
    (mesh, stats)
}
