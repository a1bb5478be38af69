//! Indexed triangle meshes: cleanup, vertex colors, statistics and PLY I/O.

mod ply;

use std::collections::HashMap;

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{KdTree, PointCloud};

pub use ply::{
    read_ply, read_ply_bytes, write_point_cloud_ply, write_ply, write_ply_bytes, PlyFormat,
};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("triangle {triangle} references vertex {index} but the mesh has {vertices} vertices")]
    IndexOutOfRange { triangle: usize, index: u32, vertices: usize },
    #[error("triangle {triangle} repeats vertex {index}")]
    RepeatedVertex { triangle: usize, index: u32 },
    #[error("{len} colors for {vertices} vertices")]
    ColorLength { len: usize, vertices: usize },
    #[error("point cloud has no colors")]
    ColorlessCloud,
    #[error("trim radius must be positive, got {0}")]
    Radius(f64),
    #[error(
        "trimming removed everything: {vertices} vertices / {triangles} triangles in, \
         {unsupported} vertices lacked support"
    )]
    TrimmedAway { vertices: usize, triangles: usize, unsupported: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PLY header: {0}")]
    Header(String),
    #[error("malformed PLY body: {0}")]
    Body(String),
    #[error("PLY body truncated in element `{element}` (item {item} of {count})")]
    Truncated { element: String, item: usize, count: usize },
}

pub type Result<T> = std::result::Result<T, MeshError>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
    colors: Option<Vec<[f32; 3]>>,
}

impl TriangleMesh {
    pub fn new(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[u32; 3]>,
        colors: Option<Vec<[f32; 3]>>,
    ) -> Result<Self> {
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            for &i in tri {
                if i as usize >= nv {
                    return Err(MeshError::IndexOutOfRange { triangle: t, index: i, vertices: nv });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                let index = if tri[0] == tri[1] || tri[0] == tri[2] { tri[0] } else { tri[1] };
                return Err(MeshError::RepeatedVertex { triangle: t, index });
            }
        }
        if let Some(c) = &colors {
            if c.len() != nv {
                return Err(MeshError::ColorLength { len: c.len(), vertices: nv });
            }
        }
        Ok(Self { vertices, triangles, colors })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn colors(&self) -> Option<&[[f32; 3]]> {
        self.colors.as_deref()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty() && self.vertices.is_empty()
    }

    /// Keeps the given triangles and drops vertices no longer referenced,
    /// compacting indices while preserving relative vertex order.
    fn compact(&self, keep_triangle: impl Fn(usize) -> bool) -> Self {
        let triangles: Vec<[u32; 3]> = self
            .triangles
            .iter()
            .enumerate()
            .filter(|(t, _)| keep_triangle(*t))
            .map(|(_, tri)| *tri)
            .collect();
        let mut used = vec![false; self.vertices.len()];
        for tri in &triangles {
            for &i in tri {
                used[i as usize] = true;
            }
        }
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut next = 0u32;
        for (i, &u) in used.iter().enumerate() {
            if u {
                remap[i] = next;
                next += 1;
            }
        }
        let pick = |i: usize| used[i];
        Self {
            vertices: (0..self.vertices.len()).filter(|&i| pick(i)).map(|i| self.vertices[i]).collect(),
            triangles: triangles
                .iter()
                .map(|t| [remap[t[0] as usize], remap[t[1] as usize], remap[t[2] as usize]])
                .collect(),
            colors: self
                .colors
                .as_ref()
                .map(|c| (0..c.len()).filter(|&i| pick(i)).map(|i| c[i]).collect()),
        }
    }
}

/// Triangle-connected components: component id per triangle, in order of
/// each component's smallest vertex index.
fn triangle_components(mesh: &TriangleMesh) -> (Vec<usize>, usize) {
    let mut parent: Vec<usize> = (0..mesh.vertices.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for tri in &mesh.triangles {
        let a = find(&mut parent, tri[0] as usize);
        for &v in &tri[1..] {
            let b = find(&mut parent, v as usize);
            // Root is always the smaller vertex index.
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            parent[hi] = lo;
            let _ = find(&mut parent, a);
        }
    }
    let mut label: HashMap<usize, usize> = HashMap::new();
    let mut roots: Vec<usize> = mesh
        .triangles
        .iter()
        .map(|tri| find(&mut parent, tri[0] as usize))
        .collect();
    let mut sorted: Vec<usize> = roots.clone();
    sorted.sort_unstable();
    sorted.dedup();
    for (id, r) in sorted.iter().enumerate() {
        label.insert(*r, id);
    }
    for r in roots.iter_mut() {
        *r = label[r];
    }
    (roots, sorted.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub vertices: usize,
    pub triangles: usize,
    /// Edges used by exactly one triangle.
    pub boundary_edges: usize,
    /// Edges used by more than two triangles.
    pub non_manifold_edges: usize,
    pub components: usize,
    pub bbox_min: Option<[f64; 3]>,
    pub bbox_max: Option<[f64; 3]>,
    pub watertight: bool,
}

pub fn mesh_stats(mesh: &TriangleMesh) -> MeshStats {
    let mut edges: HashMap<(u32, u32), u32> = HashMap::with_capacity(mesh.triangles.len() * 3 / 2);
    for tri in &mesh.triangles {
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let boundary_edges = edges.values().filter(|&&c| c == 1).count();
    let non_manifold_edges = edges.values().filter(|&&c| c > 2).count();
    let (_, components) = triangle_components(mesh);

    let (bbox_min, bbox_max) = if mesh.vertices.is_empty() {
        (None, None)
    } else {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &mesh.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        (Some(lo), Some(hi))
    };

    MeshStats {
        vertices: mesh.vertices.len(),
        triangles: mesh.triangles.len(),
        boundary_edges,
        non_manifold_edges,
        components,
        bbox_min,
        bbox_max,
        watertight: boundary_edges == 0,
    }
}

/// Gives every vertex the color of its nearest cloud point (ties to the lower index).
pub fn transfer_colors(mesh: &TriangleMesh, pc: &PointCloud) -> Result<TriangleMesh> {
    let colors = pc.colors().ok_or(MeshError::ColorlessCloud)?;
    if pc.is_empty() {
        return Err(MeshError::ColorlessCloud);
    }
    let tree = KdTree::build(pc.positions());
    let vertex_colors = mesh
        .vertices
        .par_iter()
        .map(|v| colors[tree.nearest(v).expect("non-empty tree").index])
        .collect();
    Ok(TriangleMesh { colors: Some(vertex_colors), ..mesh.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrimReport {
    pub unsupported_vertices: usize,
    pub dropped_components: usize,
    pub vertices_before: usize,
    pub vertices_after: usize,
    pub triangles_before: usize,
    pub triangles_after: usize,
}

/// Removes vertices with fewer than `min_count` cloud points within `radius`
/// (and their triangles), then keeps only the largest triangle-connected
/// component. Size ties go to the component with the smallest vertex index.
pub fn trim_low_support(
    mesh: &TriangleMesh,
    pc: &PointCloud,
    radius: f64,
    min_count: usize,
) -> Result<(TriangleMesh, TrimReport)> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(MeshError::Radius(radius));
    }
    let supported: Vec<bool> = if min_count == 0 {
        vec![true; mesh.vertices.len()]
    } else {
        let tree = KdTree::build(pc.positions());
        mesh.vertices.par_iter().map(|v| tree.count_within(v, radius) >= min_count).collect()
    };
    let unsupported_vertices = supported.iter().filter(|s| !**s).count();
    let pruned = mesh.compact(|t| mesh.triangles[t].iter().all(|&i| supported[i as usize]));

    let (component, count) = triangle_components(&pruned);
    if count == 0 {
        return Err(MeshError::TrimmedAway {
            vertices: mesh.vertices.len(),
            triangles: mesh.triangles.len(),
            unsupported: unsupported_vertices,
        });
    }
    let mut sizes = vec![0usize; count];
    for &c in &component {
        sizes[c] += 1;
    }
    // Components are numbered by smallest vertex index, so the first maximum wins ties.
    let largest = (0..count).fold(0, |best, c| if sizes[c] > sizes[best] { c } else { best });
    let trimmed = pruned.compact(|t| component[t] == largest);

    let report = TrimReport {
        unsupported_vertices,
        dropped_components: count - 1,
        vertices_before: mesh.vertices.len(),
        vertices_after: trimmed.vertices.len(),
        triangles_before: mesh.triangles.len(),
        triangles_after: trimmed.triangles.len(),
    };
    Ok((trimmed, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tetrahedron() -> TriangleMesh {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        TriangleMesh::new(v, vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]], None).unwrap()
    }

    fn two_triangles() -> TriangleMesh {
        let v = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(5.0, 0.0, 0.0),
            Point3::new(6.0, 0.0, 0.0),
            Point3::new(5.0, 1.0, 0.0),
        ];
        TriangleMesh::new(v, vec![[0, 1, 2], [3, 4, 5]], None).unwrap()
    }

    #[test]
    fn stats_examples() {
        let s = mesh_stats(&tetrahedron());
        assert_eq!((s.vertices, s.triangles, s.boundary_edges, s.components), (4, 4, 0, 1));
        assert!(s.watertight);

        let single = TriangleMesh::new(tetrahedron().vertices[..3].to_vec(), vec![[0, 1, 2]], None).unwrap();
        assert_eq!(mesh_stats(&single).boundary_edges, 3);
        assert!(!mesh_stats(&single).watertight);

        assert_eq!(mesh_stats(&two_triangles()).components, 2);
        let empty = mesh_stats(&TriangleMesh::empty());
        assert_eq!((empty.components, empty.bbox_min), (0, None));
    }

    #[test]
    fn invariants() {
        let v = vec![Point3::origin(); 3];
        assert!(matches!(
            TriangleMesh::new(v.clone(), vec![[0, 1, 3]], None),
            Err(MeshError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            TriangleMesh::new(v.clone(), vec![[0, 1, 1]], None),
            Err(MeshError::RepeatedVertex { .. })
        ));
        assert!(TriangleMesh::new(v, vec![], Some(vec![[0.0; 3]])).is_err());
    }

    #[test]
    fn single_red_point_colors_everything() {
        let pc = PointCloud::new(vec![Point3::new(9.0, 9.0, 9.0)], Some(vec![[1.0, 0.0, 0.0]]), None).unwrap();
        let out = transfer_colors(&tetrahedron(), &pc).unwrap();
        assert!(out.colors().unwrap().iter().all(|c| *c == [1.0, 0.0, 0.0]));
        assert!(transfer_colors(&tetrahedron(), &PointCloud::from_positions(vec![Point3::origin()]).unwrap()).is_err());
    }

    #[test]
    fn coincident_vertex_takes_exact_color() {
        let pc = PointCloud::new(
            vec![Point3::new(1.0, 0.0, 0.0), Point3::new(0.9, 0.0, 0.0), Point3::new(0.0, 0.0, 0.0)],
            Some(vec![[0.1, 0.2, 0.3], [0.9, 0.9, 0.9], [0.5, 0.5, 0.5]]),
            None,
        )
        .unwrap();
        let out = transfer_colors(&tetrahedron(), &pc).unwrap();
        assert_eq!(out.colors().unwrap()[1], [0.1, 0.2, 0.3]);
        assert_eq!(out.colors().unwrap()[0], [0.5, 0.5, 0.5]);
    }

    #[test]
    fn min_count_zero_keeps_largest_component_only() {
        let mut v = tetrahedron().vertices.clone();
        v.extend(two_triangles().vertices[3..].iter().copied());
        let mut t = tetrahedron().triangles.clone();
        t.push([4, 5, 6]);
        let mesh = TriangleMesh::new(v, t, None).unwrap();
        let pc = PointCloud::from_positions(vec![Point3::origin()]).unwrap();
        let (out, report) = trim_low_support(&mesh, &pc, 1.0, 0).unwrap();
        assert_eq!(out, tetrahedron());
        assert_eq!(report.dropped_components, 1);
    }

    #[test]
    fn supported_mesh_unchanged() {
        let mesh = tetrahedron();
        let pc = PointCloud::from_positions(mesh.vertices().to_vec()).unwrap();
        let (out, report) = trim_low_support(&mesh, &pc, 0.1, 1).unwrap();
        assert_eq!(out, mesh);
        assert_eq!(report.unsupported_vertices, 0);
    }

    #[test]
    fn equal_components_prefer_lowest_vertex() {
        let (out, _) = trim_low_support(
            &two_triangles(),
            &PointCloud::from_positions(vec![Point3::origin()]).unwrap(),
            1.0,
            0,
        )
        .unwrap();
        assert_eq!(out.vertices()[0], Point3::origin());
        assert_eq!(out.triangles().len(), 1);
    }

    #[test]
    fn trimming_everything_is_an_error() {
        let pc = PointCloud::from_positions(vec![Point3::new(100.0, 0.0, 0.0)]).unwrap();
        assert!(matches!(
            trim_low_support(&tetrahedron(), &pc, 1.0, 1),
            Err(MeshError::TrimmedAway { unsupported: 4, .. })
        ));
        assert!(trim_low_support(&tetrahedron(), &pc, 0.0, 1).is_err());
    }

    fn sphere_cloud(n: usize) -> PointCloud {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let mut pts = Vec::new();
        let mut colors = Vec::new();
        for i in 0..n {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let t = golden * i as f64;
            pts.push(Point3::new(r * t.cos(), y, r * t.sin()));
            colors.push(if y >= 0.0 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] });
        }
        PointCloud::new(pts, Some(colors), None).unwrap()
    }

    fn brute_nearest(pc: &PointCloud, q: &Point3<f64>) -> usize {
        let mut best = 0;
        for (i, p) in pc.positions().iter().enumerate() {
            if (p - q).norm_squared() < (pc.positions()[best] - q).norm_squared() {
                best = i;
            }
        }
        best
    }

    #[test]
    fn sphere_vertices_take_their_hemisphere_color() {
        let pc = sphere_cloud(3000);
        // A coarser sphere as the mesh: vertices only matter here.
        let mesh_pts = sphere_cloud(800).positions().iter().map(|p| p * 1.01).collect();
        let mesh = TriangleMesh::new(mesh_pts, vec![], None).unwrap();
        let out = transfer_colors(&mesh, &pc).unwrap();
        let colors = out.colors().unwrap();
        let mut own = 0;
        for (v, c) in mesh.vertices().iter().zip(colors) {
            assert_eq!(*c, pc.colors().unwrap()[brute_nearest(&pc, v)]);
            let expected = if v.y >= 0.0 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] };
            own += (*c == expected) as usize;
        }
        assert!(own as f64 >= 0.99 * mesh.vertices().len() as f64);
    }

    #[test]
    fn trim_leaves_no_dangling_indices() {
        // A fan of triangles around the origin, with support only on one side.
        let mut v = vec![Point3::origin()];
        let mut t = Vec::new();
        for i in 0..24 {
            let a = i as f64 / 24.0 * std::f64::consts::TAU;
            v.push(Point3::new(a.cos(), a.sin(), 0.0));
            t.push([0, 1 + i as u32, 1 + ((i + 1) % 24) as u32]);
        }
        let mesh = TriangleMesh::new(v.clone(), t, Some(vec![[0.5; 3]; 25])).unwrap();
        let support: Vec<Point3<f64>> = v.iter().filter(|p| p.x >= -0.1).copied().collect();
        let pc = PointCloud::from_positions(support).unwrap();
        let (out, report) = trim_low_support(&mesh, &pc, 0.05, 1).unwrap();
        assert!(report.unsupported_vertices > 0);
        let nv = out.vertices().len() as u32;
        let mut used = vec![false; nv as usize];
        for tri in out.triangles() {
            for &i in tri {
                assert!(i < nv);
                used[i as usize] = true;
            }
        }
        assert!(used.iter().all(|u| *u), "unreferenced vertex kept");
        assert_eq!(out.colors().unwrap().len(), out.vertices().len());
        assert!(out.vertices().iter().all(|p| p.x >= -0.1));
    }
}
