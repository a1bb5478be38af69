mod common;

use artmesh::mesh::{read_ply, write_ply, write_ply_bytes, PlyFormat, TriangleMesh};
use artmesh::poisson::{reconstruct, PoissonParams};
use nalgebra::Point3;

use common::{fibonacci_sphere, fixture};

fn golden_triangle() -> TriangleMesh {
    TriangleMesh::new(
        vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.5)],
        vec![[0, 1, 2]],
        Some(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
    )
    .unwrap()
}

#[test]
fn single_triangle_matches_golden_file() {
    let golden = std::fs::read(fixture("single_triangle.ply")).unwrap();
    assert_eq!(write_ply_bytes(&golden_triangle(), PlyFormat::Ascii), golden);
    assert_eq!(read_ply(&fixture("single_triangle.ply")).unwrap(), golden_triangle());
}

#[test]
fn sphere_round_trip_is_bit_exact() {
    let mesh = reconstruct(&fibonacci_sphere(2000), &PoissonParams { depth: 5, ..Default::default() }).unwrap().mesh;
    let dir = tempfile::tempdir().unwrap();
    for format in [PlyFormat::Ascii, PlyFormat::BinaryLe] {
        let path = dir.path().join("sphere.ply");
        write_ply(&mesh, &path, format).unwrap();
        let back = read_ply(&path).unwrap();
        assert_eq!(back.vertices().len(), mesh.vertices().len());
        assert_eq!(back.triangles(), mesh.triangles());
        for (a, b) in back.vertices().iter().zip(mesh.vertices()) {
            for k in 0..3 {
                assert_eq!((a[k] as f32).to_bits(), (b[k] as f32).to_bits());
            }
        }
        // Canonical form: rewriting what was read reproduces the file.
        assert_eq!(write_ply_bytes(&back, format), std::fs::read(&path).unwrap());
    }
}

#[test]
fn missing_file_is_io_error() {
    assert!(read_ply(&fixture("no_such.ply")).is_err());
}
