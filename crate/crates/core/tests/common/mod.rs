#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use artmesh::geometry::{project, CameraIntrinsics, PointCloud};
use artmesh::mesh::TriangleMesh;
use artmesh::raster::DepthMap;
use nalgebra::{Point3, Vector3};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Copies a fixture directory into a fresh temporary workdir.
pub fn fixture_workdir(name: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixture(name)).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
        }
    }
    dir
}

pub fn fibonacci_sphere(n: usize) -> PointCloud {
    let golden = PI * (3.0 - 5f64.sqrt());
    let (mut p, mut normals) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let r = (1.0 - y * y).sqrt();
        let t = golden * i as f64;
        let u = Vector3::new(r * t.cos(), y, r * t.sin());
        p.push(Point3::from(u));
        normals.push(u);
    }
    PointCloud::new(p, None, Some(normals)).unwrap()
}

/// Corner-aligned bilinear sample of `d` at output pixel (u, v) of a `tw` x `th` grid.
pub fn bilinear_oracle(d: &DepthMap, tw: usize, th: usize, u: usize, v: usize) -> f64 {
    let map = |o: usize, t: usize, n: usize| -> f64 {
        if t == 1 {
            (n - 1) as f64 / 2.0
        } else {
            o as f64 * (n - 1) as f64 / (t - 1) as f64
        }
    };
    let x = map(u, tw, d.width());
    let y = map(v, th, d.height());
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(d.width() - 1), (y0 + 1).min(d.height() - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let at = |i: usize, j: usize| d.values()[j * d.width() + i] as f64;
    (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x1, y0)) + fy * ((1.0 - fx) * at(x0, y1) + fx * at(x1, y1))
}

/// Scalar reference for fusion followed by range normalization, on the grid of `g`.
pub fn fuse_normalize_oracle(g: &DepthMap, d: &DepthMap, alpha: f64, d_min: f64, d_max: f64) -> Vec<f64> {
    let (w, h) = (g.width(), g.height());
    let mut combined = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let da = if (d.width(), d.height()) == (w, h) {
                d.values()[v * w + u] as f64
            } else {
                bilinear_oracle(d, w, h, u, v)
            };
            combined.push(alpha * g.values()[v * w + u] as f64 + (1.0 - alpha) * da);
        }
    }
    let lo = combined.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = combined.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    combined.iter().map(|&x| d_min + (x - lo) / (hi - lo) * (d_max - d_min)).collect()
}

/// Nearest depth of the mesh through each pixel centre (u, v), by rasterizing
/// projected triangles; `None` where no triangle covers the pixel.
pub fn zbuffer(mesh: &TriangleMesh, cam: &CameraIntrinsics, w: usize, h: usize) -> Vec<Option<f64>> {
    let mut z = vec![None::<f64>; w * h];
    let v = mesh.vertices();
    for t in mesh.triangles() {
        let p: Vec<(f64, f64, f64)> = t.iter().map(|&i| project(&v[i as usize], cam).unwrap()).collect();
        let (u_lo, u_hi) = p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), q| (a.min(q.0), b.max(q.0)));
        let (v_lo, v_hi) = p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), q| (a.min(q.1), b.max(q.1)));
        let area = (p[1].1 - p[2].1) * (p[0].0 - p[2].0) + (p[2].0 - p[1].0) * (p[0].1 - p[2].1);
        if area.abs() < 1e-15 || u_hi < 0.0 || v_hi < 0.0 {
            continue;
        }
        for y in (v_lo.ceil().max(0.0) as usize)..=(v_hi.floor().min((h - 1) as f64) as usize) {
            for x in (u_lo.ceil().max(0.0) as usize)..=(u_hi.floor().min((w - 1) as f64) as usize) {
                let (fx, fy) = (x as f64, y as f64);
                let a = ((p[1].1 - p[2].1) * (fx - p[2].0) + (p[2].0 - p[1].0) * (fy - p[2].1)) / area;
                let b = ((p[2].1 - p[0].1) * (fx - p[2].0) + (p[0].0 - p[2].0) * (fy - p[2].1)) / area;
                let c = 1.0 - a - b;
                if a < -1e-9 || b < -1e-9 || c < -1e-9 {
                    continue;
                }
                // Camera-space z interpolated with screen-space weights: exact
                // enough for the near-fronto-parallel relief fixtures.
                let depth = a * v[t[0] as usize].z + b * v[t[1] as usize].z + c * v[t[2] as usize].z;
                let slot = &mut z[y * w + x];
                if slot.is_none_or(|cur| depth < cur) {
                    *slot = Some(depth);
                }
            }
        }
    }
    z
}
