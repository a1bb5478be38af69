//! Files in the formats an external depth or embedding backend emits.

mod common;

use artmesh::eval::{cosine_similarity, dot_if_normalized, load_embeddings, UNIT_NORM_TOLERANCE};
use artmesh::raster::{load_depth, range_sidecar_path};

use common::fixture;

/// PFM bytes assembled by hand: header, then little-endian rows bottom to top.
fn pfm_bytes(w: usize, h: usize, rows_top_down: &[Vec<f32>]) -> Vec<u8> {
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for row in rows_top_down.iter().rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

#[test]
fn backend_pfm_is_read_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("glpn.pfm");
    std::fs::write(&path, pfm_bytes(2, 2, &[vec![0.5, 1.0], vec![1.5, 2.0]])).unwrap();
    let d = load_depth(&path).unwrap();
    assert_eq!((d.width(), d.height()), (2, 2));
    assert_eq!(d.values(), &[0.5, 1.0, 1.5, 2.0]);
}

#[test]
fn backend_pfm_with_nan_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.pfm");
    std::fs::write(&path, pfm_bytes(2, 1, &[vec![0.5, f32::NAN]])).unwrap();
    assert!(load_depth(&path).is_err());
}

#[test]
fn shipped_depth_fixtures_load() {
    for name in ["sphere", "bump"] {
        let g = load_depth(&fixture(&format!("{name}/glpn.pfm"))).unwrap();
        let d = load_depth(&fixture(&format!("{name}/da.pfm"))).unwrap();
        assert_eq!((g.width(), g.height()), (64, 64));
        assert_eq!((d.width(), d.height()), (48, 48));
    }
}

#[test]
fn png16_with_range_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("da.png");
    let file = std::fs::File::create(&path).unwrap();
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), 2, 1);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().unwrap();
    writer.write_image_data(&[0x00, 0x00, 0xff, 0xff]).unwrap();
    writer.finish().unwrap();

    assert!(load_depth(&path).is_err(), "PNG without sidecar must be rejected");
    std::fs::write(range_sidecar_path(&path), "0.0 2.0\n").unwrap();
    assert_eq!(load_depth(&path).unwrap().values(), &[0.0, 2.0]);
}

#[test]
fn backend_embeddings_are_unit_and_comparable() {
    let artworks = load_embeddings(&fixture("embeddings/artworks.txt")).unwrap();
    let renders = load_embeddings(&fixture("embeddings/proposed.txt")).unwrap();
    assert_eq!(artworks.len(), 5);
    for (a, r) in artworks.iter().zip(&renders) {
        assert!((a.norm() - 1.0).abs() < UNIT_NORM_TOLERANCE && (r.norm() - 1.0).abs() < UNIT_NORM_TOLERANCE);
        let gap = dot_if_normalized(a, r).unwrap() - cosine_similarity(a, r).unwrap();
        assert!(gap.abs() < 1e-6);
    }
}
