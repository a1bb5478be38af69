// PLY 1.0 reader and writer.
//
// The writer emits one canonical layout: vertex (float x,y,z and, when the
// mesh has colors, uchar red,green,blue) followed by face (uchar count, int
// indices). The reader accepts any scalar types, skips unknown properties and
// elements, and fan-triangulates polygons.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Point3;

use super::{MeshError, Result, TriangleMesh};
use crate::geometry::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlyFormat {
    Ascii,
    #[default]
    BinaryLe,
}

impl std::str::FromStr for PlyFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ascii" => Ok(Self::Ascii),
            "binary_le" | "binary_little_endian" => Ok(Self::BinaryLe),
            other => Err(format!("unknown PLY format `{other}` (expected ascii or binary_le)")),
        }
    }
}

fn color_byte(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_ply_bytes(mesh: &TriangleMesh, format: PlyFormat) -> Vec<u8> {
    let colors = mesh.colors();
    let mut header = String::from("ply\n");
    header.push_str(match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLe => "format binary_little_endian 1.0\n",
    });
    let _ = writeln!(header, "element vertex {}", mesh.vertices().len());
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    let _ = writeln!(header, "element face {}", mesh.triangles().len());
    header.push_str("property list uchar int vertex_indices\nend_header\n");

    let mut out = header.into_bytes();
    match format {
        PlyFormat::Ascii => {
            let mut body = String::new();
            for (i, v) in mesh.vertices().iter().enumerate() {
                let _ = write!(body, "{} {} {}", v.x as f32, v.y as f32, v.z as f32);
                if let Some(c) = colors {
                    let [r, g, b] = c[i].map(color_byte);
                    let _ = write!(body, " {r} {g} {b}");
                }
                body.push('\n');
            }
            for t in mesh.triangles() {
                let _ = writeln!(body, "3 {} {} {}", t[0], t[1], t[2]);
            }
            out.extend_from_slice(body.as_bytes());
        }
        PlyFormat::BinaryLe => {
            for (i, v) in mesh.vertices().iter().enumerate() {
                for a in 0..3 {
                    out.extend_from_slice(&(v[a] as f32).to_le_bytes());
                }
                if let Some(c) = colors {
                    out.extend_from_slice(&c[i].map(color_byte));
                }
            }
            for t in mesh.triangles() {
                out.push(3);
                for &i in t {
                    out.extend_from_slice(&(i as i32).to_le_bytes());
                }
            }
        }
    }
    out
}

pub fn write_ply(mesh: &TriangleMesh, path: &Path, format: PlyFormat) -> Result<()> {
    fs::write(path, write_ply_bytes(mesh, format))
        .map_err(|source| MeshError::Io { path: path.to_path_buf(), source })
}

/// ASCII dump of a cloud: x,y,z, then red,green,blue and nx,ny,nz when present.
pub fn write_point_cloud_ply(pc: &PointCloud, path: &Path) -> Result<()> {
    let mut s = String::from("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", pc.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    if pc.colors().is_some() {
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    if pc.normals().is_some() {
        s.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    s.push_str("end_header\n");
    for (i, p) in pc.positions().iter().enumerate() {
        let _ = write!(s, "{} {} {}", p.x as f32, p.y as f32, p.z as f32);
        if let Some(c) = pc.colors() {
            let [r, g, b] = c[i].map(color_byte);
            let _ = write!(s, " {r} {g} {b}");
        }
        if let Some(n) = pc.normals() {
            let _ = write!(s, " {} {} {}", n[i].x as f32, n[i].y as f32, n[i].z as f32);
        }
        s.push('\n');
    }
    fs::write(path, s).map_err(|source| MeshError::Io { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
    BinaryBe,
}

fn parse_header(bytes: &[u8]) -> Result<(Encoding, Vec<Element>, usize)> {
    let header_err = |m: &str| MeshError::Header(m.to_string());
    let mut pos = 0;
    let mut next_line = || -> Option<&str> {
        if pos >= bytes.len() {
            return None;
        }
        let end = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |e| pos + e);
        let line = std::str::from_utf8(&bytes[pos..end]).ok();
        pos = (end + 1).min(bytes.len() + 1);
        Some(line.unwrap_or("\u{fffd}").trim_end_matches('\r'))
    };

    if next_line() != Some("ply") {
        return Err(header_err("missing `ply` magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line().ok_or_else(|| header_err("missing end_header"))?;
        let mut words = line.split_whitespace();
        match words.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                encoding = Some(match (words.next(), words.next()) {
                    (Some("ascii"), Some("1.0")) => Encoding::Ascii,
                    (Some("binary_little_endian"), Some("1.0")) => Encoding::BinaryLe,
                    (Some("binary_big_endian"), Some("1.0")) => Encoding::BinaryBe,
                    _ => return Err(MeshError::Header(format!("unsupported format line `{line}`"))),
                });
            }
            Some("element") => {
                let name = words.next().ok_or_else(|| header_err("element without name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| MeshError::Header(format!("bad element count in `{line}`")))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| header_err("property before any element"))?;
                let bad = || MeshError::Header(format!("bad property line `{line}`"));
                let first = words.next().ok_or_else(bad)?;
                let prop = if first == "list" {
                    let count = words.next().and_then(Scalar::parse).ok_or_else(bad)?;
                    let item = words.next().and_then(Scalar::parse).ok_or_else(bad)?;
                    let name = words.next().ok_or_else(bad)?;
                    Property::List { name: name.to_string(), count, item }
                } else {
                    let ty = Scalar::parse(first).ok_or_else(bad)?;
                    let name = words.next().ok_or_else(bad)?;
                    Property::Scalar { name: name.to_string(), ty }
                };
                element.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(MeshError::Header(format!("unknown keyword `{other}`"))),
        }
    }
    let encoding = encoding.ok_or_else(|| header_err("missing format line"))?;
    Ok((encoding, elements, pos.min(bytes.len())))
}

/// Sequential value source over either encoding.
enum Body<'a> {
    Ascii(std::str::SplitAsciiWhitespace<'a>),
    Binary { data: &'a [u8], pos: usize, big_endian: bool },
}

impl Body<'_> {
    /// `Ok(None)` on end of data, `Err` on a token that does not parse.
    fn read(&mut self, ty: Scalar) -> Result<Option<f64>> {
        match self {
            Body::Ascii(tokens) => match tokens.next() {
                None => Ok(None),
                Some(t) => t
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| MeshError::Body(format!("cannot parse `{t}` as a number"))),
            },
            Body::Binary { data, pos, big_endian } => {
                let size = ty.size();
                if *pos + size > data.len() {
                    return Ok(None);
                }
                let mut raw = [0u8; 8];
                raw[..size].copy_from_slice(&data[*pos..*pos + size]);
                if *big_endian {
                    raw[..size].reverse();
                }
                *pos += size;
                let b2 = [raw[0], raw[1]];
                let b4 = [raw[0], raw[1], raw[2], raw[3]];
                Ok(Some(match ty {
                    Scalar::I8 => raw[0] as i8 as f64,
                    Scalar::U8 => raw[0] as f64,
                    Scalar::I16 => i16::from_le_bytes(b2) as f64,
                    Scalar::U16 => u16::from_le_bytes(b2) as f64,
                    Scalar::I32 => i32::from_le_bytes(b4) as f64,
                    Scalar::U32 => u32::from_le_bytes(b4) as f64,
                    Scalar::F32 => f32::from_le_bytes(b4) as f64,
                    Scalar::F64 => f64::from_le_bytes(raw),
                }))
            }
        }
    }
}

pub fn read_ply_bytes(bytes: &[u8]) -> Result<TriangleMesh> {
    let (encoding, elements, body_start) = parse_header(bytes)?;
    let mut body = match encoding {
        Encoding::Ascii => {
            let text = std::str::from_utf8(&bytes[body_start..])
                .map_err(|_| MeshError::Body("ascii body is not valid UTF-8".into()))?;
            Body::Ascii(text.split_ascii_whitespace())
        }
        Encoding::BinaryLe | Encoding::BinaryBe => Body::Binary {
            data: &bytes[body_start..],
            pos: 0,
            big_endian: encoding == Encoding::BinaryBe,
        },
    };

    let mut vertices = Vec::new();
    let mut colors: Vec<[f32; 3]> = Vec::new();
    let mut has_colors = false;
    let mut triangles = Vec::new();

    for element in &elements {
        let truncated = |item: usize| MeshError::Truncated {
            element: element.name.clone(),
            item,
            count: element.count,
        };
        let is_vertex = element.name == "vertex";
        let is_face = element.name == "face";
        if is_vertex {
            let names: Vec<&str> = element
                .properties
                .iter()
                .filter_map(|p| match p {
                    Property::Scalar { name, .. } => Some(name.as_str()),
                    Property::List { .. } => None,
                })
                .collect();
            for axis in ["x", "y", "z"] {
                if !names.contains(&axis) {
                    return Err(MeshError::Header(format!("vertex element lacks property `{axis}`")));
                }
            }
            has_colors = ["red", "green", "blue"].iter().all(|c| names.contains(c));
            vertices.reserve(element.count);
        }

        for item in 0..element.count {
            let mut xyz = [0.0f64; 3];
            let mut rgb = [0.0f32; 3];
            for prop in &element.properties {
                match prop {
                    Property::Scalar { name, ty } => {
                        let v = body.read(*ty)?.ok_or_else(|| truncated(item))?;
                        if is_vertex {
                            match name.as_str() {
                                // Positions pass through f32, matching what the writer stores.
                                "x" => xyz[0] = v as f32 as f64,
                                "y" => xyz[1] = v as f32 as f64,
                                "z" => xyz[2] = v as f32 as f64,
                                "red" | "green" | "blue" => {
                                    let c = if matches!(ty, Scalar::F32 | Scalar::F64) {
                                        v as f32
                                    } else {
                                        v as f32 / 255.0
                                    };
                                    rgb[["red", "green", "blue"].iter().position(|n| n == name).unwrap()] = c;
                                }
                                _ => {}
                            }
                        }
                    }
                    Property::List { name, count, item: item_ty } => {
                        let n = body.read(*count)?.ok_or_else(|| truncated(item))?;
                        if !(n >= 0.0 && n.fract() == 0.0) {
                            return Err(MeshError::Body(format!("bad list length {n}")));
                        }
                        let mut list = Vec::with_capacity(n as usize);
                        for _ in 0..n as usize {
                            list.push(body.read(*item_ty)?.ok_or_else(|| truncated(item))?);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            let idx: Vec<u32> = list
                                .iter()
                                .map(|&v| {
                                    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                                        Ok(v as u32)
                                    } else {
                                        Err(MeshError::Body(format!("bad vertex index {v}")))
                                    }
                                })
                                .collect::<Result<_>>()?;
                            for k in 1..idx.len().saturating_sub(1) {
                                triangles.push([idx[0], idx[k], idx[k + 1]]);
                            }
                        }
                    }
                }
            }
            if is_vertex {
                vertices.push(Point3::from(xyz));
                if has_colors {
                    colors.push(rgb);
                }
            }
        }
    }

    TriangleMesh::new(vertices, triangles, has_colors.then_some(colors))
}

pub fn read_ply(path: &Path) -> Result<TriangleMesh> {
    let bytes = fs::read(path).map_err(|source| MeshError::Io { path: path.to_path_buf(), source })?;
    read_ply_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle(colors: bool) -> TriangleMesh {
        let v = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.5, -0.25)];
        let c = colors.then(|| vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        TriangleMesh::new(v, vec![[0, 1, 2]], c).unwrap()
    }

    #[test]
    fn ascii_layout() {
        let text = String::from_utf8(write_ply_bytes(&triangle(true), PlyFormat::Ascii)).unwrap();
        assert!(text.ends_with("end_header\n0 0 0 255 0 0\n1 0 0 0 255 0\n0 1.5 -0.25 0 0 255\n3 0 1 2\n"));
    }

    #[test]
    fn round_trip_both_formats() {
        for format in [PlyFormat::Ascii, PlyFormat::BinaryLe] {
            for colored in [false, true] {
                let mesh = triangle(colored);
                let bytes = write_ply_bytes(&mesh, format);
                let back = read_ply_bytes(&bytes).unwrap();
                assert_eq!(back, mesh);
                assert_eq!(write_ply_bytes(&back, format), bytes);
            }
        }
    }

    #[test]
    fn empty_mesh_is_legal() {
        for format in [PlyFormat::Ascii, PlyFormat::BinaryLe] {
            let bytes = write_ply_bytes(&TriangleMesh::empty(), format);
            let text = String::from_utf8_lossy(&bytes);
            assert!(text.contains("element vertex 0\n") && text.contains("element face 0\n"));
            assert!(read_ply_bytes(&bytes).unwrap().is_empty());
        }
    }

    #[test]
    fn extra_properties_and_elements_are_skipped() {
        let text = "ply\nformat ascii 1.0\ncomment made elsewhere\nelement vertex 3\n\
                    property double x\nproperty double y\nproperty double z\nproperty float confidence\n\
                    element face 1\nproperty list uchar uint vertex_index\nproperty uchar flags\n\
                    element edge 1\nproperty int a\nproperty int b\nend_header\n\
                    0 0 0 0.5\n1 0 0 0.5\n0 1 0 0.5\n3 0 1 2 7\n0 1\n";
        let mesh = read_ply_bytes(text.as_bytes()).unwrap();
        assert_eq!(mesh.vertices().len(), 3);
        assert_eq!(mesh.triangles(), &[[0, 1, 2]]);
        assert!(mesh.colors().is_none());
    }

    #[test]
    fn quads_are_fanned() {
        let text = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\n\
                    property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n\
                    0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        assert_eq!(read_ply_bytes(text.as_bytes()).unwrap().triangles(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn truncated_body_names_element() {
        let bytes = write_ply_bytes(&triangle(true), PlyFormat::BinaryLe);
        let err = read_ply_bytes(&bytes[..bytes.len() - 2]).unwrap_err();
        assert!(matches!(err, MeshError::Truncated { ref element, .. } if element == "face"), "{err}");

        let text = String::from_utf8(write_ply_bytes(&triangle(false), PlyFormat::Ascii)).unwrap();
        let cut = text.find("1 0 0\n").unwrap();
        let err = read_ply_bytes(&text.as_bytes()[..cut]).unwrap_err();
        assert!(err.to_string().contains("`vertex`"), "{err}");
    }

    #[test]
    fn malformed_headers() {
        for bad in [
            "plx\n",
            "ply\nformat ascii 1.0\nelement vertex 1\n",
            "ply\nformat ascii 2.0\nend_header\n",
            "ply\nproperty float x\nend_header\n",
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n",
            "ply\nformat ascii 1.0\nelement vertex x\nend_header\n",
        ] {
            assert!(matches!(read_ply_bytes(bad.as_bytes()), Err(MeshError::Header(_))), "{bad:?}");
        }
    }

    #[test]
    fn bad_indices_rejected() {
        let text = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n\
                    property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n\
                    0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n";
        assert!(matches!(read_ply_bytes(text.as_bytes()), Err(MeshError::IndexOutOfRange { .. })));
    }

    #[test]
    fn format_names() {
        assert_eq!("ascii".parse::<PlyFormat>().unwrap(), PlyFormat::Ascii);
        assert_eq!("binary_le".parse::<PlyFormat>().unwrap(), PlyFormat::BinaryLe);
        assert!("obj".parse::<PlyFormat>().is_err());
    }
}
