//! Binary little-endian PLY for point clouds and triangle meshes.
//!
//! Positions and normals are written as `double` properties so values
//! survive a write/read cycle bit-exactly; the reader also accepts `float`
//! files from external tools. Per-corner UVs travel as the conventional
//! per-face `texcoord` list (6 floats).

use std::fs;
use std::path::Path;

use diorama_core::geom::{PointCloud, TriangleMesh, Vec2, Vec3};

use crate::error::{CliError, Result};

pub fn write_point_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let n = cloud.points.len();
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str("comment diorama point cloud\n");
    header.push_str(&format!("element vertex {n}\n"));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.normals.is_some() {
        header.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    if cloud.colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");

    let mut bytes = header.into_bytes();
    for i in 0..n {
        let p = cloud.points[i];
        for v in [p.x, p.y, p.z] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(normals) = &cloud.normals {
            let m = normals[i];
            for v in [m.x, m.y, m.z] {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        if let Some(colors) = &cloud.colors {
            for c in colors[i] {
                bytes.push(quantize(c));
            }
        }
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let nv = mesh.vertices.len();
    let nf = mesh.triangles.len();
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str("comment diorama mesh\n");
    header.push_str(&format!("element vertex {nv}\n"));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if mesh.vertex_colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str(&format!("element face {nf}\n"));
    header.push_str("property list uchar uint vertex_indices\n");
    if mesh.uvs.is_some() {
        header.push_str("property list uchar float texcoord\n");
    }
    header.push_str("end_header\n");

    let mut bytes = header.into_bytes();
    for i in 0..nv {
        let p = mesh.vertices[i];
        for v in [p.x, p.y, p.z] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(colors) = &mesh.vertex_colors {
            for c in colors[i] {
                bytes.push(quantize(c));
            }
        }
    }
    for (f, tri) in mesh.triangles.iter().enumerate() {
        bytes.push(3);
        for idx in tri {
            bytes.extend_from_slice(&idx.to_le_bytes());
        }
        if let Some(uvs) = &mesh.uvs {
            bytes.push(6);
            for uv in uvs[f] {
                bytes.extend_from_slice(&(uv.x as f32).to_le_bytes());
                bytes.extend_from_slice(&(uv.y as f32).to_le_bytes());
            }
        }
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let parsed = parse(path)?;
    let vertex = parsed
        .vertex
        .ok_or_else(|| CliError::format(path, "no vertex element"))?;
    Ok(vertex.into_cloud())
}

pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let parsed = parse(path)?;
    let vertex = parsed
        .vertex
        .ok_or_else(|| CliError::format(path, "no vertex element"))?;
    let faces = parsed
        .faces
        .ok_or_else(|| CliError::format(path, "no face element"))?;
    let cloud = vertex.into_cloud();
    let mut mesh = TriangleMesh::new(cloud.points, faces.indices);
    mesh.vertex_colors = cloud.colors;
    mesh.uvs = faces.uvs;
    mesh.validate().map_err(CliError::Core)?;
    Ok(mesh)
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

// ---------------------------------------------------------------------------
// Generic binary-little-endian parser. Unknown elements and properties are
// consumed and discarded; only vertex {x y z [nx ny nz] [red green blue]} and
// face {vertex_indices [texcoord]} are interpreted.

#[derive(Clone, Copy, PartialEq)]
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
    fn from_name(name: &str) -> Option<Self> {
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

    fn read(self, data: &[u8], at: &mut usize) -> Option<f64> {
        macro_rules! take {
            ($ty:ty, $n:expr) => {{
                let bytes: [u8; $n] = data.get(*at..*at + $n)?.try_into().ok()?;
                *at += $n;
                <$ty>::from_le_bytes(bytes) as f64
            }};
        }
        Some(match self {
            Self::I8 => take!(i8, 1),
            Self::U8 => take!(u8, 1),
            Self::I16 => take!(i16, 2),
            Self::U16 => take!(u16, 2),
            Self::I32 => take!(i32, 4),
            Self::U32 => take!(u32, 4),
            Self::F32 => take!(f32, 4),
            Self::F64 => take!(f64, 8),
        })
    }
}

enum Property {
    Scalar(Scalar, String),
    List(Scalar, Scalar, String),
}

struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct VertexData {
    positions: Vec<Vec3>,
    normals: Vec<Vec3>,
    colors: Vec<[f32; 3]>,
    color_is_byte: bool,
}

impl VertexData {
    fn into_cloud(self) -> PointCloud {
        let n = self.positions.len();
        let mut cloud = PointCloud::new(self.positions);
        if self.normals.len() == n && n > 0 {
            cloud.normals = Some(self.normals);
        }
        if self.colors.len() == n && n > 0 {
            cloud.colors = Some(if self.color_is_byte {
                self.colors
                    .into_iter()
                    .map(|c| c.map(|v| v / 255.0))
                    .collect()
            } else {
                self.colors
            });
        }
        cloud
    }
}

struct FaceData {
    indices: Vec<[u32; 3]>,
    uvs: Option<Vec<[Vec2; 3]>>,
}

struct Parsed {
    vertex: Option<VertexData>,
    faces: Option<FaceData>,
}

fn parse(path: &Path) -> Result<Parsed> {
    let data = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let bad = |m: &str| CliError::format(path, m);

    // Header is ASCII lines up to and including "end_header".
    let mut at = 0usize;
    let mut next_line = |data: &[u8], at: &mut usize| -> Result<String> {
        let start = *at;
        while *at < data.len() && data[*at] != b'\n' {
            *at += 1;
        }
        if *at >= data.len() {
            return Err(CliError::format(path, "unterminated header"));
        }
        let line = String::from_utf8_lossy(&data[start..*at]).trim_end().to_string();
        *at += 1;
        Ok(line)
    };

    if next_line(&data, &mut at)? != "ply" {
        return Err(bad("not a PLY file"));
    }
    let format = next_line(&data, &mut at)?;
    if format != "format binary_little_endian 1.0" {
        return Err(bad("only binary little-endian PLY 1.0 is supported"));
    }

    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line(&data, &mut at)?;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("comment") | Some("obj_info") | None => {}
            Some("end_header") => break,
            Some("element") => {
                let name = words.next().ok_or_else(|| bad("element without name"))?;
                let count: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| bad("element without count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| bad("property before element"))?;
                let kind = words.next().ok_or_else(|| bad("property without type"))?;
                if kind == "list" {
                    let count_ty = words
                        .next()
                        .and_then(Scalar::from_name)
                        .ok_or_else(|| bad("bad list count type"))?;
                    let item_ty = words
                        .next()
                        .and_then(Scalar::from_name)
                        .ok_or_else(|| bad("bad list item type"))?;
                    let name = words.next().ok_or_else(|| bad("list without name"))?;
                    element
                        .properties
                        .push(Property::List(count_ty, item_ty, name.to_string()));
                } else {
                    let ty = Scalar::from_name(kind).ok_or_else(|| bad("bad property type"))?;
                    let name = words.next().ok_or_else(|| bad("property without name"))?;
                    element.properties.push(Property::Scalar(ty, name.to_string()));
                }
            }
            Some(other) => return Err(bad(&format!("unexpected header line: {other}"))),
        }
    }

    let mut parsed = Parsed {
        vertex: None,
        faces: None,
    };
    let truncated = || CliError::format(path, "payload shorter than the header declares");

    for element in &elements {
        if element.name == "vertex" {
            let mut vd = VertexData {
                positions: Vec::with_capacity(element.count),
                normals: Vec::new(),
                colors: Vec::new(),
                color_is_byte: false,
            };
            for _ in 0..element.count {
                let (mut p, mut n, mut c) = (Vec3::ZERO, Vec3::ZERO, [0f32; 3]);
                let (mut has_n, mut has_c) = (false, false);
                for prop in &element.properties {
                    match prop {
                        Property::Scalar(ty, name) => {
                            let v = ty.read(&data, &mut at).ok_or_else(truncated)?;
                            match name.as_str() {
                                "x" => p.x = v,
                                "y" => p.y = v,
                                "z" => p.z = v,
                                "nx" => {
                                    n.x = v;
                                    has_n = true;
                                }
                                "ny" => n.y = v,
                                "nz" => n.z = v,
                                "red" => {
                                    c[0] = v as f32;
                                    has_c = true;
                                    vd.color_is_byte = *ty == Scalar::U8;
                                }
                                "green" => c[1] = v as f32,
                                "blue" => c[2] = v as f32,
                                _ => {}
                            }
                        }
                        Property::List(count_ty, item_ty, _) => {
                            skip_list(&data, &mut at, *count_ty, *item_ty)
                                .ok_or_else(truncated)?;
                        }
                    }
                }
                vd.positions.push(p);
                if has_n {
                    vd.normals.push(n);
                }
                if has_c {
                    vd.colors.push(c);
                }
            }
            parsed.vertex = Some(vd);
        } else if element.name == "face" {
            let mut fd = FaceData {
                indices: Vec::with_capacity(element.count),
                uvs: None,
            };
            let mut uvs: Vec<[Vec2; 3]> = Vec::new();
            for _ in 0..element.count {
                for prop in &element.properties {
                    match prop {
                        Property::Scalar(ty, _) => {
                            ty.read(&data, &mut at).ok_or_else(truncated)?;
                        }
                        Property::List(count_ty, item_ty, name) => {
                            let items = read_list(&data, &mut at, *count_ty, *item_ty)
                                .ok_or_else(truncated)?;
                            match name.as_str() {
                                "vertex_indices" | "vertex_index" => {
                                    if items.len() != 3 {
                                        return Err(bad("non-triangular face"));
                                    }
                                    fd.indices.push([
                                        items[0] as u32,
                                        items[1] as u32,
                                        items[2] as u32,
                                    ]);
                                }
                                "texcoord" => {
                                    if items.len() != 6 {
                                        return Err(bad("texcoord list must hold 6 floats"));
                                    }
                                    uvs.push([
                                        Vec2::new(items[0], items[1]),
                                        Vec2::new(items[2], items[3]),
                                        Vec2::new(items[4], items[5]),
                                    ]);
                                }
                                _ => {}
                            }
                        }
                    }
                }
            }
            if uvs.len() == fd.indices.len() && !uvs.is_empty() {
                fd.uvs = Some(uvs);
            }
            parsed.faces = Some(fd);
        } else {
            // Unknown element: consume its payload.
            for _ in 0..element.count {
                for prop in &element.properties {
                    match prop {
                        Property::Scalar(ty, _) => {
                            ty.read(&data, &mut at).ok_or_else(truncated)?;
                        }
                        Property::List(count_ty, item_ty, _) => {
                            skip_list(&data, &mut at, *count_ty, *item_ty)
                                .ok_or_else(truncated)?;
                        }
                    }
                }
            }
        }
    }
    Ok(parsed)
}

fn read_list(data: &[u8], at: &mut usize, count_ty: Scalar, item_ty: Scalar) -> Option<Vec<f64>> {
    let count = count_ty.read(data, at)? as usize;
    let mut items = Vec::with_capacity(count);
    for _ in 0..count {
        items.push(item_ty.read(data, at)?);
    }
    Some(items)
}

fn skip_list(data: &[u8], at: &mut usize, count_ty: Scalar, item_ty: Scalar) -> Option<()> {
    let count = count_ty.read(data, at)? as usize;
    for _ in 0..count {
        item_ty.read(data, at)?;
    }
    Some(())
}
