//! PLY 1.0 mesh reader (ASCII and binary little-endian) and an ASCII writer.
//!
//! Reads `vertex` elements with float32/float64 `x`, `y`, `z` and `face`
//! elements with one vertex-index list; every other property is skipped.
//! Unknown elements are tolerated only after the vertex and face data, where
//! they can simply be ignored. Polygons with more than three vertices are
//! fan-triangulated.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{MeshModel, Vec3};

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
    fn parse(token: &str) -> Option<Self> {
        Some(match token {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 => 4,
            Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn is_integer(self) -> bool {
        !self.is_float()
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count_ty: Scalar, item_ty: Scalar },
}

#[derive(Debug, Clone)]
struct ElementDef {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

struct Header {
    format: Format,
    elements: Vec<ElementDef>,
    body_start: usize,
    header_lines: usize,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

fn parse_header(path: &Path, data: &[u8]) -> Result<Header> {
    let mut offset = 0usize;
    let mut line_no = 0usize;
    let mut lines = Vec::new();
    // header is ASCII lines up to and including end_header
    loop {
        let rest = &data[offset..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(parse_err(path, line_no + 1, "missing end_header"));
        };
        let raw = &rest[..nl];
        let text = std::str::from_utf8(raw)
            .map_err(|_| parse_err(path, line_no + 1, "non-UTF8 header line"))?
            .trim_end_matches('\r')
            .to_owned();
        offset += nl + 1;
        line_no += 1;
        let done = text.trim() == "end_header";
        lines.push(text);
        if done {
            break;
        }
        if line_no > 10_000 {
            return Err(parse_err(path, line_no, "header too large"));
        }
    }

    if lines.first().map(|s| s.trim()) != Some("ply") {
        return Err(parse_err(path, 1, "missing 'ply' magic"));
    }

    let mut format = None;
    let mut elements: Vec<ElementDef> = Vec::new();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let line_no = idx + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] | ["end_header"] => {}
            ["format", kind, "1.0"] => {
                format = Some(match *kind {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLe,
                    "binary_big_endian" => {
                        return Err(Error::UnsupportedFormat(
                            "big-endian PLY is not supported".into(),
                        ))
                    }
                    other => {
                        return Err(parse_err(path, line_no, format!("unknown format {other}")))
                    }
                });
            }
            ["format", ..] => {
                return Err(parse_err(path, line_no, "malformed format line"));
            }
            ["element", name, count] => {
                let count: usize = count
                    .parse()
                    .map_err(|_| parse_err(path, line_no, "bad element count"))?;
                elements.push(ElementDef { name: (*name).to_owned(), count, properties: Vec::new() });
            }
            ["property", "list", count_ty, item_ty, name] => {
                let parent = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, line_no, "property before any element"))?;
                let count_ty = Scalar::parse(count_ty)
                    .ok_or_else(|| parse_err(path, line_no, format!("unknown type {count_ty}")))?;
                let item_ty = Scalar::parse(item_ty)
                    .ok_or_else(|| parse_err(path, line_no, format!("unknown type {item_ty}")))?;
                parent.properties.push(Property::List {
                    name: (*name).to_owned(),
                    count_ty,
                    item_ty,
                });
            }
            ["property", ty, name] => {
                let parent = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, line_no, "property before any element"))?;
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| parse_err(path, line_no, format!("unknown type {ty}")))?;
                parent.properties.push(Property::Scalar { name: (*name).to_owned(), ty });
            }
            _ => return Err(parse_err(path, line_no, format!("unrecognized header line: {line}"))),
        }
    }
    let format = format.ok_or_else(|| parse_err(path, 1, "missing format line"))?;
    Ok(Header { format, elements, body_start: offset, header_lines: line_no })
}

/// Loads a PLY mesh; the diameter is computed as part of construction.
pub fn load_ply(path: &Path) -> Result<MeshModel> {
    let data = fs::read(path)?;
    let header = parse_header(path, &data)?;

    // vertex and face (face optional) must come before any foreign element
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::UnsupportedFormat("no vertex element".into()))?;
    let face_pos = header.elements.iter().position(|e| e.name == "face");
    let data_end = face_pos.map_or(vertex_pos, |f| f.max(vertex_pos));
    for (i, e) in header.elements.iter().enumerate() {
        if i <= data_end && e.name != "vertex" && e.name != "face" && e.count > 0 {
            return Err(Error::UnsupportedFormat(format!(
                "element '{}' precedes the mesh data and cannot be skipped",
                e.name
            )));
        }
    }
    if let Some(f) = face_pos {
        if f < vertex_pos {
            return Err(Error::UnsupportedFormat("face element precedes vertex element".into()));
        }
    }

    let vertex_def = &header.elements[vertex_pos];
    for coord in ["x", "y", "z"] {
        match vertex_def.properties.iter().find(|p| match p {
            Property::Scalar { name, .. } | Property::List { name, .. } => name == coord,
        }) {
            Some(Property::Scalar { ty, .. }) if ty.is_float() => {}
            Some(_) => {
                return Err(Error::UnsupportedFormat(format!(
                    "vertex property '{coord}' must be float32/float64"
                )))
            }
            None => {
                return Err(Error::UnsupportedFormat(format!("vertex property '{coord}' missing")))
            }
        }
    }
    if let Some(f) = face_pos {
        let ok = header.elements[f].properties.iter().any(|p| matches!(
            p,
            Property::List { name, item_ty, .. }
                if (name == "vertex_indices" || name == "vertex_index") && item_ty.is_integer()
        ));
        if !ok && header.elements[f].count > 0 {
            return Err(Error::UnsupportedFormat(
                "face element lacks an integer vertex_indices list".into(),
            ));
        }
    }

    let (vertices, faces) = match header.format {
        Format::Ascii => read_ascii_body(path, &data, &header, vertex_pos, face_pos)?,
        Format::BinaryLe => read_binary_body(path, &data, &header, vertex_pos, face_pos)?,
    };
    MeshModel::new(vertices, faces)
}

fn read_ascii_body(
    path: &Path,
    data: &[u8],
    header: &Header,
    vertex_pos: usize,
    face_pos: Option<usize>,
) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let body = std::str::from_utf8(&data[header.body_start..])
        .map_err(|_| parse_err(path, header.header_lines + 1, "non-UTF8 body"))?;
    let mut lines = body.lines().enumerate().map(|(i, l)| (header.header_lines + 1 + i, l));

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (elem_idx, elem) in header.elements.iter().enumerate() {
        if elem_idx > vertex_pos && Some(elem_idx) != face_pos {
            break; // trailing foreign elements are ignored
        }
        for _ in 0..elem.count {
            let (line_no, line) = lines
                .next()
                .ok_or_else(|| parse_err(path, header.header_lines + 1, "truncated body"))?;
            let mut tokens = line.split_whitespace();
            let mut next_f64 = |what: &str| -> Result<f64> {
                tokens
                    .next()
                    .ok_or_else(|| parse_err(path, line_no, format!("missing {what}")))?
                    .parse::<f64>()
                    .map_err(|_| parse_err(path, line_no, format!("bad {what}")))
            };
            if elem_idx == vertex_pos {
                let (mut x, mut y, mut z) = (f64::NAN, f64::NAN, f64::NAN);
                for prop in &elem.properties {
                    match prop {
                        Property::Scalar { name, .. } => {
                            let v = next_f64(name)?;
                            match name.as_str() {
                                "x" => x = v,
                                "y" => y = v,
                                "z" => z = v,
                                _ => {}
                            }
                        }
                        Property::List { name, .. } => {
                            let count = next_f64(&format!("{name} count"))? as usize;
                            for _ in 0..count {
                                next_f64(name)?;
                            }
                        }
                    }
                }
                vertices.push(Vec3::new(x, y, z));
            } else {
                let mut poly: Vec<usize> = Vec::new();
                for prop in &elem.properties {
                    match prop {
                        Property::Scalar { name, .. } => {
                            next_f64(name)?;
                        }
                        Property::List { name, .. } => {
                            let count = next_f64(&format!("{name} count"))? as usize;
                            let is_index =
                                name == "vertex_indices" || name == "vertex_index";
                            for _ in 0..count {
                                let v = next_f64(name)?;
                                if is_index {
                                    poly.push(v as usize);
                                }
                            }
                        }
                    }
                }
                push_polygon(path, line_no, &poly, &mut faces)?;
            }
        }
    }
    Ok((vertices, faces))
}

struct Cursor<'a> {
    path: &'a Path,
    data: &'a [u8],
    offset: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.offset + n > self.data.len() {
            return Err(parse_err(
                self.path,
                0,
                format!("truncated body at byte offset {}", self.offset),
            ));
        }
        let out = &self.data[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn scalar(&mut self, ty: Scalar) -> Result<f64> {
        let raw = self.take(ty.size())?;
        Ok(match ty {
            Scalar::I8 => raw[0] as i8 as f64,
            Scalar::U8 => raw[0] as f64,
            Scalar::I16 => i16::from_le_bytes([raw[0], raw[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([raw[0], raw[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(raw.try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(raw.try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(raw.try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(raw.try_into().unwrap()),
        })
    }
}

fn read_binary_body(
    path: &Path,
    data: &[u8],
    header: &Header,
    vertex_pos: usize,
    face_pos: Option<usize>,
) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let mut cur = Cursor { path, data, offset: header.body_start };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (elem_idx, elem) in header.elements.iter().enumerate() {
        if elem_idx > vertex_pos && Some(elem_idx) != face_pos {
            break;
        }
        for _ in 0..elem.count {
            if elem_idx == vertex_pos {
                let (mut x, mut y, mut z) = (f64::NAN, f64::NAN, f64::NAN);
                for prop in &elem.properties {
                    match prop {
                        Property::Scalar { name, ty } => {
                            let v = cur.scalar(*ty)?;
                            match name.as_str() {
                                "x" => x = v,
                                "y" => y = v,
                                "z" => z = v,
                                _ => {}
                            }
                        }
                        Property::List { count_ty, item_ty, .. } => {
                            let count = cur.scalar(*count_ty)? as usize;
                            cur.take(count * item_ty.size())?;
                        }
                    }
                }
                vertices.push(Vec3::new(x, y, z));
            } else {
                let mut poly: Vec<usize> = Vec::new();
                for prop in &elem.properties {
                    match prop {
                        Property::Scalar { ty, .. } => {
                            cur.scalar(*ty)?;
                        }
                        Property::List { name, count_ty, item_ty } => {
                            let count = cur.scalar(*count_ty)? as usize;
                            if name == "vertex_indices" || name == "vertex_index" {
                                for _ in 0..count {
                                    poly.push(cur.scalar(*item_ty)? as usize);
                                }
                            } else {
                                cur.take(count * item_ty.size())?;
                            }
                        }
                    }
                }
                push_polygon(path, 0, &poly, &mut faces)?;
            }
        }
    }
    Ok((vertices, faces))
}

fn push_polygon(
    path: &Path,
    line_no: usize,
    poly: &[usize],
    faces: &mut Vec<[usize; 3]>,
) -> Result<()> {
    if poly.len() < 3 {
        return Err(parse_err(path, line_no, format!("face with {} vertices", poly.len())));
    }
    for i in 1..poly.len() - 1 {
        faces.push([poly[0], poly[i], poly[i + 1]]);
    }
    Ok(())
}

/// Writes an ASCII PLY with bare x/y/z vertices and triangle faces. The f64
/// formatting round-trips exactly through [`load_ply`].
pub fn save_ply_ascii(mesh: &MeshModel, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", mesh.vertices().len())?;
    writeln!(out, "property double x")?;
    writeln!(out, "property double y")?;
    writeln!(out, "property double z")?;
    writeln!(out, "element face {}", mesh.faces().len())?;
    writeln!(out, "property list uchar int vertex_indices")?;
    writeln!(out, "end_header")?;
    for v in mesh.vertices() {
        writeln!(out, "{} {} {}", v.x, v.y, v.z)?;
    }
    for f in mesh.faces() {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_box_mesh;
    use approx::assert_relative_eq;

    const ASCII_CUBE: &str = "\
ply
format ascii 1.0
comment unit cube
element vertex 8
property float x
property float y
property float z
element face 12
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
1 1 0
0 1 0
0 0 1
1 0 1
1 1 1
0 1 1
3 0 1 2
3 0 2 3
3 4 5 6
3 4 6 7
3 0 1 5
3 0 5 4
3 2 3 7
3 2 7 6
3 1 2 6
3 1 6 5
3 0 3 7
3 0 7 4
";

    fn write_temp(content: &[u8], suffix: &str) -> tempfile::NamedTempFile {
        let f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        fs::write(f.path(), content).unwrap();
        f
    }

    #[test]
    fn ascii_cube_loads() {
        let f = write_temp(ASCII_CUBE.as_bytes(), ".ply");
        let mesh = load_ply(f.path()).unwrap();
        assert_eq!(mesh.vertices().len(), 8);
        assert_eq!(mesh.faces().len(), 12);
        // brute-force diameter of the unit cube
        assert_relative_eq!(mesh.diameter(), 3.0_f64.sqrt(), epsilon = 1e-12);
    }

    fn binary_cube() -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(
            b"ply\nformat binary_little_endian 1.0\nelement vertex 8\nproperty float x\nproperty float y\nproperty float z\nelement face 12\nproperty list uchar int vertex_indices\nend_header\n",
        );
        let verts: [[f32; 3]; 8] = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 1.0],
            [1.0, 1.0, 1.0],
            [0.0, 1.0, 1.0],
        ];
        for v in verts {
            for c in v {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        let faces: [[i32; 3]; 12] = [
            [0, 1, 2],
            [0, 2, 3],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [2, 3, 7],
            [2, 7, 6],
            [1, 2, 6],
            [1, 6, 5],
            [0, 3, 7],
            [0, 7, 4],
        ];
        for f in faces {
            out.push(3);
            for ix in f {
                out.extend_from_slice(&ix.to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn binary_matches_ascii() {
        let fa = write_temp(ASCII_CUBE.as_bytes(), ".ply");
        let fb = write_temp(&binary_cube(), ".ply");
        let a = load_ply(fa.path()).unwrap();
        let b = load_ply(fb.path()).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        assert_eq!(a.faces(), b.faces());
        assert_eq!(a.diameter(), b.diameter());
    }

    #[test]
    fn truncated_files_fail() {
        let f = write_temp(&ASCII_CUBE.as_bytes()[..ASCII_CUBE.len() - 40], ".ply");
        assert!(matches!(load_ply(f.path()), Err(Error::Parse { .. })));

        let mut bin = binary_cube();
        bin.truncate(bin.len() - 5);
        let f = write_temp(&bin, ".ply");
        assert!(matches!(load_ply(f.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn big_endian_rejected() {
        let content = "ply\nformat binary_big_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
        let f = write_temp(content.as_bytes(), ".ply");
        assert!(matches!(load_ply(f.path()), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn foreign_leading_element_rejected() {
        let content = "ply\nformat ascii 1.0\nelement edge 2\nproperty int a\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n1\n2\n0 0 0\n1 0 0\n0 1 0\n";
        let f = write_temp(content.as_bytes(), ".ply");
        assert!(matches!(load_ply(f.path()), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn extra_vertex_properties_are_skipped() {
        let content = "\
ply
format ascii 1.0
element vertex 3
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
element face 1
property list uchar int vertex_indices
end_header
0 0 0 255 0 0
1 0 0 0 255 0
0 1 0 0 0 255
3 0 1 2
";
        let f = write_temp(content.as_bytes(), ".ply");
        let mesh = load_ply(f.path()).unwrap();
        assert_eq!(mesh.vertices().len(), 3);
        assert_eq!(mesh.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn quads_are_fan_triangulated() {
        let content = "\
ply
format ascii 1.0
element vertex 4
property float x
property float y
property float z
element face 1
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
1 1 0
0 1 0
4 0 1 2 3
";
        let f = write_temp(content.as_bytes(), ".ply");
        let mesh = load_ply(f.path()).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn save_load_round_trip() {
        let mesh = make_box_mesh(
            Vec3::new(0.013, -0.27, 1.0 / 3.0),
            Vec3::new(0.21, 0.17, 0.09),
            2,
        );
        let f = tempfile::Builder::new().suffix(".ply").tempfile().unwrap();
        save_ply_ascii(&mesh, f.path()).unwrap();
        let loaded = load_ply(f.path()).unwrap();
        assert_eq!(loaded.vertices(), mesh.vertices());
        assert_eq!(loaded.faces(), mesh.faces());
        assert_eq!(loaded.diameter(), mesh.diameter());
    }
}
