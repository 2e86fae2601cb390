//! PLY reader and writer for triangle meshes.
//!
//! Reads `ascii` and `binary_little_endian` files with `x`/`y`/`z` vertex
//! properties (any numeric type) and a face list property named
//! `vertex_indices` or `vertex_index`. Other properties and elements are
//! skipped. Polygons with more than three corners are fan-triangulated.

use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use super::{Mesh, MeshError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// 1-based line number (header and ASCII body).
    Line(usize),
    /// Byte offset into the file (binary body).
    Offset(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Offset(o) => write!(f, "byte offset {o}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at {location}: {message}")]
    Parse { location: Location, message: String },
    #[error("unsupported PLY format: {0}")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

fn perr(location: Location, message: impl Into<String>) -> PlyError {
    PlyError::Parse { location, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }

    fn parse_ascii(self, tok: &str) -> Option<f64> {
        match self {
            Scalar::F32 => tok.parse::<f32>().ok().map(f64::from),
            Scalar::F64 => tok.parse::<f64>().ok(),
            _ => tok.parse::<i64>().ok().map(|v| v as f64),
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

struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
    body_offset: usize,
    body_line: usize,
}

fn parse_header(data: &[u8]) -> Result<Header, PlyError> {
    let mut offset = 0;
    let mut line_no = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        if offset >= data.len() {
            return Err(perr(Location::Line(line_no + 1), "unexpected end of file in header"));
        }
        let end = data[offset..].iter().position(|&b| b == b'\n').map(|p| offset + p).unwrap_or(data.len());
        let raw = &data[offset..end];
        offset = (end + 1).min(data.len());
        line_no += 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| perr(Location::Line(line_no), "header is not valid UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        let loc = Location::Line(line_no);
        if line_no == 1 {
            if line != "ply" {
                return Err(perr(loc, "missing 'ply' magic"));
            }
            continue;
        }
        let mut toks = line.split_whitespace();
        match toks.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                let kind = toks.next().ok_or_else(|| perr(loc, "format line without type"))?;
                encoding = Some(match kind {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    "binary_big_endian" => return Err(PlyError::UnsupportedFormat(kind.to_string())),
                    other => return Err(perr(loc, format!("unknown format '{other}'"))),
                });
            }
            Some("element") => {
                let name = toks.next().ok_or_else(|| perr(loc, "element without name"))?;
                let count = toks
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| perr(loc, "element count is not a non-negative integer"))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| perr(loc, "property before any element"))?;
                let first = toks.next().ok_or_else(|| perr(loc, "property without type"))?;
                if first == "list" {
                    let count = toks.next().and_then(Scalar::parse).ok_or_else(|| perr(loc, "bad list count type"))?;
                    let item = toks.next().and_then(Scalar::parse).ok_or_else(|| perr(loc, "bad list item type"))?;
                    if matches!(count, Scalar::F32 | Scalar::F64) {
                        return Err(perr(loc, "list count type must be an integer"));
                    }
                    let name = toks.next().ok_or_else(|| perr(loc, "property without name"))?;
                    el.properties.push(Property::List { name: name.to_string(), count, item });
                } else {
                    let ty = Scalar::parse(first).ok_or_else(|| perr(loc, format!("unknown type '{first}'")))?;
                    let name = toks.next().ok_or_else(|| perr(loc, "property without name"))?;
                    el.properties.push(Property::Scalar { name: name.to_string(), ty });
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(perr(loc, format!("unexpected header keyword '{other}'"))),
        }
    }
    let encoding = encoding.ok_or_else(|| perr(Location::Line(line_no), "header has no format line"))?;
    Ok(Header { encoding, elements, body_offset: offset, body_line: line_no + 1 })
}

/// Which scalar slots of the vertex element hold x, y, z.
fn vertex_layout(el: &Element) -> Option<[usize; 3]> {
    let find = |n: &str| el.properties.iter().position(|p| matches!(p, Property::Scalar { name, .. } if name == n));
    Some([find("x")?, find("y")?, find("z")?])
}

fn face_list(el: &Element) -> Option<usize> {
    el.properties
        .iter()
        .position(|p| matches!(p, Property::List { name, .. } if name == "vertex_indices" || name == "vertex_index"))
}

#[derive(Default)]
struct Sink {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[u32; 3]>,
}

impl Sink {
    fn push_polygon(&mut self, idx: &[f64], loc: Location) -> Result<(), PlyError> {
        if idx.len() < 3 {
            return Err(perr(loc, format!("face with {} vertices", idx.len())));
        }
        let mut ids = Vec::with_capacity(idx.len());
        for &v in idx {
            if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                return Err(perr(loc, format!("invalid vertex index {v}")));
            }
            ids.push(v as u32);
        }
        for k in 1..ids.len() - 1 {
            self.faces.push([ids[0], ids[k], ids[k + 1]]);
        }
        Ok(())
    }
}

/// Parses PLY bytes into a mesh.
pub fn parse_ply(data: &[u8]) -> Result<Mesh, PlyError> {
    let header = parse_header(data)?;
    let vertex_el = header
        .elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| perr(Location::Line(header.body_line - 1), "no vertex element"))?;
    if vertex_layout(vertex_el).is_none() {
        return Err(perr(Location::Line(header.body_line - 1), "vertex element lacks x/y/z"));
    }
    let mut sink = Sink::default();
    match header.encoding {
        PlyEncoding::Ascii => read_ascii(data, &header, &mut sink)?,
        PlyEncoding::BinaryLittleEndian => read_binary(data, &header, &mut sink)?,
    }
    let n = sink.vertices.len();
    if let Some((fi, bad)) =
        sink.faces.iter().enumerate().find_map(|(i, f)| f.iter().find(|&&v| v as usize >= n).map(|&v| (i, v)))
    {
        return Err(PlyError::Mesh(MeshError::InvalidFaceIndex { face: fi, index: bad as usize, count: n }));
    }
    Ok(Mesh::new(sink.vertices, sink.faces)?)
}

fn read_ascii(data: &[u8], header: &Header, sink: &mut Sink) -> Result<(), PlyError> {
    let body = std::str::from_utf8(&data[header.body_offset..])
        .map_err(|_| perr(Location::Line(header.body_line), "ASCII body is not valid UTF-8"))?;
    let mut lines = body.lines().enumerate().map(|(i, l)| (header.body_line + i, l)).filter(|(_, l)| !l.trim().is_empty());
    for el in &header.elements {
        let layout = if el.name == "vertex" { vertex_layout(el) } else { None };
        let list_slot = if el.name == "face" { face_list(el) } else { None };
        for _ in 0..el.count {
            let (line_no, line) = lines.next().ok_or_else(|| {
                perr(
                    Location::Line(header.body_line + body.lines().count()),
                    format!("truncated body: expected more '{}' entries", el.name),
                )
            })?;
            let loc = Location::Line(line_no);
            let mut toks = line.split_whitespace();
            let mut scalars = Vec::with_capacity(el.properties.len());
            let mut list = Vec::new();
            for (pi, prop) in el.properties.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, name } => {
                        let tok = toks.next().ok_or_else(|| perr(loc, format!("missing value for '{name}'")))?;
                        scalars.push(ty.parse_ascii(tok).ok_or_else(|| perr(loc, format!("bad value '{tok}' for '{name}'")))?);
                    }
                    Property::List { count, item, name } => {
                        let tok = toks.next().ok_or_else(|| perr(loc, format!("missing count for '{name}'")))?;
                        let n = count
                            .parse_ascii(tok)
                            .filter(|n| *n >= 0.0)
                            .ok_or_else(|| perr(loc, format!("bad list count '{tok}'")))?
                            as usize;
                        let mut vals = Vec::with_capacity(n);
                        for _ in 0..n {
                            let tok = toks.next().ok_or_else(|| perr(loc, format!("list '{name}' shorter than its count")))?;
                            vals.push(item.parse_ascii(tok).ok_or_else(|| perr(loc, format!("bad list item '{tok}'")))?);
                        }
                        if Some(pi) == list_slot {
                            list = vals;
                        }
                        scalars.push(f64::NAN);
                    }
                }
            }
            if toks.next().is_some() {
                return Err(perr(loc, "trailing values on line"));
            }
            if let Some([x, y, z]) = layout {
                sink.vertices.push(Vector3::new(scalars[x], scalars[y], scalars[z]));
            }
            if list_slot.is_some() {
                sink.push_polygon(&list, loc)?;
            }
        }
    }
    if let Some((line_no, _)) = lines.next() {
        return Err(perr(Location::Line(line_no), "unexpected data after last element"));
    }
    Ok(())
}

fn read_binary(data: &[u8], header: &Header, sink: &mut Sink) -> Result<(), PlyError> {
    let mut pos = header.body_offset;
    let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8], PlyError> {
        if *pos + n > data.len() {
            return Err(perr(Location::Offset(*pos), format!("truncated body while reading {what}")));
        }
        let s = &data[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    for el in &header.elements {
        let layout = if el.name == "vertex" { vertex_layout(el) } else { None };
        let list_slot = if el.name == "face" { face_list(el) } else { None };
        let mut scalars = vec![0.0; el.properties.len()];
        for _ in 0..el.count {
            let start = pos;
            let mut list = Vec::new();
            for (pi, prop) in el.properties.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => {
                        scalars[pi] = ty.read_le(take(&mut pos, ty.size(), &el.name)?);
                    }
                    Property::List { count, item, .. } => {
                        let n = count.read_le(take(&mut pos, count.size(), &el.name)?);
                        if n < 0.0 {
                            return Err(perr(Location::Offset(pos - count.size()), "negative list count"));
                        }
                        let n = n as usize;
                        let bytes = take(&mut pos, n * item.size(), &el.name)?;
                        if Some(pi) == list_slot {
                            list = bytes.chunks_exact(item.size()).map(|c| item.read_le(c)).collect();
                        }
                    }
                }
            }
            if let Some([x, y, z]) = layout {
                sink.vertices.push(Vector3::new(scalars[x], scalars[y], scalars[z]));
            }
            if list_slot.is_some() {
                sink.push_polygon(&list, Location::Offset(start))?;
            }
        }
    }
    if pos != data.len() {
        return Err(perr(Location::Offset(pos), format!("{} unexpected trailing bytes", data.len() - pos)));
    }
    Ok(())
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<Mesh, PlyError> {
    let data = std::fs::read(path)?;
    parse_ply(&data)
}

/// Serializes a mesh with `double` vertex coordinates, so binary output
/// round-trips every coordinate exactly.
pub fn encode_ply(mesh: &Mesh, encoding: PlyEncoding) -> Vec<u8> {
    let mut out = Vec::new();
    let format = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    let _ = write!(
        out,
        "ply\nformat {format} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         element face {}\nproperty list uchar uint vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.faces().len()
    );
    match encoding {
        PlyEncoding::Ascii => {
            for v in mesh.vertices() {
                let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
            }
            for f in mesh.faces() {
                let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            for v in mesh.vertices() {
                for c in [v.x, v.y, v.z] {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
            for f in mesh.faces() {
                out.push(3);
                for i in f {
                    out.extend_from_slice(&i.to_le_bytes());
                }
            }
        }
    }
    out
}

pub fn write_ply(path: impl AsRef<Path>, mesh: &Mesh, encoding: PlyEncoding) -> Result<(), PlyError> {
    std::fs::write(path, encode_ply(mesh, encoding))?;
    Ok(())
}
