//! Mesh ingestion (Wavefront OBJ, ASCII and binary PLY) and the descriptor
//! sidecar format.
//!
//! Only positions and faces are read; polygons are fan-triangulated. The
//! sidecar is a header line `DESC <vertex-count> <D>` followed by one line of
//! `D` numbers per vertex.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, DEFAULT_DESCRIPTOR_DIM};

pub const SIDECAR_EXTENSION: &str = "desc";

/// Loads an OBJ or PLY file (by extension) and attaches its sidecar
/// descriptors when a sidecar exists next to it.
pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let ctx = path.display().to_string();
    let bytes = fs::read(path)?;
    let mut mesh = match ext.as_str() {
        "obj" => read_obj(bytes.as_slice(), &ctx)?,
        "ply" => read_ply(bytes.as_slice(), &ctx)?,
        _ => return Err(Error::parse(ctx, "unsupported mesh extension (expected .obj or .ply)")),
    };
    let side = sidecar_path(path);
    if side.exists() {
        let (dim, values) = read_sidecar(fs::File::open(&side)?, mesh.vertex_count(), &side.display().to_string())?;
        mesh.set_descriptors(dim, values)?;
    }
    Ok(mesh)
}

pub fn sidecar_path(mesh_path: &Path) -> PathBuf {
    mesh_path.with_extension(SIDECAR_EXTENSION)
}

fn parse_f64(tok: &str, ctx: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::parse(ctx, format!("line {line}: bad number '{tok}'")))
}

fn triangulate(poly: &[u32], faces: &mut Vec<[u32; 3]>) {
    for k in 1..poly.len().saturating_sub(1) {
        let f = [poly[0], poly[k], poly[k + 1]];
        if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
            faces.push(f);
        }
    }
}

pub fn read_obj<R: Read>(input: R, ctx: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let c: Vec<f64> = toks
                    .take(3)
                    .map(|t| parse_f64(t, ctx, lineno))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(Error::parse(ctx, format!("line {lineno}: vertex needs 3 coordinates")));
                }
                vertices.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in toks {
                    let head = t.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| Error::parse(ctx, format!("line {lineno}: bad face index '{t}'")))?;
                    let n = vertices.len() as i64;
                    let resolved = if idx > 0 { idx - 1 } else { n + idx };
                    if idx == 0 || resolved < 0 || resolved >= n {
                        return Err(Error::parse(ctx, format!("line {lineno}: face index {idx} out of range")));
                    }
                    poly.push(resolved as u32);
                }
                if poly.len() < 3 {
                    return Err(Error::parse(ctx, format!("line {lineno}: face needs at least 3 vertices")));
                }
                triangulate(&poly, &mut faces);
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces, DEFAULT_DESCRIPTOR_DIM)
}

pub fn write_obj<W: Write>(mesh: &TriMesh, mut out: W) -> Result<()> {
    for v in mesh.vertices() {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyFormat {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Debug, Clone, Copy, PartialEq)]
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
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct BinReader<'a> {
    data: &'a [u8],
    pos: usize,
    big_endian: bool,
}

impl BinReader<'_> {
    fn read(&mut self, s: Scalar, ctx: &str) -> Result<f64> {
        let n = s.size();
        if self.pos + n > self.data.len() {
            return Err(Error::parse(ctx, "unexpected end of binary PLY data"));
        }
        let mut b = [0u8; 8];
        b[..n].copy_from_slice(&self.data[self.pos..self.pos + n]);
        self.pos += n;
        if self.big_endian {
            b[..n].reverse();
        }
        Ok(match s {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b),
        })
    }
}

fn read_ply_header(data: &[u8], ctx: &str) -> Result<(PlyFormat, Vec<Element>, usize)> {
    let mut pos = 0;
    let mut next_line = || -> Option<String> {
        if pos >= data.len() {
            return None;
        }
        let end = data[pos..].iter().position(|&b| b == b'\n').map_or(data.len(), |e| pos + e);
        let line = String::from_utf8_lossy(&data[pos..end]).trim_end_matches('\r').to_string();
        pos = (end + 1).min(data.len());
        Some(line)
    };
    if next_line().as_deref().map(str::trim) != Some("ply") {
        return Err(Error::parse(ctx, "missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = next_line().ok_or_else(|| Error::parse(ctx, "PLY header has no end_header"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            Some("format") => {
                format = Some(match toks.get(1).copied() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLe,
                    Some("binary_big_endian") => PlyFormat::BinaryBe,
                    other => return Err(Error::parse(ctx, format!("unknown PLY format {other:?}"))),
                })
            }
            Some("element") => {
                let (Some(name), Some(count)) = (toks.get(1), toks.get(2).and_then(|c| c.parse().ok())) else {
                    return Err(Error::parse(ctx, format!("bad element line '{line}'")));
                };
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(ctx, "property before any element"))?;
                let bad = || Error::parse(ctx, format!("bad property line '{line}'"));
                if toks.get(1) == Some(&"list") {
                    let count = toks.get(2).and_then(|t| Scalar::parse(t)).ok_or_else(bad)?;
                    let item = toks.get(3).and_then(|t| Scalar::parse(t)).ok_or_else(bad)?;
                    let name = toks.get(4).ok_or_else(bad)?;
                    el.properties.push(Property::List(name.to_string(), count, item));
                } else {
                    let ty = toks.get(1).and_then(|t| Scalar::parse(t)).ok_or_else(bad)?;
                    let name = toks.get(2).ok_or_else(bad)?;
                    el.properties.push(Property::Scalar(name.to_string(), ty));
                }
            }
            Some("end_header") => break,
            _ => {}
        }
    }
    let format = format.ok_or_else(|| Error::parse(ctx, "PLY header lacks a format line"))?;
    Ok((format, elements, pos))
}

pub fn read_ply<R: Read>(mut input: R, ctx: &str) -> Result<TriMesh> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let (format, elements, body) = read_ply_header(&data, ctx)?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();

    let mut ascii_tokens = match format {
        PlyFormat::Ascii => Some(
            std::str::from_utf8(&data[body..])
                .map_err(|_| Error::parse(ctx, "ASCII PLY body is not UTF-8"))?
                .split_whitespace(),
        ),
        _ => None,
    };
    let mut bin = BinReader {
        data: &data[body..],
        pos: 0,
        big_endian: format == PlyFormat::BinaryBe,
    };
    let mut read = |s: Scalar| -> Result<f64> {
        match ascii_tokens.as_mut() {
            Some(toks) => {
                let t = toks
                    .next()
                    .ok_or_else(|| Error::parse(ctx, "unexpected end of ASCII PLY data"))?;
                parse_f64(t, ctx, 0)
            }
            None => bin.read(s, ctx),
        }
    };

    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [None; 3];
            let mut poly = Vec::new();
            for prop in &el.properties {
                match prop {
                    Property::Scalar(name, ty) => {
                        let v = read(*ty)?;
                        if el.name == "vertex" {
                            match name.as_str() {
                                "x" => xyz[0] = Some(v),
                                "y" => xyz[1] = Some(v),
                                "z" => xyz[2] = Some(v),
                                _ => {}
                            }
                        }
                    }
                    Property::List(name, count_ty, item_ty) => {
                        let n = read(*count_ty)?;
                        if !(n >= 0.0) || n.fract() != 0.0 {
                            return Err(Error::parse(ctx, "bad list length"));
                        }
                        let is_faces =
                            el.name == "face" && (name == "vertex_indices" || name == "vertex_index");
                        for _ in 0..n as usize {
                            let v = read(*item_ty)?;
                            if is_faces {
                                if !(v >= 0.0) || v.fract() != 0.0 {
                                    return Err(Error::parse(ctx, format!("bad face index {v}")));
                                }
                                poly.push(v as u32);
                            }
                        }
                    }
                }
            }
            if el.name == "vertex" {
                match xyz {
                    [Some(x), Some(y), Some(z)] => vertices.push(Vector3::new(x, y, z)),
                    _ => return Err(Error::parse(ctx, "vertex element lacks x, y or z")),
                }
            } else if el.name == "face" {
                if poly.len() < 3 {
                    return Err(Error::parse(ctx, "face with fewer than 3 vertices"));
                }
                if poly.iter().any(|&i| i as usize >= vertices.len()) {
                    return Err(Error::parse(ctx, "face index out of range"));
                }
                triangulate(&poly, &mut faces);
            }
        }
    }
    TriMesh::new(vertices, faces, DEFAULT_DESCRIPTOR_DIM)
}

/// Binary little-endian PLY with double positions and int indices.
pub fn write_ply_binary<W: Write>(mesh: &TriMesh, mut out: W) -> Result<()> {
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertex_count(),
        mesh.face_count()
    )?;
    for v in mesh.vertices() {
        for c in v.iter() {
            out.write_all(&c.to_le_bytes())?;
        }
    }
    for f in mesh.faces() {
        out.write_all(&[3u8])?;
        for &i in f {
            out.write_all(&(i as i32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_sidecar<R: Read>(input: R, expected_vertices: usize, ctx: &str) -> Result<(usize, Vec<f64>)> {
    let mut lines = BufReader::new(input).lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::parse(ctx, "empty descriptor sidecar"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    let (n, dim) = match toks.as_slice() {
        ["DESC", n, d] => (
            n.parse::<usize>()
                .map_err(|_| Error::parse(ctx, "bad vertex count in header"))?,
            d.parse::<usize>()
                .map_err(|_| Error::parse(ctx, "bad dimension in header"))?,
        ),
        _ => return Err(Error::parse(ctx, "header must be 'DESC <vertex-count> <D>'")),
    };
    if n != expected_vertices {
        return Err(Error::parse(
            ctx,
            format!("sidecar has {n} vertices, mesh has {expected_vertices}"),
        ));
    }
    if dim == 0 {
        return Err(Error::parse(ctx, "descriptor dimension must be at least 1"));
    }
    let mut values = Vec::with_capacity(n * dim);
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for t in line.split_whitespace() {
            values.push(parse_f64(t, ctx, i + 2)?);
        }
        if values.len() - before != dim {
            return Err(Error::parse(ctx, format!("line {}: expected {dim} values", i + 2)));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(ctx, format!("expected {n} descriptor rows, found {rows}")));
    }
    Ok((dim, values))
}

pub fn write_sidecar<W: Write>(mesh: &TriMesh, mut out: W) -> Result<()> {
    let dim = mesh.descriptor_dim();
    writeln!(out, "DESC {} {}", mesh.vertex_count(), dim)?;
    for row in mesh.descriptors().chunks(dim) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}
