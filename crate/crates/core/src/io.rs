//! File ingestion and export: oriented point clouds (PLY, OBJ, XYZ) and
//! triangle meshes (OBJ, binary PLY).

use crate::cloud::OrientedPointCloud;
use crate::error::{ReconError, Result};
use crate::geom::Vec3;
use crate::mesher::TriangleMesh;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Ply,
    Obj,
    Xyz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

/// Format auto-detection by file extension (case-insensitive).
pub fn detect_cloud_format(path: &Path) -> Option<CloudFormat> {
    match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
        "ply" => Some(CloudFormat::Ply),
        "obj" => Some(CloudFormat::Obj),
        "xyz" => Some(CloudFormat::Xyz),
        _ => None,
    }
}

pub fn detect_mesh_format(path: &Path) -> Option<MeshFormat> {
    match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
        "ply" => Some(MeshFormat::Ply),
        "obj" => Some(MeshFormat::Obj),
        _ => None,
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> ReconError {
    ReconError::Parse { line, msg: msg.into() }
}

/// Loads an oriented point cloud; the format defaults to the extension.
pub fn load_cloud(path: &Path, format: Option<CloudFormat>) -> Result<OrientedPointCloud> {
    let format = format.or_else(|| detect_cloud_format(path)).ok_or_else(|| {
        ReconError::InvalidInput(format!("cannot infer cloud format of {}", path.display()))
    })?;
    match format {
        CloudFormat::Xyz => load_xyz(path),
        CloudFormat::Obj => load_obj_cloud(path),
        CloudFormat::Ply => load_ply_cloud(path),
    }
}

fn load_xyz(path: &Path) -> Result<OrientedPointCloud> {
    let reader = BufReader::new(File::open(path)?);
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(parse_err(
                lineno + 1,
                format!("expected 6 columns (x y z nx ny nz), got {}", cols.len()),
            ));
        }
        let mut vals = [0.0f64; 6];
        for (slot, col) in vals.iter_mut().zip(&cols) {
            *slot = col
                .parse()
                .map_err(|_| parse_err(lineno + 1, format!("invalid number '{col}'")))?;
        }
        points.push([vals[0], vals[1], vals[2]]);
        normals.push([vals[3], vals[4], vals[5]]);
    }
    OrientedPointCloud::new(points, normals)
}

fn load_obj_cloud(path: &Path) -> Result<OrientedPointCloud> {
    let reader = BufReader::new(File::open(path)?);
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => points.push(parse_vec3(it, lineno + 1)?),
            Some("vn") => normals.push(parse_vec3(it, lineno + 1)?),
            _ => {}
        }
    }
    if normals.is_empty() {
        return Err(ReconError::InvalidInput(
            "normals required: OBJ file has no vn records".into(),
        ));
    }
    if normals.len() != points.len() {
        return Err(ReconError::InvalidInput(format!(
            "normals required for every point: {} v but {} vn records",
            points.len(),
            normals.len()
        )));
    }
    OrientedPointCloud::new(points, normals)
}

fn parse_vec3<'a>(mut it: impl Iterator<Item = &'a str>, lineno: usize) -> Result<Vec3> {
    let mut out = [0.0f64; 3];
    for slot in out.iter_mut() {
        let tok = it.next().ok_or_else(|| parse_err(lineno, "expected 3 coordinates"))?;
        *slot = tok
            .parse()
            .map_err(|_| parse_err(lineno, format!("invalid number '{tok}'")))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyScalar {
    F32,
    F64,
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
}

impl PlyScalar {
    fn parse(name: &str, lineno: usize) -> Result<Self> {
        Ok(match name {
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            other => return Err(parse_err(lineno, format!("unknown PLY type '{other}'"))),
        })
    }

    fn read_binary(self, r: &mut impl Read) -> Result<f64> {
        Ok(match self {
            Self::F32 => r.read_f32::<LittleEndian>()? as f64,
            Self::F64 => r.read_f64::<LittleEndian>()?,
            Self::I8 => r.read_i8()? as f64,
            Self::U8 => r.read_u8()? as f64,
            Self::I16 => r.read_i16::<LittleEndian>()? as f64,
            Self::U16 => r.read_u16::<LittleEndian>()? as f64,
            Self::I32 => r.read_i32::<LittleEndian>()? as f64,
            Self::U32 => r.read_u32::<LittleEndian>()? as f64,
        })
    }
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    /// `(name, scalar)` for plain properties; list properties are modeled
    /// as `(name, count_type, item_type)`.
    properties: Vec<PlyProperty>,
}

#[derive(Debug)]
enum PlyProperty {
    Scalar { name: String, ty: PlyScalar },
    List { count_ty: PlyScalar, item_ty: PlyScalar },
}

struct PlyHeader {
    ascii: bool,
    elements: Vec<PlyElement>,
    /// Number of header lines consumed (for error reporting).
    header_lines: usize,
}

fn read_ply_header(r: &mut impl BufRead) -> Result<PlyHeader> {
    let mut line = String::new();
    let mut lineno = 0;
    let read_line = |r: &mut dyn BufRead, line: &mut String, lineno: &mut usize| -> Result<()> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(parse_err(*lineno + 1, "unexpected end of PLY header"));
        }
        *lineno += 1;
        Ok(())
    };

    read_line(r, &mut line, &mut lineno)?;
    if line.trim_end() != "ply" {
        return Err(parse_err(1, "missing 'ply' magic"));
    }
    let mut ascii = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        read_line(r, &mut line, &mut lineno)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | [] => {}
            ["format", "ascii", _] => ascii = Some(true),
            ["format", "binary_little_endian", _] => ascii = Some(false),
            ["format", other, ..] => {
                return Err(parse_err(lineno, format!("unsupported PLY format '{other}'")));
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| parse_err(lineno, format!("invalid element count '{count}'")))?;
                elements.push(PlyElement {
                    name: (*name).into(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", count_ty, item_ty, _name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(lineno, "property before any element"))?;
                el.properties.push(PlyProperty::List {
                    count_ty: PlyScalar::parse(count_ty, lineno)?,
                    item_ty: PlyScalar::parse(item_ty, lineno)?,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(lineno, "property before any element"))?;
                el.properties.push(PlyProperty::Scalar {
                    name: (*name).into(),
                    ty: PlyScalar::parse(ty, lineno)?,
                });
            }
            _ => return Err(parse_err(lineno, format!("unrecognized header line: {}", line.trim()))),
        }
    }
    let ascii = ascii.ok_or_else(|| parse_err(lineno, "PLY header missing format line"))?;
    Ok(PlyHeader { ascii, elements, header_lines: lineno })
}

/// Reads every element of a PLY body into per-element row-major scalar
/// tables; list properties expand to `count` followed by the items.
fn read_ply_body(
    r: &mut impl BufRead,
    header: &PlyHeader,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut out = Vec::with_capacity(header.elements.len());
    let mut lineno = header.header_lines;
    for el in &header.elements {
        let mut rows = Vec::with_capacity(el.count);
        for row_idx in 0..el.count {
            let mut row = Vec::new();
            if header.ascii {
                let mut line = String::new();
                loop {
                    line.clear();
                    if r.read_line(&mut line)? == 0 {
                        return Err(parse_err(
                            lineno + 1,
                            format!("unexpected end of file in element '{}'", el.name),
                        ));
                    }
                    lineno += 1;
                    if !line.trim().is_empty() {
                        break;
                    }
                }
                let mut tokens = line.split_whitespace();
                let next_num = |tokens: &mut dyn Iterator<Item = &str>| -> Result<f64> {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| parse_err(lineno, "too few values in row"))?;
                    tok.parse()
                        .map_err(|_| parse_err(lineno, format!("invalid number '{tok}'")))
                };
                for prop in &el.properties {
                    match prop {
                        PlyProperty::Scalar { .. } => row.push(next_num(&mut tokens)?),
                        PlyProperty::List { .. } => {
                            let n = next_num(&mut tokens)? as usize;
                            row.push(n as f64);
                            for _ in 0..n {
                                row.push(next_num(&mut tokens)?);
                            }
                        }
                    }
                }
            } else {
                for prop in &el.properties {
                    match prop {
                        PlyProperty::Scalar { ty, .. } => row.push(ty.read_binary(r)?),
                        PlyProperty::List { count_ty, item_ty, .. } => {
                            let n = count_ty.read_binary(r)? as usize;
                            row.push(n as f64);
                            for _ in 0..n {
                                row.push(item_ty.read_binary(r)?);
                            }
                        }
                    }
                }
                lineno = header.header_lines + row_idx + 1;
            }
            rows.push(row);
        }
        out.push(rows);
    }
    Ok(out)
}

/// Column offsets of named scalar properties within an element's rows.
/// Only valid when the element has no list properties before them.
fn scalar_columns(el: &PlyElement, wanted: &[&str]) -> Option<Vec<usize>> {
    let mut positions = Vec::with_capacity(wanted.len());
    for w in wanted {
        let pos = el.properties.iter().position(|p| match p {
            PlyProperty::Scalar { name, .. } => name == w,
            PlyProperty::List { .. } => false,
        })?;
        // offset equals index only if all preceding properties are scalars
        if el.properties[..pos]
            .iter()
            .any(|p| matches!(p, PlyProperty::List { .. }))
        {
            return None;
        }
        positions.push(pos);
    }
    Some(positions)
}

fn load_ply_cloud(path: &Path) -> Result<OrientedPointCloud> {
    let mut reader = BufReader::new(File::open(path)?);
    let header = read_ply_header(&mut reader)?;
    let body = read_ply_body(&mut reader, &header)?;
    let (idx, el) = header
        .elements
        .iter()
        .enumerate()
        .find(|(_, e)| e.name == "vertex")
        .ok_or_else(|| parse_err(header.header_lines, "PLY file has no vertex element"))?;
    let cols = scalar_columns(el, &["x", "y", "z", "nx", "ny", "nz"]).ok_or_else(|| {
        ReconError::InvalidInput(
            "normals required: PLY vertex element must provide x, y, z, nx, ny, nz".into(),
        )
    })?;
    let mut points = Vec::with_capacity(el.count);
    let mut normals = Vec::with_capacity(el.count);
    for row in &body[idx] {
        points.push([row[cols[0]], row[cols[1]], row[cols[2]]]);
        normals.push([row[cols[3]], row[cols[4]], row[cols[5]]]);
    }
    OrientedPointCloud::new(points, normals)
}

/// Writes a mesh; empty meshes are rejected.
pub fn save_mesh(mesh: &TriangleMesh, path: &Path, format: MeshFormat) -> Result<()> {
    if mesh.vertices.is_empty() || mesh.faces.is_empty() {
        return Err(ReconError::InvalidInput("refusing to write an empty mesh".into()));
    }
    mesh.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        MeshFormat::Obj => {
            for v in &mesh.vertices {
                writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
            }
            for n in &mesh.vertex_normals {
                writeln!(w, "vn {} {} {}", n[0], n[1], n[2])?;
            }
            for f in &mesh.faces {
                writeln!(
                    w,
                    "f {}//{} {}//{} {}//{}",
                    f[0] + 1,
                    f[0] + 1,
                    f[1] + 1,
                    f[1] + 1,
                    f[2] + 1,
                    f[2] + 1
                )?;
            }
        }
        MeshFormat::Ply => {
            writeln!(w, "ply")?;
            writeln!(w, "format binary_little_endian 1.0")?;
            writeln!(w, "element vertex {}", mesh.vertices.len())?;
            for prop in ["x", "y", "z", "nx", "ny", "nz"] {
                writeln!(w, "property float {prop}")?;
            }
            writeln!(w, "element face {}", mesh.faces.len())?;
            writeln!(w, "property list uchar int vertex_indices")?;
            writeln!(w, "end_header")?;
            for (v, n) in mesh.vertices.iter().zip(&mesh.vertex_normals) {
                for c in v.iter().chain(n.iter()) {
                    w.write_f32::<LittleEndian>(*c as f32)?;
                }
            }
            for f in &mesh.faces {
                w.write_u8(3)?;
                for &i in f {
                    w.write_i32::<LittleEndian>(i as i32)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads a triangle mesh (OBJ or PLY); polygons with more than three
/// vertices are fan-split.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    let format = detect_mesh_format(path).ok_or_else(|| {
        ReconError::InvalidInput(format!("cannot infer mesh format of {}", path.display()))
    })?;
    match format {
        MeshFormat::Obj => load_obj_mesh(path),
        MeshFormat::Ply => load_ply_mesh(path),
    }
}

fn push_fan(
    faces: &mut Vec<[usize; 3]>,
    poly: &[usize],
    n_vertices: usize,
    lineno: usize,
) -> Result<()> {
    if poly.len() < 3 {
        return Err(parse_err(lineno, "face needs at least 3 vertices"));
    }
    for &i in poly {
        if i >= n_vertices {
            return Err(parse_err(
                lineno,
                format!("face index {} out of range (have {n_vertices} vertices)", i + 1),
            ));
        }
    }
    for k in 1..poly.len() - 1 {
        faces.push([poly[0], poly[k], poly[k + 1]]);
    }
    Ok(())
}

fn load_obj_mesh(path: &Path) -> Result<TriangleMesh> {
    let reader = BufReader::new(File::open(path)?);
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for (lineno0, line) in reader.lines().enumerate() {
        let lineno = lineno0 + 1;
        let line = line?;
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => vertices.push(parse_vec3(it, lineno)?),
            Some("vn") => normals.push(parse_vec3(it, lineno)?),
            Some("f") => {
                let mut poly = Vec::new();
                for tok in it {
                    let idx_str = tok.split('/').next().unwrap_or(tok);
                    let idx: i64 = idx_str
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("invalid face index '{tok}'")))?;
                    let resolved = if idx > 0 {
                        (idx - 1) as usize
                    } else if idx < 0 && (-idx) as usize <= vertices.len() {
                        vertices.len() - (-idx) as usize
                    } else {
                        return Err(parse_err(lineno, format!("invalid face index '{tok}'")));
                    };
                    poly.push(resolved);
                }
                push_fan(&mut faces, &poly, vertices.len(), lineno)?;
            }
            _ => {}
        }
    }
    let vertex_normals = if normals.len() == vertices.len() {
        normals
    } else {
        vec![[0.0, 0.0, 1.0]; vertices.len()]
    };
    let mesh = TriangleMesh { vertices, faces, vertex_normals };
    mesh.validate()?;
    Ok(mesh)
}

fn load_ply_mesh(path: &Path) -> Result<TriangleMesh> {
    let mut reader = BufReader::new(File::open(path)?);
    let header = read_ply_header(&mut reader)?;
    let body = read_ply_body(&mut reader, &header)?;
    let (v_idx, v_el) = header
        .elements
        .iter()
        .enumerate()
        .find(|(_, e)| e.name == "vertex")
        .ok_or_else(|| parse_err(header.header_lines, "PLY file has no vertex element"))?;
    let pos_cols = scalar_columns(v_el, &["x", "y", "z"])
        .ok_or_else(|| parse_err(header.header_lines, "vertex element lacks x, y, z"))?;
    let normal_cols = scalar_columns(v_el, &["nx", "ny", "nz"]);
    let mut vertices = Vec::with_capacity(v_el.count);
    let mut vertex_normals = Vec::with_capacity(v_el.count);
    for row in &body[v_idx] {
        vertices.push([row[pos_cols[0]], row[pos_cols[1]], row[pos_cols[2]]]);
        vertex_normals.push(match &normal_cols {
            Some(c) => [row[c[0]], row[c[1]], row[c[2]]],
            None => [0.0, 0.0, 1.0],
        });
    }
    let mut faces = Vec::new();
    if let Some((f_idx, _)) = header
        .elements
        .iter()
        .enumerate()
        .find(|(_, e)| e.name == "face")
    {
        for (row_idx, row) in body[f_idx].iter().enumerate() {
            let n = row[0] as usize;
            let poly: Vec<usize> = row[1..1 + n].iter().map(|&v| v as usize).collect();
            push_fan(&mut faces, &poly, vertices.len(), header.header_lines + row_idx + 1)?;
        }
    }
    let mesh = TriangleMesh { vertices, faces, vertex_normals };
    mesh.validate()?;
    Ok(mesh)
}
