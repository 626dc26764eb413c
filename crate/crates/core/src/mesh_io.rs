//! Triangle meshes and point clouds, and their on-disk formats.
//!
//! STL is read in both encodings. Binary STL stores little-endian `f32`
//! coordinates in 50-byte facet records behind an 80-byte header and a
//! `u32` facet count; ASCII STL uses the `solid`/`facet`/`vertex` grammar.
//! Vertices are kept per facet (no welding) so a binary round trip is
//! bit-exact. Point clouds are stored as CSV (`x,y,z[,layer]`) or ASCII PLY.
//! All lengths are millimetres.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STL_HEADER_LEN: usize = 80;
const STL_PREAMBLE_LEN: usize = STL_HEADER_LEN + 4;
const STL_FACET_LEN: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Option<Vec<Vector3<f64>>>,
    /// Indices of facets with zero area. They are kept in `triangles`.
    pub degenerate: Vec<usize>,
}

impl TriangleMesh {
    /// Builds a mesh from a facet soup, three fresh vertices per facet.
    pub fn from_facets(facets: &[[Point3<f64>; 3]]) -> Result<Self> {
        let mut vertices = Vec::with_capacity(facets.len() * 3);
        let mut triangles = Vec::with_capacity(facets.len());
        for (fi, facet) in facets.iter().enumerate() {
            for p in facet {
                if !p.coords.iter().all(|c| c.is_finite()) {
                    return Err(Error::invalid(format!("facet {fi} has a non-finite coordinate")));
                }
                vertices.push(*p);
            }
            let base = (fi * 3) as u32;
            triangles.push([base, base + 1, base + 2]);
        }
        let mut mesh = TriangleMesh {
            vertices,
            triangles,
            normals: None,
            degenerate: Vec::new(),
        };
        mesh.flag_degenerate();
        Ok(mesh)
    }

    pub fn facet(&self, index: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[index];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn facet_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Geometric (right-hand rule) unit normal of a facet, zero if degenerate.
    pub fn facet_normal(&self, index: usize) -> Vector3<f64> {
        let [a, b, c] = self.facet(index);
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vector3::zeros()
        }
    }

    /// `(min_z, max_z)` over all vertices; `None` for an empty mesh.
    pub fn z_range(&self) -> Option<(f64, f64)> {
        let mut it = self.vertices.iter().map(|p| p.z);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), z| (lo.min(z), hi.max(z))))
    }

    fn flag_degenerate(&mut self) {
        self.degenerate = (0..self.triangles.len())
            .filter(|&i| {
                let [a, b, c] = self.facet(i);
                (b - a).cross(&(c - a)).norm_squared() == 0.0
            })
            .collect();
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(Error::invalid(format!("triangle {i} references a missing vertex")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::invalid(format!("triangle {i} repeats a vertex index")));
            }
        }
        if let Some(p) = self.vertices.iter().find(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("non-finite vertex {p:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    /// Optional per-point layer index, same length as `points`.
    pub layers: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        PointCloud {
            points,
            layers: None,
        }
    }

    pub fn with_layers(points: Vec<Point3<f64>>, layers: Vec<u32>) -> Result<Self> {
        if points.len() != layers.len() {
            return Err(Error::invalid(format!(
                "{} points but {} layer indices",
                points.len(),
                layers.len()
            )));
        }
        Ok(PointCloud {
            points,
            layers: Some(layers),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.points.len() as f64))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(layers) = &self.layers {
            if layers.len() != self.points.len() {
                return Err(Error::invalid("layer column length differs from point count"));
            }
        }
        match self.points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            Some(i) => Err(Error::invalid(format!("point {i} has a non-finite coordinate"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CloudFormat {
    Csv,
    PlyAscii,
}

impl CloudFormat {
    /// Picks a format from the file extension; anything but `.ply` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ply") => CloudFormat::PlyAscii,
            _ => CloudFormat::Csv,
        }
    }
}

// ---------------------------------------------------------------- STL

pub fn read_stl(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_stl(&bytes)
}

/// Parses STL bytes, auto-detecting the encoding.
///
/// A buffer whose length matches its binary facet count is binary even if
/// the header happens to start with `solid`.
pub fn parse_stl(bytes: &[u8]) -> Result<TriangleMesh> {
    let declared_binary = bytes.len() >= STL_PREAMBLE_LEN && {
        let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        STL_PREAMBLE_LEN + count * STL_FACET_LEN == bytes.len()
    };
    if !declared_binary && bytes.starts_with(b"solid") {
        if let Ok(text) = std::str::from_utf8(bytes) {
            return parse_ascii_stl(text);
        }
    }
    parse_binary_stl(bytes)
}

fn parse_binary_stl(bytes: &[u8]) -> Result<TriangleMesh> {
    if bytes.len() < STL_PREAMBLE_LEN {
        return Err(Error::ParseByte {
            offset: bytes.len() as u64,
            message: "truncated binary STL header".into(),
        });
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    let available = (bytes.len() - STL_PREAMBLE_LEN) / STL_FACET_LEN;
    if available < count {
        return Err(Error::ParseByte {
            offset: (STL_PREAMBLE_LEN + available * STL_FACET_LEN) as u64,
            message: format!("header declares {count} facets but only {available} are present"),
        });
    }
    let expected_len = STL_PREAMBLE_LEN + count * STL_FACET_LEN;
    if bytes.len() != expected_len {
        return Err(Error::ParseByte {
            offset: expected_len as u64,
            message: format!(
                "facet count mismatch: {} trailing bytes after {count} facets",
                bytes.len() - expected_len
            ),
        });
    }

    let read_f32 = |offset: usize| -> Result<f64> {
        let v = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
        if v.is_finite() {
            Ok(v as f64)
        } else {
            Err(Error::ParseByte {
                offset: offset as u64,
                message: "non-finite coordinate".into(),
            })
        }
    };

    let mut vertices = Vec::with_capacity(count * 3);
    let mut normals = Vec::with_capacity(count);
    let mut triangles = Vec::with_capacity(count);
    for f in 0..count {
        let base = STL_PREAMBLE_LEN + f * STL_FACET_LEN;
        normals.push(Vector3::new(read_f32(base)?, read_f32(base + 4)?, read_f32(base + 8)?));
        for v in 0..3 {
            let o = base + 12 + v * 12;
            vertices.push(Point3::new(read_f32(o)?, read_f32(o + 4)?, read_f32(o + 8)?));
        }
        let i = (f * 3) as u32;
        triangles.push([i, i + 1, i + 2]);
    }
    let mut mesh = TriangleMesh {
        vertices,
        triangles,
        normals: Some(normals),
        degenerate: Vec::new(),
    };
    mesh.flag_degenerate();
    Ok(mesh)
}

fn parse_ascii_stl(text: &str) -> Result<TriangleMesh> {
    let mut tokens = text
        .lines()
        .enumerate()
        .flat_map(|(i, line)| line.split_whitespace().map(move |t| (i + 1, t)))
        .peekable();
    let mut last_line = 1;

    let mut next = |what: &str| -> Result<(usize, &str)> {
        match tokens.next() {
            Some((line, tok)) => {
                last_line = line;
                Ok((line, tok))
            }
            None => Err(Error::ParseLine {
                line: last_line,
                message: format!("unexpected end of file, expected {what}"),
            }),
        }
    };

    fn expect(tok: (usize, &str), want: &str) -> Result<()> {
        if tok.1 == want {
            Ok(())
        } else {
            Err(Error::ParseLine {
                line: tok.0,
                message: format!("expected `{want}`, found `{}`", tok.1),
            })
        }
    }
    fn number(tok: (usize, &str)) -> Result<f64> {
        match tok.1.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(Error::ParseLine {
                line: tok.0,
                message: format!("non-finite coordinate `{}`", tok.1),
            }),
            Err(_) => Err(Error::ParseLine {
                line: tok.0,
                message: format!("expected a number, found `{}`", tok.1),
            }),
        }
    }

    expect(next("solid")?, "solid")?;
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    // Skip the optional solid name up to the first `facet` or `endsolid`.
    let mut tok = next("facet")?;
    while tok.1 != "facet" && tok.1 != "endsolid" {
        tok = next("facet")?;
    }
    while tok.1 == "facet" {
        expect(next("normal")?, "normal")?;
        let n = Vector3::new(number(next("nx")?)?, number(next("ny")?)?, number(next("nz")?)?);
        expect(next("outer")?, "outer")?;
        expect(next("loop")?, "loop")?;
        let base = vertices.len() as u32;
        for _ in 0..3 {
            expect(next("vertex")?, "vertex")?;
            vertices.push(Point3::new(
                number(next("x")?)?,
                number(next("y")?)?,
                number(next("z")?)?,
            ));
        }
        expect(next("endloop")?, "endloop")?;
        expect(next("endfacet")?, "endfacet")?;
        normals.push(n);
        triangles.push([base, base + 1, base + 2]);
        tok = next("facet or endsolid")?;
    }
    expect(tok, "endsolid")?;

    let mut mesh = TriangleMesh {
        vertices,
        triangles,
        normals: Some(normals),
        degenerate: Vec::new(),
    };
    mesh.flag_degenerate();
    Ok(mesh)
}

/// Binary STL bytes. Coordinates are narrowed to `f32`.
pub fn stl_binary_bytes(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(STL_PREAMBLE_LEN + mesh.facet_count() * STL_FACET_LEN);
    let mut header = [0u8; STL_HEADER_LEN];
    let tag = b"kneadforge binary STL";
    header[..tag.len()].copy_from_slice(tag);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.facet_count() as u32).to_le_bytes());
    for i in 0..mesh.facet_count() {
        let n = match &mesh.normals {
            Some(ns) => ns[i],
            None => mesh.facet_normal(i),
        };
        for c in n.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        for p in mesh.facet(i) {
            for c in p.coords.iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}

pub fn write_stl_binary(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, stl_binary_bytes(mesh)).map_err(|e| Error::io(path, e))
}

pub fn write_stl_ascii(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("solid kneadforge\n");
    for i in 0..mesh.facet_count() {
        let n = mesh.facet_normal(i);
        s.push_str(&format!("  facet normal {} {} {}\n    outer loop\n", n.x, n.y, n.z));
        for p in mesh.facet(i) {
            s.push_str(&format!("      vertex {} {} {}\n", p.x, p.y, p.z));
        }
        s.push_str("    endloop\n  endfacet\n");
    }
    s.push_str("endsolid kneadforge\n");
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- clouds

pub fn write_cloud(cloud: &PointCloud, path: impl AsRef<Path>, format: CloudFormat) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match format {
        CloudFormat::Csv => write_csv(cloud, &mut w),
        CloudFormat::PlyAscii => write_ply(cloud, &mut w),
    };
    res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn write_csv(cloud: &PointCloud, w: &mut impl Write) -> std::io::Result<()> {
    match &cloud.layers {
        Some(layers) => {
            writeln!(w, "x,y,z,layer")?;
            for (p, l) in cloud.points.iter().zip(layers) {
                writeln!(w, "{},{},{},{}", p.x, p.y, p.z, l)?;
            }
        }
        None => {
            writeln!(w, "x,y,z")?;
            for p in &cloud.points {
                writeln!(w, "{},{},{}", p.x, p.y, p.z)?;
            }
        }
    }
    Ok(())
}

fn write_ply(cloud: &PointCloud, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", cloud.len())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    if cloud.layers.is_some() {
        writeln!(w, "property uint layer")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points.iter().enumerate() {
        match &cloud.layers {
            Some(layers) => writeln!(w, "{} {} {} {}", p.x, p.y, p.z, layers[i])?,
            None => writeln!(w, "{} {} {}", p.x, p.y, p.z)?,
        }
    }
    Ok(())
}

pub fn read_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CloudFormat::Csv => parse_csv_cloud(&text),
        CloudFormat::PlyAscii => parse_ply_cloud(&text),
    }
}

fn parse_coord(tok: &str, line: usize) -> Result<f64> {
    match tok.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::ParseLine {
            line,
            message: format!("invalid coordinate `{tok}`"),
        }),
    }
}

fn parse_layer(tok: &str, line: usize) -> Result<u32> {
    tok.trim().parse::<u32>().map_err(|_| Error::ParseLine {
        line,
        message: format!("invalid layer index `{tok}`"),
    })
}

pub fn parse_csv_cloud(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h.trim(),
        None => {
            return Err(Error::ParseLine {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let with_layer = match header {
        "x,y,z" => false,
        "x,y,z,layer" => true,
        other => {
            return Err(Error::ParseLine {
                line: 1,
                message: format!("expected header `x,y,z` or `x,y,z,layer`, found `{other}`"),
            })
        }
    };
    let width = if with_layer { 4 } else { 3 };
    let mut points = Vec::new();
    let mut layers = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != width {
            return Err(Error::ParseLine {
                line,
                message: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        points.push(Point3::new(
            parse_coord(fields[0], line)?,
            parse_coord(fields[1], line)?,
            parse_coord(fields[2], line)?,
        ));
        if with_layer {
            layers.push(parse_layer(fields[3], line)?);
        }
    }
    Ok(PointCloud {
        points,
        layers: with_layer.then_some(layers),
    })
}

pub fn parse_ply_cloud(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut expect_line = |want: &str| -> Result<()> {
        match lines.next() {
            Some((_, l)) if l == want => Ok(()),
            Some((n, l)) => Err(Error::ParseLine {
                line: n,
                message: format!("expected `{want}`, found `{l}`"),
            }),
            None => Err(Error::ParseLine {
                line: 1,
                message: format!("missing `{want}`"),
            }),
        }
    };
    expect_line("ply")?;
    expect_line("format ascii 1.0")?;

    let mut count: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    let mut header_end = 0;
    for (n, l) in lines.by_ref() {
        let parts: Vec<&str> = l.split_whitespace().collect();
        match parts.as_slice() {
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", c] => {
                count = Some(c.parse().map_err(|_| Error::ParseLine {
                    line: n,
                    message: format!("invalid vertex count `{c}`"),
                })?);
            }
            ["property", _ty, name] if count.is_some() => props.push(name.to_string()),
            ["end_header"] => {
                header_end = n;
                break;
            }
            _ => {
                return Err(Error::ParseLine {
                    line: n,
                    message: format!("unsupported header line `{l}`"),
                })
            }
        }
    }
    let count = count.ok_or(Error::ParseLine {
        line: header_end.max(1),
        message: "missing `element vertex`".into(),
    })?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (xi, yi, zi) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => {
            return Err(Error::ParseLine {
                line: header_end,
                message: "vertex element lacks x, y or z".into(),
            })
        }
    };
    let li = col("layer");

    let mut points = Vec::with_capacity(count);
    let mut layers = Vec::new();
    for (n, l) in lines {
        if points.len() == count {
            break;
        }
        if l.is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != props.len() {
            return Err(Error::ParseLine {
                line: n,
                message: format!("expected {} values, found {}", props.len(), f.len()),
            });
        }
        points.push(Point3::new(
            parse_coord(f[xi], n)?,
            parse_coord(f[yi], n)?,
            parse_coord(f[zi], n)?,
        ));
        if let Some(li) = li {
            layers.push(parse_layer(f[li], n)?);
        }
    }
    if points.len() != count {
        return Err(Error::ParseLine {
            line: header_end + points.len() + 1,
            message: format!("expected {count} vertices, found {}", points.len()),
        });
    }
    Ok(PointCloud {
        points,
        layers: li.map(|_| layers),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn facet_bytes(verts: [[f32; 3]; 3]) -> Vec<u8> {
        let mut b = Vec::new();
        for _ in 0..3 {
            b.extend_from_slice(&0f32.to_le_bytes());
        }
        for v in verts {
            for c in v {
                b.extend_from_slice(&c.to_le_bytes());
            }
        }
        b.extend_from_slice(&[0, 0]);
        b
    }

    fn binary_stl(count: u32, facets: usize) -> Vec<u8> {
        let mut b = vec![0u8; 80];
        b.extend_from_slice(&count.to_le_bytes());
        for k in 0..facets {
            let z = k as f32;
            b.extend(facet_bytes([[0.0, 0.0, z], [1.0, 0.0, z], [0.0, 1.0, z + 1.0]]));
        }
        b
    }

    #[test]
    fn single_facet_binary() {
        let bytes = binary_stl(1, 1);
        assert_eq!(bytes.len(), 84 + 50);
        let mesh = parse_stl(&bytes).unwrap();
        assert_eq!(mesh.vertices.len(), 3);
        assert_eq!(mesh.triangles.len(), 1);
        assert!(mesh.degenerate.is_empty());
    }

    #[test]
    fn truncated_binary_reports_offset_of_missing_facet() {
        let bytes = binary_stl(10, 9);
        match parse_stl(&bytes) {
            Err(Error::ParseByte { offset, .. }) => assert_eq!(offset, 84 + 9 * 50),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_header_is_truncation() {
        let err = parse_stl(&[0u8; 40]).unwrap_err();
        assert!(matches!(err, Error::ParseByte { offset: 40, .. }));
    }

    #[test]
    fn binary_with_solid_header_is_binary() {
        let mut bytes = binary_stl(2, 2);
        bytes[..5].copy_from_slice(b"solid");
        let mesh = parse_stl(&bytes).unwrap();
        assert_eq!(mesh.facet_count(), 2);
    }

    #[test]
    fn non_finite_binary_coordinate() {
        let mut bytes = binary_stl(1, 1);
        let off = 84 + 12 + 4;
        bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        match parse_stl(&bytes) {
            Err(Error::ParseByte { offset, .. }) => assert_eq!(offset as usize, off),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ascii_tetrahedron() {
        let text = "solid tet
  facet normal 0 0 -1
    outer loop
      vertex 0 0 0
      vertex 0 1 0
      vertex 1 0 0
    endloop
  endfacet
  facet normal 0 -1 0
    outer loop
      vertex 0 0 0
      vertex 1 0 0
      vertex 0 0 1
    endloop
  endfacet
  facet normal -1 0 0
    outer loop
      vertex 0 0 0
      vertex 0 0 1
      vertex 0 1 0
    endloop
  endfacet
  facet normal 1 1 1
    outer loop
      vertex 1 0 0
      vertex 0 1 0
      vertex 0 0 1
    endloop
  endfacet
endsolid tet
";
        let mesh = parse_stl(text.as_bytes()).unwrap();
        assert_eq!(mesh.facet_count(), 4);
        assert_eq!(mesh.triangles.iter().flatten().count(), 12);
        mesh.validate().unwrap();
    }

    #[test]
    fn ascii_errors_carry_line_numbers() {
        let text = "solid x\n facet normal 0 0 1\n outer loop\n vertex 0 0 nan\n";
        match parse_stl(text.as_bytes()) {
            Err(Error::ParseLine { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let text = "solid x\n facet normal 0 0 1\n outer loop\n vertex 0 0 0\n";
        assert!(matches!(
            parse_stl(text.as_bytes()),
            Err(Error::ParseLine { .. })
        ));
    }

    #[test]
    fn zero_area_facets_are_kept_and_flagged() {
        let p = Point3::new(1.0, 2.0, 3.0);
        let mesh = TriangleMesh::from_facets(&[
            [p, p, Point3::new(0.0, 0.0, 0.0)],
            [Point3::origin(), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)],
        ])
        .unwrap();
        assert_eq!(mesh.facet_count(), 2);
        assert_eq!(mesh.degenerate, vec![0]);
    }

    #[test]
    fn csv_single_point_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_cloud(&PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0)]), &path, CloudFormat::Csv)
            .unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "x,y,z\n1,2,3\n");
    }

    #[test]
    fn empty_cloud_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        write_cloud(&PointCloud::default(), &path, CloudFormat::Csv).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "x,y,z\n");
        assert!(read_cloud(&path, CloudFormat::Csv).unwrap().is_empty());
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            parse_csv_cloud("1,2,3\n"),
            Err(Error::ParseLine { line: 1, .. })
        ));
        assert!(matches!(
            parse_csv_cloud(""),
            Err(Error::ParseLine { line: 1, .. })
        ));
        match parse_csv_cloud("x,y,z\n1,2,3\n4,five,6\n") {
            Err(Error::ParseLine { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_csv_cloud("x,y,z,layer\n1,2,3,0\n1,2,3\n") {
            Err(Error::ParseLine { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ply_round_trip_with_layers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let cloud = PointCloud::with_layers(
            vec![Point3::new(0.1, -2.5, 1e-7), Point3::new(3.0, 4.0, 5.0)],
            vec![0, 7],
        )
        .unwrap();
        write_cloud(&cloud, &path, CloudFormat::PlyAscii).unwrap();
        assert_eq!(read_cloud(&path, CloudFormat::PlyAscii).unwrap(), cloud);
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(CloudFormat::from_path(Path::new("a.PLY")), CloudFormat::PlyAscii);
        assert_eq!(CloudFormat::from_path(Path::new("a.csv")), CloudFormat::Csv);
    }
}
