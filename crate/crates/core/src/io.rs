//! Mesh and point-cloud files, surface sampling and unit-sphere rescaling.
//!
//! Formats:
//! - OFF meshes, including the variant with the counts on the header line
//!   (`OFF490 1 0`). Polygons with more than three vertices are fanned.
//! - ASCII PLY with a `vertex` element (`x y z`, optional `nx ny nz`) and an
//!   optional `face` element (`vertex_indices` list).
//! - XYZ text: 3 or 6 whitespace-separated decimals per line (point, or point
//!   and normal). `#` starts a comment.

use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::frames::orient_normal;
use crate::geom::Vec3;

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Validates face indices and that every face uses three distinct vertices.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("vertex {i} is not finite")));
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&v| v >= vertices.len()) {
                return Err(Error::InvalidFace {
                    face: fi,
                    message: format!("index {bad} out of range ({} vertices)", vertices.len()),
                });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidFace {
                    face: fi,
                    message: "repeated vertex".into(),
                });
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    fn corners(&self, f: usize) -> [Vec3; 3] {
        self.faces[f].map(|i| self.vertices[i])
    }

    /// Non-normalized face normal, `(b − a) × (c − a)`; its norm is twice the area.
    fn face_cross(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.corners(f);
        (b - a).cross(c - a)
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * self.face_cross(f).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }
}

/// Contents of a PLY file: a mesh when it has faces, a cloud otherwise.
#[derive(Clone, Debug, PartialEq)]
pub enum PlyContent {
    Mesh(TriangleMesh),
    Cloud(PointCloud),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_f64(path: &Path, line: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(path, line, format!("expected a number, found {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

fn parse_usize(path: &Path, line: usize, tok: &str) -> Result<usize> {
    tok.parse().map_err(|_| {
        parse_err(
            path,
            line,
            format!("expected a non-negative integer, found {tok:?}"),
        )
    })
}

pub fn read_off(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_off(&text, path)
}

/// Parses OFF text; `origin` is only used in error messages.
pub fn parse_off(text: &str, origin: &Path) -> Result<TriangleMesh> {
    let mut lines = content_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(origin, 1, "empty file"))?;
    let rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| parse_err(origin, hline, "missing OFF header"))?
        .trim();
    let (cline, counts) = if rest.is_empty() {
        lines
            .next()
            .ok_or_else(|| parse_err(origin, hline, "missing element counts"))?
    } else {
        (hline, rest)
    };
    let counts: Vec<&str> = counts.split_whitespace().collect();
    if counts.len() < 2 {
        return Err(parse_err(origin, cline, "expected vertex and face counts"));
    }
    let nv = parse_usize(origin, cline, counts[0])?;
    let nf = parse_usize(origin, cline, counts[1])?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(origin, cline, format!("expected {nv} vertices")))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(parse_err(origin, ln, "vertex needs 3 coordinates"));
        }
        vertices.push(Vec3::new(
            parse_f64(origin, ln, toks[0])?,
            parse_f64(origin, ln, toks[1])?,
            parse_f64(origin, ln, toks[2])?,
        ));
    }

    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(origin, cline, format!("expected {nf} faces")))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        let k = parse_usize(origin, ln, toks[0])?;
        if k < 3 || toks.len() < k + 1 {
            return Err(parse_err(origin, ln, format!("face with {k} vertices")));
        }
        let idx = toks[1..=k]
            .iter()
            .map(|t| {
                let i = parse_usize(origin, ln, t)?;
                if i >= nv {
                    return Err(Error::IndexOutOfRange {
                        path: origin.to_path_buf(),
                        line: ln,
                        index: i,
                        count: nv,
                    });
                }
                Ok(i)
            })
            .collect::<Result<Vec<usize>>>()?;
        for j in 1..k - 1 {
            faces.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn read_ply_ascii(path: impl AsRef<Path>) -> Result<PlyContent> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_ply_ascii(&text, path)
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
    list_property: Option<String>,
}

pub fn parse_ply_ascii(text: &str, origin: &Path) -> Result<PlyContent> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(origin, 1, "missing ply magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(origin, 1, "missing end_header"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(parse_err(origin, ln, format!("unsupported format {fmt}")))
            }
            ["format", ..] | ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: parse_usize(origin, ln, count)?,
                properties: Vec::new(),
                list_property: None,
            }),
            ["property", "list", _, _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(origin, ln, "property before element"))?;
                el.list_property = Some(name.to_string());
            }
            ["property", _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(origin, ln, "property before element"))?;
                el.properties.push(name.to_string());
            }
            _ => {
                return Err(parse_err(
                    origin,
                    ln,
                    format!("unrecognized header line {l:?}"),
                ))
            }
        }
    }

    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut has_normals = false;
    let mut faces = Vec::new();
    let mut nv = 0;
    for el in &elements {
        let col = |n: &str| el.properties.iter().position(|p| p == n);
        for _ in 0..el.count {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| parse_err(origin, 0, format!("truncated {} element", el.name)))?;
            let toks: Vec<&str> = l.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let get = |name: &str| -> Result<Option<f64>> {
                        match col(name) {
                            None => Ok(None),
                            Some(c) => {
                                let t = toks.get(c).ok_or_else(|| {
                                    parse_err(origin, ln, format!("missing {name}"))
                                })?;
                                parse_f64(origin, ln, t).map(Some)
                            }
                        }
                    };
                    let (Some(x), Some(y), Some(z)) = (get("x")?, get("y")?, get("z")?) else {
                        return Err(parse_err(origin, ln, "vertex needs x, y, z properties"));
                    };
                    points.push(Vec3::new(x, y, z));
                    if let (Some(a), Some(b), Some(c)) = (get("nx")?, get("ny")?, get("nz")?) {
                        has_normals = true;
                        normals.push(Vec3::new(a, b, c));
                    }
                }
                "face" if el.list_property.is_some() => {
                    let k = parse_usize(origin, ln, toks.first().copied().unwrap_or(""))?;
                    if k < 3 || toks.len() < k + 1 {
                        return Err(parse_err(origin, ln, format!("face with {k} vertices")));
                    }
                    let idx = toks[1..=k]
                        .iter()
                        .map(|t| parse_usize(origin, ln, t))
                        .collect::<Result<Vec<usize>>>()?;
                    if let Some(&bad) = idx.iter().find(|&&i| i >= nv) {
                        return Err(Error::IndexOutOfRange {
                            path: origin.to_path_buf(),
                            line: ln,
                            index: bad,
                            count: nv,
                        });
                    }
                    for j in 1..k - 1 {
                        faces.push([idx[0], idx[j], idx[j + 1]]);
                    }
                }
                _ => {}
            }
        }
        if el.name == "vertex" {
            nv = points.len();
        }
    }

    if !faces.is_empty() {
        return Ok(PlyContent::Mesh(TriangleMesh::new(points, faces)?));
    }
    let cloud = PointCloud::new(points)?;
    if has_normals {
        let normals = normals
            .into_iter()
            .map(|n| n.normalized(0.0).unwrap_or(n))
            .collect();
        Ok(PlyContent::Cloud(cloud.set_normals(normals)?))
    } else {
        Ok(PlyContent::Cloud(cloud))
    }
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_xyz(&text, path)
}

pub fn parse_xyz(text: &str, origin: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut width = None;
    for (ln, l) in content_lines(text) {
        let vals = l
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| parse_f64(origin, ln, t))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != 3 && vals.len() != 6 {
            return Err(parse_err(
                origin,
                ln,
                format!("expected 3 or 6 columns, found {}", vals.len()),
            ));
        }
        match width {
            None => width = Some(vals.len()),
            Some(w) if w != vals.len() => {
                return Err(parse_err(
                    origin,
                    ln,
                    format!("expected {w} columns, found {}", vals.len()),
                ))
            }
            _ => {}
        }
        points.push(Vec3::new(vals[0], vals[1], vals[2]));
        if vals.len() == 6 {
            normals.push(Vec3::new(vals[3], vals[4], vals[5]));
        }
    }
    if points.is_empty() {
        return Err(parse_err(origin, 1, "no points"));
    }
    let cloud = PointCloud::new(points)?;
    if width == Some(6) {
        // Written normals carry 9 significant digits; renormalize.
        let normals = normals
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                n.normalized(0.0)
                    .ok_or_else(|| parse_err(origin, i + 1, "zero normal"))
            })
            .collect::<Result<Vec<_>>>()?;
        cloud.set_normals(normals)
    } else {
        Ok(cloud)
    }
}

fn fmt9(v: f64) -> String {
    format!("{v:.8e}")
}

pub fn format_xyz(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 48);
    for (i, p) in cloud.points().iter().enumerate() {
        out.push_str(&format!("{} {} {}", fmt9(p.x), fmt9(p.y), fmt9(p.z)));
        if let Some(ns) = cloud.normals() {
            let n = ns[i];
            out.push_str(&format!(" {} {} {}", fmt9(n.x), fmt9(n.y), fmt9(n.z)));
        }
        out.push('\n');
    }
    out
}

/// Writes 3 or 6 columns with 9 significant digits.
pub fn write_xyz(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_xyz(cloud)).map_err(io_err(path))
}

pub fn write_ply_ascii(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", cloud.len()));
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.has_normals() {
        out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    out.push_str("end_header\n");
    out.push_str(&format_xyz(cloud));
    fs::write(path, out).map_err(io_err(path))
}

/// Reads a cloud from `.xyz`/`.txt`, `.ply` (vertices only) or `.off`
/// (vertices only). Mesh inputs meant for surface sampling go through
/// [`read_mesh`].
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "ply" => match read_ply_ascii(path)? {
            PlyContent::Cloud(c) => Ok(c),
            PlyContent::Mesh(m) => PointCloud::new(m.vertices().to_vec()),
        },
        "off" => PointCloud::new(read_off(path)?.vertices().to_vec()),
        _ => read_xyz(path),
    }
}

/// Reads a triangle mesh from `.off` or `.ply`.
pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "off" => read_off(path),
        "ply" => match read_ply_ascii(path)? {
            PlyContent::Mesh(m) => Ok(m),
            PlyContent::Cloud(_) => Err(Error::EmptyMesh),
        },
        other => Err(Error::InvalidArgument(format!(
            "{}: unsupported mesh extension {other:?}",
            path.display()
        ))),
    }
}

pub fn is_mesh_path(path: &Path) -> bool {
    extension(path) == "off"
        || (extension(path) == "ply" && matches!(read_ply_ascii(path), Ok(PlyContent::Mesh(_))))
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Draws `n` points area-proportionally over the faces (zero-area faces never
/// chosen), uniform within each face. Normals are the face normals, oriented
/// away from the origin with the same tie rule as normal estimation.
pub fn sample_mesh_surface<R: Rng + ?Sized>(
    mesh: &TriangleMesh,
    n: usize,
    rng: &mut R,
    eps: f64,
) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be positive".into(),
        ));
    }
    let areas: Vec<f64> = (0..mesh.faces().len()).map(|f| mesh.face_area(f)).collect();
    if !areas.iter().any(|a| *a > 0.0) {
        return Err(Error::EmptyMesh);
    }
    let pick = WeightedIndex::new(&areas).map_err(|_| Error::EmptyMesh)?;
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let f = pick.sample(rng);
        let [a, b, c] = mesh.corners(f);
        let (mut r1, mut r2): (f64, f64) = (rng.random(), rng.random());
        if r1 + r2 > 1.0 {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        let p = a + (b - a).scale(r1) + (c - a).scale(r2);
        let normal = mesh.face_cross(f).normalized(0.0).expect("positive area");
        points.push(p);
        normals.push(orient_normal(normal, p, eps));
    }
    PointCloud::with_normals(points, normals)
}

/// Centroid moved to the origin, then scaled so the largest norm is 1.
/// Normals are left unchanged.
pub fn normalize_unit_sphere(cloud: &PointCloud) -> Result<PointCloud> {
    let c = cloud.centroid();
    let centered: Vec<Vec3> = cloud.points().iter().map(|p| *p - c).collect();
    let radius = centered.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if !(radius > 0.0) {
        return Err(Error::AllPointsCoincident);
    }
    let scaled: Vec<Vec3> = centered.iter().map(|p| p.scale(1.0 / radius)).collect();
    match cloud.normals() {
        Some(ns) => PointCloud::with_normals(scaled, ns.to_vec()),
        None => PointCloud::new(scaled),
    }
}

/// Path of a fixture shipped with the crate.
pub fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}
