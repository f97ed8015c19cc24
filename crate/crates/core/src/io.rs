//! Coastline readers and mesh writers.
//!
//! Coastlines come as GeoJSON (LineString, MultiLineString, Polygon,
//! MultiPolygon, in lon-lat degrees) or as plain text:
//!
//! ```text
//! # comment
//! poly <tag> <closed: 0|1>
//! <lon> <lat>
//! ...
//! ```
//!
//! Meshes are written as Gmsh MSH 4.1 or legacy VTK, both ASCII.
//! Coordinates are printed with the shortest representation that reads
//! back to the same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::geomodel::{CoarseDomain, Polylines};
use crate::kernel::{SphericalMesh, NONE};
use crate::predicates::{to_unit_sphere, UnitPoint};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{location}: {message}")]
    Parse { location: String, message: String },
    #[error("unknown format for {0}")]
    UnknownFormat(String),
}

fn parse_error(location: impl Into<String>, message: impl Into<String>) -> IoError {
    IoError::Parse { location: location.into(), message: message.into() }
}

fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::File { path: path.display().to_string(), source: e })
}

fn write_file(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|e| IoError::File { path: path.display().to_string(), source: e })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoastFormat {
    GeoJson,
    PolyText,
}

impl CoastFormat {
    pub fn from_path(path: &Path) -> CoastFormat {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("geojson") | Some("json") => CoastFormat::GeoJson,
            _ => CoastFormat::PolyText,
        }
    }
}

pub fn read_polylines(path: &Path) -> Result<Polylines, IoError> {
    let text = read_file(path)?;
    let name = path.display().to_string();
    let mut lines = Polylines::new();
    match CoastFormat::from_path(path) {
        CoastFormat::GeoJson => parse_geojson(&text, &name, &mut lines)?,
        CoastFormat::PolyText => parse_poly_text(&text, &name, &mut lines)?,
    }
    Ok(lines)
}

fn lonlat_point(v: &Value, loc: &str) -> Result<UnitPoint, IoError> {
    let pair = v.as_array().filter(|a| a.len() >= 2).ok_or_else(|| parse_error(loc, "expected [lon, lat]"))?;
    let lon = pair[0].as_f64().ok_or_else(|| parse_error(loc, "longitude is not a number"))?;
    let lat = pair[1].as_f64().ok_or_else(|| parse_error(loc, "latitude is not a number"))?;
    to_unit_sphere(lon, lat).map_err(|e| parse_error(loc, e.to_string()))
}

fn point_list(v: &Value, loc: &str) -> Result<Vec<UnitPoint>, IoError> {
    v.as_array()
        .ok_or_else(|| parse_error(loc, "expected a coordinate array"))?
        .iter()
        .enumerate()
        .map(|(i, p)| lonlat_point(p, &format!("{loc}[{i}]")))
        .collect()
}

fn add_line(out: &mut Polylines, pts: Vec<UnitPoint>, ring: bool, tag: String) {
    let closed = ring || (pts.len() > 3 && pts.first() == pts.last());
    out.push(&pts, closed, tag);
}

fn add_geometry(geom: &Value, loc: &str, tag: &str, out: &mut Polylines) -> Result<(), IoError> {
    if geom.is_null() {
        return Ok(());
    }
    let kind = geom.get("type").and_then(Value::as_str).ok_or_else(|| parse_error(loc, "geometry without type"))?;
    let coords_loc = format!("{loc}.coordinates");
    let coords = || geom.get("coordinates").ok_or_else(|| parse_error(loc, "geometry without coordinates"));
    let rings = |v: &Value, l: &str| -> Result<Vec<Vec<UnitPoint>>, IoError> {
        v.as_array()
            .ok_or_else(|| parse_error(l, "expected an array of rings"))?
            .iter()
            .enumerate()
            .map(|(i, r)| point_list(r, &format!("{l}[{i}]")))
            .collect()
    };
    match kind {
        "LineString" => add_line(out, point_list(coords()?, &coords_loc)?, false, tag.to_string()),
        "MultiLineString" => {
            for (i, l) in rings(coords()?, &coords_loc)?.into_iter().enumerate() {
                add_line(out, l, false, format!("{tag}/{i}"));
            }
        }
        "Polygon" => {
            for (i, r) in rings(coords()?, &coords_loc)?.into_iter().enumerate() {
                add_line(out, r, true, format!("{tag}/{i}"));
            }
        }
        "MultiPolygon" => {
            let polys = coords()?.as_array().ok_or_else(|| parse_error(&coords_loc, "expected an array of polygons"))?;
            for (p, poly) in polys.iter().enumerate() {
                for (i, r) in rings(poly, &format!("{coords_loc}[{p}]"))?.into_iter().enumerate() {
                    add_line(out, r, true, format!("{tag}/{p}/{i}"));
                }
            }
        }
        "GeometryCollection" => {
            let geoms = geom
                .get("geometries")
                .and_then(Value::as_array)
                .ok_or_else(|| parse_error(loc, "collection without geometries"))?;
            for (i, g) in geoms.iter().enumerate() {
                add_geometry(g, &format!("{loc}.geometries[{i}]"), &format!("{tag}/{i}"), out)?;
            }
        }
        "Point" | "MultiPoint" => {}
        other => return Err(parse_error(loc, format!("unsupported geometry type {other}"))),
    }
    Ok(())
}

fn feature_tag(f: &Value, index: usize) -> String {
    let props = f.get("properties");
    for key in ["name", "id", "tag"] {
        match props.and_then(|p| p.get(key)) {
            Some(Value::String(s)) => return s.clone(),
            Some(Value::Number(n)) => return n.to_string(),
            _ => {}
        }
    }
    match f.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => format!("feature{index}"),
    }
}

pub fn parse_geojson(text: &str, name: &str, out: &mut Polylines) -> Result<(), IoError> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| parse_error(format!("{name}:{}:{}", e.line(), e.column()), e.to_string()))?;
    let kind = doc.get("type").and_then(Value::as_str).unwrap_or("");
    match kind {
        "FeatureCollection" => {
            let feats = doc
                .get("features")
                .and_then(Value::as_array)
                .ok_or_else(|| parse_error(name, "FeatureCollection without features"))?;
            for (i, f) in feats.iter().enumerate() {
                let loc = format!("{name}: features[{i}].geometry");
                add_geometry(f.get("geometry").unwrap_or(&Value::Null), &loc, &feature_tag(f, i), out)?;
            }
        }
        "Feature" => {
            let loc = format!("{name}: geometry");
            add_geometry(doc.get("geometry").unwrap_or(&Value::Null), &loc, &feature_tag(&doc, 0), out)?;
        }
        _ => add_geometry(&doc, name, "geometry", out)?,
    }
    Ok(())
}

pub fn parse_poly_text(text: &str, name: &str, out: &mut Polylines) -> Result<(), IoError> {
    let mut current: Option<(String, bool, Vec<UnitPoint>)> = None;
    let flush = |cur: &mut Option<(String, bool, Vec<UnitPoint>)>, out: &mut Polylines| {
        if let Some((tag, closed, pts)) = cur.take() {
            out.push(&pts, closed, tag);
        }
    };
    for (n, raw) in text.lines().enumerate() {
        let loc = || format!("{name}:{}", n + 1);
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "poly" {
            flush(&mut current, out);
            if fields.len() != 3 {
                return Err(parse_error(loc(), "expected `poly <tag> <closed>`"));
            }
            let closed = match fields[2] {
                "1" | "true" | "closed" => true,
                "0" | "false" | "open" => false,
                other => return Err(parse_error(loc(), format!("bad closed flag {other:?}"))),
            };
            current = Some((fields[1].to_string(), closed, Vec::new()));
            continue;
        }
        let Some((_, _, pts)) = current.as_mut() else {
            return Err(parse_error(loc(), "coordinates before any `poly` header"));
        };
        if fields.len() != 2 {
            return Err(parse_error(loc(), "expected `<lon> <lat>`"));
        }
        let lon: f64 = fields[0].parse().map_err(|_| parse_error(loc(), format!("bad longitude {:?}", fields[0])))?;
        let lat: f64 = fields[1].parse().map_err(|_| parse_error(loc(), format!("bad latitude {:?}", fields[1])))?;
        pts.push(to_unit_sphere(lon, lat).map_err(|e| parse_error(loc(), e.to_string()))?);
    }
    flush(&mut current, out);
    Ok(())
}

/// Writes boundary loops, as closed GeoJSON LineStrings or poly text
/// depending on the extension.
pub fn write_boundary(path: &Path, dom: &CoarseDomain) -> Result<(), IoError> {
    let text = match CoastFormat::from_path(path) {
        CoastFormat::GeoJson => {
            let features: Vec<Value> = dom
                .loops
                .iter()
                .enumerate()
                .map(|(i, lp)| {
                    let mut coords: Vec<Value> = lp.iter().map(|p| {
                        let (lon, lat) = p.to_lonlat();
                        serde_json::json!([lon, lat])
                    }).collect();
                    if let Some(first) = coords.first().cloned() {
                        coords.push(first);
                    }
                    serde_json::json!({
                        "type": "Feature",
                        "properties": { "name": format!("loop{i}") },
                        "geometry": { "type": "LineString", "coordinates": coords },
                    })
                })
                .collect();
            let doc = serde_json::json!({ "type": "FeatureCollection", "features": features });
            serde_json::to_string_pretty(&doc).expect("serializable") + "\n"
        }
        CoastFormat::PolyText => {
            let mut s = String::new();
            for (i, lp) in dom.loops.iter().enumerate() {
                writeln!(s, "poly loop{i} 1").unwrap();
                for p in lp {
                    let (lon, lat) = p.to_lonlat();
                    writeln!(s, "{lon:?} {lat:?}").unwrap();
                }
            }
            s
        }
    };
    write_file(path, &text)
}

/// Region tag of water triangles.
pub const REGION_WATER: i32 = 1;
/// Region tag of land triangles.
pub const REGION_LAND: i32 = 2;

/// Mesh prepared for output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeshOutput {
    pub vertices: Vec<UnitPoint>,
    pub triangles: Vec<[u32; 3]>,
    /// [`REGION_WATER`] or [`REGION_LAND`] per triangle.
    pub regions: Vec<i32>,
    /// Constrained edges between output triangles.
    pub boundary: Vec<[u32; 2]>,
}

impl MeshOutput {
    /// Water triangles (all triangles with `keep_land`) and the vertices
    /// they use, numbered in mesh order.
    pub fn from_mesh(mesh: &SphericalMesh, keep_land: bool) -> MeshOutput {
        let keep = |t: usize| {
            let tri = &mesh.triangles[t];
            tri.is_live() && (keep_land || tri.is_water())
        };
        let mut used = vec![false; mesh.vertices.len()];
        for t in (0..mesh.triangles.len()).filter(|&t| keep(t)) {
            for &v in &mesh.triangles[t].v {
                used[v as usize] = true;
            }
        }
        let mut map = vec![NONE; mesh.vertices.len()];
        let mut out = MeshOutput::default();
        for (v, &u) in used.iter().enumerate() {
            if u {
                map[v] = out.vertices.len() as u32;
                out.vertices.push(mesh.vertices[v]);
            }
        }
        // Water first, then land, the order in which the writers group them.
        let water = (0..mesh.triangles.len()).filter(|&t| keep(t) && mesh.triangles[t].is_water());
        let land = (0..mesh.triangles.len()).filter(|&t| keep(t) && !mesh.triangles[t].is_water());
        for t in water.chain(land) {
            let tri = &mesh.triangles[t];
            out.triangles.push(tri.v.map(|v| map[v as usize]));
            out.regions.push(if tri.is_water() { REGION_WATER } else { REGION_LAND });
            for i in 0..3 {
                let s = tri.n[i] as usize;
                if tri.is_constrained(i) && (s > t || !keep(s)) {
                    let (a, b) = tri.edge(i);
                    out.boundary.push([map[a as usize], map[b as usize]]);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Msh,
    Vtk,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<MeshFormat> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("msh") => Some(MeshFormat::Msh),
            Some("vtk") => Some(MeshFormat::Vtk),
            _ => None,
        }
    }
}

pub fn format_msh(m: &MeshOutput) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n4.1 0 8\n$EndMeshFormat\n");
    let n = m.vertices.len();
    s.push_str("$Nodes\n");
    if n == 0 {
        s.push_str("0 0 0 0\n");
    } else {
        writeln!(s, "1 {n} 1 {n}\n2 1 0 {n}").unwrap();
        for i in 1..=n {
            writeln!(s, "{i}").unwrap();
        }
        for p in &m.vertices {
            writeln!(s, "{:?} {:?} {:?}", p.x(), p.y(), p.z()).unwrap();
        }
    }
    s.push_str("$EndNodes\n");
    // One block of lines, then one block of triangles per region.
    let mut blocks: Vec<(u32, i32, u32, Vec<Vec<u32>>)> = Vec::new();
    if !m.boundary.is_empty() {
        blocks.push((1, 1, 1, m.boundary.iter().map(|e| e.to_vec()).collect()));
    }
    for region in [REGION_WATER, REGION_LAND] {
        let tris: Vec<Vec<u32>> = m
            .triangles
            .iter()
            .zip(&m.regions)
            .filter(|(_, &r)| r == region)
            .map(|(t, _)| t.to_vec())
            .collect();
        if !tris.is_empty() {
            blocks.push((2, region, 2, tris));
        }
    }
    let total: usize = blocks.iter().map(|b| b.3.len()).sum();
    s.push_str("$Elements\n");
    writeln!(s, "{} {total} {} {total}", blocks.len(), if total > 0 { 1 } else { 0 }).unwrap();
    let mut tag = 1usize;
    for (dim, entity, kind, elems) in &blocks {
        writeln!(s, "{dim} {entity} {kind} {}", elems.len()).unwrap();
        for e in elems {
            write!(s, "{tag}").unwrap();
            for v in e {
                write!(s, " {}", v + 1).unwrap();
            }
            s.push('\n');
            tag += 1;
        }
    }
    s.push_str("$EndElements\n");
    s
}

pub fn format_vtk(m: &MeshOutput) -> String {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nspheremesh\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(s, "POINTS {} double", m.vertices.len()).unwrap();
    for p in &m.vertices {
        writeln!(s, "{:?} {:?} {:?}", p.x(), p.y(), p.z()).unwrap();
    }
    let cells = m.triangles.len() + m.boundary.len();
    writeln!(s, "CELLS {cells} {}", 4 * m.triangles.len() + 3 * m.boundary.len()).unwrap();
    for t in &m.triangles {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    for e in &m.boundary {
        writeln!(s, "2 {} {}", e[0], e[1]).unwrap();
    }
    writeln!(s, "CELL_TYPES {cells}").unwrap();
    for _ in &m.triangles {
        s.push_str("5\n");
    }
    for _ in &m.boundary {
        s.push_str("3\n");
    }
    writeln!(s, "CELL_DATA {cells}\nSCALARS region int 1\nLOOKUP_TABLE default").unwrap();
    for r in &m.regions {
        writeln!(s, "{r}").unwrap();
    }
    for _ in &m.boundary {
        s.push_str("0\n");
    }
    writeln!(s, "POINT_DATA {}\nSCALARS lonlat double 2\nLOOKUP_TABLE default", m.vertices.len()).unwrap();
    for p in &m.vertices {
        let (lon, lat) = p.to_lonlat();
        writeln!(s, "{lon:?} {lat:?}").unwrap();
    }
    s
}

pub fn write_mesh(path: &Path, m: &MeshOutput, format: MeshFormat) -> Result<(), IoError> {
    let text = match format {
        MeshFormat::Msh => format_msh(m),
        MeshFormat::Vtk => format_vtk(m),
    };
    write_file(path, &text)
}

/// Whitespace-token reader that tracks line numbers.
struct Tokens<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    pending: std::collections::VecDeque<&'a str>,
    line: usize,
    name: &'a str,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str, name: &'a str) -> Self {
        Tokens { lines: text.lines().enumerate().peekable(), pending: Default::default(), line: 0, name }
    }

    fn err(&self, msg: impl Into<String>) -> IoError {
        parse_error(format!("{}:{}", self.name, self.line), msg)
    }

    fn next(&mut self) -> Result<&'a str, IoError> {
        while self.pending.is_empty() {
            let (n, l) = self.lines.next().ok_or_else(|| self.err("unexpected end of file"))?;
            self.line = n + 1;
            self.pending.extend(l.split_whitespace());
        }
        Ok(self.pending.pop_front().unwrap())
    }

    fn parse<T: std::str::FromStr>(&mut self) -> Result<T, IoError> {
        let tok = self.next()?;
        tok.parse().map_err(|_| self.err(format!("unexpected token {tok:?}")))
    }

    fn expect(&mut self, word: &str) -> Result<(), IoError> {
        let tok = self.next()?;
        if tok == word {
            Ok(())
        } else {
            Err(self.err(format!("expected {word}, found {tok:?}")))
        }
    }

    fn at_end(&mut self) -> bool {
        while self.pending.is_empty() {
            match self.lines.next() {
                Some((n, l)) => {
                    self.line = n + 1;
                    self.pending.extend(l.split_whitespace());
                }
                None => return true,
            }
        }
        false
    }
}

fn unit_point(t: &Tokens<'_>, x: f64, y: f64, z: f64) -> Result<UnitPoint, IoError> {
    UnitPoint::new(x, y, z).map_err(|e| t.err(e.to_string()))
}

pub fn parse_msh(text: &str, name: &str) -> Result<MeshOutput, IoError> {
    let mut t = Tokens::new(text, name);
    let mut out = MeshOutput::default();
    let mut node_index = std::collections::HashMap::new();
    while !t.at_end() {
        let section = t.next()?;
        match section {
            "$MeshFormat" => {
                let version = t.next()?;
                if !version.starts_with("4.") {
                    return Err(t.err(format!("unsupported MSH version {version}")));
                }
                let _: u32 = t.parse()?;
                let _: u32 = t.parse()?;
                t.expect("$EndMeshFormat")?;
            }
            "$Nodes" => {
                let blocks: usize = t.parse()?;
                let _total: usize = t.parse()?;
                let _: usize = t.parse()?;
                let _: usize = t.parse()?;
                for _ in 0..blocks {
                    let _: i32 = t.parse()?;
                    let _: i32 = t.parse()?;
                    let parametric: i32 = t.parse()?;
                    let count: usize = t.parse()?;
                    if parametric != 0 {
                        return Err(t.err("parametric nodes are not supported"));
                    }
                    let tags: Vec<usize> = (0..count).map(|_| t.parse()).collect::<Result<_, _>>()?;
                    for tag in tags {
                        let (x, y, z) = (t.parse()?, t.parse()?, t.parse()?);
                        node_index.insert(tag, out.vertices.len() as u32);
                        out.vertices.push(unit_point(&t, x, y, z)?);
                    }
                }
                t.expect("$EndNodes")?;
            }
            "$Elements" => {
                let blocks: usize = t.parse()?;
                for _ in 0..3 {
                    let _: usize = t.parse()?;
                }
                for _ in 0..blocks {
                    let _dim: i32 = t.parse()?;
                    let entity: i32 = t.parse()?;
                    let kind: u32 = t.parse()?;
                    let count: usize = t.parse()?;
                    let nodes = match kind {
                        1 => 2,
                        2 => 3,
                        15 => 1,
                        other => return Err(t.err(format!("unsupported element type {other}"))),
                    };
                    for _ in 0..count {
                        let _: usize = t.parse()?;
                        let mut v = [0u32; 3];
                        for slot in v.iter_mut().take(nodes) {
                            let tag: usize = t.parse()?;
                            *slot = *node_index.get(&tag).ok_or_else(|| t.err(format!("unknown node {tag}")))?;
                        }
                        match kind {
                            1 => out.boundary.push([v[0], v[1]]),
                            2 => {
                                out.triangles.push(v);
                                out.regions.push(entity);
                            }
                            _ => {}
                        }
                    }
                }
                t.expect("$EndElements")?;
            }
            other if other.starts_with('$') => {
                let end = format!("$End{}", &other[1..]);
                while t.next()? != end {}
            }
            other => return Err(t.err(format!("unexpected token {other:?}"))),
        }
    }
    Ok(out)
}

pub fn parse_vtk(text: &str, name: &str) -> Result<MeshOutput, IoError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if !header.starts_with("# vtk DataFile") {
        return Err(parse_error(format!("{name}:1"), "not a legacy VTK file"));
    }
    lines.next();
    let rest: String = lines.collect::<Vec<_>>().join("\n");
    // Header lines were consumed; keep line numbers meaningful.
    let padded = format!("\n\n{rest}");
    let mut t = Tokens::new(&padded, name);
    t.expect("ASCII")?;
    t.expect("DATASET")?;
    t.expect("UNSTRUCTURED_GRID")?;
    let mut out = MeshOutput::default();
    let mut kinds = Vec::new();
    let mut cells: Vec<Vec<u32>> = Vec::new();
    while !t.at_end() {
        match t.next()? {
            "POINTS" => {
                let n: usize = t.parse()?;
                t.next()?;
                for _ in 0..n {
                    let (x, y, z) = (t.parse()?, t.parse()?, t.parse()?);
                    out.vertices.push(unit_point(&t, x, y, z)?);
                }
            }
            "CELLS" => {
                let n: usize = t.parse()?;
                let _: usize = t.parse()?;
                for _ in 0..n {
                    let k: usize = t.parse()?;
                    cells.push((0..k).map(|_| t.parse()).collect::<Result<_, _>>()?);
                }
            }
            "CELL_TYPES" => {
                let n: usize = t.parse()?;
                kinds = (0..n).map(|_| t.parse::<u32>()).collect::<Result<_, _>>()?;
            }
            "CELL_DATA" => {
                let n: usize = t.parse()?;
                t.expect("SCALARS")?;
                let field = t.next()?;
                t.next()?;
                t.next()?;
                t.expect("LOOKUP_TABLE")?;
                t.next()?;
                let values: Vec<i32> = (0..n).map(|_| t.parse()).collect::<Result<_, _>>()?;
                if field == "region" {
                    out.regions = values
                        .into_iter()
                        .zip(&kinds)
                        .filter(|(_, &k)| k == 5)
                        .map(|(v, _)| v)
                        .collect();
                }
            }
            "POINT_DATA" => {
                let n: usize = t.parse()?;
                t.expect("SCALARS")?;
                t.next()?;
                t.next()?;
                let comps: usize = t.parse()?;
                t.expect("LOOKUP_TABLE")?;
                t.next()?;
                for _ in 0..n * comps {
                    t.next()?;
                }
            }
            other => return Err(t.err(format!("unexpected token {other:?}"))),
        }
    }
    if kinds.len() != cells.len() {
        return Err(t.err("CELLS and CELL_TYPES disagree"));
    }
    for (c, k) in cells.into_iter().zip(kinds) {
        match (k, c.len()) {
            (5, 3) => out.triangles.push([c[0], c[1], c[2]]),
            (3, 2) => out.boundary.push([c[0], c[1]]),
            _ => return Err(t.err(format!("unsupported cell type {k}"))),
        }
    }
    if out.regions.len() != out.triangles.len() {
        out.regions = vec![REGION_WATER; out.triangles.len()];
    }
    let n = out.vertices.len() as u32;
    if out.triangles.iter().flatten().chain(out.boundary.iter().flatten()).any(|&v| v >= n) {
        return Err(t.err("cell references a missing point"));
    }
    Ok(out)
}

pub fn read_mesh(path: &Path) -> Result<MeshOutput, IoError> {
    let text = read_file(path)?;
    let name = path.display().to_string();
    match MeshFormat::from_path(path) {
        Some(MeshFormat::Msh) => parse_msh(&text, &name),
        Some(MeshFormat::Vtk) => parse_vtk(&text, &name),
        None => Err(IoError::UnknownFormat(name)),
    }
}
