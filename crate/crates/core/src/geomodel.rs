//! Coastline coarsening: from raw polylines to a boundary that the target
//! mesh size can resolve.
//!
//! Long input segments are split so that every coastline edge is shorter
//! than `h`. All points are triangulated, and a depth-first fill from the
//! water seeds crosses only edges at least `h` long, so it can neither cross
//! the coastline nor pass through gaps narrower than the mesh size. The
//! boundary of the filled triangles, minus small islands and moved slightly
//! into the water, is the new domain boundary.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::kernel::{KernelError, SphericalMesh, NONE};
use crate::parkernel::delaunay_parallel;
use crate::predicates::{geodesic_distance, orient_origin, Sign, UnitPoint, Vec3};
use crate::sizefield::SizeField;

/// Default inset, as a fraction of the local size.
pub const DEFAULT_INSET: f64 = 0.1;

/// Number of times a colliding vertex's inset is halved before giving up.
pub const MAX_INSET_HALVINGS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("no input polylines")]
    EmptyInput,
    #[error("water seed could not be located")]
    SeedNotFound,
    #[error("the water fill is empty")]
    EmptyFill,
    #[error("no boundary loop left after island removal")]
    EmptyBoundary,
    #[error("inset boundary still self-intersects after {MAX_INSET_HALVINGS} halvings ({intersections} crossings)")]
    InsetCollision { intersections: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polyline {
    /// Indices into the shared point pool.
    pub points: Vec<u32>,
    pub closed: bool,
    pub tag: String,
}

/// Polylines over a shared point pool.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Polylines {
    pub pool: Vec<UnitPoint>,
    pub lines: Vec<Polyline>,
}

impl Polylines {
    pub fn new() -> Polylines {
        Polylines::default()
    }

    /// Adds a polyline, dropping repeated consecutive points and, for closed
    /// lines, a last point equal to the first. Lines left with fewer than two
    /// points (three when closed) are ignored.
    pub fn push(&mut self, points: &[UnitPoint], closed: bool, tag: impl Into<String>) {
        let mut pts: Vec<UnitPoint> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last() != Some(p) {
                pts.push(*p);
            }
        }
        if closed && pts.len() > 1 && pts.first() == pts.last() {
            pts.pop();
        }
        if pts.len() < if closed { 3 } else { 2 } {
            return;
        }
        let base = self.pool.len() as u32;
        self.pool.extend_from_slice(&pts);
        self.lines.push(Polyline { points: (base..base + pts.len() as u32).collect(), closed, tag: tag.into() });
    }

    pub fn line_points(&self, i: usize) -> Vec<UnitPoint> {
        self.lines[i].points.iter().map(|&k| self.pool[k as usize]).collect()
    }

    /// All segments as point pairs.
    pub fn segments(&self) -> impl Iterator<Item = (UnitPoint, UnitPoint)> + '_ {
        self.lines.iter().flat_map(move |l| {
            let n = l.points.len();
            let m = if l.closed { n } else { n - 1 };
            (0..m).map(move |i| (self.pool[l.points[i] as usize], self.pool[l.points[(i + 1) % n] as usize]))
        })
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

/// Splits every segment whose length is not below `h` at its midpoint into
/// equal great-circle pieces, recursively, until all pieces are shorter.
pub fn refine_input_edges(lines: &Polylines, h: &SizeField) -> Polylines {
    let mut out = Polylines { pool: lines.pool.clone(), lines: Vec::with_capacity(lines.lines.len()) };
    for line in &lines.lines {
        let n = line.points.len();
        let m = if line.closed { n } else { n - 1 };
        let mut ids = Vec::with_capacity(n);
        for i in 0..m {
            let a = line.points[i];
            let b = line.points[(i + 1) % n];
            ids.push(a);
            let (pa, pb) = (lines.pool[a as usize], lines.pool[b as usize]);
            split_arc(&pa, &pb, h, &mut |p| {
                ids.push(out.pool.len() as u32);
                out.pool.push(p);
            });
        }
        if !line.closed {
            ids.push(line.points[n - 1]);
        }
        out.lines.push(Polyline { points: ids, closed: line.closed, tag: line.tag.clone() });
    }
    out
}

/// Emits the interior points of `a -> b` so that every piece is shorter
/// than `h` at its midpoint.
fn split_arc(a: &UnitPoint, b: &UnitPoint, h: &SizeField, emit: &mut dyn FnMut(UnitPoint)) {
    let len = geodesic_distance(a, b);
    let hm = h.eval(&a.slerp(b, 0.5));
    if len < hm {
        return;
    }
    let k = (len / hm).floor() as usize + 1;
    let pts: Vec<UnitPoint> = (0..=k).map(|j| if j == k { *b } else { a.slerp(b, j as f64 / k as f64) }).collect();
    for j in 0..k {
        if j > 0 {
            emit(pts[j]);
        }
        split_arc(&pts[j], &pts[j + 1], h, emit);
    }
}

/// Whether the fill may cross the edge `(a, b)`.
fn crossable(a: &UnitPoint, b: &UnitPoint, h: &SizeField) -> bool {
    geodesic_distance(a, b) >= h.eval(&a.slerp(b, 0.5))
}

/// Triangles reachable from the seeds without crossing an edge shorter than
/// `h` at its midpoint. Fills from several seeds are merged.
pub fn flood_fill_water(mesh: &SphericalMesh, seeds: &[UnitPoint], h: &SizeField) -> Result<Vec<bool>, GeoError> {
    let mut fill = vec![false; mesh.triangles.len()];
    let start = mesh.first_live().ok_or(GeoError::SeedNotFound)?;
    let mut stack = Vec::new();
    for seed in seeds {
        let loc = mesh.locate(start, seed).map_err(|_| GeoError::SeedNotFound)?;
        if fill[loc.triangle as usize] {
            continue;
        }
        fill[loc.triangle as usize] = true;
        stack.push(loc.triangle);
        while let Some(t) = stack.pop() {
            let tri = mesh.triangles[t as usize];
            for i in 0..3 {
                let s = tri.n[i];
                if s == NONE || fill[s as usize] {
                    continue;
                }
                let (a, b) = tri.edge(i);
                if crossable(mesh.point(a), mesh.point(b), h) {
                    fill[s as usize] = true;
                    stack.push(s);
                }
            }
        }
    }
    Ok(fill)
}

/// Boundary loops of a triangle set, as mesh vertex sequences. Each edge
/// `(l[i], l[i+1])` is directed as in the filled triangle it bounds.
pub fn fill_boundary_loops(mesh: &SphericalMesh, fill: &[bool]) -> Vec<Vec<u32>> {
    let on_boundary = |t: u32, i: usize| {
        let s = mesh.triangles[t as usize].n[i];
        fill[t as usize] && (s == NONE || !fill[s as usize])
    };
    let mut seen: BTreeSet<(u32, usize)> = BTreeSet::new();
    let mut loops = Vec::new();
    for t in 0..mesh.triangles.len() as u32 {
        if !mesh.triangles[t as usize].is_live() {
            continue;
        }
        for i in 0..3 {
            if !on_boundary(t, i) || seen.contains(&(t, i)) {
                continue;
            }
            let mut lp = Vec::new();
            let (mut ct, mut ci) = (t, i);
            while seen.insert((ct, ci)) {
                let (a, b) = mesh.triangles[ct as usize].edge(ci);
                lp.push(a);
                // Turn around `b` through filled triangles to the next
                // boundary edge leaving `b`.
                let mut u = ct;
                loop {
                    let tri = &mesh.triangles[u as usize];
                    let k = tri.index_of(b).unwrap();
                    // Edge (b, next) is opposite the vertex preceding b.
                    let e = (k + 2) % 3;
                    if on_boundary(u, e) {
                        (ct, ci) = (u, e);
                        break;
                    }
                    u = tri.n[e];
                }
                debug_assert_eq!(mesh.triangles[ct as usize].edge(ci).0, b);
            }
            loops.push(lp);
        }
    }
    loops
}

/// Boundary of the water region, oriented so that each edge `(a, b)` has
/// the water on the side of `-(a x b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseDomain {
    pub loops: Vec<Vec<UnitPoint>>,
    pub seeds: Vec<UnitPoint>,
}

impl CoarseDomain {
    pub fn point_count(&self) -> usize {
        self.loops.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (UnitPoint, UnitPoint)> + '_ {
        self.loops.iter().flat_map(|l| (0..l.len()).map(move |i| (l[i], l[(i + 1) % l.len()])))
    }
}

/// Largest geodesic distance between two points of the loop, or `limit`
/// as soon as some pair reaches it.
fn diameter_capped(lp: &[UnitPoint], limit: f64) -> f64 {
    let perimeter: f64 = (0..lp.len()).map(|i| geodesic_distance(&lp[i], &lp[(i + 1) % lp.len()])).sum();
    if perimeter / 2.0 < limit {
        // Any two points are joined by half of the loop.
        let mut d: f64 = 0.0;
        for i in 0..lp.len() {
            for j in i + 1..lp.len() {
                d = d.max(geodesic_distance(&lp[i], &lp[j]));
            }
        }
        return d;
    }
    let mut d: f64 = 0.0;
    for i in 0..lp.len() {
        for j in i + 1..lp.len() {
            d = d.max(geodesic_distance(&lp[i], &lp[j]));
            if d >= limit {
                return limit;
            }
        }
    }
    d
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractReport {
    pub loops: usize,
    pub islands_removed: usize,
}

/// Boundary loops of the fill, dropping loops whose diameter is below the
/// smallest size along them.
pub fn extract_coarse_boundary(
    mesh: &SphericalMesh,
    fill: &[bool],
    seeds: &[UnitPoint],
    h: &SizeField,
) -> Result<(CoarseDomain, ExtractReport), GeoError> {
    if !fill.iter().any(|&f| f) {
        return Err(GeoError::EmptyFill);
    }
    let raw = fill_boundary_loops(mesh, fill);
    let mut report = ExtractReport { loops: raw.len(), islands_removed: 0 };
    let mut loops = Vec::with_capacity(raw.len());
    for lp in raw {
        let pts: Vec<UnitPoint> = lp.iter().map(|&v| *mesh.point(v)).collect();
        let size = pts.iter().map(|p| h.eval(p)).fold(f64::INFINITY, f64::min);
        if diameter_capped(&pts, size) < size {
            report.islands_removed += 1;
        } else {
            loops.push(pts);
        }
    }
    if loops.is_empty() && report.loops > 0 {
        return Err(GeoError::EmptyBoundary);
    }
    Ok((CoarseDomain { loops, seeds: seeds.to_vec() }, report))
}

/// Crossing test for two great-circle arcs, touching included.
pub fn arcs_intersect(a: &UnitPoint, b: &UnitPoint, c: &UnitPoint, d: &UnitPoint) -> bool {
    if (a.vec() + b.vec()).dot(c.vec() + d.vec()) <= 0.0 {
        return false;
    }
    let s1 = orient_origin(a, b, c);
    let s2 = orient_origin(a, b, d);
    let s3 = orient_origin(c, d, a);
    let s4 = orient_origin(c, d, b);
    if s1 == Sign::Zero && s2 == Sign::Zero {
        // Same great circle: overlap of the arcs.
        let dir = b.vec() - a.vec();
        let (ta, tb) = (0.0, dir.dot(dir));
        let (tc, td) = (dir.dot(c.vec() - a.vec()), dir.dot(d.vec() - a.vec()));
        return tc.max(td) >= ta && tc.min(td) <= tb;
    }
    s1 != s2 && s3 != s4
}

/// Pairs of intersecting edges among the loops, as `(loop, edge)` indices,
/// edge `i` joining points `i` and `i + 1`. Edges sharing an endpoint
/// within a loop are not tested against each other.
pub fn find_intersections(loops: &[Vec<UnitPoint>]) -> Vec<((usize, usize), (usize, usize))> {
    let segs: Vec<(usize, usize, UnitPoint, UnitPoint)> = loops
        .iter()
        .enumerate()
        .flat_map(|(l, lp)| (0..lp.len()).map(move |i| (l, i, lp[i], lp[(i + 1) % lp.len()])))
        .collect();
    if segs.is_empty() {
        return Vec::new();
    }
    let mean = segs.iter().map(|s| (s.3.vec() - s.2.vec()).norm()).sum::<f64>() / segs.len() as f64;
    let cell = (2.0 * mean).max(1e-9);
    let key = |x: f64| (x / cell).floor() as i64;
    let mut grid: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
    for (k, s) in segs.iter().enumerate() {
        let (p, q) = (s.2.coords(), s.3.coords());
        let len = (s.3.vec() - s.2.vec()).norm();
        // Sagitta of the arc over its chord.
        let pad = len * len / 4.0 + 1e-12;
        let lo: Vec<i64> = (0..3).map(|i| key(p[i].min(q[i]) - pad)).collect();
        let hi: Vec<i64> = (0..3).map(|i| key(p[i].max(q[i]) + pad)).collect();
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    grid.entry((x, y, z)).or_default().push(k as u32);
                }
            }
        }
    }
    let adjacent = |a: &(usize, usize, UnitPoint, UnitPoint), b: &(usize, usize, UnitPoint, UnitPoint)| {
        if a.0 != b.0 {
            return false;
        }
        let n = loops[a.0].len();
        a.1 == b.1 || (a.1 + 1) % n == b.1 || (b.1 + 1) % n == a.1
    };
    let mut found = BTreeSet::new();
    for bucket in grid.values() {
        for (x, &i) in bucket.iter().enumerate() {
            for &j in &bucket[x + 1..] {
                let (i, j) = (i.min(j) as usize, i.max(j) as usize);
                let (a, b) = (&segs[i], &segs[j]);
                if adjacent(a, b) || found.contains(&((a.0, a.1), (b.0, b.1))) {
                    continue;
                }
                if arcs_intersect(&a.2, &a.3, &b.2, &b.3) {
                    found.insert(((a.0, a.1), (b.0, b.1)));
                }
            }
        }
    }
    found.into_iter().collect()
}

/// Unit normal of the great circle through `a -> b`, on the water side.
fn inward_normal(a: &UnitPoint, b: &UnitPoint) -> Vec3 {
    -(a.vec().cross(b.vec())).normalized().unwrap_or(Vec3::ZERO)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InsetReport {
    /// Vertices whose shift had to be reduced.
    pub reduced: usize,
    pub halvings: usize,
}

/// Moves every boundary vertex by `fraction * h` into the water, along the
/// bisector of its two edge normals. Vertices of edges that end up crossing
/// have their shift halved, up to [`MAX_INSET_HALVINGS`] times.
pub fn inset_boundary(dom: &CoarseDomain, h: &SizeField, fraction: f64) -> Result<(CoarseDomain, InsetReport), GeoError> {
    let mut report = InsetReport::default();
    if fraction == 0.0 {
        return Ok((dom.clone(), report));
    }
    let shifts: Vec<Vec<(Vec3, f64)>> = dom
        .loops
        .iter()
        .map(|lp| {
            let n = lp.len();
            (0..n)
                .map(|i| {
                    let prev = &lp[(i + n - 1) % n];
                    let next = &lp[(i + 1) % n];
                    let dir = inward_normal(prev, &lp[i]) + inward_normal(&lp[i], next);
                    (dir, fraction * h.eval(&lp[i]))
                })
                .collect()
        })
        .collect();
    let mut scale: Vec<Vec<f64>> = dom.loops.iter().map(|lp| vec![1.0; lp.len()]).collect();
    let apply = |scale: &[Vec<f64>]| -> Vec<Vec<UnitPoint>> {
        dom.loops
            .iter()
            .enumerate()
            .map(|(l, lp)| {
                lp.iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let (dir, d) = shifts[l][i];
                        p.offset(dir, d * scale[l][i]).unwrap_or(*p)
                    })
                    .collect()
            })
            .collect()
    };
    let mut loops = apply(&scale);
    for round in 0..=MAX_INSET_HALVINGS {
        let hits = find_intersections(&loops);
        if hits.is_empty() {
            report.halvings = round;
            report.reduced = scale.iter().flatten().filter(|&&s| s < 1.0).count();
            return Ok((CoarseDomain { loops, seeds: dom.seeds.clone() }, report));
        }
        if round == MAX_INSET_HALVINGS {
            return Err(GeoError::InsetCollision { intersections: hits.len() });
        }
        let mut touched = BTreeSet::new();
        for ((la, ea), (lb, eb)) in hits {
            for (l, e) in [(la, ea), (lb, eb)] {
                touched.insert((l, e));
                touched.insert((l, (e + 1) % loops[l].len()));
            }
        }
        for (l, i) in touched {
            scale[l][i] *= 0.5;
        }
        loops = apply(&scale);
    }
    unreachable!()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoarsenReport {
    pub input_points: usize,
    pub refined_points: usize,
    pub mesh_vertices: usize,
    pub fill_triangles: usize,
    pub extract: ExtractReport,
    pub inset: InsetReport,
}

/// Triangulation of all polyline points.
pub fn triangulate_polylines(lines: &Polylines, threads: usize) -> Result<SphericalMesh, GeoError> {
    if lines.is_empty() {
        return Err(GeoError::EmptyInput);
    }
    Ok(delaunay_parallel(&lines.pool, threads)?.mesh)
}

/// Runs all coarsening steps.
pub fn coarsen(
    lines: &Polylines,
    seeds: &[UnitPoint],
    h: &SizeField,
    threads: usize,
    inset_fraction: f64,
) -> Result<(CoarseDomain, CoarsenReport), GeoError> {
    let refined = refine_input_edges(lines, h);
    let mesh = triangulate_polylines(&refined, threads)?;
    let fill = flood_fill_water(&mesh, seeds, h)?;
    let (dom, extract) = extract_coarse_boundary(&mesh, &fill, seeds, h)?;
    let (dom, inset) = inset_boundary(&dom, h, inset_fraction)?;
    let report = CoarsenReport {
        input_points: lines.pool.len(),
        refined_points: refined.pool.len(),
        mesh_vertices: mesh.vertices.len(),
        fill_triangles: fill.iter().filter(|&&f| f).count(),
        extract,
        inset,
    };
    Ok((dom, report))
}
