//! Triangle-soup triangulation of the sphere and the serial Delaunay kernel.
//!
//! A triangulation of `n` points covers the whole sphere with `2n - 4`
//! spherical triangles. Each triangle stores its three vertices, positively
//! oriented (`orient3d(v0, v1, v2, origin) > 0`), and the neighbour across
//! the edge opposite each vertex. Inserting a point removes its Delaunay
//! cavity and fills the hole with the ball of triangles joining the point to
//! the cavity boundary.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use thiserror::Error;

use crate::hilbert::brio_order;
use crate::predicates::{
    chord_distance, circle_position_unchecked, orient3d, orient_origin, spherical_triangle_area,
    CirclePosition, GeometryError, Sign, UnitPoint, Vec3,
};

/// Sentinel for a missing vertex or neighbour.
pub const NONE: u32 = u32::MAX;

/// Two vertices closer than this chord length are the same vertex.
pub const COINCIDENCE_TOLERANCE: f64 = 1e-12;

/// Flag bit marking triangles of the meshed (water) region.
pub const WATER: u8 = 1 << 3;

#[inline]
pub const fn constrained_bit(edge: usize) -> u8 {
    1 << edge
}

const CONSTRAINED_MASK: u8 = 0b111;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("seed vertices are coplanar or do not enclose the sphere center")]
    DegenerateSeed,
    #[error("no valid bootstrap tetrahedron in the input")]
    DegenerateInput,
    #[error("point duplicates vertex {existing}")]
    DuplicatePoint { existing: u32 },
    #[error("point location cycled")]
    WalkStuck,
    #[error("cavity is not a topological disk star-shaped around the point")]
    DegenerateCavity,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    /// Vertex indices, positively oriented.
    pub v: [u32; 3],
    /// `n[i]` is the neighbour across the edge opposite `v[i]`.
    pub n: [u32; 3],
    /// Constrained-edge bits (`1 << i` for the edge opposite `v[i]`) and the
    /// [`WATER`] region bit.
    pub flags: u8,
}

impl Triangle {
    pub const DEAD: Triangle = Triangle { v: [NONE; 3], n: [NONE; 3], flags: 0 };

    pub fn new(v: [u32; 3]) -> Triangle {
        Triangle { v, n: [NONE; 3], flags: 0 }
    }

    #[inline]
    pub fn is_live(&self) -> bool {
        self.v[0] != NONE
    }

    /// Directed edge opposite `v[i]`, following the triangle orientation.
    #[inline]
    pub fn edge(&self, i: usize) -> (u32, u32) {
        (self.v[(i + 1) % 3], self.v[(i + 2) % 3])
    }

    #[inline]
    pub fn is_constrained(&self, i: usize) -> bool {
        self.flags & constrained_bit(i) != 0
    }

    #[inline]
    pub fn has_constraints(&self) -> bool {
        self.flags & CONSTRAINED_MASK != 0
    }

    #[inline]
    pub fn is_water(&self) -> bool {
        self.flags & WATER != 0
    }

    #[inline]
    pub fn index_of(&self, vertex: u32) -> Option<usize> {
        self.v.iter().position(|&x| x == vertex)
    }

    /// Index of the edge whose directed form is `(a, b)`.
    #[inline]
    pub fn edge_index(&self, a: u32, b: u32) -> Option<usize> {
        (0..3).find(|&i| self.edge(i) == (a, b))
    }

    /// Index of the edge shared with neighbour `t`.
    #[inline]
    pub fn neighbor_index(&self, t: u32) -> Option<usize> {
        self.n.iter().position(|&x| x == t)
    }
}

/// One edge of a cavity boundary, directed as in the removed triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub a: u32,
    pub b: u32,
    /// Triangle on the far side of the edge.
    pub outer: u32,
    pub constrained: bool,
}

/// Triangles whose circumcircle contains a point, with their boundary.
#[derive(Debug, Clone, Default)]
pub struct Cavity {
    pub triangles: Vec<u32>,
    pub boundary: Vec<BoundaryEdge>,
    /// Whether a cospherical (OnCircle) triangle was absorbed.
    pub absorbed_on_circle: bool,
}

impl Cavity {
    pub fn clear(&mut self) {
        self.triangles.clear();
        self.boundary.clear();
        self.absorbed_on_circle = false;
    }
}

/// Reusable scratch space for cavity construction.
#[derive(Debug, Default)]
pub struct CavityWorkspace {
    pub cavity: Cavity,
    stack: Vec<u32>,
    members: HashSet<u32>,
    slot_of: Vec<(u32, usize)>,
}

const LINEAR_MEMBERSHIP: usize = 24;

impl CavityWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn contains(&self, t: u32) -> bool {
        if self.cavity.triangles.len() <= LINEAR_MEMBERSHIP {
            self.cavity.triangles.contains(&t)
        } else {
            self.members.contains(&t)
        }
    }

    fn add(&mut self, t: u32) {
        self.cavity.triangles.push(t);
        let len = self.cavity.triangles.len();
        if len == LINEAR_MEMBERSHIP + 1 {
            self.members.clear();
            self.members.extend(self.cavity.triangles.iter().copied());
        } else if len > LINEAR_MEMBERSHIP + 1 {
            self.members.insert(t);
        }
    }
}

/// Counters reported by insertion routines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InsertStats {
    pub inserted: usize,
    pub duplicates: usize,
    pub rejected: usize,
    pub failed: usize,
    pub walks: usize,
    pub walk_steps: usize,
    pub walk_fallbacks: usize,
    pub strict_retries: usize,
}

impl InsertStats {
    pub fn merge(&mut self, o: &InsertStats) {
        self.inserted += o.inserted;
        self.duplicates += o.duplicates;
        self.rejected += o.rejected;
        self.failed += o.failed;
        self.walks += o.walks;
        self.walk_steps += o.walk_steps;
        self.walk_fallbacks += o.walk_fallbacks;
        self.strict_retries += o.strict_retries;
    }

    pub fn mean_walk_steps(&self) -> f64 {
        if self.walks == 0 {
            0.0
        } else {
            self.walk_steps as f64 / self.walks as f64
        }
    }
}

/// Result of point location.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Located {
    pub triangle: u32,
    pub steps: usize,
    pub fallback: bool,
}

/// Storage the ball surgery writes through.
pub(crate) trait TriangleStore {
    fn get(&self, t: u32) -> Triangle;
    fn set(&mut self, t: u32, tri: Triangle);
}

impl TriangleStore for [Triangle] {
    #[inline]
    fn get(&self, t: u32) -> Triangle {
        self[t as usize]
    }
    #[inline]
    fn set(&mut self, t: u32, tri: Triangle) {
        self[t as usize] = tri;
    }
}

/// Replaces the cavity by the ball of `p_vertex`.
///
/// Ball triangle `j` joins boundary edge `j` to the new vertex and takes the
/// slot `cavity.triangles[j]`, or one of `extra` for the last two edges.
/// Returns the slot of the first ball triangle.
pub(crate) fn apply_ball<S: TriangleStore + ?Sized>(
    store: &mut S,
    cavity: &Cavity,
    p_vertex: u32,
    extra: [u32; 2],
    slot_of: &mut Vec<(u32, usize)>,
) -> u32 {
    let k = cavity.boundary.len();
    debug_assert_eq!(k, cavity.triangles.len() + 2);
    let region = store.get(cavity.triangles[0]).flags & WATER;
    let slot = |j: usize| -> u32 {
        if j < cavity.triangles.len() {
            cavity.triangles[j]
        } else {
            extra[j - cavity.triangles.len()]
        }
    };

    slot_of.clear();
    slot_of.extend(cavity.boundary.iter().enumerate().map(|(j, e)| (e.a, j)));
    slot_of.sort_unstable();
    let lookup = |v: u32| -> usize {
        let i = slot_of.binary_search_by_key(&v, |&(a, _)| a).expect("closed boundary loop");
        slot_of[i].1
    };

    let mut ball: Vec<Triangle> = cavity
        .boundary
        .iter()
        .map(|e| Triangle {
            v: [e.a, e.b, p_vertex],
            n: [NONE, NONE, e.outer],
            flags: region | if e.constrained { constrained_bit(2) } else { 0 },
        })
        .collect();
    for j in 0..k {
        let next = lookup(cavity.boundary[j].b);
        ball[j].n[0] = slot(next);
        ball[next].n[1] = slot(j);
    }
    for (j, e) in cavity.boundary.iter().enumerate() {
        if e.outer != NONE {
            let mut outer = store.get(e.outer);
            let i = outer.edge_index(e.b, e.a).expect("outer triangle shares the edge");
            outer.n[i] = slot(j);
            store.set(e.outer, outer);
        }
    }
    for (j, tri) in ball.into_iter().enumerate() {
        store.set(slot(j), tri);
    }
    slot(0)
}

/// Read-only view of a triangulation.
#[derive(Debug, Clone, Copy)]
pub struct MeshRef<'a> {
    pub vertices: &'a [UnitPoint],
    pub triangles: &'a [Triangle],
}

impl<'a> MeshRef<'a> {
    #[inline]
    pub fn point(&self, v: u32) -> &'a UnitPoint {
        &self.vertices[v as usize]
    }

    #[inline]
    pub fn corners(&self, t: u32) -> [&'a UnitPoint; 3] {
        let tri = &self.triangles[t as usize];
        [self.point(tri.v[0]), self.point(tri.v[1]), self.point(tri.v[2])]
    }


    /// Visibility walk from `start` to a triangle containing `p`.
    pub fn walk(&self, start: u32, p: &UnitPoint) -> Result<Located, KernelError> {
        let max_steps = self.triangles.len() * 2 + 64;
        let mut t = start;
        let mut came_from = NONE;
        let mut rng: u32 = 0x9e37_79b9 ^ start;
        let mut steps = 0;
        'walk: loop {
            if steps > max_steps {
                return Err(KernelError::WalkStuck);
            }
            let tri = &self.triangles[t as usize];
            rng ^= rng << 13;
            rng ^= rng >> 17;
            rng ^= rng << 5;
            let first = (rng % 3) as usize;
            for k in 0..3 {
                let i = (first + k) % 3;
                let next = tri.n[i];
                if next == came_from {
                    continue;
                }
                let (a, b) = tri.edge(i);
                if orient_origin(self.point(a), self.point(b), p) == Sign::Negative {
                    came_from = t;
                    t = next;
                    steps += 1;
                    continue 'walk;
                }
            }
            return Ok(Located { triangle: t, steps, fallback: false });
        }
    }

    /// Whether triangle `t` contains `p` (boundary included).
    pub fn contains(&self, t: u32, p: &UnitPoint) -> bool {
        let tri = &self.triangles[t as usize];
        tri.is_live()
            && (0..3).all(|i| {
                let (a, b) = tri.edge(i);
                orient_origin(self.point(a), self.point(b), p) != Sign::Negative
            })
    }

    /// Walk with an exhaustive scan as fallback when the walk cycles.
    pub fn locate(&self, start: u32, p: &UnitPoint) -> Result<Located, KernelError> {
        let start = if (start as usize) < self.triangles.len() && self.triangles[start as usize].is_live() {
            start
        } else {
            self.first_live().ok_or(KernelError::WalkStuck)?
        };
        match self.walk(start, p) {
            Ok(l) => Ok(l),
            Err(KernelError::WalkStuck) => (0..self.triangles.len() as u32)
                .find(|&t| self.contains(t, p))
                .map(|t| Located { triangle: t, steps: self.triangles.len(), fallback: true })
                .ok_or(KernelError::WalkStuck),
            Err(e) => Err(e),
        }
    }

    pub fn first_live(&self) -> Option<u32> {
        self.triangles.iter().position(|t| t.is_live()).map(|t| t as u32)
    }

    /// Depth-first cavity growth from `seed`. Constrained edges are never
    /// crossed. OnCircle triangles join unless `strict`.
    pub fn grow_cavity(&self, seed: u32, p: &UnitPoint, strict: bool, ws: &mut CavityWorkspace) {
        ws.cavity.clear();
        ws.stack.clear();
        ws.add(seed);
        ws.stack.push(seed);
        while let Some(t) = ws.stack.pop() {
            let tri = self.triangles[t as usize];
            for i in 0..3 {
                if tri.is_constrained(i) {
                    continue;
                }
                let s = tri.n[i];
                if s == NONE || ws.contains(s) {
                    continue;
                }
                match circle_position_unchecked(self.corners(s), p) {
                    CirclePosition::Inside => {}
                    CirclePosition::OnCircle if !strict => ws.cavity.absorbed_on_circle = true,
                    _ => continue,
                }
                ws.add(s);
                ws.stack.push(s);
            }
        }
        for idx in 0..ws.cavity.triangles.len() {
            let t = ws.cavity.triangles[idx];
            let tri = self.triangles[t as usize];
            for i in 0..3 {
                let s = tri.n[i];
                if tri.is_constrained(i) || !ws.contains(s) {
                    let (a, b) = tri.edge(i);
                    ws.cavity.boundary.push(BoundaryEdge { a, b, outer: s, constrained: tri.is_constrained(i) });
                }
            }
        }
    }

    /// Checks that the cavity is a disk whose boundary is visible from `p`.
    pub fn cavity_is_valid(&self, cavity: &Cavity, p: &UnitPoint, scratch: &mut Vec<(u32, usize)>) -> bool {
        if cavity.boundary.len() != cavity.triangles.len() + 2 {
            return false;
        }
        scratch.clear();
        scratch.extend(cavity.boundary.iter().map(|e| (e.a, 0)));
        scratch.sort_unstable();
        if scratch.windows(2).any(|w| w[0].0 == w[1].0) {
            return false;
        }
        cavity
            .boundary
            .iter()
            .all(|e| orient_origin(self.point(e.a), self.point(e.b), p) == Sign::Positive)
    }

    /// Vertex of the cavity within the coincidence tolerance of `p`.
    pub fn coincident_vertex(&self, cavity: &Cavity, p: &UnitPoint) -> Option<u32> {
        cavity
            .triangles
            .iter()
            .flat_map(|&t| self.triangles[t as usize].v)
            .find(|&v| chord_distance(self.point(v), p) < COINCIDENCE_TOLERANCE)
    }

    /// Locates `p` from `hint` and builds a valid cavity for it in `ws`.
    pub fn find_cavity(
        &self,
        hint: u32,
        p: &UnitPoint,
        ws: &mut CavityWorkspace,
        stats: &mut InsertStats,
    ) -> Result<(), KernelError> {
        let loc = self.locate(hint, p)?;
        stats.walks += 1;
        stats.walk_steps += loc.steps;
        if loc.fallback {
            stats.walk_fallbacks += 1;
        }
        self.grow_cavity(loc.triangle, p, false, ws);
        if let Some(existing) = self.coincident_vertex(&ws.cavity, p) {
            return Err(KernelError::DuplicatePoint { existing });
        }
        if self.cavity_is_valid(&ws.cavity, p, &mut ws.slot_of) {
            return Ok(());
        }
        if ws.cavity.absorbed_on_circle {
            stats.strict_retries += 1;
            self.grow_cavity(loc.triangle, p, true, ws);
            if self.cavity_is_valid(&ws.cavity, p, &mut ws.slot_of) {
                return Ok(());
            }
        }
        Err(KernelError::DegenerateCavity)
    }
}

/// Triangulation of the sphere.
#[derive(Debug, Clone, Default)]
pub struct SphericalMesh {
    pub vertices: Vec<UnitPoint>,
    pub triangles: Vec<Triangle>,
}

impl SphericalMesh {
    /// Mesh of the four faces of a tetrahedron enclosing the sphere center.
    pub fn bootstrap(points: [UnitPoint; 4]) -> Result<SphericalMesh, KernelError> {
        let [p1, p2, p3, p4] = points;
        let full = orient3d(&p1, &p2, &p3, &p4);
        if full == Sign::Zero {
            return Err(KernelError::DegenerateSeed);
        }
        // The center is strictly inside iff replacing any vertex by it keeps
        // the orientation.
        let o = UnitPoint::from_raw(0.0, 0.0, 0.0);
        let replaced = [
            orient3d(&o, &p2, &p3, &p4),
            orient3d(&p1, &o, &p3, &p4),
            orient3d(&p1, &p2, &o, &p4),
            orient3d(&p1, &p2, &p3, &o),
        ];
        if replaced.iter().any(|&s| s != full) {
            return Err(KernelError::DegenerateSeed);
        }
        let mut mesh = SphericalMesh { vertices: points.to_vec(), triangles: Vec::with_capacity(4) };
        for skip in 0..4u32 {
            let mut f: Vec<u32> = (0..4).filter(|&i| i != skip).collect();
            let (a, b, c) = (&points[f[0] as usize], &points[f[1] as usize], &points[f[2] as usize]);
            if orient_origin(a, b, c) != Sign::Positive {
                f.swap(0, 1);
            }
            mesh.triangles.push(Triangle::new([f[0], f[1], f[2]]));
        }
        mesh.link_neighbors();
        Ok(mesh)
    }

    pub fn live_triangle_count(&self) -> usize {
        self.triangles.iter().filter(|t| t.is_live()).count()
    }

    #[inline]
    pub fn point(&self, v: u32) -> &UnitPoint {
        &self.vertices[v as usize]
    }

    #[inline]
    pub fn corners(&self, t: u32) -> [&UnitPoint; 3] {
        let tri = &self.triangles[t as usize];
        [self.point(tri.v[0]), self.point(tri.v[1]), self.point(tri.v[2])]
    }

    /// Rebuilds all neighbour links from the vertex triples.
    pub fn link_neighbors(&mut self) {
        let mut edges: HashMap<(u32, u32), (u32, usize)> = HashMap::with_capacity(self.triangles.len() * 3);
        for (t, tri) in self.triangles.iter().enumerate() {
            if !tri.is_live() {
                continue;
            }
            for i in 0..3 {
                edges.insert(tri.edge(i), (t as u32, i));
            }
        }
        for t in 0..self.triangles.len() {
            if !self.triangles[t].is_live() {
                continue;
            }
            for i in 0..3 {
                let (a, b) = self.triangles[t].edge(i);
                self.triangles[t].n[i] = edges.get(&(b, a)).map_or(NONE, |&(s, _)| s);
            }
        }
    }

    #[inline]
    pub fn view(&self) -> MeshRef<'_> {
        MeshRef { vertices: &self.vertices, triangles: &self.triangles }
    }

    pub fn walk(&self, start: u32, p: &UnitPoint) -> Result<Located, KernelError> {
        self.view().walk(start, p)
    }

    pub fn contains(&self, t: u32, p: &UnitPoint) -> bool {
        self.view().contains(t, p)
    }

    pub fn locate(&self, start: u32, p: &UnitPoint) -> Result<Located, KernelError> {
        self.view().locate(start, p)
    }

    pub fn first_live(&self) -> Option<u32> {
        self.view().first_live()
    }

    pub fn find_cavity(
        &self,
        hint: u32,
        p: &UnitPoint,
        ws: &mut CavityWorkspace,
        stats: &mut InsertStats,
    ) -> Result<(), KernelError> {
        self.view().find_cavity(hint, p, ws, stats)
    }


    /// Inserts `p`, returning its vertex index and a new triangle to use as
    /// the next walk hint. The mesh is unchanged on error.
    pub fn insert_point(
        &mut self,
        p: UnitPoint,
        hint: u32,
        ws: &mut CavityWorkspace,
        stats: &mut InsertStats,
    ) -> Result<(u32, u32), KernelError> {
        self.find_cavity(hint, &p, ws, stats)?;
        let vertex = self.vertices.len() as u32;
        self.vertices.push(p);
        let base = self.triangles.len() as u32;
        self.triangles.push(Triangle::DEAD);
        self.triangles.push(Triangle::DEAD);
        let mut slot_of = std::mem::take(&mut ws.slot_of);
        let first = apply_ball(self.triangles.as_mut_slice(), &ws.cavity, vertex, [base, base + 1], &mut slot_of);
        ws.slot_of = slot_of;
        stats.inserted += 1;
        Ok((vertex, first))
    }

    /// Drops dead triangle slots and unreferenced vertices. Returns the new
    /// index of every old vertex (`NONE` when dropped).
    pub fn compact(&mut self) -> Vec<u32> {
        let mut used = vec![false; self.vertices.len()];
        for t in self.triangles.iter().filter(|t| t.is_live()) {
            for &v in &t.v {
                used[v as usize] = true;
            }
        }
        let mut vmap = vec![NONE; self.vertices.len()];
        let mut next = 0u32;
        for (i, u) in used.iter().enumerate() {
            if *u {
                vmap[i] = next;
                next += 1;
            }
        }
        let mut tmap = vec![NONE; self.triangles.len()];
        let mut tnext = 0u32;
        for (i, t) in self.triangles.iter().enumerate() {
            if t.is_live() {
                tmap[i] = tnext;
                tnext += 1;
            }
        }
        let vertices = self
            .vertices
            .iter()
            .zip(&used)
            .filter(|(_, &u)| u)
            .map(|(p, _)| *p)
            .collect();
        let triangles = self
            .triangles
            .iter()
            .filter(|t| t.is_live())
            .map(|t| Triangle {
                v: t.v.map(|v| vmap[v as usize]),
                n: t.n.map(|n| if n == NONE { NONE } else { tmap[n as usize] }),
                flags: t.flags,
            })
            .collect();
        self.vertices = vertices;
        self.triangles = triangles;
        vmap
    }

    /// Sum of spherical triangle areas.
    pub fn total_area(&self) -> f64 {
        self.triangles
            .par_iter()
            .filter(|t| t.is_live())
            .map(|t| spherical_triangle_area(self.point(t.v[0]), self.point(t.v[1]), self.point(t.v[2])))
            .sum()
    }

    /// Neighbour symmetry, positive orientation and distinct vertices.
    pub fn check_structure(&self) -> Result<(), String> {
        for (t, tri) in self.triangles.iter().enumerate() {
            if !tri.is_live() {
                continue;
            }
            if tri.v[0] == tri.v[1] || tri.v[1] == tri.v[2] || tri.v[0] == tri.v[2] {
                return Err(format!("triangle {t} repeats a vertex"));
            }
            let [a, b, c] = self.corners(t as u32);
            if orient_origin(a, b, c) != Sign::Positive {
                return Err(format!("triangle {t} is not positively oriented"));
            }
            for i in 0..3 {
                let s = tri.n[i];
                if s == NONE || !self.triangles[s as usize].is_live() {
                    return Err(format!("triangle {t} has no neighbour across edge {i}"));
                }
                let (a, b) = tri.edge(i);
                let other = &self.triangles[s as usize];
                match other.edge_index(b, a) {
                    Some(j) if other.n[j] == t as u32 => {
                        if other.is_constrained(j) != tri.is_constrained(i) {
                            return Err(format!("constraint flag mismatch between {t} and {s}"));
                        }
                    }
                    _ => return Err(format!("neighbour link {t} -> {s} is not symmetric")),
                }
            }
        }
        Ok(())
    }

    /// Number of (triangle, vertex) pairs with the vertex strictly inside
    /// the circumcircle. Quadratic: for small meshes.
    pub fn delaunay_violations_exhaustive(&self) -> usize {
        let used = self.used_vertices();
        (0..self.triangles.len() as u32)
            .into_par_iter()
            .filter(|&t| self.triangles[t as usize].is_live())
            .map(|t| {
                let c = self.corners(t);
                used.iter()
                    .filter(|&&v| circle_position_unchecked(c, self.point(v)) == CirclePosition::Inside)
                    .count()
            })
            .sum()
    }

    /// Number of non-constrained edges whose opposite vertex lies strictly
    /// inside the neighbouring circumcircle.
    pub fn local_delaunay_violations(&self) -> usize {
        (0..self.triangles.len() as u32)
            .into_par_iter()
            .filter(|&t| self.triangles[t as usize].is_live())
            .map(|t| {
                let tri = &self.triangles[t as usize];
                (0..3)
                    .filter(|&i| !tri.is_constrained(i) && tri.n[i] != NONE && tri.n[i] > t)
                    .filter(|&i| {
                        let s = &self.triangles[tri.n[i] as usize];
                        let (a, b) = tri.edge(i);
                        let opposite = s.v.iter().copied().find(|&v| v != a && v != b).unwrap();
                        circle_position_unchecked(self.corners(t), self.point(opposite))
                            == CirclePosition::Inside
                    })
                    .count()
            })
            .sum()
    }

    fn used_vertices(&self) -> Vec<u32> {
        let mut used = vec![false; self.vertices.len()];
        for t in self.triangles.iter().filter(|t| t.is_live()) {
            for &v in &t.v {
                used[v as usize] = true;
            }
        }
        (0..self.vertices.len() as u32).filter(|&v| used[v as usize]).collect()
    }

    /// Triangles as vertex triples rotated to start at their smallest index,
    /// sorted. Two meshes with equal results have the same triangles.
    pub fn canonical_triangles(&self) -> Vec<[u32; 3]> {
        let mut out: Vec<[u32; 3]> = self
            .triangles
            .iter()
            .filter(|t| t.is_live())
            .map(|t| {
                let m = (0..3).min_by_key(|&i| t.v[i]).unwrap();
                [t.v[m], t.v[(m + 1) % 3], t.v[(m + 2) % 3]]
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// For each vertex, one live triangle incident to it (`NONE` if none).
    pub fn vertex_triangles(&self) -> Vec<u32> {
        let mut out = vec![NONE; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.is_live() {
                for &v in &tri.v {
                    out[v as usize] = t as u32;
                }
            }
        }
        out
    }

    /// Triangles around vertex `v`, starting from incident triangle `t`,
    /// in rotational order.
    pub fn star(&self, v: u32, t: u32) -> Vec<u32> {
        let mut out = Vec::with_capacity(8);
        let mut cur = t;
        loop {
            out.push(cur);
            let tri = &self.triangles[cur as usize];
            let i = tri.index_of(v).expect("triangle is incident to vertex");
            // The edge (v, next) is opposite the vertex preceding v.
            cur = tri.n[(i + 2) % 3];
            if cur == t || cur == NONE || out.len() > self.triangles.len() {
                break;
            }
        }
        out
    }
}

/// Edge flips and constraint bookkeeping.
impl SphericalMesh {
    /// Whether flipping edge `i` of `t` yields two positively oriented
    /// triangles.
    pub fn can_flip(&self, t: u32, i: usize) -> bool {
        let tri = &self.triangles[t as usize];
        let s = tri.n[i];
        if s == NONE {
            return false;
        }
        let (a, b) = tri.edge(i);
        let c = tri.v[i];
        let other = &self.triangles[s as usize];
        let Some(j) = other.edge_index(b, a) else { return false };
        let d = other.v[j];
        let (pa, pb, pc, pd) = (self.point(a), self.point(b), self.point(c), self.point(d));
        c != d && orient_origin(pc, pa, pd) == Sign::Positive && orient_origin(pd, pb, pc) == Sign::Positive
    }

    /// Replaces the diagonal shared by `t` and its neighbour across edge `i`
    /// with the other diagonal of their quadrilateral. The two slots are
    /// reused; returns them, the new diagonal being edge 1 of the first and
    /// edge 2 of the second. Constraint bits travel with their edges.
    pub fn flip(&mut self, t: u32, i: usize) -> Option<(u32, u32)> {
        if !self.can_flip(t, i) {
            return None;
        }
        let old_t = self.triangles[t as usize];
        let s = old_t.n[i];
        let old_s = self.triangles[s as usize];
        let (a, b) = old_t.edge(i);
        let c = old_t.v[i];
        let j = old_s.edge_index(b, a).unwrap();
        let d = old_s.v[j];
        let ta = old_t.index_of(a).unwrap();
        let tb = old_t.index_of(b).unwrap();
        let sa = old_s.index_of(a).unwrap();
        let sb = old_s.index_of(b).unwrap();
        let bit = |tri: &Triangle, k: usize, to: usize| -> u8 {
            if tri.is_constrained(k) {
                constrained_bit(to)
            } else {
                0
            }
        };
        let region = old_t.flags & old_s.flags & WATER;
        // t' = [c, a, d]: (a, d) from s opposite b, (c, a) from t opposite b.
        let new_t = Triangle {
            v: [c, a, d],
            n: [old_s.n[sb], s, old_t.n[tb]],
            flags: region | bit(&old_s, sb, 0) | bit(&old_t, tb, 2),
        };
        // s' = [d, b, c]: (b, c) from t opposite a, (d, b) from s opposite a.
        let new_s = Triangle {
            v: [d, b, c],
            n: [old_t.n[ta], t, old_s.n[sa]],
            flags: region | bit(&old_t, ta, 0) | bit(&old_s, sa, 2),
        };
        let relink = |mesh: &mut SphericalMesh, outer: u32, from: u32, to: u32| {
            if outer != NONE {
                let o = &mut mesh.triangles[outer as usize];
                if let Some(k) = o.neighbor_index(from) {
                    o.n[k] = to;
                }
            }
        };
        relink(self, old_s.n[sb], s, t);
        relink(self, old_t.n[ta], t, s);
        self.triangles[t as usize] = new_t;
        self.triangles[s as usize] = new_s;
        Some((t, s))
    }

    /// Triangle and edge index of the directed edge `(a, b)`, searching the
    /// star of `a` from its incident triangle `start`.
    pub fn find_edge(&self, a: u32, b: u32, start: u32) -> Option<(u32, usize)> {
        self.star(a, start).into_iter().find_map(|t| self.triangles[t as usize].edge_index(a, b).map(|i| (t, i)))
    }

    /// Marks or clears the edge on both of its sides.
    pub fn set_constrained(&mut self, t: u32, i: usize, on: bool) {
        let (a, b) = self.triangles[t as usize].edge(i);
        let s = self.triangles[t as usize].n[i];
        let other = if s == NONE { None } else { self.triangles[s as usize].edge_index(b, a) };
        let mut apply = |t: u32, i: usize| {
            let tri = &mut self.triangles[t as usize];
            if on {
                tri.flags |= constrained_bit(i);
            } else {
                tri.flags &= !constrained_bit(i);
            }
        };
        apply(t, i);
        if let Some(j) = other {
            apply(s, j);
        }
    }

    /// Lawson flips: restores local Delaunay on unconstrained edges reachable
    /// from the given triangles. Returns the number of flips.
    pub fn lawson_flips<I: IntoIterator<Item = u32>>(&mut self, triangles: I) -> usize {
        let mut stack: Vec<(u32, usize)> = triangles
            .into_iter()
            .filter(|&t| self.triangles[t as usize].is_live())
            .flat_map(|t| (0..3).map(move |i| (t, i)))
            .collect();
        let mut flips = 0;
        while let Some((t, i)) = stack.pop() {
            let tri = self.triangles[t as usize];
            if !tri.is_live() || tri.is_constrained(i) || tri.n[i] == NONE {
                continue;
            }
            let s = &self.triangles[tri.n[i] as usize];
            let (a, b) = tri.edge(i);
            let Some(j) = s.edge_index(b, a) else { continue };
            let d = s.v[j];
            if circle_position_unchecked(self.corners(t), self.point(d)) != CirclePosition::Inside {
                continue;
            }
            if let Some((t1, t2)) = self.flip(t, i) {
                flips += 1;
                stack.extend([(t1, 0), (t1, 2), (t2, 0), (t2, 2)]);
            }
        }
        flips
    }
}

/// Delaunay triangulation built from an input point list.
#[derive(Debug, Clone)]
pub struct Triangulation {
    pub mesh: SphericalMesh,
    /// Mesh vertex of every input point (duplicates map to the kept vertex).
    pub vertex_of: Vec<u32>,
    /// Number of auxiliary vertices added to enclose the sphere center.
    pub auxiliary: usize,
    pub stats: InsertStats,
}

/// How the first tetrahedron of a triangulation is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Seed {
    /// Four input points enclosing the center.
    Input([usize; 4]),
    /// Input points lie in a cap; four far-away helper vertices are used.
    Auxiliary([UnitPoint; 4]),
}

fn tetra_encloses_center(p: [&UnitPoint; 4]) -> bool {
    let full = orient3d(p[0], p[1], p[2], p[3]);
    if full == Sign::Zero {
        return false;
    }
    let o = UnitPoint::from_raw(0.0, 0.0, 0.0);
    orient3d(&o, p[1], p[2], p[3]) == full
        && orient3d(p[0], &o, p[2], p[3]) == full
        && orient3d(p[0], p[1], &o, p[3]) == full
        && orient3d(p[0], p[1], p[2], &o) == full
}

/// Picks the bootstrap tetrahedron for `points`.
pub fn choose_seed(points: &[UnitPoint]) -> Result<Seed, KernelError> {
    if points.is_empty() {
        return Err(KernelError::DegenerateInput);
    }
    let mut dirs = Vec::with_capacity(14);
    for k in 0..3 {
        for s in [1.0, -1.0] {
            let mut d = [0.0; 3];
            d[k] = s;
            dirs.push(Vec3::new(d[0], d[1], d[2]));
        }
    }
    for sx in [1.0, -1.0] {
        for sy in [1.0, -1.0] {
            for sz in [1.0, -1.0] {
                dirs.push(Vec3::new(sx, sy, sz));
            }
        }
    }
    let mut extremes: Vec<usize> = dirs
        .iter()
        .map(|d| {
            (0..points.len())
                .max_by(|&a, &b| points[a].vec().dot(*d).total_cmp(&points[b].vec().dot(*d)).then(b.cmp(&a)))
                .unwrap()
        })
        .collect();
    extremes.sort_unstable();
    extremes.dedup();
    let m = extremes.len();
    for a in 0..m {
        for b in a + 1..m {
            for c in b + 1..m {
                for d in c + 1..m {
                    let ids = [extremes[a], extremes[b], extremes[c], extremes[d]];
                    if tetra_encloses_center(ids.map(|i| &points[i])) {
                        return Ok(Seed::Input(ids));
                    }
                }
            }
        }
    }
    auxiliary_seed(points).map(Seed::Auxiliary)
}

/// Regular tetrahedron with one vertex opposite the data's mean direction,
/// rotated to stay as far from the data as possible.
fn auxiliary_seed(points: &[UnitPoint]) -> Result<[UnitPoint; 4], KernelError> {
    let sum = points.iter().fold(Vec3::ZERO, |acc, p| acc + p.vec());
    let axis = sum.normalized().ok_or(KernelError::DegenerateInput)?;
    let helper = if axis.x.abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
    let u = axis.cross(helper).normalized().ok_or(KernelError::DegenerateInput)?;
    let w = axis.cross(u);
    // Angle between a regular tetrahedron's vertices, seen from the center.
    let cos_t: f64 = -1.0 / 3.0;
    let sin_t = (1.0 - cos_t * cos_t).sqrt();
    let stride = points.len().div_ceil(4096).max(1);
    let mut best: Option<([UnitPoint; 4], f64)> = None;
    for r in 0..12 {
        let phase = r as f64 * (2.0 * std::f64::consts::PI / 3.0) / 12.0;
        let mut tet = [UnitPoint::from_vec(-axis).map_err(KernelError::from)?; 4];
        for (k, slot) in tet.iter_mut().enumerate().skip(1) {
            let ang = phase + (k - 1) as f64 * 2.0 * std::f64::consts::PI / 3.0;
            let radial = u * ang.cos() + w * ang.sin();
            // Rotate the -axis vertex by the tetrahedral angle towards `radial`.
            let v = -axis * cos_t + radial * sin_t;
            *slot = UnitPoint::from_vec(v)?;
        }
        let clearance = points
            .iter()
            .step_by(stride)
            .flat_map(|p| tet.iter().map(move |q| chord_distance(p, q)))
            .fold(f64::INFINITY, f64::min);
        if best.as_ref().is_none_or(|b| clearance > b.1) {
            best = Some((tet, clearance));
        }
    }
    let (tet, _) = best.expect("at least one rotation");
    if !tetra_encloses_center([&tet[0], &tet[1], &tet[2], &tet[3]]) {
        return Err(KernelError::DegenerateInput);
    }
    Ok(tet)
}

/// Builds the seed mesh and the list of points still to insert.
pub(crate) fn seed_mesh(points: &[UnitPoint]) -> Result<(SphericalMesh, Vec<u32>, usize), KernelError> {
    let mut vertex_of = vec![NONE; points.len()];
    match choose_seed(points)? {
        Seed::Input(ids) => {
            let mesh = SphericalMesh::bootstrap(ids.map(|i| points[i]))?;
            for (k, &i) in ids.iter().enumerate() {
                vertex_of[i] = k as u32;
            }
            Ok((mesh, vertex_of, 0))
        }
        Seed::Auxiliary(tet) => Ok((SphericalMesh::bootstrap(tet)?, vertex_of, 4)),
    }
}

/// Serial Delaunay triangulation of `points` in BRIO order.
pub fn delaunay_from_points(points: &[UnitPoint]) -> Result<Triangulation, KernelError> {
    if points.len() < 4 {
        return Err(KernelError::DegenerateInput);
    }
    let (mut mesh, mut vertex_of, auxiliary) = seed_mesh(points)?;
    let mut stats = InsertStats::default();
    let mut ws = CavityWorkspace::new();
    let mut hint = 0u32;
    mesh.vertices.reserve(points.len());
    mesh.triangles.reserve(2 * points.len());
    for i in brio_order(points) {
        if vertex_of[i] != NONE {
            continue;
        }
        match mesh.insert_point(points[i], hint, &mut ws, &mut stats) {
            Ok((v, t)) => {
                vertex_of[i] = v;
                hint = t;
            }
            Err(KernelError::DuplicatePoint { existing }) => {
                vertex_of[i] = existing;
                stats.duplicates += 1;
            }
            Err(KernelError::DegenerateCavity) => stats.failed += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(Triangulation { mesh, vertex_of, auxiliary, stats })
}
