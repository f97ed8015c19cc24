//! One-dimensional size-field machinery: adaptive density tables along an
//! edge, equal-density subdivision, boundary discretization, and the
//! constrained "empty mesh" of boundary vertices.

use std::collections::VecDeque;

use rayon::prelude::*;
use thiserror::Error;

use crate::kernel::{KernelError, SphericalMesh, NONE, WATER};
use crate::parkernel::delaunay_parallel;
use crate::predicates::{geodesic_distance, orient_origin, Sign, UnitPoint};
use crate::sizefield::SizeField;

/// Default relative accuracy of the density tables.
pub const DEFAULT_EPS: f64 = 0.05;

/// Bisection depth at which a table is accepted as is.
pub const MAX_DEPTH: u32 = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OneDimError {
    #[error("edge endpoints coincide")]
    SamePoint,
    #[error("accuracy must be positive, got {0}")]
    InvalidEps(f64),
    #[error("boundary point {0} was not inserted in the mesh")]
    MissingVertex(usize),
    #[error("vertex {vertex} lies on constrained edge ({a}, {b})")]
    CollinearConstraint { a: u32, b: u32, vertex: u32 },
    #[error("constrained edge ({a}, {b}) not recovered after {flips} flips")]
    RecoveryStall { a: u32, b: u32, flips: usize },
    #[error("water seed could not be located")]
    SeedNotFound,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Piecewise-linear primitive of the density along an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    /// `(t_j, delta_j)`, starting at `(0, 0)`, increasing in both.
    pub entries: Vec<(f64, f64)>,
    /// Number of size-field evaluations spent.
    pub evaluations: usize,
    /// Set when some interval hit [`MAX_DEPTH`].
    pub truncated: bool,
}

impl DensityTable {
    /// Adimensional length of the edge.
    pub fn total(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.1)
    }

    /// Number of sub-segments that saturate the edge.
    pub fn subdivisions(&self) -> usize {
        (self.total().ceil() as usize).max(1)
    }

    /// Interpolated primitive at parameter `t`.
    pub fn delta_at(&self, t: f64) -> f64 {
        let k = self.entries.partition_point(|e| e.0 < t).clamp(1, self.entries.len() - 1);
        let (t0, d0) = self.entries[k - 1];
        let (t1, d1) = self.entries[k];
        d0 + (t - t0) / (t1 - t0) * (d1 - d0)
    }

    /// Inverse of [`delta_at`](Self::delta_at).
    pub fn t_at(&self, delta: f64) -> f64 {
        let k = self.entries.partition_point(|e| e.1 < delta).clamp(1, self.entries.len() - 1);
        let (t0, d0) = self.entries[k - 1];
        let (t1, d1) = self.entries[k];
        t0 + (delta - d0) / (d1 - d0) * (t1 - t0)
    }
}

/// Integral of `length / h` over `[0, du]` for `h` linear from `h1` to `h2`.
fn linear_size_integral(length: f64, du: f64, h1: f64, h2: f64) -> f64 {
    let r = h2 / h1;
    if (r - 1.0).abs() < 1e-9 {
        // Series of ln(r) / (r - 1) around r = 1.
        let x = r - 1.0;
        length * du / h1 * (1.0 - x / 2.0 + x * x / 3.0)
    } else {
        length * du * r.ln() / (h2 - h1)
    }
}

/// Adaptive construction of the density table of an edge of arc length
/// `length`, with `size(u)` the target size at parameter `u`.
///
/// An interval is bisected while the size at its midpoint differs from the
/// linear interpolation of its end sizes, measured on `1/h`, by more than
/// `eps` relative. Accepted intervals contribute the exact integral of
/// `length / h` for linear `h`.
pub fn adaptive_density<F: FnMut(f64) -> f64>(
    length: f64,
    eps: f64,
    mut size: F,
) -> Result<DensityTable, OneDimError> {
    if !(eps > 0.0) {
        return Err(OneDimError::InvalidEps(eps));
    }
    if !(length > 0.0) {
        return Err(OneDimError::SamePoint);
    }
    let mut evaluations = 2;
    let (h0, h1) = (size(0.0), size(1.0));
    let mut stack = vec![(0.0, 1.0, h0, h1, 0u32)];
    let mut entries = vec![(0.0, 0.0)];
    let mut truncated = false;
    while let Some((u1, u2, h1, h2, depth)) = stack.pop() {
        let u12 = 0.5 * (u1 + u2);
        let h12 = size(u12);
        evaluations += 1;
        let mean = 2.0 / (h1 + h2);
        let split = (1.0 / h12 - mean).abs() > eps * mean;
        if split && depth < MAX_DEPTH {
            stack.push((u12, u2, h12, h2, depth + 1));
            stack.push((u1, u12, h1, h12, depth + 1));
        } else {
            truncated |= split;
            let delta = entries.last().unwrap().1 + linear_size_integral(length, u2 - u1, h1, h2);
            entries.push((u2, delta));
        }
    }
    if truncated {
        log::warn!("density table reached the maximum bisection depth");
    }
    Ok(DensityTable { entries, evaluations, truncated })
}

/// Point at parameter `u` of the chord from `p` to `q`, on the sphere.
pub fn edge_point(p: &UnitPoint, q: &UnitPoint, u: f64) -> UnitPoint {
    if u <= 0.0 {
        return *p;
    }
    if u >= 1.0 {
        return *q;
    }
    p.chord_lerp(q, u).unwrap_or_else(|| p.slerp(q, u))
}

/// Density table of edge `pq` under size field `h`.
pub fn build_density_table(p: &UnitPoint, q: &UnitPoint, h: &SizeField, eps: f64) -> Result<DensityTable, OneDimError> {
    let length = geodesic_distance(p, q);
    adaptive_density(length, eps, |u| h.eval(&edge_point(p, q, u)))
}

/// Parameters `t_1 .. t_{N-1}` splitting the edge into `N = ceil(delta(1))`
/// pieces of equal adimensional length.
pub fn subdivide(table: &DensityTable) -> Vec<f64> {
    let n = table.subdivisions();
    let total = table.total();
    (1..n).map(|j| table.t_at(j as f64 * total / n as f64)).collect()
}

/// Discretized boundary: points and closed loops of point indices.
/// Consecutive points of a loop, and its last and first, form the
/// constrained edges.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiscreteBoundary {
    pub points: Vec<UnitPoint>,
    pub loops: Vec<Vec<u32>>,
    pub evaluations: usize,
}

impl DiscreteBoundary {
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.loops
            .iter()
            .flat_map(|l| (0..l.len()).map(move |i| (l[i], l[(i + 1) % l.len()])))
    }
}

/// Minimum number of edges of a discretized loop.
pub const MIN_LOOP_EDGES: usize = 3;

/// Resamples every closed loop with points at equal adimensional spacing,
/// starting from the loop's first vertex. A loop gets `ceil(delta)` edges,
/// and never fewer than three.
pub fn discretize_boundary(loops: &[Vec<UnitPoint>], h: &SizeField, eps: f64) -> Result<DiscreteBoundary, OneDimError> {
    let mut out = DiscreteBoundary::default();
    for lp in loops {
        if lp.len() < 2 {
            continue;
        }
        let tables: Vec<DensityTable> = (0..lp.len())
            .into_par_iter()
            .map(|i| build_density_table(&lp[i], &lp[(i + 1) % lp.len()], h, eps))
            .collect::<Result<_, _>>()?;
        out.evaluations += tables.iter().map(|t| t.evaluations).sum::<usize>();
        let mut cumulative = Vec::with_capacity(tables.len() + 1);
        cumulative.push(0.0);
        for t in &tables {
            cumulative.push(cumulative.last().unwrap() + t.total());
        }
        let total = *cumulative.last().unwrap();
        let n = (total.ceil() as usize).max(MIN_LOOP_EDGES);
        let mut ids = Vec::with_capacity(n);
        for j in 0..n {
            let target = j as f64 * total / n as f64;
            let k = (cumulative.partition_point(|&c| c <= target) - 1).min(tables.len() - 1);
            let t = tables[k].t_at(target - cumulative[k]);
            ids.push(out.points.len() as u32);
            out.points.push(edge_point(&lp[k], &lp[(k + 1) % lp.len()], t));
        }
        out.loops.push(ids);
    }
    Ok(out)
}

/// Triangulation of the whole sphere with recovered boundary edges.
#[derive(Debug, Clone)]
pub struct ConstrainedMesh {
    pub mesh: SphericalMesh,
    /// Constrained edges as mesh vertex pairs, in boundary loop order.
    pub constraints: Vec<(u32, u32)>,
    /// Mesh vertex of every boundary point.
    pub vertex_of: Vec<u32>,
    /// Number of leading auxiliary vertices, not part of the boundary.
    pub auxiliary: usize,
    /// Flips spent recovering constraints.
    pub recovery_flips: usize,
    /// Flips spent restoring the Delaunay property afterwards.
    pub delaunay_flips: usize,
}

impl ConstrainedMesh {
    /// Whether the undirected edge `(a, b)` is in the mesh and constrained.
    pub fn has_constrained_edge(&self, a: u32, b: u32, vt: &[u32]) -> bool {
        self.mesh
            .find_edge(a, b, vt[a as usize])
            .is_some_and(|(t, i)| self.mesh.triangles[t as usize].is_constrained(i))
    }

    pub fn water_triangles(&self) -> usize {
        self.mesh.triangles.iter().filter(|t| t.is_live() && t.is_water()).count()
    }
}

/// Strict crossing of the arcs `ab` and `cd`.
fn arcs_cross(mesh: &SphericalMesh, a: u32, b: u32, c: u32, d: u32) -> bool {
    let (pa, pb, pc, pd) = (mesh.point(a), mesh.point(b), mesh.point(c), mesh.point(d));
    if (pa.vec() + pb.vec()).dot(pc.vec() + pd.vec()) <= 0.0 {
        return false;
    }
    let s1 = orient_origin(pa, pb, pc);
    let s2 = orient_origin(pa, pb, pd);
    let s3 = orient_origin(pc, pd, pa);
    let s4 = orient_origin(pc, pd, pb);
    s1 != Sign::Zero && s1 == s2.flip() && s3 != Sign::Zero && s3 == s4.flip()
}

/// Mesh edges crossed by the arc from `a` to `b`, in order.
fn crossing_edges(mesh: &SphericalMesh, vt: &[u32], a: u32, b: u32) -> Result<Vec<(u32, u32)>, OneDimError> {
    let pa = *mesh.point(a);
    let pb = *mesh.point(b);
    let collinear = |v: u32| OneDimError::CollinearConstraint { a, b, vertex: v };
    let mut start = None;
    for t in mesh.star(a, vt[a as usize]) {
        let tri = &mesh.triangles[t as usize];
        let k = tri.index_of(a).unwrap();
        let (c, d) = (tri.v[(k + 1) % 3], tri.v[(k + 2) % 3]);
        let sc = orient_origin(&pa, mesh.point(c), &pb);
        let sd = orient_origin(mesh.point(d), &pa, &pb);
        if sc == Sign::Positive && sd == Sign::Positive {
            start = Some((t, k));
            break;
        }
        if sc == Sign::Zero && (pa.vec().dot(pb.vec()) < pa.vec().dot(mesh.point(c).vec()) || c == b) {
            return Err(collinear(c));
        }
    }
    let Some((mut t, mut i)) = start else { return Err(collinear(NONE)) };
    let mut out = Vec::new();
    loop {
        let tri = mesh.triangles[t as usize];
        let (x, y) = tri.edge(i);
        out.push((x, y));
        let s = tri.n[i];
        let other = &mesh.triangles[s as usize];
        let j = other.edge_index(y, x).expect("neighbour shares the edge");
        let e = other.v[j];
        if e == b {
            return Ok(out);
        }
        let se = orient_origin(&pa, &pb, mesh.point(e));
        if se == Sign::Zero {
            return Err(collinear(e));
        }
        let sx = orient_origin(&pa, &pb, mesh.point(x));
        // The arc leaves through the edge whose endpoints it separates.
        i = if se == sx { (j + 2) % 3 } else { (j + 1) % 3 };
        t = s;
        if out.len() > mesh.triangles.len() {
            return Err(OneDimError::RecoveryStall { a, b, flips: 0 });
        }
    }
}

/// Flips edges crossing `(a, b)` until it is a mesh edge, then marks it.
/// Returns the number of flips.
fn recover_edge(mesh: &mut SphericalMesh, vt: &mut [u32], a: u32, b: u32) -> Result<usize, OneDimError> {
    if let Some((t, i)) = mesh.find_edge(a, b, vt[a as usize]) {
        mesh.set_constrained(t, i, true);
        return Ok(0);
    }
    let crossing = crossing_edges(mesh, vt, a, b)?;
    let limit = crossing.len() * crossing.len();
    let mut queue: VecDeque<(u32, u32)> = crossing.into();
    let mut flips = 0;
    let mut idle = 0;
    while let Some((c, d)) = queue.pop_front() {
        let (t, i) = mesh.find_edge(c, d, vt[c as usize]).expect("crossing edge is in the mesh");
        match mesh.flip(t, i) {
            Some((t1, t2)) => {
                flips += 1;
                idle = 0;
                for &v in &mesh.triangles[t1 as usize].v {
                    vt[v as usize] = t1;
                }
                for &v in &mesh.triangles[t2 as usize].v {
                    vt[v as usize] = t2;
                }
                let (x, y) = mesh.triangles[t1 as usize].edge(1);
                if arcs_cross(mesh, a, b, x, y) {
                    queue.push_back((x, y));
                }
                if flips > limit {
                    return Err(OneDimError::RecoveryStall { a, b, flips });
                }
            }
            None => {
                queue.push_back((c, d));
                idle += 1;
                if idle > queue.len() {
                    return Err(OneDimError::RecoveryStall { a, b, flips });
                }
            }
        }
    }
    let (t, i) = mesh
        .find_edge(a, b, vt[a as usize])
        .ok_or(OneDimError::RecoveryStall { a, b, flips })?;
    mesh.set_constrained(t, i, true);
    Ok(flips)
}

/// Delaunay triangulation of the boundary points with every boundary edge
/// recovered by flips, then made Delaunay away from the constraints.
pub fn build_empty_mesh(boundary: &DiscreteBoundary, threads: usize) -> Result<ConstrainedMesh, OneDimError> {
    let tri = delaunay_parallel(&boundary.points, threads)?;
    if let Some(i) = tri.vertex_of.iter().position(|&v| v == NONE) {
        return Err(OneDimError::MissingVertex(i));
    }
    let mut mesh = tri.mesh;
    let constraints: Vec<(u32, u32)> = boundary
        .edges()
        .map(|(a, b)| (tri.vertex_of[a as usize], tri.vertex_of[b as usize]))
        .filter(|(a, b)| a != b)
        .collect();
    let mut vt = mesh.vertex_triangles();
    let mut recovery_flips = 0;
    for &(a, b) in &constraints {
        recovery_flips += recover_edge(&mut mesh, &mut vt, a, b)?;
    }
    let delaunay_flips = mesh.lawson_flips(0..mesh.triangles.len() as u32);
    Ok(ConstrainedMesh {
        mesh,
        constraints,
        vertex_of: tri.vertex_of,
        auxiliary: tri.auxiliary,
        recovery_flips,
        delaunay_flips,
    })
}

/// Tags as water every triangle reachable from a seed without crossing a
/// constrained edge. Returns the number of water triangles.
pub fn mark_water(cm: &mut ConstrainedMesh, seeds: &[UnitPoint]) -> Result<usize, OneDimError> {
    let mesh = &mut cm.mesh;
    for t in mesh.triangles.iter_mut() {
        t.flags &= !WATER;
    }
    let start = mesh.first_live().ok_or(OneDimError::SeedNotFound)?;
    let mut stack = Vec::new();
    for seed in seeds {
        let loc = mesh.locate(start, seed).map_err(|_| OneDimError::SeedNotFound)?;
        stack.push(loc.triangle);
        while let Some(t) = stack.pop() {
            let tri = &mut mesh.triangles[t as usize];
            if tri.is_water() {
                continue;
            }
            tri.flags |= WATER;
            let tri = *tri;
            for i in 0..3 {
                if !tri.is_constrained(i) && tri.n[i] != NONE && !mesh.triangles[tri.n[i] as usize].is_water() {
                    stack.push(tri.n[i]);
                }
            }
        }
    }
    Ok(cm.water_triangles())
}
