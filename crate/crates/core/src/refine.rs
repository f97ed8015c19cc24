//! Delaunay refinement by edge saturation.
//!
//! Each iteration places points along every water edge longer than the
//! local size, at equal adimensional spacing, and inserts them in Hilbert
//! order through the parallel kernel. A point is refused when its cavity
//! has a vertex closer than `beta * h(p)`, so no short edge is created. The
//! loop stops when an iteration inserts nothing.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::hilbert::hilbert_sort_by;
use crate::kernel::{Cavity, MeshRef, SphericalMesh, NONE};
use crate::onedim::{build_density_table, edge_point, subdivide};
use crate::parkernel::{parallel_insert, Candidate};
use crate::predicates::{geodesic_distance, orient_origin, Sign, UnitPoint, Vec3};
use crate::sizefield::SizeField;

/// Default filter radius, as a fraction of the local size.
pub const DEFAULT_BETA: f64 = 0.7;

pub const DEFAULT_MAX_ITER: usize = 30;

pub const DEFAULT_SMOOTHING_PASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams {
    pub eps: f64,
    pub beta: f64,
    pub max_iter: usize,
    pub threads: usize,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            eps: crate::onedim::DEFAULT_EPS,
            beta: DEFAULT_BETA,
            max_iter: DEFAULT_MAX_ITER,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub candidates: usize,
    pub inserted: usize,
    pub rejected: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RefineReport {
    pub iterations: Vec<IterationStats>,
    pub converged: bool,
}

impl RefineReport {
    pub fn total_inserted(&self) -> usize {
        self.iterations.iter().map(|s| s.inserted).sum()
    }

    /// Iterations that inserted at least one point.
    pub fn productive_iterations(&self) -> usize {
        self.iterations.iter().filter(|s| s.inserted > 0).count()
    }
}

/// Unconstrained water edges, each once, as `(triangle, edge index)`.
pub fn water_edges(mesh: &SphericalMesh) -> Vec<(u32, usize)> {
    let mut out = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if !tri.is_live() || !tri.is_water() {
            continue;
        }
        for i in 0..3 {
            let s = tri.n[i];
            if tri.is_constrained(i) || s == NONE {
                continue;
            }
            if (s as usize) > t || !mesh.triangles[s as usize].is_water() {
                out.push((t as u32, i));
            }
        }
    }
    out
}

/// Points that saturate every unconstrained water edge whose adimensional
/// length exceeds one, with the edge's triangle as walk hint.
pub fn saturate_edges(mesh: &SphericalMesh, h: &SizeField, eps: f64) -> Vec<Candidate> {
    water_edges(mesh)
        .par_iter()
        .flat_map_iter(|&(t, i)| {
            let (a, b) = mesh.triangles[t as usize].edge(i);
            let (p, q) = (mesh.point(a), mesh.point(b));
            let ts = match build_density_table(p, q, h, eps) {
                Ok(table) if table.total() > 1.0 => subdivide(&table),
                _ => Vec::new(),
            };
            ts.into_iter().map(move |u| Candidate { point: edge_point(p, q, u), hint: t })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InsertReport {
    pub inserted: usize,
    pub rejected: usize,
    pub duplicates: usize,
    pub failed: usize,
}

/// Whether inserting `p` with this cavity creates an edge shorter than
/// `beta * h(p)`.
pub fn creates_short_edge(view: &MeshRef<'_>, cavity: &Cavity, p: &UnitPoint, limit: f64) -> bool {
    cavity.boundary.iter().any(|e| geodesic_distance(view.point(e.a), p) < limit)
}

/// Inserts the candidates in Hilbert order, refusing those that would
/// create a short edge.
pub fn filtered_insert(
    mesh: &mut SphericalMesh,
    candidates: &[Candidate],
    h: &SizeField,
    beta: f64,
    threads: usize,
) -> InsertReport {
    let sorted = hilbert_sort_by(candidates, |c| c.point);
    let filter = |view: &MeshRef<'_>, cavity: &Cavity, p: &UnitPoint| -> bool {
        beta <= 0.0 || !creates_short_edge(view, cavity, p, beta * h.eval(p))
    };
    let report = parallel_insert(mesh, &sorted, threads, Some(&filter));
    InsertReport {
        inserted: report.stats.inserted,
        rejected: report.stats.rejected,
        duplicates: report.stats.duplicates,
        failed: report.stats.failed,
    }
}

/// Saturate, sort, insert, until an iteration inserts nothing or
/// `max_iter` iterations ran.
pub fn refine_loop(mesh: &mut SphericalMesh, h: &SizeField, params: &RefineParams) -> RefineReport {
    let mut report = RefineReport::default();
    for iteration in 1..=params.max_iter {
        let start = Instant::now();
        let candidates = saturate_edges(mesh, h, params.eps);
        let ins = if candidates.is_empty() {
            InsertReport::default()
        } else {
            filtered_insert(mesh, &candidates, h, params.beta, params.threads)
        };
        report.iterations.push(IterationStats {
            iteration,
            candidates: candidates.len(),
            inserted: ins.inserted,
            rejected: ins.rejected + ins.duplicates + ins.failed,
            seconds: start.elapsed().as_secs_f64(),
        });
        log::info!("refinement iteration {iteration}: {} candidates, {} inserted", candidates.len(), ins.inserted);
        if ins.inserted == 0 {
            report.converged = true;
            break;
        }
    }
    if !report.converged {
        log::warn!("refinement did not converge in {} iterations", params.max_iter);
    }
    report
}

/// Vertices that smoothing may move: every incident triangle is water and
/// no incident edge is constrained.
pub fn movable_vertices(mesh: &SphericalMesh) -> Vec<bool> {
    let mut movable = vec![false; mesh.vertices.len()];
    let mut blocked = vec![false; mesh.vertices.len()];
    for tri in mesh.triangles.iter().filter(|t| t.is_live()) {
        for i in 0..3 {
            let v = tri.v[i] as usize;
            if tri.is_water() {
                movable[v] = true;
            } else {
                blocked[v] = true;
            }
            if tri.is_constrained(i) {
                let (a, b) = tri.edge(i);
                blocked[a as usize] = true;
                blocked[b as usize] = true;
            }
        }
    }
    movable.iter().zip(&blocked).map(|(&m, &b)| m && !b).collect()
}

/// Laplacian smoothing: each movable vertex goes to the normalized mean of
/// its neighbours, unless that would invert an incident triangle. Lawson
/// flips restore the Delaunay property after every pass. Returns the number
/// of accepted moves.
pub fn smooth(mesh: &mut SphericalMesh, passes: usize) -> usize {
    let movable = movable_vertices(mesh);
    let mut moved = 0;
    for _ in 0..passes {
        let vt = mesh.vertex_triangles();
        let snapshot: &SphericalMesh = mesh;
        let proposals: Vec<Option<(UnitPoint, Vec<u32>)>> = (0..snapshot.vertices.len())
            .into_par_iter()
            .map(|v| {
                if !movable[v] || vt[v] == NONE {
                    return None;
                }
                let star = snapshot.star(v as u32, vt[v]);
                let mut sum = Vec3::ZERO;
                for &t in &star {
                    let tri = &snapshot.triangles[t as usize];
                    let k = tri.index_of(v as u32).unwrap();
                    sum = sum + snapshot.point(tri.v[(k + 1) % 3]).vec();
                }
                UnitPoint::from_vec(sum).ok().map(|p| (p, star))
            })
            .collect();
        for (v, prop) in proposals.into_iter().enumerate() {
            let Some((p, star)) = prop else { continue };
            let keeps_orientation = star.iter().all(|&t| {
                let tri = &mesh.triangles[t as usize];
                let c = tri.v.map(|w| if w as usize == v { p } else { *mesh.point(w) });
                orient_origin(&c[0], &c[1], &c[2]) == Sign::Positive
            });
            if keeps_orientation {
                mesh.vertices[v] = p;
                moved += 1;
            }
        }
        mesh.lawson_flips(0..mesh.triangles.len() as u32);
    }
    moved
}

/// Adimensional lengths of all edges of water triangles, constrained
/// edges included.
pub fn water_edge_lengths(mesh: &SphericalMesh, h: &SizeField, eps: f64) -> Vec<f64> {
    let mut edges = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if !tri.is_live() || !tri.is_water() {
            continue;
        }
        for i in 0..3 {
            let s = tri.n[i];
            if s == NONE || (s as usize) > t || !mesh.triangles[s as usize].is_water() {
                edges.push(tri.edge(i));
            }
        }
    }
    edges
        .par_iter()
        .map(|&(a, b)| build_density_table(mesh.point(a), mesh.point(b), h, eps).map_or(0.0, |t| t.total()))
        .collect()
}

/// Interior angle at `a` of the spherical triangle `abc`.
pub fn spherical_angle(a: &UnitPoint, b: &UnitPoint, c: &UnitPoint) -> f64 {
    let n1 = a.vec().cross(b.vec());
    let n2 = a.vec().cross(c.vec());
    n1.cross(n2).norm().atan2(n1.dot(n2))
}

/// Smallest interior angle of each water triangle, in radians.
pub fn water_min_angles(mesh: &SphericalMesh) -> Vec<f64> {
    mesh.triangles
        .par_iter()
        .filter(|t| t.is_live() && t.is_water())
        .map(|t| {
            let [a, b, c] = t.v.map(|v| mesh.point(v));
            spherical_angle(a, b, c).min(spherical_angle(b, c, a)).min(spherical_angle(c, a, b))
        })
        .collect()
}
