//! Multithreaded Delaunay insertion.
//!
//! The Hilbert-sorted points are split into `M` contiguous runs, one per
//! worker. Workers proceed in lockstep iterations separated by two barriers:
//!
//! 1. every worker locates its current point, builds its cavity and claims
//!    the cavity triangles plus the triangles just outside the cavity;
//! 2. after the first barrier, a worker whose claims all survived applies
//!    its cavity-to-ball surgery, the others keep their point for the next
//!    iteration; a second barrier closes the iteration.
//!
//! Claims are resolved with an atomic maximum over `(iteration, !thread)`
//! keys, so on any overlap the smallest thread number wins and thread 0
//! always makes progress. Vertex indices and the two extra triangle slots
//! of every point are reserved up front, so the surgery never allocates.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Barrier;
use std::time::Instant;

use serde::Serialize;

use crate::hilbert::{brio_order, brio_schedule};
use crate::kernel::{
    apply_ball, seed_mesh, Cavity, CavityWorkspace, InsertStats, KernelError, MeshRef, SphericalMesh,
    Triangle, TriangleStore, Triangulation, NONE,
};
use crate::predicates::UnitPoint;
use crate::sampling::random_sphere_points;

/// Environment variable consulted when no thread count is given.
pub const THREADS_ENV: &str = "SPHEREMESH_THREADS";

/// A point to insert, with an optional walk hint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub point: UnitPoint,
    pub hint: u32,
}

impl Candidate {
    pub fn new(point: UnitPoint) -> Candidate {
        Candidate { point, hint: NONE }
    }
}

/// What happened to one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Inserted(u32),
    /// Coincides with an existing vertex.
    Duplicate(u32),
    /// Refused by the insertion filter.
    Rejected,
    /// No valid cavity could be formed.
    Failed,
}

/// Decides whether a candidate may be inserted, given its cavity.
pub type InsertFilter<'f> = dyn Fn(&MeshRef<'_>, &Cavity, &UnitPoint) -> bool + Sync + 'f;

#[derive(Debug, Clone, Default)]
pub struct ParallelReport {
    pub outcomes: Vec<Outcome>,
    pub stats: InsertStats,
    pub iterations: usize,
    /// Cavities deferred because another thread won a shared triangle.
    pub conflicts: usize,
}

/// Default worker count: the environment override, then the hardware.
pub fn default_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Triangle storage shared by the workers.
///
/// Workers only write triangles they own through the claim table; reads of
/// the whole array happen in phase 1, when nobody writes.
#[derive(Clone, Copy)]
struct SharedTriangles {
    ptr: *mut Triangle,
    len: usize,
}

unsafe impl Send for SharedTriangles {}
unsafe impl Sync for SharedTriangles {}

impl SharedTriangles {
    /// Safety: no thread may write while the returned slice is alive.
    unsafe fn slice<'a>(&self) -> &'a [Triangle] {
        std::slice::from_raw_parts(self.ptr, self.len)
    }
}

/// Write access to the triangles a winning worker owns.
struct OwnedTriangles {
    shared: SharedTriangles,
}

impl TriangleStore for OwnedTriangles {
    #[inline]
    fn get(&self, t: u32) -> Triangle {
        assert!((t as usize) < self.shared.len);
        // SAFETY: in bounds; the caller owns `t` through the claim table.
        unsafe { self.shared.ptr.add(t as usize).read() }
    }

    #[inline]
    fn set(&mut self, t: u32, tri: Triangle) {
        assert!((t as usize) < self.shared.len);
        // SAFETY: as above.
        unsafe { self.shared.ptr.add(t as usize).write(tri) }
    }
}

/// Per-triangle claim words for the conflict check.
struct ClaimTable {
    words: Vec<AtomicU64>,
}

impl ClaimTable {
    fn new(len: usize) -> ClaimTable {
        ClaimTable { words: (0..len).map(|_| AtomicU64::new(0)).collect() }
    }

    #[inline]
    fn key(iteration: u64, thread: usize) -> u64 {
        (iteration << 32) | u64::from(u32::MAX - thread as u32)
    }

    #[inline]
    fn claim(&self, t: u32, key: u64) {
        self.words[t as usize].fetch_max(key, Ordering::AcqRel);
    }

    #[inline]
    fn holds(&self, t: u32, key: u64) -> bool {
        self.words[t as usize].load(Ordering::Acquire) == key
    }
}

enum Attempt {
    Idle,
    Claimed,
    Finished(Outcome),
}

/// Inserts `candidates` (expected in Hilbert order) with `threads` workers.
///
/// Candidates refused by `filter` are skipped. On return the mesh holds no
/// dead slots; `outcomes[i]` gives the final vertex index of candidate `i`.
pub fn parallel_insert(
    mesh: &mut SphericalMesh,
    candidates: &[Candidate],
    threads: usize,
    filter: Option<&InsertFilter<'_>>,
) -> ParallelReport {
    let threads = threads.max(1).min(candidates.len().max(1));
    let n = candidates.len();
    if n == 0 {
        return ParallelReport::default();
    }
    let base_vertex = mesh.vertices.len();
    let base_slot = mesh.triangles.len();
    mesh.vertices.extend(candidates.iter().map(|c| c.point));
    mesh.triangles.resize(base_slot + 2 * n, Triangle::DEAD);

    let shared = SharedTriangles { ptr: mesh.triangles.as_mut_ptr(), len: mesh.triangles.len() };
    let vertices: &[UnitPoint] = &mesh.vertices;
    let claims = ClaimTable::new(shared.len);
    let barrier = Barrier::new(threads);
    let remaining = AtomicUsize::new(n);
    let conflicts = AtomicUsize::new(0);
    let iterations = AtomicUsize::new(0);
    let poisoned = AtomicBool::new(false);
    let fallback_hint = mesh_first_live(unsafe { shared.slice() }).unwrap_or(0);

    let results: Vec<(Vec<(usize, Outcome)>, InsertStats)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|tid| {
                let range = (tid * n / threads)..((tid + 1) * n / threads);
                let (claims, barrier, remaining, conflicts, iterations, poisoned) =
                    (&claims, &barrier, &remaining, &conflicts, &iterations, &poisoned);
                scope.spawn(move || {
                    let mut ws = CavityWorkspace::new();
                    let mut slot_scratch = Vec::new();
                    let mut stats = InsertStats::default();
                    let mut outcomes = Vec::with_capacity(range.len());
                    let mut cursor = range.start;
                    let mut current: Option<usize> = None;
                    let mut last_hint = NONE;
                    let mut iteration: u64 = 0;
                    let mut store = OwnedTriangles { shared };
                    loop {
                        iteration += 1;
                        let key = ClaimTable::key(iteration, tid);

                        // Phase 1: cavity and claims, read-only on the mesh.
                        if current.is_none() && cursor < range.end {
                            current = Some(cursor);
                            cursor += 1;
                        }
                        let mut attempt = Attempt::Idle;
                        if let Some(idx) = current {
                            // SAFETY: writers only run between the barriers below.
                            let view = MeshRef { vertices, triangles: unsafe { shared.slice() } };
                            let cand = &candidates[idx];
                            let hint = if cand.hint != NONE && (cand.hint as usize) < base_slot {
                                cand.hint
                            } else if last_hint != NONE {
                                last_hint
                            } else {
                                fallback_hint
                            };
                            attempt = match view.find_cavity(hint, &cand.point, &mut ws, &mut stats) {
                                Ok(()) => {
                                    if filter.is_some_and(|f| !f(&view, &ws.cavity, &cand.point)) {
                                        Attempt::Finished(Outcome::Rejected)
                                    } else {
                                        for &t in &ws.cavity.triangles {
                                            claims.claim(t, key);
                                        }
                                        for e in &ws.cavity.boundary {
                                            if e.outer != NONE {
                                                claims.claim(e.outer, key);
                                            }
                                        }
                                        Attempt::Claimed
                                    }
                                }
                                Err(KernelError::DuplicatePoint { existing }) => {
                                    Attempt::Finished(Outcome::Duplicate(existing))
                                }
                                Err(_) => Attempt::Finished(Outcome::Failed),
                            };
                        }
                        barrier.wait();

                        // Phase 2: surgery for the winners.
                        match attempt {
                            Attempt::Idle => {}
                            Attempt::Finished(outcome) => {
                                let idx = current.take().unwrap();
                                match outcome {
                                    Outcome::Rejected => stats.rejected += 1,
                                    Outcome::Duplicate(_) => stats.duplicates += 1,
                                    Outcome::Failed => stats.failed += 1,
                                    Outcome::Inserted(_) => {}
                                }
                                outcomes.push((idx, outcome));
                                remaining.fetch_sub(1, Ordering::AcqRel);
                            }
                            Attempt::Claimed => {
                                let cavity = &ws.cavity;
                                let won = cavity.triangles.iter().all(|&t| claims.holds(t, key))
                                    && cavity.boundary.iter().all(|e| e.outer == NONE || claims.holds(e.outer, key));
                                if won {
                                    let idx = current.take().unwrap();
                                    let vertex = (base_vertex + idx) as u32;
                                    let slots = [(base_slot + 2 * idx) as u32, (base_slot + 2 * idx + 1) as u32];
                                    last_hint = apply_ball(&mut store, cavity, vertex, slots, &mut slot_scratch);
                                    stats.inserted += 1;
                                    outcomes.push((idx, Outcome::Inserted(vertex)));
                                    remaining.fetch_sub(1, Ordering::AcqRel);
                                } else {
                                    conflicts.fetch_add(1, Ordering::Relaxed);
                                }
                            }
                        }
                        if tid == 0 {
                            iterations.fetch_add(1, Ordering::Relaxed);
                        }
                        barrier.wait();
                        if remaining.load(Ordering::Acquire) == 0 || poisoned.load(Ordering::Acquire) {
                            break;
                        }
                    }
                    (outcomes, stats)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join().unwrap_or_else(|e| {
                    poisoned.store(true, Ordering::Release);
                    std::panic::resume_unwind(e)
                })
            })
            .collect()
    });

    let mut outcomes = vec![Outcome::Failed; n];
    let mut stats = InsertStats::default();
    for (list, s) in &results {
        stats.merge(s);
        for &(idx, o) in list {
            outcomes[idx] = o;
        }
    }
    let vmap = mesh.compact();
    for o in outcomes.iter_mut() {
        match o {
            Outcome::Inserted(v) | Outcome::Duplicate(v) => *v = vmap[*v as usize],
            _ => {}
        }
    }
    ParallelReport {
        outcomes,
        stats,
        iterations: iterations.into_inner(),
        conflicts: conflicts.into_inner(),
    }
}

fn mesh_first_live(tris: &[Triangle]) -> Option<u32> {
    tris.iter().position(|t| t.is_live()).map(|t| t as u32)
}

/// Delaunay triangulation of `points`, BRIO rounds inserted with
/// [`parallel_insert`].
pub fn delaunay_parallel(points: &[UnitPoint], threads: usize) -> Result<Triangulation, KernelError> {
    if points.len() < 4 {
        return Err(KernelError::DegenerateInput);
    }
    let (mut mesh, mut vertex_of, auxiliary) = seed_mesh(points)?;
    let order: Vec<usize> = brio_order(points).into_iter().filter(|&i| vertex_of[i] == NONE).collect();
    let mut stats = InsertStats::default();
    for round in brio_schedule(order.len()).rounds {
        let ids = &order[round];
        let cands: Vec<Candidate> = ids.iter().map(|&i| Candidate::new(points[i])).collect();
        let report = parallel_insert(&mut mesh, &cands, threads, None);
        stats.merge(&report.stats);
        for (k, o) in report.outcomes.iter().enumerate() {
            match *o {
                Outcome::Inserted(v) | Outcome::Duplicate(v) => vertex_of[ids[k]] = v,
                Outcome::Rejected | Outcome::Failed => {}
            }
        }
    }
    Ok(Triangulation { mesh, vertex_of, auxiliary, stats })
}

/// One line of the throughput report.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct BenchRecord {
    pub n: usize,
    #[serde(rename = "M")]
    pub threads: usize,
    pub seconds: f64,
    pub points_per_second: f64,
    pub speedup: f64,
}

/// Times the triangulation of `n` uniform random points for each thread
/// count. Speedups are relative to a single-thread run.
pub fn throughput_benchmark(n: usize, thread_counts: &[usize], seed: u64) -> Result<Vec<BenchRecord>, KernelError> {
    let points = random_sphere_points(n, seed);
    let time = |m: usize| -> Result<f64, KernelError> {
        let start = Instant::now();
        let t = delaunay_parallel(&points, m)?;
        let secs = start.elapsed().as_secs_f64();
        drop(t);
        Ok(secs)
    };
    let serial = if thread_counts.contains(&1) { None } else { Some(time(1)?) };
    let mut records = Vec::with_capacity(thread_counts.len());
    let mut baseline = serial;
    for &m in thread_counts {
        let secs = time(m)?;
        if m == 1 && baseline.is_none() {
            baseline = Some(secs);
        }
        records.push(BenchRecord {
            n,
            threads: m,
            seconds: secs,
            points_per_second: n as f64 / secs,
            speedup: 0.0,
        });
    }
    let base = baseline.unwrap_or(f64::NAN);
    for r in records.iter_mut() {
        r.speedup = if r.threads == 1 && serial.is_none() { 1.0 } else { base / r.seconds };
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::delaunay_from_points;
    use crate::sampling::tetrahedron;
    use std::f64::consts::PI;

    #[test]
    fn single_thread_matches_serial() {
        let pts = random_sphere_points(5000, 3);
        let serial = delaunay_from_points(&pts).unwrap();
        let par = delaunay_parallel(&pts, 1).unwrap();
        assert_eq!(serial.vertex_of, par.vertex_of);
        assert_eq!(serial.mesh.canonical_triangles(), par.mesh.canonical_triangles());
    }

    #[test]
    fn four_threads_give_a_delaunay_triangulation() {
        let pts = random_sphere_points(20_000, 4);
        let par = delaunay_parallel(&pts, 4).unwrap();
        par.mesh.check_structure().unwrap();
        assert_eq!(par.mesh.live_triangle_count(), 2 * pts.len() - 4);
        assert_eq!(par.mesh.local_delaunay_violations(), 0);
        assert!((par.mesh.total_area() / (4.0 * PI) - 1.0).abs() < 1e-9);
        let serial = delaunay_from_points(&pts).unwrap();
        let mut a: Vec<[u64; 3]> = par.mesh.vertices.iter().map(|p| p.coords().map(f64::to_bits)).collect();
        let mut b: Vec<[u64; 3]> = serial.mesh.vertices.iter().map(|p| p.coords().map(f64::to_bits)).collect();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
        // No cospherical events in random data: the triangulations agree.
        assert_eq!(par.stats.strict_retries, 0);
        let key = |m: &SphericalMesh| {
            let mut t: Vec<[[u64; 3]; 3]> = m
                .canonical_triangles()
                .into_iter()
                .map(|tri| {
                    let mut c = tri.map(|v| m.vertices[v as usize].coords().map(f64::to_bits));
                    let k = (0..3).min_by_key(|&i| c[i]).unwrap();
                    c.rotate_left(k);
                    c
                })
                .collect();
            t.sort_unstable();
            t
        };
        assert_eq!(key(&par.mesh), key(&serial.mesh));
    }

    #[test]
    fn parallel_result_is_deterministic() {
        let pts = random_sphere_points(8000, 12);
        let a = delaunay_parallel(&pts, 3).unwrap();
        let b = delaunay_parallel(&pts, 3).unwrap();
        assert_eq!(a.mesh.triangles, b.mesh.triangles);
    }

    #[test]
    fn forced_conflict_defers_one_point() {
        let mut mesh = SphericalMesh::bootstrap(tetrahedron()).unwrap();
        let [a, b, c] = mesh.corners(0);
        let center = (a.vec() + b.vec() + c.vec()) * (1.0 / 3.0);
        let p = UnitPoint::from_vec(center + (a.vec() - center) * 0.1).unwrap();
        let q = UnitPoint::from_vec(center + (b.vec() - center) * 0.1).unwrap();
        let report = parallel_insert(&mut mesh, &[Candidate::new(p), Candidate::new(q)], 2, None);
        assert_eq!(report.conflicts, 1);
        assert!(report.iterations >= 2);
        assert!(report.outcomes.iter().all(|o| matches!(o, Outcome::Inserted(_))));
        mesh.check_structure().unwrap();
        assert_eq!(mesh.live_triangle_count(), 8);
        assert_eq!(mesh.delaunay_violations_exhaustive(), 0);
    }

    #[test]
    fn duplicates_are_counted_not_inserted() {
        let pts = random_sphere_points(500, 6);
        let mut mesh = delaunay_from_points(&pts).unwrap().mesh;
        let cands: Vec<Candidate> = pts[..20].iter().map(|&p| Candidate::new(p)).collect();
        let report = parallel_insert(&mut mesh, &cands, 4, None);
        assert_eq!(report.stats.duplicates, 20);
        assert_eq!(mesh.vertices.len(), 500);
        mesh.check_structure().unwrap();
    }

    #[test]
    fn filter_rejections_leave_no_trace() {
        let pts = random_sphere_points(500, 6);
        let mut mesh = delaunay_from_points(&pts).unwrap().mesh;
        let extra = random_sphere_points(100, 7);
        let cands: Vec<Candidate> = extra.iter().map(|&p| Candidate::new(p)).collect();
        let odd = |_: &MeshRef<'_>, _: &Cavity, p: &UnitPoint| p.z() > 0.0;
        let report = parallel_insert(&mut mesh, &cands, 3, Some(&odd));
        let accepted = extra.iter().filter(|p| p.z() > 0.0).count();
        assert_eq!(report.stats.inserted, accepted);
        assert_eq!(report.stats.rejected, 100 - accepted);
        assert_eq!(mesh.vertices.len(), 500 + accepted);
        assert_eq!(mesh.live_triangle_count(), 2 * mesh.vertices.len() - 4);
        assert_eq!(mesh.local_delaunay_violations(), 0);
    }

    #[test]
    fn benchmark_reports_every_thread_count() {
        let recs = throughput_benchmark(20_000, &[2, 1], 5).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].threads, 2);
        assert!(recs.iter().all(|r| r.points_per_second > 0.0 && r.speedup > 0.0));
        let line = serde_json::to_string(&recs[0]).unwrap();
        assert!(line.contains("\"points_per_second\""));
        assert!(line.contains("\"M\":2"));
    }
}
