//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_traits::{Float, Signed, Zero};
use spheremesh::kernel::SphericalMesh;
use spheremesh::predicates::{Sign, UnitPoint};
use spheremesh::sizefield::SizeField;

/// `m * 2^e` with `m` signed, exactly.
fn decompose(v: f64) -> (i64, i32) {
    let (m, e, s) = v.integer_decode();
    (s as i64 * m as i64, e as i32)
}

/// Exact sign of `det[p2 - p1 | p3 - p1 | p4 - p1]`, in big integers.
pub fn orient3d_exact(p: [[f64; 3]; 4]) -> Sign {
    let parts: Vec<(i64, i32)> = p.iter().flatten().map(|&v| decompose(v)).collect();
    let base = parts.iter().filter(|(m, _)| *m != 0).map(|&(_, e)| e).min().unwrap_or(0);
    let ints: Vec<BigInt> = parts
        .iter()
        .map(|&(m, e)| if m == 0 { BigInt::zero() } else { BigInt::from(m) << (e - base) as usize })
        .collect();
    let at = |i: usize, k: usize| &ints[3 * i + k];
    let d = |i: usize, k: usize| at(i, k) - at(0, k);
    let (a, b, c) = ([d(1, 0), d(1, 1), d(1, 2)], [d(2, 0), d(2, 1), d(2, 2)], [d(3, 0), d(3, 1), d(3, 2)]);
    let det = &a[0] * (&b[1] * &c[2] - &b[2] * &c[1]) - &a[1] * (&b[0] * &c[2] - &b[2] * &c[0])
        + &a[2] * (&b[0] * &c[1] - &b[1] * &c[0]);
    if det.is_zero() {
        Sign::Zero
    } else if det.is_positive() {
        Sign::Positive
    } else {
        Sign::Negative
    }
}

fn side(a: &UnitPoint, b: &UnitPoint, c: &UnitPoint) -> Sign {
    orient3d_exact([a.coords(), b.coords(), c.coords(), [0.0; 3]])
}

/// Whether two short great-circle arcs share a point, endpoints included.
pub fn arcs_touch(a: &UnitPoint, b: &UnitPoint, c: &UnitPoint, d: &UnitPoint) -> bool {
    let (s1, s2) = (side(c, d, a), side(c, d, b));
    let (s3, s4) = (side(a, b, c), side(a, b, d));
    if s1 == s2 && s1 != Sign::Zero || s3 == s4 && s3 != Sign::Zero {
        return false;
    }
    if [s1, s2, s3, s4].iter().all(|&s| s == Sign::Zero) {
        // Same great circle: overlap along it.
        let on = |p: &UnitPoint, u: &UnitPoint, v: &UnitPoint| {
            let len = u.vec().dot(v.vec());
            p.vec().dot(u.vec()) >= len && p.vec().dot(v.vec()) >= len
        };
        return on(a, c, d) || on(b, c, d) || on(c, a, b) || on(d, a, b);
    }
    // The planes cross along a line; the arcs must meet on the same side.
    let m1 = a.vec() + b.vec();
    let m2 = c.vec() + d.vec();
    m1.dot(m2) > 0.0
}

/// Loops with no self-crossing and no crossing between loops, by brute force.
pub fn loops_are_simple(loops: &[Vec<UnitPoint>]) -> Result<(), String> {
    let mut edges = Vec::new();
    for (l, lp) in loops.iter().enumerate() {
        for i in 0..lp.len() {
            edges.push((l, i, lp.len(), lp[i], lp[(i + 1) % lp.len()]));
        }
    }
    for x in 0..edges.len() {
        for y in x + 1..edges.len() {
            let (l1, i1, n1, a, b) = edges[x];
            let (l2, i2, _, c, d) = edges[y];
            let adjacent = l1 == l2 && (i2 == (i1 + 1) % n1 || i1 == (i2 + 1) % n1);
            if adjacent {
                // Only the shared vertex may be common.
                continue;
            }
            if arcs_touch(&a, &b, &c, &d) {
                return Err(format!("edge {l1}:{i1} meets edge {l2}:{i2}"));
            }
        }
    }
    Ok(())
}

/// Adimensional length by composite Simpson along the great-circle arc.
pub fn adimensional_length(p: &UnitPoint, q: &UnitPoint, h: &SizeField, intervals: usize) -> f64 {
    let len = spheremesh::predicates::geodesic_distance(p, q);
    let n = intervals + intervals % 2;
    let f = |k: usize| 1.0 / h.eval(&p.slerp(q, k as f64 / n as f64));
    let mut s = f(0) + f(n);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k);
    }
    len * s / (3.0 * n as f64)
}

/// Edges of water triangles, each once.
pub fn water_edges(mesh: &SphericalMesh) -> Vec<(UnitPoint, UnitPoint)> {
    let mut out = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if !tri.is_live() || !tri.is_water() {
            continue;
        }
        for i in 0..3 {
            let s = tri.n[i] as usize;
            if s > t || !mesh.triangles[s].is_water() {
                let (a, b) = tri.edge(i);
                out.push((*mesh.point(a), *mesh.point(b)));
            }
        }
    }
    out
}

/// Sum of spherical excesses, by L'Huilier's formula.
pub fn total_area(mesh: &SphericalMesh) -> f64 {
    mesh.triangles
        .iter()
        .filter(|t| t.is_live())
        .map(|t| {
            let [a, b, c] = t.v.map(|v| mesh.point(v));
            let (x, y, z) = (
                spheremesh::predicates::geodesic_distance(b, c),
                spheremesh::predicates::geodesic_distance(c, a),
                spheremesh::predicates::geodesic_distance(a, b),
            );
            let s = 0.5 * (x + y + z);
            let q = (0.5 * s).tan() * (0.5 * (s - x)).tan() * (0.5 * (s - y)).tan() * (0.5 * (s - z)).tan();
            4.0 * q.max(0.0).sqrt().atan()
        })
        .sum()
}

/// Plain floating-point determinant, falling back to [`orient3d_exact`]
/// when it is too close to zero to trust. Coordinates are bounded by one.
pub fn orient3d_filtered(p: [[f64; 3]; 4]) -> Sign {
    let d = |i: usize, k: usize| p[i][k] - p[0][k];
    let det = d(1, 0) * (d(2, 1) * d(3, 2) - d(2, 2) * d(3, 1)) - d(1, 1) * (d(2, 0) * d(3, 2) - d(2, 2) * d(3, 0))
        + d(1, 2) * (d(2, 0) * d(3, 1) - d(2, 1) * d(3, 0));
    // Each difference is within 2, so the permanent is at most 48 and the
    // rounding error far below this bound.
    if det > 1e-12 {
        Sign::Positive
    } else if det < -1e-12 {
        Sign::Negative
    } else {
        orient3d_exact(p)
    }
}
