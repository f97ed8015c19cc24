//! Hilbert-curve ordering of sphere points and BRIO insertion rounds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::predicates::UnitPoint;

/// Bits per axis of the discretized curve.
pub const HILBERT_BITS: u32 = 21;

/// Size of the first BRIO round.
pub const FIRST_ROUND: usize = 1024;

/// Seed of the shuffle applied before BRIO rounds are cut.
pub const BRIO_SEED: u64 = 0x5eed_b410;

/// Position of a point along the curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct HilbertKey {
    pub key: u64,
    pub point_index: u32,
}

/// Index of cell `(x, y, z)` along a 3D Hilbert curve of the given depth.
///
/// Skilling's transpose formulation: the axes are turned into the transposed
/// Hilbert index in place, then the bits are interleaved.
pub fn hilbert_index(coords: [u32; 3], bits: u32) -> u64 {
    let mut x = coords;
    let m = 1u32 << (bits - 1);

    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..3 {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }

    for i in 1..3 {
        x[i] ^= x[i - 1];
    }
    let mut t = 0;
    let mut q = m;
    while q > 1 {
        if x[2] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for v in x.iter_mut() {
        *v ^= t;
    }

    let mut key = 0u64;
    for b in (0..bits).rev() {
        for v in &x {
            key = (key << 1) | u64::from((v >> b) & 1);
        }
    }
    key
}

/// Axis-aligned cube enclosing a point set.
#[derive(Debug, Clone, Copy)]
struct BoundingCube {
    min: [f64; 3],
    size: f64,
}

impl BoundingCube {
    fn of(points: &[UnitPoint]) -> BoundingCube {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for (k, c) in p.coords().into_iter().enumerate() {
                lo[k] = lo[k].min(c);
                hi[k] = hi[k].max(c);
            }
        }
        let size = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
        BoundingCube { min: lo, size: if size > 0.0 { size } else { 1.0 } }
    }

    fn cell(&self, p: &UnitPoint, bits: u32) -> [u32; 3] {
        let cells = (1u64 << bits) as f64;
        let max = (1u32 << bits) - 1;
        let mut out = [0u32; 3];
        for (k, c) in p.coords().into_iter().enumerate() {
            let f = ((c - self.min[k]) / self.size * cells).floor();
            out[k] = if f <= 0.0 { 0 } else { (f as u64).min(u64::from(max)) as u32 };
        }
        out
    }
}

/// Curve keys of all points, computed in their bounding cube.
pub fn hilbert_keys(points: &[UnitPoint]) -> Vec<HilbertKey> {
    if points.is_empty() {
        return Vec::new();
    }
    let cube = BoundingCube::of(points);
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| HilbertKey {
            key: hilbert_index(cube.cell(p, HILBERT_BITS), HILBERT_BITS),
            point_index: i as u32,
        })
        .collect()
}

/// Permutation ordering `points` along the Hilbert curve. Ties keep input
/// order, so the result is deterministic.
pub fn hilbert_sort(points: &[UnitPoint]) -> Vec<usize> {
    let mut keys = hilbert_keys(points);
    // (key, index) pairs are unique, so an unstable sort is deterministic.
    keys.par_sort_unstable();
    keys.into_iter().map(|k| k.point_index as usize).collect()
}

/// Reorders `items` by the Hilbert order of `position(item)`.
pub fn hilbert_sort_by<T: Clone, F: Fn(&T) -> UnitPoint>(items: &[T], position: F) -> Vec<T> {
    let pts: Vec<UnitPoint> = items.iter().map(&position).collect();
    hilbert_sort(&pts).into_iter().map(|i| items[i].clone()).collect()
}

/// Index ranges of the BRIO rounds over a reordered point array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BrioSchedule {
    pub rounds: Vec<std::ops::Range<usize>>,
}

impl BrioSchedule {
    pub fn sizes(&self) -> Vec<usize> {
        self.rounds.iter().map(|r| r.len()).collect()
    }
}

/// Rounds of `FIRST_ROUND`, then doubling sizes, with the remainder last.
pub fn brio_schedule(n: usize) -> BrioSchedule {
    let mut rounds = Vec::new();
    let mut start = 0;
    let mut size = FIRST_ROUND;
    while start < n {
        let end = (start + size).min(n);
        rounds.push(start..end);
        start = end;
        size *= 2;
    }
    BrioSchedule { rounds }
}

/// Full BRIO insertion order: a seeded shuffle, cut into rounds, each round
/// sorted along the curve.
pub fn brio_order(points: &[UnitPoint]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(BRIO_SEED);
    order.shuffle(&mut rng);
    let schedule = brio_schedule(points.len());
    let mut out = Vec::with_capacity(points.len());
    for round in schedule.rounds {
        let ids = &order[round];
        let pts: Vec<UnitPoint> = ids.iter().map(|&i| points[i]).collect();
        out.extend(hilbert_sort(&pts).into_iter().map(|k| ids[k]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predicates::chord_distance;
    use crate::sampling::random_sphere_points;

    #[test]
    fn curve_visits_unit_steps() {
        // Consecutive cells along the curve are face neighbours.
        let bits = 3;
        let side = 1u32 << bits;
        let mut cells = vec![[0u32; 3]; (side * side * side) as usize];
        for x in 0..side {
            for y in 0..side {
                for z in 0..side {
                    let k = hilbert_index([x, y, z], bits) as usize;
                    cells[k] = [x, y, z];
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for c in &cells {
            assert!(seen.insert(*c), "index is not a bijection");
        }
        for w in cells.windows(2) {
            let d: i64 = (0..3).map(|k| (i64::from(w[0][k]) - i64::from(w[1][k])).abs()).sum();
            assert_eq!(d, 1);
        }
    }

    #[test]
    fn single_point_is_identity() {
        let p = random_sphere_points(1, 3);
        assert_eq!(hilbert_sort(&p), vec![0]);
    }

    #[test]
    fn sort_is_a_permutation_and_deterministic() {
        let pts = random_sphere_points(5000, 11);
        let a = hilbert_sort(&pts);
        let mut s = a.clone();
        s.sort_unstable();
        assert_eq!(s, (0..5000).collect::<Vec<_>>());
        assert_eq!(a, hilbert_sort(&pts));
    }

    #[test]
    fn duplicate_keys_keep_input_order() {
        let p = random_sphere_points(1, 5)[0];
        let pts = vec![p; 6];
        assert_eq!(hilbert_sort(&pts), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn sorted_order_is_local() {
        let pts = random_sphere_points(10_000, 7);
        let mean = |order: &[usize]| {
            order.windows(2).map(|w| chord_distance(&pts[w[0]], &pts[w[1]])).sum::<f64>()
                / (order.len() - 1) as f64
        };
        let random: Vec<usize> = (0..pts.len()).collect();
        let sorted = hilbert_sort(&pts);
        let ratio = mean(&random) / mean(&sorted);
        assert!(ratio >= 10.0, "locality ratio {ratio}");
    }

    #[test]
    fn schedule_examples() {
        assert!(brio_schedule(0).rounds.is_empty());
        assert_eq!(brio_schedule(1024).sizes(), vec![1024]);
        assert_eq!(brio_schedule(10_000).sizes(), vec![1024, 2048, 4096, 2832]);
    }

    #[test]
    fn brio_order_is_a_permutation() {
        let pts = random_sphere_points(3000, 2);
        let mut o = brio_order(&pts);
        o.sort_unstable();
        assert_eq!(o, (0..3000).collect::<Vec<_>>());
    }

    #[test]
    fn contiguous_blocks_are_nearly_disjoint() {
        let pts = random_sphere_points(100_000, 19);
        let order = hilbert_sort(&pts);
        let m = 8;
        let boxes: Vec<([f64; 3], [f64; 3])> = order
            .chunks(order.len().div_ceil(m))
            .map(|chunk| {
                let mut lo = [f64::INFINITY; 3];
                let mut hi = [f64::NEG_INFINITY; 3];
                for &i in chunk {
                    for (k, c) in pts[i].coords().into_iter().enumerate() {
                        lo[k] = lo[k].min(c);
                        hi[k] = hi[k].max(c);
                    }
                }
                (lo, hi)
            })
            .collect();
        let volume = |lo: [f64; 3], hi: [f64; 3]| -> f64 {
            (0..3).map(|k| (hi[k] - lo[k]).max(0.0)).product()
        };
        let mean_volume = boxes.iter().map(|b| volume(b.0, b.1)).sum::<f64>() / m as f64;
        let mut overlaps = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                let lo = [0, 1, 2].map(|k| boxes[i].0[k].max(boxes[j].0[k]));
                let hi = [0, 1, 2].map(|k| boxes[i].1[k].min(boxes[j].1[k]));
                overlaps.push(volume(lo, hi));
            }
        }
        let mean_overlap = overlaps.iter().sum::<f64>() / overlaps.len() as f64;
        assert!(mean_overlap < 0.2 * mean_volume, "{mean_overlap} vs {mean_volume}");
    }
}
