//! Seeded point generators for benchmarks and fixtures.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::predicates::UnitPoint;

/// `n` points uniformly distributed on the sphere.
pub fn random_sphere_points(n: usize, seed: u64) -> Vec<UnitPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_sphere_point(&mut rng)).collect()
}

pub fn random_sphere_point<R: Rng>(rng: &mut R) -> UnitPoint {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    UnitPoint::new(r * phi.cos(), r * phi.sin(), z).expect("sample lies on the sphere")
}

/// The 12 vertices of a regular icosahedron.
pub fn icosahedron() -> Vec<UnitPoint> {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, g, 0.0),
        (1.0, g, 0.0),
        (-1.0, -g, 0.0),
        (1.0, -g, 0.0),
        (0.0, -1.0, g),
        (0.0, 1.0, g),
        (0.0, -1.0, -g),
        (0.0, 1.0, -g),
        (g, 0.0, -1.0),
        (g, 0.0, 1.0),
        (-g, 0.0, -1.0),
        (-g, 0.0, 1.0),
    ];
    raw.iter().map(|&(x, y, z)| UnitPoint::new(x, y, z).unwrap()).collect()
}

/// The 4 vertices of a regular tetrahedron.
pub fn tetrahedron() -> [UnitPoint; 4] {
    [
        UnitPoint::new(1.0, 1.0, 1.0).unwrap(),
        UnitPoint::new(1.0, -1.0, -1.0).unwrap(),
        UnitPoint::new(-1.0, 1.0, -1.0).unwrap(),
        UnitPoint::new(-1.0, -1.0, 1.0).unwrap(),
    ]
}
