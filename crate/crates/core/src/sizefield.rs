//! Mesh-size functions on the unit sphere.
//!
//! Sizes and distances are arc lengths on the unit sphere. Use
//! [`metres_to_arc`] to convert lengths given on the Earth.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rstar::primitives::GeomWithData;
use rstar::RTree;
use thiserror::Error;

use crate::predicates::{chord_to_arc, UnitPoint, EARTH_RADIUS_M};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SizeFieldError {
    #[error("coastline index is empty")]
    EmptyIndex,
    #[error("invalid size field parameters: {0}")]
    InvalidParameters(String),
}

pub fn metres_to_arc(m: f64) -> f64 {
    m / EARTH_RADIUS_M
}

pub fn arc_to_metres(a: f64) -> f64 {
    a * EARTH_RADIUS_M
}

type Sample = GeomWithData<[f64; 3], u32>;

/// Nearest-sample queries over coastline points.
#[derive(Debug, Clone)]
pub struct CoastIndex {
    tree: RTree<Sample>,
    len: usize,
}

impl CoastIndex {
    pub fn new(points: &[UnitPoint]) -> Result<CoastIndex, SizeFieldError> {
        if points.is_empty() {
            return Err(SizeFieldError::EmptyIndex);
        }
        let samples = points
            .iter()
            .enumerate()
            .map(|(i, p)| Sample::new(p.coords(), i as u32))
            .collect();
        Ok(CoastIndex { tree: RTree::bulk_load(samples), len: points.len() })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index of the nearest sample and its geodesic distance.
    ///
    /// Chord length is monotone in arc length, so the Euclidean nearest
    /// neighbour is the geodesic one.
    pub fn nearest(&self, x: &UnitPoint) -> (usize, f64) {
        let q = x.coords();
        let s = self.tree.nearest_neighbor(&q).expect("index is not empty");
        let c = s.geom();
        let d2: f64 = (0..3).map(|k| (c[k] - q[k]).powi(2)).sum();
        (s.data as usize, chord_to_arc(d2.sqrt()))
    }

    /// Geodesic distance from `x` to the nearest sample.
    pub fn wall_distance(&self, x: &UnitPoint) -> f64 {
        self.nearest(x).1
    }
}

/// Piecewise-linear ramp in the wall distance.
#[derive(Debug, Clone)]
pub struct DistanceRamp {
    pub h_min: f64,
    pub h_max: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub coast: Arc<CoastIndex>,
}

impl DistanceRamp {
    pub fn size_at_distance(&self, d: f64) -> f64 {
        if d < self.d_min {
            self.h_min
        } else if d > self.d_max {
            self.h_max
        } else {
            let s = (d - self.d_min) / (self.d_max - self.d_min);
            self.h_min + s * (self.h_max - self.h_min)
        }
    }
}

/// User-supplied size function.
pub trait SizeFunction: Send + Sync {
    fn size(&self, x: &UnitPoint) -> f64;
}

impl<F: Fn(&UnitPoint) -> f64 + Send + Sync> SizeFunction for F {
    fn size(&self, x: &UnitPoint) -> f64 {
        self(x)
    }
}

#[derive(Clone)]
pub enum SizeKind {
    Uniform(f64),
    DistanceRamp(DistanceRamp),
    CompositeMin(Vec<SizeKind>),
    Custom(Arc<dyn SizeFunction>),
}

impl fmt::Debug for SizeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeKind::Uniform(h) => f.debug_tuple("Uniform").field(h).finish(),
            SizeKind::DistanceRamp(r) => f
                .debug_struct("DistanceRamp")
                .field("h_min", &r.h_min)
                .field("h_max", &r.h_max)
                .field("d_min", &r.d_min)
                .field("d_max", &r.d_max)
                .field("samples", &r.coast.len())
                .finish(),
            SizeKind::CompositeMin(v) => f.debug_tuple("CompositeMin").field(v).finish(),
            SizeKind::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl SizeKind {
    fn eval(&self, x: &UnitPoint) -> f64 {
        match self {
            SizeKind::Uniform(h) => *h,
            SizeKind::DistanceRamp(r) => r.size_at_distance(r.coast.wall_distance(x)),
            SizeKind::CompositeMin(v) => v.iter().map(|k| k.eval(x)).fold(f64::INFINITY, f64::min),
            SizeKind::Custom(f) => f.size(x),
        }
    }

    fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            SizeKind::Uniform(h) => Some((*h, *h)),
            SizeKind::DistanceRamp(r) => Some((r.h_min, r.h_max)),
            SizeKind::CompositeMin(v) => v.iter().try_fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
                k.bounds().map(|(a, b)| (lo.min(a), hi.max(b)))
            }),
            SizeKind::Custom(_) => None,
        }
    }

    fn validate(&self) -> Result<(), SizeFieldError> {
        let bad = |m: &str| Err(SizeFieldError::InvalidParameters(m.to_string()));
        match self {
            SizeKind::Uniform(h) if !(h.is_finite() && *h > 0.0) => bad("h must be positive"),
            SizeKind::DistanceRamp(r) => {
                if !(r.h_min > 0.0 && r.h_min <= r.h_max && r.h_max.is_finite()) {
                    bad("need 0 < h_min <= h_max")
                } else if !(r.d_min >= 0.0 && r.d_min < r.d_max && r.d_max.is_finite()) {
                    bad("need 0 <= d_min < d_max")
                } else {
                    Ok(())
                }
            }
            SizeKind::CompositeMin(v) if v.is_empty() => bad("empty composite"),
            SizeKind::CompositeMin(v) => v.iter().try_for_each(SizeKind::validate),
            _ => Ok(()),
        }
    }
}

/// Size function with an evaluation counter.
#[derive(Debug)]
pub struct SizeField {
    kind: SizeKind,
    evals: AtomicU64,
}

impl Clone for SizeField {
    fn clone(&self) -> Self {
        SizeField { kind: self.kind.clone(), evals: AtomicU64::new(0) }
    }
}

impl SizeField {
    pub fn new(kind: SizeKind) -> Result<SizeField, SizeFieldError> {
        kind.validate()?;
        Ok(SizeField { kind, evals: AtomicU64::new(0) })
    }

    pub fn uniform(h: f64) -> Result<SizeField, SizeFieldError> {
        SizeField::new(SizeKind::Uniform(h))
    }

    pub fn distance_ramp(
        h_min: f64,
        h_max: f64,
        d_min: f64,
        d_max: f64,
        coast: Arc<CoastIndex>,
    ) -> Result<SizeField, SizeFieldError> {
        SizeField::new(SizeKind::DistanceRamp(DistanceRamp { h_min, h_max, d_min, d_max, coast }))
    }

    pub fn custom<F: SizeFunction + 'static>(f: F) -> SizeField {
        SizeField { kind: SizeKind::Custom(Arc::new(f)), evals: AtomicU64::new(0) }
    }

    pub fn kind(&self) -> &SizeKind {
        &self.kind
    }

    /// Target edge length at `x`.
    pub fn eval(&self, x: &UnitPoint) -> f64 {
        self.evals.fetch_add(1, Ordering::Relaxed);
        self.kind.eval(x)
    }

    /// Number of evaluations so far.
    pub fn eval_count(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    pub fn reset_count(&self) {
        self.evals.store(0, Ordering::Relaxed);
    }

    /// Smallest and largest value the field can take, when known.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.kind.bounds()
    }
}
