//! Synthetic coastlines used by tests, benchmarks and examples.
//!
//! All shapes are laid out in the tangent plane of [`fixture_frame`] and
//! mapped to the sphere by the exponential map, so lengths in the plane are
//! arc lengths from the frame origin.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::geomodel::Polylines;
use crate::predicates::{to_unit_sphere, TangentFrame, UnitPoint};
use crate::sizefield::{CoastIndex, SizeField};

/// Frame at 20°E 58.5°N.
pub fn fixture_frame() -> TangentFrame {
    TangentFrame::at(to_unit_sphere(20.0, 58.5).expect("valid coordinates"))
}

fn arc(f: &TangentFrame, cx: f64, cy: f64, r: f64, from: f64, to: f64, spacing: f64) -> Vec<UnitPoint> {
    let n = ((to - from).abs() * r / spacing).ceil().max(1.0) as usize;
    (0..n)
        .map(|k| {
            let a = from + (to - from) * k as f64 / n as f64;
            f.point(cx + r * a.cos(), cy + r * a.sin())
        })
        .collect()
}

fn line(f: &TangentFrame, x0: f64, y0: f64, x1: f64, y1: f64, spacing: f64) -> Vec<UnitPoint> {
    let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let n = (len / spacing).ceil().max(1.0) as usize;
    (0..n)
        .map(|k| {
            let s = k as f64 / n as f64;
            f.point(x0 + s * (x1 - x0), y0 + s * (y1 - y0))
        })
        .collect()
}

/// Centres of the two basins of [`two_basins`].
pub fn basin_centres(h: f64) -> [UnitPoint; 2] {
    let f = fixture_frame();
    [f.point(-8.0 * h, 0.0), f.point(8.0 * h, 0.0)]
}

/// Two round basins of radius `5h`, centred `16h` apart and joined by a
/// straight channel of the given width, as one closed coastline sampled
/// every `spacing`. With `island`, a small island of diameter `0.4h` sits
/// in the left basin.
pub fn two_basins(h: f64, width: f64, island: bool, spacing: f64) -> Polylines {
    let f = fixture_frame();
    let (d, r) = (8.0 * h, 5.0 * h);
    let half = width / 2.0;
    let t0 = (half / r).asin();
    let x_left = -d + r * t0.cos();
    let x_right = d - r * t0.cos();
    let mut pts = arc(&f, -d, 0.0, r, t0, 2.0 * PI - t0, spacing);
    pts.extend(line(&f, x_left, -half, x_right, -half, spacing));
    pts.extend(arc(&f, d, 0.0, r, PI + t0, 3.0 * PI - t0, spacing));
    pts.extend(line(&f, x_right, half, x_left, half, spacing));
    let mut lines = Polylines::new();
    lines.push(&pts, true, "basins");
    if island {
        let isl = arc(&f, -d, 2.5 * h, 0.2 * h, 0.0, 2.0 * PI, 0.2 * h * 2.0 * PI / 8.0);
        lines.push(&isl, true, "island");
    }
    lines
}

/// Two concentric circles around the frame origin, sampled every `0.2h`.
pub fn annulus(h: f64, r_in: f64, r_out: f64) -> Polylines {
    let f = fixture_frame();
    let mut lines = Polylines::new();
    lines.push(&arc(&f, 0.0, 0.0, r_in, 0.0, 2.0 * PI, 0.2 * h), true, "inner");
    lines.push(&arc(&f, 0.0, 0.0, r_out, 0.0, 2.0 * PI, 0.2 * h), true, "outer");
    lines
}

/// A circular coastline of the given radius around the frame origin,
/// sampled every `0.2h`, and a seed at its centre.
pub fn cap(h: f64, radius: f64) -> (Polylines, UnitPoint) {
    let f = fixture_frame();
    let mut lines = Polylines::new();
    lines.push(&arc(&f, 0.0, 0.0, radius, 0.0, 2.0 * PI, 0.2 * h), true, "cap");
    (lines, f.origin)
}

/// Distance ramp from `h_min` at the coast to `5 h_min` at `10 h_min`.
pub fn ramp_field(lines: &Polylines, h_min: f64) -> SizeField {
    let idx = Arc::new(CoastIndex::new(&lines.pool).expect("non-empty coastline"));
    SizeField::distance_ramp(h_min, 5.0 * h_min, 0.0, 10.0 * h_min, idx).expect("valid ramp")
}
