//! Acceptance criteria, one PASS/FAIL line each.
//!
//! The criteria run one after another in a single test so that their
//! runtime limits are measured without competing tests. Lines are written
//! straight to stdout and show up even when output is captured.

mod common;

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spheremesh::fixtures;
use spheremesh::geomodel::{coarsen, flood_fill_water, refine_input_edges, triangulate_polylines, Polylines, DEFAULT_INSET};
use spheremesh::kernel::{delaunay_from_points, SphericalMesh};
use spheremesh::onedim::{adaptive_density, build_density_table, subdivide, DEFAULT_EPS};
use spheremesh::parkernel::delaunay_parallel;
use spheremesh::pipeline::{run_pipeline, run_stages, Artifact, Mode, PipelineConfig, PipelineReport, SizeSpec};
use spheremesh::predicates::{orient3d_raw, UnitPoint};
use spheremesh::sampling::{random_sphere_point, random_sphere_points};
use spheremesh::sizefield::{arc_to_metres, SizeField};

const AREA_TOL: f64 = 1e-9;
const MAX_VIOLATIONS: usize = 0;
const EPS_LINEAR: f64 = 0.05;
const FRUGALITY: f64 = 0.25;
const BAND: (f64, f64) = (0.4, 1.5);
const BAND_SHARE: f64 = 0.95;
const EDGE_CAP: f64 = 2.0;
const MAX_ITERATIONS: usize = 12;
const FRONT_SHARE: f64 = 0.6;
const MIN_SPEEDUP: f64 = 2.0;
const MIN_CORES: usize = 4;
const MIN_SERIAL_RATE: f64 = 1e5;

enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

struct Line {
    verdict: Verdict,
    detail: String,
}

fn check(ok: bool, detail: String) -> Line {
    Line { verdict: if ok { Verdict::Pass } else { Verdict::Fail }, detail }
}

fn report(id: &str, line: &Line) {
    let tag = match line.verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::NotApplicable => "N/A ",
    };
    let mut out = std::io::stdout().lock();
    writeln!(out, "{tag} criterion {id}: {}", line.detail).unwrap();
    out.flush().unwrap();
}

fn within(limit: f64, start: Instant) -> (bool, f64) {
    let s = start.elapsed().as_secs_f64();
    (s < limit, s)
}

/// Triangle count, area and exhaustive empty-circle check.
fn delaunay_properties(mesh: &SphericalMesh, n: usize) -> Result<(), String> {
    mesh.check_structure()?;
    let tris = mesh.live_triangle_count();
    if tris != 2 * n - 4 {
        return Err(format!("{tris} triangles for n={n}"));
    }
    let area = common::total_area(mesh);
    let rel = (area - 4.0 * std::f64::consts::PI).abs() / (4.0 * std::f64::consts::PI);
    if rel > AREA_TOL {
        return Err(format!("area off by {rel:e}"));
    }
    let mut violations = 0;
    for t in mesh.triangles.iter().filter(|t| t.is_live()) {
        let c = t.v.map(|v| mesh.point(v).coords());
        for p in &mesh.vertices {
            // Inside the circumcircle of a positive triangle: the point is
            // beneath the plane through its vertices, seen from the origin.
            if common::orient3d_filtered([c[0], c[1], c[2], p.coords()]) == spheremesh::predicates::Sign::Negative {
                violations += 1;
            }
        }
    }
    if violations > MAX_VIOLATIONS {
        return Err(format!("{violations} empty-circle violations"));
    }
    Ok(())
}

fn criterion_1() -> Line {
    let start = Instant::now();
    let mut notes = Vec::new();
    for (k, &n) in [100usize, 1000, 2000].iter().enumerate() {
        let pts = random_sphere_points(n, 100 + k as u64);
        let tri = match delaunay_from_points(&pts) {
            Ok(t) => t,
            Err(e) => return check(false, format!("n={n}: {e}")),
        };
        if let Err(e) = delaunay_properties(&tri.mesh, n) {
            return check(false, format!("n={n}: {e}"));
        }
        notes.push(format!("n={n}: {} triangles", tri.mesh.live_triangle_count()));
    }
    let (fast, s) = within(5.0, start);
    check(fast, format!("{}; {s:.2} s (limit 5 s)", notes.join(", ")))
}

/// Quadruples mixing general position, near-coplanar and exactly
/// degenerate configurations.
fn quadruple<R: Rng>(rng: &mut R) -> [[f64; 3]; 4] {
    let p = |rng: &mut R| random_sphere_point(rng).coords();
    match rng.gen_range(0..10) {
        0..=4 => [p(rng), p(rng), p(rng), p(rng)],
        5 | 6 => {
            // Affine combination of three points, rounded.
            let (a, b, c) = (p(rng), p(rng), p(rng));
            let (s, t) = (rng.gen::<f64>(), rng.gen::<f64>());
            let d = [0, 1, 2].map(|k| a[k] + s * (b[k] - a[k]) + t * (c[k] - a[k]));
            [a, b, c, d]
        }
        7 => {
            // A repeated point or the origin with two antipodes.
            let (a, b) = (p(rng), p(rng));
            if rng.gen() {
                [a, b, a, p(rng)]
            } else {
                [a, a.map(|v| -v), b, [0.0; 3]]
            }
        }
        8 => {
            // Nudged by one ulp off the plane of three others.
            let (a, b, c) = (p(rng), p(rng), p(rng));
            let mut d = [0, 1, 2].map(|k| 0.5 * (a[k] + b[k]));
            let k = rng.gen_range(0..3);
            d[k] = if rng.gen() { next_up(d[k]) } else { next_down(d[k]) };
            [a, b, c, d]
        }
        _ => {
            // Small integer lattice, often coplanar.
            let mut q = || [0, 1, 2].map(|_| rng.gen_range(-2i32..=2) as f64 * 0.25);
            [q(), q(), q(), q()]
        }
    }
}

fn next_up(v: f64) -> f64 {
    if v == 0.0 {
        f64::from_bits(1)
    } else if v > 0.0 {
        f64::from_bits(v.to_bits() + 1)
    } else {
        f64::from_bits(v.to_bits() - 1)
    }
}

fn next_down(v: f64) -> f64 {
    -next_up(-v)
}

fn criterion_2() -> Line {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0usize;
    let mut zeros = 0usize;
    for _ in 0..1_000_000 {
        let q = quadruple(&mut rng);
        let exact = common::orient3d_exact(q);
        if exact == spheremesh::predicates::Sign::Zero {
            zeros += 1;
        }
        if orient3d_raw(q[0], q[1], q[2], q[3]) != exact {
            mismatches += 1;
        }
    }
    let (fast, s) = within(60.0, start);
    check(
        mismatches == 0 && fast,
        format!("{mismatches} sign mismatches in 10^6 quadruples ({zeros} exactly degenerate); {s:.1} s (limit 60 s)"),
    )
}

fn sorted_vertices(mesh: &SphericalMesh) -> Vec<[u64; 3]> {
    let mut v: Vec<[u64; 3]> = mesh.vertices.iter().map(|p| p.coords().map(f64::to_bits)).collect();
    v.sort_unstable();
    v
}

/// Count, area, structure and local empty-circle checks; the exhaustive
/// check is quadratic and out of reach at this size.
fn large_properties(mesh: &SphericalMesh, n: usize) -> Result<(), String> {
    mesh.check_structure()?;
    if mesh.live_triangle_count() != 2 * n - 4 {
        return Err(format!("{} triangles", mesh.live_triangle_count()));
    }
    let rel = (common::total_area(mesh) / (4.0 * std::f64::consts::PI) - 1.0).abs();
    if rel > AREA_TOL {
        return Err(format!("area off by {rel:e}"));
    }
    let v = mesh.local_delaunay_violations();
    if v > 0 {
        return Err(format!("{v} local violations"));
    }
    Ok(())
}

fn criterion_3() -> Line {
    let n = 1_000_000;
    let pts = random_sphere_points(n, 3);
    let t0 = Instant::now();
    let serial = match delaunay_parallel(&pts, 1) {
        Ok(t) => t,
        Err(e) => return check(false, format!("M=1: {e}")),
    };
    let t_serial = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let par = match delaunay_parallel(&pts, 4) {
        Ok(t) => t,
        Err(e) => return check(false, format!("M=4: {e}")),
    };
    let t_par = t1.elapsed().as_secs_f64();
    let same = sorted_vertices(&serial.mesh) == sorted_vertices(&par.mesh);
    let props = large_properties(&serial.mesh, n).and_then(|_| large_properties(&par.mesh, n));
    let rate = n as f64 / t_serial;
    let speedup = t_serial / t_par;
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    let mut detail = format!(
        "vertex sets {}, properties {}, serial {rate:.0} pts/s (min {MIN_SERIAL_RATE:.0}), speedup {speedup:.2} on {cores} cores",
        if same { "identical" } else { "differ" },
        match &props {
            Ok(()) => "ok".to_string(),
            Err(e) => e.clone(),
        },
    );
    let hard = same && props.is_ok() && rate >= MIN_SERIAL_RATE;
    if cores < MIN_CORES {
        detail += &format!("; speedup gate needs {MIN_CORES} cores, not applicable");
        return Line { verdict: if hard { Verdict::NotApplicable } else { Verdict::Fail }, detail };
    }
    check(hard && speedup >= MIN_SPEEDUP, detail + &format!(" (min {MIN_SPEEDUP})"))
}

fn criterion_4() -> Line {
    let start = Instant::now();
    // Linear size: closed form L ln(h2/h1) / (h2 - h1).
    let mut worst: f64 = 0.0;
    for &(len, h1, h2) in &[(1.0, 0.01, 0.05), (0.3, 0.02, 0.002), (2.0, 0.1, 0.1001), (0.5, 0.004, 0.04)] {
        let t = adaptive_density(len, DEFAULT_EPS, |u| h1 + u * (h2 - h1)).unwrap();
        let exact = len * (h2 / h1).ln() / (h2 - h1);
        worst = worst.max((t.total() - exact).abs() / exact);
    }
    // Distance ramp away from a straight coast. K counts the points of the
    // piecewise-linear table, as in the algorithm's output; the evaluation
    // count is always 2K - 1.
    let h = 0.002;
    let f = fixtures::fixture_frame();
    let mut coast = Polylines::new();
    let pts: Vec<UnitPoint> = (0..=400).map(|k| f.point(-40.0 * h + 0.2 * h * k as f64, 0.0)).collect();
    coast.push(&pts, false, "coast");
    let field = fixtures::ramp_field(&coast, h);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut edges, mut max_ratio, mut max_evals) = (0, 0.0f64, 0.0f64);
    let mut near_93 = None;
    while edges < 200 {
        let (x0, y0) = (rng.gen_range(-20.0..20.0) * h, rng.gen_range(0.0..10.0) * h);
        let a: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let l = rng.gen_range(20.0..300.0) * h;
        let (p, q) = (f.point(x0, y0), f.point(x0 + l * a.cos(), y0 + l * a.sin()));
        let t = build_density_table(&p, &q, &field, DEFAULT_EPS).unwrap();
        let n = t.subdivisions();
        if n < 60 {
            continue;
        }
        edges += 1;
        let k = t.entries.len();
        assert_eq!(t.evaluations, 2 * k - 1);
        max_ratio = max_ratio.max(k as f64 / n as f64);
        max_evals = max_evals.max(t.evaluations as f64 / n as f64);
        if near_93.is_none() && (88..=98).contains(&n) {
            near_93 = Some((k, n));
        }
    }
    let (fast, s) = within(1.0, start);
    check(
        worst <= EPS_LINEAR && max_ratio <= FRUGALITY && fast,
        format!(
            "linear-field error {:.2e} (tol {EPS_LINEAR}); max K/N {max_ratio:.3} over {edges} ramp edges with N>=60 (limit {FRUGALITY}), max evaluations/N {max_evals:.3}{}; {s:.3} s (limit 1 s)",
            worst,
            near_93.map_or(String::new(), |(k, n)| format!(", e.g. K={k} for N={n}")),
        ),
    )
}

fn criterion_5() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for _ in 0..1000 {
        let len = rng.gen_range(0.01..1.0);
        let (h1, h2) = (rng.gen_range(0.002..0.05), rng.gen_range(0.002..0.05));
        let (amp, freq) = (rng.gen_range(0.0..0.5), rng.gen_range(0.5..4.0));
        let t = adaptive_density(len, DEFAULT_EPS, |u| {
            (h1 + u * (h2 - h1)) * (1.0 + amp * (std::f64::consts::TAU * freq * u).sin().powi(2))
        })
        .unwrap();
        let total = t.total();
        let n = total.ceil() as usize;
        let ts = subdivide(&t);
        if t.subdivisions() != n.max(1) || ts.len() + 1 != n.max(1) || ts.windows(2).any(|w| w[0] >= w[1]) {
            bad += 1;
            continue;
        }
        for (j, &u) in ts.iter().enumerate() {
            let target = (j + 1) as f64 * total / n as f64;
            worst = worst.max((t.delta_at(u) - target).abs() / total);
        }
    }
    let example = adaptive_density(92.12, DEFAULT_EPS, |_| 1.0).unwrap();
    let n93 = example.subdivisions();
    check(
        bad == 0 && worst < 1e-12 && n93 == 93 && subdivide(&example).len() == 92,
        format!("{bad} bad tables of 1000, worst relative delta(t_j) error {worst:.1e}; delta(1)=92.12 gives N={n93}"),
    )
}

fn fill_reaches(lines: &Polylines, from: &UnitPoint, to: &UnitPoint, h: &SizeField) -> bool {
    let refined = refine_input_edges(lines, h);
    let mesh = triangulate_polylines(&refined, 1).unwrap();
    let fill = flood_fill_water(&mesh, std::slice::from_ref(from), h).unwrap();
    let loc = mesh.locate(mesh.first_live().unwrap(), to).unwrap();
    fill[loc.triangle as usize]
}

fn criterion_6() -> Line {
    let start = Instant::now();
    let h = 0.01;
    let field = SizeField::uniform(h).unwrap();
    let [left, right] = fixtures::basin_centres(h);
    let narrow = fixtures::two_basins(h, 0.3 * h, false, 0.2 * h);
    let wide = fixtures::two_basins(h, 3.0 * h, false, 0.2 * h);
    let split = !fill_reaches(&narrow, &left, &right, &field);
    let joined = fill_reaches(&wide, &left, &right, &field);
    let with_island = fixtures::two_basins(h, 3.0 * h, true, 0.2 * h);
    let mut simple = Ok(());
    let mut islands = 0;
    for (lines, seeds) in [(&narrow, vec![left, right]), (&wide, vec![left]), (&with_island, vec![left])] {
        match coarsen(lines, &seeds, &field, 1, DEFAULT_INSET) {
            Ok((dom, rep)) => {
                islands += rep.extract.islands_removed;
                simple = simple.and(common::loops_are_simple(&dom.loops));
            }
            Err(e) => simple = Err(e.to_string()),
        }
    }
    let (fast, s) = within(10.0, start);
    check(
        split && joined && islands == 1 && simple.is_ok() && fast,
        format!(
            "0.3h channel {}, 3h channel {}, islands removed {islands}, loops {}; {s:.2} s (limit 10 s)",
            if split { "closed" } else { "open" },
            if joined { "open" } else { "closed" },
            simple.err().unwrap_or_else(|| "simple".into()),
        ),
    )
}

/// Adimensional lengths of all water edges by quadrature.
fn edge_lengths(mesh: &SphericalMesh, h: &SizeField) -> Vec<f64> {
    common::water_edges(mesh).iter().map(|(a, b)| common::adimensional_length(a, b, h, 64)).collect()
}

struct Quality {
    share: f64,
    longest: f64,
    edges: usize,
}

fn quality(mesh: &SphericalMesh, h: &SizeField) -> Quality {
    let lens = edge_lengths(mesh, h);
    let good = lens.iter().filter(|l| (BAND.0..=BAND.1).contains(*l)).count();
    Quality {
        share: good as f64 / lens.len().max(1) as f64,
        longest: lens.iter().copied().fold(0.0, f64::max),
        edges: lens.len(),
    }
}

fn ramp_spec(h: f64) -> SizeSpec {
    SizeSpec::Ramp { h_min_m: arc_to_metres(h), h_max_m: arc_to_metres(5.0 * h), d_min_m: 0.0, d_max_m: arc_to_metres(10.0 * h) }
}

fn criterion_7() -> Line {
    let h = 0.01;
    let (lines, seed) = fixtures::cap(h, 50.0 * h);
    let cfg = PipelineConfig { seeds: vec![seed.to_lonlat()], size: Some(ramp_spec(h)), ..PipelineConfig::default() };
    let mut rep = PipelineReport::default();
    let (mesh, field) = match run_stages(&lines, &PipelineConfig { inputs: vec!["cap".into()], output: Some("cap.msh".into()), ..cfg }, &mut rep) {
        Ok(Artifact::Mesh { mesh, field, .. }) => (mesh, field),
        Ok(_) => return check(false, "no mesh produced".into()),
        Err(e) => return check(false, e.to_string()),
    };
    let q = quality(&mesh, &field);
    let productive = rep.iterations.iter().filter(|s| s.inserted > 0).count();
    let total: usize = rep.iterations.iter().map(|s| s.inserted).sum();
    let first_two: usize = rep.iterations.iter().take(2).map(|s| s.inserted).sum();
    let front = first_two as f64 / total.max(1) as f64;
    check(
        rep.converged && q.share >= BAND_SHARE && q.longest <= EDGE_CAP && productive <= MAX_ITERATIONS && front >= FRONT_SHARE,
        format!(
            "{:.1}% of {} water edges in [{}, {}] (min {}%), longest {:.2} (max {EDGE_CAP}), converged after {productive} inserting iterations (max {MAX_ITERATIONS}), {:.0}% of {total} points in the first two (min {}%)",
            100.0 * q.share,
            q.edges,
            BAND.0,
            BAND.1,
            100.0 * BAND_SHARE,
            q.longest,
            100.0 * front,
            100.0 * FRONT_SHARE,
        ),
    )
}

fn write_poly(path: &std::path::Path, lines: &Polylines) {
    let mut s = String::new();
    for (i, l) in lines.lines.iter().enumerate() {
        s += &format!("poly {} {}\n", l.tag, u8::from(l.closed));
        for p in lines.line_points(i) {
            let (lon, lat) = p.to_lonlat();
            s += &format!("{lon:?} {lat:?}\n");
        }
    }
    std::fs::write(path, s).unwrap();
}

/// Stand-in for a coastline export: both basins joined by a channel, with
/// an island, under the ramp field.
fn basin_config(dir: &std::path::Path, out: &str) -> PipelineConfig {
    let h = 0.01;
    let input = dir.join("basins.poly");
    write_poly(&input, &fixtures::two_basins(h, 3.0 * h, true, 0.2 * h));
    PipelineConfig {
        inputs: vec![input],
        seeds: vec![fixtures::basin_centres(h)[0].to_lonlat()],
        size: Some(ramp_spec(h)),
        threads: 1,
        output: Some(dir.join(out)),
        mode: Mode::Full,
        ..PipelineConfig::default()
    }
}

fn criterion_8() -> Line {
    let dir = tempfile::tempdir().unwrap();
    let cfg = basin_config(dir.path(), "basins.msh");
    let wall = Instant::now();
    let report = match run_pipeline(&cfg) {
        Ok(r) => r,
        Err(e) => return check(false, e.to_string()),
    };
    let wall = wall.elapsed().as_secs_f64();
    let timing_ok = !report.stages.is_empty() && (report.stage_sum() - wall).abs() <= 0.05 * wall;
    let lines = spheremesh::io::read_polylines(&cfg.inputs[0]).unwrap();
    let mut rep = PipelineReport::default();
    let Ok(Artifact::Mesh { mesh, field, boundary }) = run_stages(&lines, &cfg, &mut rep) else {
        return check(false, "stages failed on re-run".into());
    };
    let v = mesh.vertices.len();
    let euler = mesh.check_structure().is_ok() && mesh.live_triangle_count() == 2 * v - 4;
    let area = (common::total_area(&mesh) / (4.0 * std::f64::consts::PI) - 1.0).abs() <= AREA_TOL;
    let delaunay = mesh.local_delaunay_violations() == 0;
    let simple = common::loops_are_simple(&boundary.loops).is_ok();
    let q = quality(&mesh, &field);
    let band = q.share >= BAND_SHARE && q.longest <= EDGE_CAP;
    check(
        timing_ok && euler && area && delaunay && simple && band,
        format!(
            "synthetic coastline: {} stages summing to {:.3} s of {wall:.3} s wall, {} water triangles; structure {euler}, area {area}, Delaunay {delaunay}, loops simple {simple}, band {:.1}% / longest {:.2}",
            report.stages.len(),
            report.stage_sum(),
            report.water_triangles,
            100.0 * q.share,
            q.longest,
        ),
    )
}

fn criterion_9() -> Line {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for name in ["a.msh", "b.msh", "a.vtk", "b.vtk"] {
        let cfg = basin_config(dir.path(), name);
        if let Err(e) = run_pipeline(&cfg) {
            return check(false, e.to_string());
        }
        files.push(std::fs::read(cfg.output.unwrap()).unwrap());
    }
    let same = files[0] == files[1] && files[2] == files[3] && !files[0].is_empty();
    check(same, format!("two M=1 runs {} (msh {} bytes)", if same { "byte-identical" } else { "differ" }, files[0].len()))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Line); 9] = [
        ("1 (Delaunay correctness)", criterion_1),
        ("2 (predicate exactness)", criterion_2),
        ("3 (parallel equivalence and speedup)", criterion_3),
        ("4 (size integration accuracy and frugality)", criterion_4),
        ("5 (subdivision exactness)", criterion_5),
        ("6 (channel coarsening)", criterion_6),
        ("7 (refinement quality)", criterion_7),
        ("8 (benchmark recipe on a synthetic coastline)", criterion_8),
        ("9 (determinism)", criterion_9),
    ];
    let mut failed = Vec::new();
    for (id, run) in criteria {
        let line = run();
        report(id, &line);
        if matches!(line.verdict, Verdict::Fail) {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
