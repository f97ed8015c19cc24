//! Checks on a user-supplied coastline, skipped unless asked for:
//!
//! ```text
//! SPHEREMESH_COAST=baltic.geojson SPHEREMESH_SEED=20.0,58.5 \
//! SPHEREMESH_SIZE_M=1500,30000,0,100000 \
//! cargo test --release -p spheremesh-core --test recipe -- --ignored --nocapture
//! ```
//!
//! `SPHEREMESH_SIZE_M` is `h_min,h_max,d_min,d_max` in metres, or a single
//! uniform size.

mod common;

use std::time::Instant;

use spheremesh::io::read_polylines;
use spheremesh::parkernel::default_threads;
use spheremesh::pipeline::{run_stages, Artifact, PipelineConfig, PipelineReport, SizeSpec};

fn env(name: &str) -> String {
    std::env::var(name).unwrap_or_else(|_| panic!("{name} is not set"))
}

fn numbers(s: &str) -> Vec<f64> {
    s.split(',').map(|v| v.trim().parse().expect("a number")).collect()
}

#[test]
#[ignore = "needs a coastline export, see the module docs"]
fn user_coastline() {
    let coast = env("SPHEREMESH_COAST");
    let seed = numbers(&env("SPHEREMESH_SEED"));
    let size = match numbers(&env("SPHEREMESH_SIZE_M"))[..] {
        [h_m] => SizeSpec::Uniform { h_m },
        [h_min_m, h_max_m, d_min_m, d_max_m] => SizeSpec::Ramp { h_min_m, h_max_m, d_min_m, d_max_m },
        _ => panic!("SPHEREMESH_SIZE_M takes one or four values"),
    };
    let cfg = PipelineConfig {
        inputs: vec![coast.clone().into()],
        seeds: vec![(seed[0], seed[1])],
        size: Some(size),
        threads: default_threads(),
        output: Some("unused.msh".into()),
        ..PipelineConfig::default()
    };
    let start = Instant::now();
    let lines = read_polylines(coast.as_ref()).unwrap();
    let mut report = PipelineReport::default();
    let Artifact::Mesh { mesh, field, boundary } = run_stages(&lines, &cfg, &mut report).unwrap() else {
        unreachable!()
    };
    let wall = start.elapsed().as_secs_f64();
    for s in &report.stages {
        println!("{}", serde_json::json!({ "stage": s.stage, "seconds": s.seconds }));
    }
    println!("{} water triangles, {} vertices, {wall:.2} s", report.water_triangles, report.vertices);

    mesh.check_structure().unwrap();
    assert_eq!(mesh.live_triangle_count(), 2 * mesh.vertices.len() - 4);
    let area = common::total_area(&mesh) / (4.0 * std::f64::consts::PI);
    assert!((area - 1.0).abs() < 1e-9, "area ratio {area}");
    assert_eq!(mesh.local_delaunay_violations(), 0);
    assert!(spheremesh::geomodel::find_intersections(&boundary.loops).is_empty());
    let lens: Vec<f64> = common::water_edges(&mesh)
        .iter()
        .map(|(a, b)| common::adimensional_length(a, b, &field, 16))
        .collect();
    let good = lens.iter().filter(|l| (0.4..=1.5).contains(*l)).count() as f64 / lens.len() as f64;
    let longest = lens.iter().copied().fold(0.0, f64::max);
    println!("{:.1}% of edges in [0.4, 1.5], longest {longest:.2}", 100.0 * good);
    assert!(good >= 0.95 && longest <= 2.0);
}
