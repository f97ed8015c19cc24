//! End-to-end driver: coastline files in, mesh file out.
//!
//! Stages run in a fixed order and each is timed. Errors carry the name of
//! the stage that failed.

use std::error::Error as StdError;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::geomodel::{
    extract_coarse_boundary, flood_fill_water, inset_boundary, refine_input_edges, triangulate_polylines, CoarseDomain,
    Polylines, DEFAULT_INSET,
};
use crate::io::{read_polylines, write_boundary, write_mesh, MeshFormat, MeshOutput};
use crate::kernel::SphericalMesh;
use crate::onedim::{build_empty_mesh, discretize_boundary, mark_water, DEFAULT_EPS};
use crate::predicates::{to_unit_sphere, UnitPoint};
use crate::refine::{refine_loop, smooth, IterationStats, RefineParams, DEFAULT_BETA, DEFAULT_MAX_ITER, DEFAULT_SMOOTHING_PASSES};
use crate::sizefield::{metres_to_arc, CoastIndex, SizeField};

/// Size field parameters, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SizeSpec {
    Uniform { h_m: f64 },
    Ramp { h_min_m: f64, h_max_m: f64, d_min_m: f64, d_max_m: f64 },
}

impl SizeSpec {
    /// The field with sizes and distances converted to arc length.
    pub fn field(&self, coast: &[UnitPoint]) -> Result<SizeField, String> {
        match *self {
            SizeSpec::Uniform { h_m } => SizeField::uniform(metres_to_arc(h_m)).map_err(|e| e.to_string()),
            SizeSpec::Ramp { h_min_m, h_max_m, d_min_m, d_max_m } => {
                let idx = CoastIndex::new(coast).map_err(|e| e.to_string())?;
                SizeField::distance_ramp(
                    metres_to_arc(h_min_m),
                    metres_to_arc(h_max_m),
                    metres_to_arc(d_min_m),
                    metres_to_arc(d_max_m),
                    Arc::new(idx),
                )
                .map_err(|e| e.to_string())
            }
        }
    }

    fn check(&self) -> Result<(), ConfigError> {
        let bad = |what: &str| Err(ConfigError::Invalid(what.to_string()));
        match *self {
            SizeSpec::Uniform { h_m } if !(h_m.is_finite() && h_m > 0.0) => bad("h_m must be positive"),
            SizeSpec::Ramp { h_min_m, h_max_m, d_min_m, d_max_m } => {
                if !(h_min_m.is_finite() && h_min_m > 0.0 && h_max_m.is_finite() && h_max_m >= h_min_m) {
                    bad("need 0 < h_min_m <= h_max_m")
                } else if !(d_min_m.is_finite() && d_min_m >= 0.0 && d_max_m.is_finite() && d_max_m > d_min_m) {
                    bad("need 0 <= d_min_m < d_max_m")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    /// Stop after the inset and write the boundary loops.
    CoarsenOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    /// Water seeds as (lon, lat) in degrees.
    pub seeds: Vec<(f64, f64)>,
    pub size: Option<SizeSpec>,
    pub eps: f64,
    pub threads: usize,
    pub output: Option<PathBuf>,
    pub mode: Mode,
    pub keep_land: bool,
    pub inset_fraction: f64,
    pub beta: f64,
    pub max_iter: usize,
    pub smoothing_passes: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: Vec::new(),
            seeds: Vec::new(),
            size: None,
            eps: DEFAULT_EPS,
            threads: 1,
            output: None,
            mode: Mode::Full,
            keep_land: false,
            inset_fraction: DEFAULT_INSET,
            beta: DEFAULT_BETA,
            max_iter: DEFAULT_MAX_ITER,
            smoothing_passes: DEFAULT_SMOOTHING_PASSES,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("no input file given")]
    MissingInput,
    #[error("no water seed given")]
    MissingSeed,
    #[error("no size field given")]
    MissingSize,
    #[error("no output path given")]
    MissingOutput,
    #[error("invalid seed {0:?}")]
    InvalidSeed((f64, f64)),
    #[error("unknown mesh format for {0} (use .msh or .vtk)")]
    UnknownMeshFormat(PathBuf),
    #[error("{0}")]
    Invalid(String),
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.inputs.is_empty() {
            return Err(ConfigError::MissingInput);
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::MissingSeed);
        }
        for &s in &self.seeds {
            if to_unit_sphere(s.0, s.1).is_err() || s.1.abs() > 90.0 {
                return Err(ConfigError::InvalidSeed(s));
            }
        }
        self.size.ok_or(ConfigError::MissingSize)?.check()?;
        let output = self.output.as_ref().ok_or(ConfigError::MissingOutput)?;
        if self.mode == Mode::Full && MeshFormat::from_path(output).is_none() {
            return Err(ConfigError::UnknownMeshFormat(output.clone()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(ConfigError::Invalid("eps must lie in (0, 1)".into()));
        }
        if self.threads == 0 {
            return Err(ConfigError::Invalid("threads must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&self.inset_fraction) {
            return Err(ConfigError::Invalid("inset fraction must lie in [0, 0.5)".into()));
        }
        if !(self.beta < 1.0) {
            return Err(ConfigError::Invalid("beta must be below 1".into()));
        }
        Ok(())
    }

    pub fn seed_points(&self) -> Result<Vec<UnitPoint>, ConfigError> {
        self.seeds
            .iter()
            .map(|&(lon, lat)| to_unit_sphere(lon, lat).map_err(|_| ConfigError::InvalidSeed((lon, lat))))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<dyn StdError + Send + Sync>,
    },
}

impl PipelineError {
    fn stage<E: Into<Box<dyn StdError + Send + Sync>>>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
        move |e| PipelineError::Stage { stage, source: e.into() }
    }

    /// 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: &'static str,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PipelineReport {
    pub stages: Vec<StageTiming>,
    pub iterations: Vec<IterationStats>,
    pub converged: bool,
    pub input_points: usize,
    pub boundary_loops: usize,
    pub islands_removed: usize,
    pub boundary_points: usize,
    pub vertices: usize,
    pub water_triangles: usize,
    pub smoothing_moves: usize,
    pub total_seconds: f64,
}

impl PipelineReport {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let seconds = start.elapsed().as_secs_f64();
        log::info!("stage {stage}: {seconds:.3} s");
        self.stages.push(StageTiming { stage, seconds });
        out
    }

    pub fn stage_sum(&self) -> f64 {
        self.stages.iter().map(|s| s.seconds).sum()
    }
}

/// What the stages produced.
#[derive(Debug, Clone)]
pub enum Artifact {
    Boundary(CoarseDomain),
    Mesh { mesh: SphericalMesh, field: SizeField, boundary: CoarseDomain },
}

/// Runs every stage after ingest on the given coastlines.
pub fn run_stages(lines: &Polylines, cfg: &PipelineConfig, report: &mut PipelineReport) -> Result<Artifact, PipelineError> {
    cfg.validate()?;
    let seeds = cfg.seed_points()?;
    let spec = cfg.size.expect("validated");
    let threads = cfg.threads;
    report.input_points = lines.pool.len();

    let coarse_h = report.time("size_field_raw", || spec.field(&lines.pool)).map_err(PipelineError::stage("size_field_raw"))?;
    let refined = report.time("refine_input_edges", || refine_input_edges(lines, &coarse_h));
    let all = report
        .time("triangulate_points", || triangulate_polylines(&refined, threads))
        .map_err(PipelineError::stage("triangulate_points"))?;
    let fill = report
        .time("flood_fill", || flood_fill_water(&all, &seeds, &coarse_h))
        .map_err(PipelineError::stage("flood_fill"))?;
    let (dom, extract) = report
        .time("extract_boundary", || extract_coarse_boundary(&all, &fill, &seeds, &coarse_h))
        .map_err(PipelineError::stage("extract_boundary"))?;
    report.boundary_loops = dom.loops.len();
    report.islands_removed = extract.islands_removed;
    let (dom, _) = report
        .time("inset_boundary", || inset_boundary(&dom, &coarse_h, cfg.inset_fraction))
        .map_err(PipelineError::stage("inset_boundary"))?;
    drop(all);
    if cfg.mode == Mode::CoarsenOnly {
        return Ok(Artifact::Boundary(dom));
    }

    let coast: Vec<UnitPoint> = dom.loops.iter().flatten().copied().collect();
    let h = report.time("size_field", || spec.field(&coast)).map_err(PipelineError::stage("size_field"))?;
    let boundary = report
        .time("discretize_boundary", || discretize_boundary(&dom.loops, &h, cfg.eps))
        .map_err(PipelineError::stage("discretize_boundary"))?;
    report.boundary_points = boundary.points.len();
    let mut cm = report
        .time("build_empty_mesh", || {
            let mut cm = build_empty_mesh(&boundary, threads)?;
            mark_water(&mut cm, &seeds)?;
            Ok::<_, crate::onedim::OneDimError>(cm)
        })
        .map_err(PipelineError::stage("build_empty_mesh"))?;
    let params = RefineParams { eps: cfg.eps, beta: cfg.beta, max_iter: cfg.max_iter, threads };
    let refine = report.time("refine", || refine_loop(&mut cm.mesh, &h, &params));
    report.iterations = refine.iterations;
    report.converged = refine.converged;
    report.smoothing_moves = report.time("smooth", || smooth(&mut cm.mesh, cfg.smoothing_passes));
    report.vertices = cm.mesh.vertices.len();
    report.water_triangles = cm.water_triangles();
    Ok(Artifact::Mesh { mesh: cm.mesh, field: h, boundary: dom })
}

/// Reads all inputs into one polyline set.
pub fn ingest(cfg: &PipelineConfig) -> Result<Polylines, PipelineError> {
    let mut lines = Polylines::new();
    for path in &cfg.inputs {
        let part = read_polylines(path).map_err(PipelineError::stage("ingest"))?;
        for (i, l) in part.lines.iter().enumerate() {
            lines.push(&part.line_points(i), l.closed, l.tag.clone());
        }
    }
    if lines.is_empty() {
        return Err(PipelineError::Stage { stage: "ingest", source: "no polyline in the input files".into() });
    }
    Ok(lines)
}

/// Ingest, all stages, and the output file.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport, PipelineError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = PipelineReport::default();
    let lines = report.time("ingest", || ingest(cfg))?;
    let artifact = run_stages(&lines, cfg, &mut report)?;
    let output = cfg.output.as_ref().expect("validated");
    report
        .time("write", || match &artifact {
            Artifact::Boundary(dom) => write_boundary(output, dom),
            Artifact::Mesh { mesh, .. } => {
                let out = MeshOutput::from_mesh(mesh, cfg.keep_land);
                write_mesh(output, &out, MeshFormat::from_path(output).expect("validated"))
            }
        })
        .map_err(PipelineError::stage("write"))?;
    report.total_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::sizefield::arc_to_metres;

    fn poly_text(lines: &Polylines) -> String {
        let mut s = String::new();
        for (i, l) in lines.lines.iter().enumerate() {
            s += &format!("poly {} {}\n", l.tag, if l.closed { 1 } else { 0 });
            for p in lines.line_points(i) {
                let (lon, lat) = p.to_lonlat();
                s += &format!("{lon:?} {lat:?}\n");
            }
        }
        s
    }

    fn annulus_config(dir: &std::path::Path, out: &str) -> PipelineConfig {
        let h = 0.004;
        let input = dir.join("annulus.poly");
        std::fs::write(&input, poly_text(&fixtures::annulus(h, 4.0 * h, 12.0 * h))).unwrap();
        let seed = fixtures::fixture_frame().point(8.0 * h, 0.0).to_lonlat();
        PipelineConfig {
            inputs: vec![input],
            seeds: vec![seed],
            size: Some(SizeSpec::Uniform { h_m: arc_to_metres(h) }),
            output: Some(dir.join(out)),
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn missing_seed_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig { seeds: vec![], ..annulus_config(dir.path(), "m.msh") };
        let err = run_pipeline(&cfg).unwrap_err();
        assert!(matches!(err, PipelineError::Config(ConfigError::MissingSeed)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn annulus_gives_a_valid_mesh() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = annulus_config(dir.path(), "m.msh");
        let report = run_pipeline(&cfg).unwrap();
        assert!(report.converged);
        assert_eq!(report.boundary_loops, 2);
        let m = crate::io::read_mesh(cfg.output.as_ref().unwrap()).unwrap();
        assert_eq!(m.triangles.len(), report.water_triangles);
        assert!(m.regions.iter().all(|&r| r == crate::io::REGION_WATER));
        let wall = report.total_seconds;
        assert!((report.stage_sum() - wall).abs() <= 0.05 * wall);
    }

    #[test]
    fn coarsen_only_writes_boundary() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig { mode: Mode::CoarsenOnly, ..annulus_config(dir.path(), "b.geojson") };
        let report = run_pipeline(&cfg).unwrap();
        assert!(report.stages.iter().all(|s| s.stage != "refine"));
        let mut back = Polylines::new();
        let text = std::fs::read_to_string(cfg.output.unwrap()).unwrap();
        crate::io::parse_geojson(&text, "b", &mut back).unwrap();
        assert_eq!(back.lines.len(), 2);
        assert!(back.lines.iter().all(|l| l.closed));
    }

    #[test]
    fn unreadable_input_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig { inputs: vec![dir.path().join("none.poly")], ..annulus_config(dir.path(), "m.vtk") };
        match run_pipeline(&cfg).unwrap_err() {
            e @ PipelineError::Stage { stage: "ingest", .. } => assert_eq!(e.exit_code(), 1),
            e => panic!("unexpected {e}"),
        }
    }
}
