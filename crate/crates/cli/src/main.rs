use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use spheremesh::parkernel::{default_threads, throughput_benchmark, THREADS_ENV};
use spheremesh::pipeline::{run_pipeline, ConfigError, Mode, PipelineConfig, PipelineError, SizeSpec};

#[derive(Parser)]
#[command(name = "spheremesh", version, about = "Triangular meshes of ocean domains on the sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the full mesh.
    Mesh(MeshArgs),
    /// Stop after coarsening and write the boundary loops.
    Coarsen(MeshArgs),
    /// Time the parallel Delaunay kernel on random points.
    Bench(BenchArgs),
}

#[derive(Args)]
struct MeshArgs {
    /// Coastline file (.geojson, .json, or poly text); repeatable.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// Water seed as lon,lat in degrees; repeatable.
    #[arg(long = "seed-lonlat", value_parser = parse_lonlat)]
    seeds: Vec<(f64, f64)>,
    /// Uniform size in metres.
    #[arg(long = "h-m", conflicts_with_all = ["hmin_m", "hmax_m", "dmin_m", "dmax_m"])]
    h_m: Option<f64>,
    #[arg(long = "hmin-m")]
    hmin_m: Option<f64>,
    #[arg(long = "hmax-m")]
    hmax_m: Option<f64>,
    #[arg(long = "dmin-m", default_value_t = 0.0)]
    dmin_m: f64,
    #[arg(long = "dmax-m")]
    dmax_m: Option<f64>,
    #[arg(long, default_value_t = spheremesh::onedim::DEFAULT_EPS)]
    eps: f64,
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
    /// Output file: .msh or .vtk for meshes, .geojson or poly text for boundaries.
    #[arg(long)]
    output: PathBuf,
    /// Also write land triangles.
    #[arg(long)]
    keep_land: bool,
    /// Boundary inset as a fraction of the local size.
    #[arg(long, default_value_t = spheremesh::geomodel::DEFAULT_INSET)]
    inset: f64,
    /// Refinement filter radius as a fraction of the local size.
    #[arg(long, default_value_t = spheremesh::refine::DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = spheremesh::refine::DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = spheremesh::refine::DEFAULT_SMOOTHING_PASSES)]
    smoothing_passes: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1_000_000)]
    n: usize,
    /// Comma-separated thread counts.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4, 8])]
    threads: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn parse_lonlat(s: &str) -> Result<(f64, f64), String> {
    let (lon, lat) = s.split_once(',').ok_or("expected lon,lat")?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(lon)?, parse(lat)?))
}

fn config(args: MeshArgs, mode: Mode) -> Result<PipelineConfig, ConfigError> {
    let size = match (args.h_m, args.hmin_m, args.hmax_m, args.dmax_m) {
        (Some(h_m), ..) => Some(SizeSpec::Uniform { h_m }),
        (None, Some(h_min_m), Some(h_max_m), Some(d_max_m)) => {
            Some(SizeSpec::Ramp { h_min_m, h_max_m, d_min_m: args.dmin_m, d_max_m })
        }
        (None, None, None, None) => None,
        _ => return Err(ConfigError::Invalid("a ramp needs --hmin-m, --hmax-m and --dmax-m".into())),
    };
    Ok(PipelineConfig {
        inputs: args.inputs,
        seeds: args.seeds,
        size,
        eps: args.eps,
        threads: args.threads.unwrap_or_else(default_threads),
        output: Some(args.output),
        mode,
        keep_land: args.keep_land,
        inset_fraction: args.inset,
        beta: args.beta,
        max_iter: args.max_iter,
        smoothing_passes: args.smoothing_passes,
    })
}

fn run_mesh(args: MeshArgs, mode: Mode) -> Result<(), PipelineError> {
    let cfg = config(args, mode)?;
    let report = run_pipeline(&cfg)?;
    for s in &report.stages {
        println!("{}", json!({ "stage": s.stage, "seconds": s.seconds }));
    }
    for it in &report.iterations {
        println!("{}", serde_json::to_string(it).expect("serializable"));
    }
    println!(
        "{}",
        json!({
            "total_seconds": report.total_seconds,
            "converged": report.converged,
            "input_points": report.input_points,
            "boundary_loops": report.boundary_loops,
            "islands_removed": report.islands_removed,
            "boundary_points": report.boundary_points,
            "vertices": report.vertices,
            "water_triangles": report.water_triangles,
        })
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Mesh(a) => run_mesh(a, Mode::Full),
        Command::Coarsen(a) => run_mesh(a, Mode::CoarsenOnly),
        Command::Bench(b) => {
            if b.threads.contains(&0) || b.n < 4 {
                Err(ConfigError::Invalid("need --n >= 4 and positive thread counts".into()).into())
            } else {
                match throughput_benchmark(b.n, &b.threads, b.seed) {
                    Ok(records) => {
                        for r in records {
                            println!("{}", serde_json::to_string(&r).expect("serializable"));
                        }
                        Ok(())
                    }
                    Err(e) => Err(PipelineError::Stage { stage: "bench", source: Box::new(e) }),
                }
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spheremesh: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
