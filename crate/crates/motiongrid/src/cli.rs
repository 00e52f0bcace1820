//! Command-line front end.
//!
//! Subcommands: `run` labels a recorded sequence, `bench` times a
//! configuration matrix over one sequence, `synth` renders a synthetic scene
//! from a JSON description, `eval` scores labeled output against ground
//! truth. Exit codes: 0 success, 1 usage error (bad flags or values),
//! 2 data error (unreadable or malformed input); failures print a
//! diagnostic to stderr.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{DataError, PipelineError};
use crate::frame::ScanFrame;
use crate::geometry::{GridMode, Vec3};
use crate::io::{self, CloudFormat};
use crate::pipeline::{benchmark, process_sequence, PipelineConfig};
use crate::storage::Storage;
use crate::synth::{evaluate, generate_scene, SceneSpec};

#[derive(Parser)]
#[command(
    name = "motiongrid",
    version,
    about = "Label LiDAR echoes as static or dynamic with occupancy grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label a point-cloud sequence and write per-frame output files.
    Run(RunArgs),
    /// Time a matrix of cell sizes and grid modes over one sequence.
    Bench(BenchArgs),
    /// Generate a synthetic scene with per-echo ground truth.
    Synth(SynthArgs),
    /// Score labeled frames against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Sequence to label: a directory of per-frame CSV/PLY files, a
    /// multi-frame CSV, or a single PLY file.
    #[arg(long, value_name = "DIR")]
    input: PathBuf,
    /// Directory for labeled frames (created if missing).
    #[arg(long, value_name = "DIR")]
    output: PathBuf,
    /// Odometry log (`t,vx,vy,vz,wx,wy,wz`); enables ego-motion
    /// compensation.
    #[arg(long, value_name = "FILE")]
    odometry: Option<PathBuf>,
    /// Grid backend: planar range grid (2d) or voxel grid (3d).
    #[arg(long, default_value = "2d")]
    mode: GridMode,
    /// Cell side length in meters.
    #[arg(long = "voxel-size", value_name = "M", default_value_t = 0.15)]
    voxel_size: f64,
    /// Grid extent in meters, sensor frame.
    #[arg(long, value_name = "XMIN,XMAX,YMIN,YMAX,ZMIN,ZMAX")]
    bounds: Option<String>,
    /// Vertical containment tolerance of the 2d backend, meters.
    #[arg(long, value_name = "M", default_value_t = 0.05)]
    eps: f64,
    /// Ignore odometry even when supplied.
    #[arg(long = "no-ego-comp")]
    no_ego_comp: bool,
    /// Write per-frame stats as JSON lines.
    #[arg(long, value_name = "FILE")]
    stats: Option<PathBuf>,
    /// Cell storage: auto picks dense for 2d and sparse for 3d.
    #[arg(long, default_value = "auto")]
    storage: Storage,
    /// Process every Nth frame (experimental).
    #[arg(long, value_name = "N", default_value_t = 1)]
    stride: usize,
    /// Output format for labeled frames. `eval` reads csv only.
    #[arg(long, default_value = "csv")]
    format: CloudFormat,
}

#[derive(Args)]
struct BenchArgs {
    /// Sequence to replay for timing.
    #[arg(long, value_name = "DIR")]
    input: PathBuf,
    /// Comma-separated cell side lengths in meters.
    #[arg(long, value_name = "M,M,...", default_value = "0.3,0.15,0.1")]
    sizes: String,
    /// Comma-separated grid modes.
    #[arg(long, value_name = "MODE,MODE", default_value = "2d,3d")]
    modes: String,
    /// Where to write the JSON report.
    #[arg(long, value_name = "FILE")]
    report: PathBuf,
    /// Cell storage override applied to every configuration.
    #[arg(long, default_value = "auto")]
    storage: Storage,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description, JSON.
    #[arg(long, value_name = "FILE")]
    spec: PathBuf,
    /// RNG seed; the same spec and seed reproduce the scene bit for bit.
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
    /// Directory for frames, truth, timestamps, and odometry.
    #[arg(long, value_name = "DIR")]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of `labeled_*.csv` frames.
    #[arg(long, value_name = "DIR")]
    labels: PathBuf,
    /// Directory of `truth_*.csv` frames.
    #[arg(long, value_name = "DIR")]
    truth: PathBuf,
    /// Leading frames to skip before scoring.
    #[arg(long, value_name = "N", default_value_t = 2)]
    warmup: usize,
}

enum CmdError {
    Usage(String),
    Data(String),
}

impl From<DataError> for CmdError {
    fn from(e: DataError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<PipelineError> for CmdError {
    fn from(e: PipelineError) -> Self {
        match &e {
            PipelineError::InvalidConfig(_) => CmdError::Usage(e.to_string()),
            _ => CmdError::Data(e.to_string()),
        }
    }
}

/// Parse arguments and execute; returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // `print` routes help/version to stdout and errors to stderr.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(()) => 0,
        Err(CmdError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CmdError::Data(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn parse_bounds(s: &str) -> Result<(Vec3, Vec3), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 6 {
        return Err(format!(
            "--bounds needs 6 comma-separated numbers, got {}",
            parts.len()
        ));
    }
    let mut v = [0.0f64; 6];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|e| format!("bad bounds value {:?}: {e}", part.trim()))?;
    }
    Ok((Vec3::new(v[0], v[2], v[4]), Vec3::new(v[1], v[3], v[5])))
}

fn cmd_run(args: RunArgs) -> Result<(), CmdError> {
    let frames: Vec<ScanFrame> = io::read_point_cloud_sequence(&args.input)?;
    if frames.is_empty() {
        return Err(CmdError::Data(format!(
            "no frames found in {}",
            args.input.display()
        )));
    }
    let odometry = match &args.odometry {
        Some(p) => Some(io::read_odometry::<f64>(p)?),
        None => None,
    };

    let defaults = PipelineConfig::<f64>::default();
    let (bounds_min, bounds_max) = match &args.bounds {
        Some(b) => parse_bounds(b).map_err(CmdError::Usage)?,
        None => (defaults.bounds_min, defaults.bounds_max),
    };
    let cfg = PipelineConfig::<f64> {
        mode: args.mode,
        side_length: args.voxel_size,
        bounds_min,
        bounds_max,
        eps: args.eps,
        ego_compensation: odometry.is_some() && !args.no_ego_comp,
        frame_stride: args.stride,
        storage: args.storage,
        ..defaults
    };

    let labeled = process_sequence(&frames, odometry.as_deref(), &cfg)?;
    if cfg.frame_stride > 1 {
        let processed: Vec<ScanFrame> =
            frames.iter().step_by(cfg.frame_stride).cloned().collect();
        io::write_labeled_outputs(&args.output, &processed, &labeled, args.format)?;
    } else {
        io::write_labeled_outputs(&args.output, &frames, &labeled, args.format)?;
    }
    if let Some(stats_path) = &args.stats {
        if let Some(dir) = stats_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(DataError::from)?;
        }
        io::write_stats_jsonl(stats_path, &labeled)?;
    }

    let echoes: usize = labeled.iter().map(|l| l.labels.len()).sum();
    let dynamic: usize = labeled.iter().map(|l| l.stats.dynamic_count).sum();
    println!(
        "labeled {} frames ({echoes} echoes, {dynamic} dynamic) -> {}",
        labeled.len(),
        args.output.display()
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), CmdError> {
    let frames: Vec<ScanFrame> = io::read_point_cloud_sequence(&args.input)?;
    if frames.is_empty() {
        return Err(CmdError::Data(format!(
            "no frames found in {}",
            args.input.display()
        )));
    }

    let mut sizes = Vec::new();
    for part in args.sizes.split(',') {
        let v: f64 = part
            .trim()
            .parse()
            .map_err(|e| CmdError::Usage(format!("bad size {:?}: {e}", part.trim())))?;
        if !(v.is_finite() && v > 0.0) {
            return Err(CmdError::Usage(format!("size must be positive, got {v}")));
        }
        sizes.push(v);
    }
    let mut modes = Vec::new();
    for part in args.modes.split(',') {
        modes.push(part.trim().parse::<GridMode>().map_err(CmdError::Usage)?);
    }

    let base = PipelineConfig::<f64> {
        ego_compensation: false,
        storage: args.storage,
        ..PipelineConfig::default()
    };
    let matrix: Vec<(f64, GridMode)> = sizes
        .iter()
        .flat_map(|s| modes.iter().map(move |m| (*s, *m)))
        .collect();
    let report = benchmark(&frames, None, &base, &matrix)?;

    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CmdError::Data(format!("report serialization failed: {e}")))?;
    fs::write(&args.report, json).map_err(DataError::from)?;
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), CmdError> {
    let text = fs::read_to_string(&args.spec).map_err(DataError::from)?;
    let spec: SceneSpec = serde_json::from_str(&text)
        .map_err(|e| CmdError::Data(format!("{}: {e}", args.spec.display())))?;
    let (frames, truth, odometry) = generate_scene(&spec, args.seed)?;
    io::write_scene_outputs(&args.output, &frames, &truth, &odometry)?;
    let echoes: usize = frames.iter().map(|f| f.echoes.len()).sum();
    println!(
        "generated {} frames ({echoes} echoes) -> {}",
        frames.len(),
        args.output.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CmdError> {
    let labels = io::read_labeled_dir(&args.labels)?;
    if labels.is_empty() {
        return Err(CmdError::Data(format!(
            "no labeled frames found in {}",
            args.labels.display()
        )));
    }
    let truth = io::read_truth_dir(&args.truth)?;
    let metrics = evaluate(&labels, &truth, args.warmup)?;
    let json = serde_json::to_string(&metrics)
        .map_err(|e| CmdError::Data(format!("metrics serialization failed: {e}")))?;
    println!("{json}");
    Ok(())
}
