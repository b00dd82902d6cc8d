//! `georeg` command-line pipeline: simulate, filter, align, optimize,
//! evaluate and project. See `docs/CLI.md` for every flag.

mod commands;
pub mod error;
pub mod files;
pub mod settings;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "georeg", version, about = "Georegistration of 2D landmark maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world and its sensor streams.
    Simulate(SimulateArgs),
    /// Fuse odometry and GPS with the gated unscented Kalman filter.
    FilterGps(FilterGpsArgs),
    /// Fit one rigid transform from the local map to GPS and apply it.
    AlignRigid(AlignRigidArgs),
    /// Optimize a graph, optionally adding GPS priors and aerial anchors.
    Optimize(OptimizeArgs),
    /// Accuracy versus number of anchored labels.
    Evaluate(EvaluateArgs),
    /// Place scan points in UTM and rasterize them.
    Project(ProjectArgs),
}

#[derive(Debug, Args)]
pub struct ManifestArg {
    /// Manifest to append to [default: manifest.jsonl next to the first output]
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulator config file (key = value)
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Route preset: loop, figure8 or campus [default: campus]
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Random seed [default: 0]
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

#[derive(Debug, Args)]
pub struct FilterGpsArgs {
    /// Odometry CSV (t,v,omega)
    #[arg(long, value_name = "FILE")]
    pub odom: PathBuf,
    /// GPS CSV in UTM (t,easting,northing,sigma)
    #[arg(long, value_name = "FILE")]
    pub gps: PathBuf,
    /// Map origin file [default: zero offset]
    #[arg(long, value_name = "FILE")]
    pub origin: Option<PathBuf>,
    /// Filter config file (key = value)
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Default GPS standard deviation, meters [default: 5]
    #[arg(long, value_name = "M")]
    pub gps_sigma: Option<f64>,
    /// Process noise on speed, m/s [default: 0.1]
    #[arg(long, value_name = "M_S")]
    pub sigma_v: Option<f64>,
    /// Process noise on yaw rate, rad/s [default: 0.02]
    #[arg(long, value_name = "RAD_S")]
    pub sigma_omega: Option<f64>,
    /// Chi-square gate confidence [default: 0.95]
    #[arg(long, value_name = "P")]
    pub gate_confidence: Option<f64>,
    /// Filtered path CSV in the map frame (t,x,y,theta)
    #[arg(long, value_name = "FILE")]
    pub out_path: PathBuf,
    /// Gate decisions CSV in UTM
    #[arg(long, value_name = "FILE")]
    pub out_decisions: PathBuf,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

#[derive(Debug, Args)]
pub struct AlignRigidArgs {
    /// Graph file in the local map frame
    #[arg(long, value_name = "FILE")]
    pub graph: PathBuf,
    /// GPS CSV in UTM
    #[arg(long, value_name = "FILE")]
    pub gps: PathBuf,
    /// Pose timestamps CSV (pose_id,t)
    #[arg(long, value_name = "FILE")]
    pub poses: PathBuf,
    /// Map origin file [default: zero offset]
    #[arg(long, value_name = "FILE")]
    pub origin: Option<PathBuf>,
    /// Gate decisions CSV; rejected fixes get weight 0
    #[arg(long, value_name = "FILE")]
    pub decisions: Option<PathBuf>,
    /// Largest time gap between a fix and its pose, seconds [default: 0.5]
    #[arg(long, value_name = "S")]
    pub max_dt: Option<f64>,
    /// Sigma for fixes without one, meters [default: 5]
    #[arg(long, value_name = "M")]
    pub gps_sigma: Option<f64>,
    /// Transformed graph file
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write the JSON report to this file
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Input graph file
    #[arg(long, value_name = "FILE")]
    pub graph: PathBuf,
    /// Optimized graph file
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Optimizer config file (key = value)
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Filtered path CSV; adds GPS priors along the trajectory
    #[arg(long, value_name = "FILE", requires = "poses")]
    pub gps_priors: Option<PathBuf>,
    /// Pose timestamps CSV, needed with --gps-priors
    #[arg(long, value_name = "FILE")]
    pub poses: Option<PathBuf>,
    /// Aerial labels CSV in UTM; matched landmarks get anchor priors
    #[arg(long, value_name = "FILE")]
    pub anchors: Option<PathBuf>,
    /// Map origin file [default: zero offset]
    #[arg(long, value_name = "FILE")]
    pub origin: Option<PathBuf>,
    /// Skip the rigid prealignment before adding GPS priors
    #[arg(long)]
    pub no_prealign: bool,
    /// Arc length between GPS priors, meters [default: 10]
    #[arg(long, value_name = "M")]
    pub prior_spacing: Option<f64>,
    /// GPS prior standard deviation, meters [default: 5]
    #[arg(long, value_name = "M")]
    pub gps_sigma: Option<f64>,
    /// Anchor prior standard deviation, meters [default: 0.1]
    #[arg(long, value_name = "M")]
    pub anchor_sigma: Option<f64>,
    /// Label matching radius, meters [default: 3]
    #[arg(long, value_name = "M")]
    pub match_radius: Option<f64>,
    /// Largest gap between a pose and a filtered sample, seconds [default: 0.5]
    #[arg(long, value_name = "S")]
    pub max_dt: Option<f64>,
    /// Iteration cap [default: 100]
    #[arg(long, value_name = "N")]
    pub max_iter: Option<usize>,
    /// Also write the JSON report to this file
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Registered graph file
    #[arg(long, value_name = "FILE")]
    pub graph: PathBuf,
    /// Aerial labels CSV in UTM
    #[arg(long, value_name = "FILE")]
    pub labels: PathBuf,
    /// Map origin file [default: zero offset]
    #[arg(long, value_name = "FILE")]
    pub origin: Option<PathBuf>,
    /// Evaluation config file (key = value)
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Anchor counts, comma separated [default: 0,1,2,3,5,10,20,30,40]
    #[arg(long, value_name = "LIST")]
    pub n_values: Option<String>,
    /// Subsets per count before sampling [default: 1000]
    #[arg(long, value_name = "N")]
    pub max_combinations: Option<usize>,
    /// Seed for subset sampling [default: 0]
    #[arg(long, value_name = "N")]
    pub sample_seed: Option<u64>,
    /// Anchor prior standard deviation, meters [default: 0.1]
    #[arg(long, value_name = "M")]
    pub anchor_sigma: Option<f64>,
    /// Label matching radius, meters [default: 3]
    #[arg(long, value_name = "M")]
    pub match_radius: Option<f64>,
    /// Keep labels inside this UTM polygon: "e n, e n, e n, ..."
    #[arg(long, value_name = "POLYGON")]
    pub region: Option<String>,
    /// Sample subsets even when all would fit under the cap
    #[arg(long)]
    pub force_sampling: bool,
    /// Curve CSV (n,combos,mean_err,stddev,failures)
    #[arg(long, value_name = "FILE")]
    pub out_curve: PathBuf,
    /// Residuals CSV of the all-anchors run
    #[arg(long, value_name = "FILE")]
    pub out_residuals: PathBuf,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Optimized graph file
    #[arg(long, value_name = "FILE")]
    pub graph: PathBuf,
    /// Scans CSV (pose_id,x,y,intensity)
    #[arg(long, value_name = "FILE")]
    pub scans: PathBuf,
    /// Map origin file [default: zero offset]
    #[arg(long, value_name = "FILE")]
    pub origin: Option<PathBuf>,
    /// Raster cell size, meters [default: 0.5]
    #[arg(long, value_name = "M")]
    pub cell_size: Option<f64>,
    /// Projected points CSV (easting,northing,intensity)
    #[arg(long, value_name = "FILE")]
    pub out_points: PathBuf,
    /// Plain greymap (PGM) raster
    #[arg(long, value_name = "FILE")]
    pub out_grid: PathBuf,
    /// Georeference sidecar CSV [default: <out-grid>.csv]
    #[arg(long, value_name = "FILE")]
    pub out_sidecar: Option<PathBuf>,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Errors are printed to standard error as one line.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ErrorKind::Config.exit_code() } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let recorded: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::run(cli.command, recorded) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
