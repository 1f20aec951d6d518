//! `imp`: batch projection, evaluation, ground-truth conversion, gradient
//! checking and benchmarking on top of `imp-core`.

mod bench;
mod convert;
mod eval;
mod gradcheck;
mod project;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use imp_core::projection::{UpsampleMode, DEFAULT_TAU};
use imp_core::Error;

#[derive(Debug, Parser)]
#[command(name = "imp", version, about = "Instance mask projection toolkit")]
struct Cli {
    /// Worker threads for per-image work (0 = all cores).
    #[arg(long, global = true, env = "IMP_JOBS", default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    /// Label every canvas cell, then replicate each label over its pixels.
    Nearest,
    /// Bilinearly resample the canvas to image resolution before labeling.
    Bilinear,
}

impl From<Mode> for UpsampleMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Nearest => UpsampleMode::Nearest,
            Mode::Bilinear => UpsampleMode::BilinearCanvas,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Project detections into per-image semantic label PNGs.
    Project {
        detections: PathBuf,
        config: PathBuf,
        /// Canvas down-sampling factor (defaults to the config value).
        #[arg(long)]
        scale: Option<usize>,
        /// Background threshold on the per-cell maximum.
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write `<id>.canvas` dumps of the raw canvas.
        #[arg(long)]
        emit_canvas: bool,
        #[arg(long, value_enum, default_value_t = Mode::Nearest)]
        mode: Mode,
    },
    /// Score predicted label PNGs against ground truth.
    Eval {
        pred_dir: PathBuf,
        gt_dir: PathBuf,
        config: PathBuf,
        /// Boundary distances for stratified mIOU; bare flag uses 10,20,50,100,200,400.
        #[arg(long, num_args = 0.., value_delimiter = ',')]
        boundary_thresholds: Option<Vec<f64>>,
        /// Directory for report.json and the CSV tables.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Exit with status 1 when mIOU falls below this value.
        #[arg(long)]
        min_miou: Option<f64>,
    },
    /// Turn ground-truth label PNGs into pseudo-detections.
    ConvertGt {
        gt_dir: PathBuf,
        config: PathBuf,
        /// Mask resolution as HxW (defaults to the config value).
        #[arg(long, value_parser = util::parse_dims)]
        mask_dims: Option<(usize, usize)>,
        /// Drop connected components with fewer pixels.
        #[arg(long, default_value_t = imp_core::io::DEFAULT_MIN_AREA)]
        min_area: usize,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the analytic gradient of a random projection program.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Canvas size in cells as HxW.
        #[arg(long, value_parser = util::parse_dims, default_value = "16x16")]
        canvas: (usize, usize),
        #[arg(long, default_value_t = 4)]
        detections: usize,
        #[arg(long, value_parser = util::parse_positive, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, value_parser = util::parse_positive, default_value_t = 1e-4)]
        tol: f64,
        /// Write the full report here; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Time forward and backward passes on random detections.
    Bench {
        /// Canvas size in cells as HxW.
        #[arg(long, value_parser = util::parse_dims, default_value = "256x512")]
        canvas: (usize, usize),
        #[arg(long, default_value_t = 100)]
        detections: usize,
        #[arg(long, default_value_t = 8)]
        classes: usize,
        #[arg(long, default_value_t = 11)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Project { detections, config, scale, tau, out_dir, emit_canvas, mode } => {
            project::run(&project::Args {
                detections,
                config,
                scale,
                tau,
                out_dir,
                emit_canvas,
                mode: mode.into(),
            })
        }
        Command::Eval { pred_dir, gt_dir, config, boundary_thresholds, out_dir, min_miou } => {
            eval::run(&eval::Args { pred_dir, gt_dir, config, boundary_thresholds, out_dir, min_miou })
        }
        Command::ConvertGt { gt_dir, config, mask_dims, min_area, out } => {
            convert::run(&convert::Args { gt_dir, config, mask_dims, min_area, out })
        }
        Command::Gradcheck { seed, canvas, detections, step, tol, report } => {
            gradcheck::run(&gradcheck::Args { seed, canvas, detections, step, tol, report })
        }
        Command::Bench { canvas, detections, classes, repeats, seed } => {
            bench::run(&bench::Args { canvas, detections, classes, repeats, seed })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
        util::report_error(&Error::InvalidArgument(format!("cannot size worker pool: {e}")));
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            util::report_error(&e);
            ExitCode::from(2)
        }
    }
}
