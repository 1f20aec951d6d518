use std::path::PathBuf;
use std::process::ExitCode;

use imp_core::synth::{self, ProgramParams};
use imp_core::train::GradcheckReport;
use imp_core::Error;
use serde::Serialize;
use serde_json::json;

use crate::util;

/// Contributions closer than this count as a max-fusion tie.
const TIE_EPS: f64 = 1e-3;

pub struct Args {
    pub seed: u64,
    pub canvas: (usize, usize),
    pub detections: usize,
    pub step: f64,
    pub tol: f64,
    pub report: Option<PathBuf>,
}

#[derive(Serialize)]
struct Output {
    seed: u64,
    prng: &'static str,
    canvas: [usize; 2],
    detections: usize,
    num_classes: usize,
    feature_channels: usize,
    keep_fraction: f64,
    tie_eps: f64,
    result: GradcheckReport,
}

pub fn run(args: &Args) -> Result<ExitCode, Error> {
    let params = ProgramParams {
        canvas: args.canvas,
        detections: args.detections,
        ..ProgramParams::default()
    };
    let mut rng = synth::rng(args.seed);
    let (program, x) = synth::random_program(&mut rng, &params, TIE_EPS)?;
    let result = program.gradcheck(&x, args.step, args.tol, TIE_EPS)?;
    let passed = result.passed;
    let out = Output {
        seed: args.seed,
        prng: "xoshiro256++ (seed_from_u64)",
        canvas: [args.canvas.0, args.canvas.1],
        detections: args.detections,
        num_classes: params.num_classes,
        feature_channels: params.feature_channels,
        keep_fraction: params.keep_fraction,
        tie_eps: TIE_EPS,
        result,
    };
    let text = util::to_pretty(&out);
    match &args.report {
        Some(path) => util::write_text(path, &text)?,
        None => print!("{text}"),
    }
    if passed {
        return Ok(ExitCode::SUCCESS);
    }
    let where_ = args
        .report
        .as_ref()
        .map_or_else(|| "stdout".to_string(), |p| p.display().to_string());
    eprintln!(
        "{}",
        json!({
            "failure": "gradient check exceeded tolerance",
            "max_rel_error": out.result.max_rel_error,
            "tolerance": args.tol,
            "report": where_,
        })
    );
    Ok(ExitCode::from(1))
}
