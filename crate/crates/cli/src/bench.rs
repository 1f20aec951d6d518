use std::process::ExitCode;
use std::time::Instant;

use imp_core::synth::{self, DetectionParams};
use imp_core::{imp_backward, imp_forward, imp_forward_par, Canvas, CanvasSpec, Detection, Error};
use serde::Serialize;

use crate::util;

const SCALE: usize = 4;

pub struct Args {
    pub canvas: (usize, usize),
    pub detections: usize,
    pub classes: usize,
    pub repeats: usize,
    pub seed: u64,
}

#[derive(Serialize)]
struct Timing {
    median_ms: f64,
    p95_ms: f64,
}

#[derive(Serialize)]
struct Output {
    canvas: [usize; 2],
    image: [usize; 2],
    classes: usize,
    detections: usize,
    mask_dims: [usize; 2],
    repeats: usize,
    threads: usize,
    forward: Timing,
    forward_parallel: Timing,
    backward: Timing,
}

fn timing(mut ms: Vec<f64>) -> Timing {
    ms.sort_by(f64::total_cmp);
    let at = |q: f64| ms[((ms.len() - 1) as f64 * q).round() as usize];
    Timing { median_ms: at(0.5), p95_ms: at(0.95) }
}

fn time<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let start = Instant::now();
    let r = f();
    (r, start.elapsed().as_secs_f64() * 1e3)
}

pub fn run(args: &Args) -> Result<ExitCode, Error> {
    if args.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let (hc, wc) = args.canvas;
    let spec = CanvasSpec::new(args.classes, hc * SCALE, wc * SCALE, SCALE)?;
    let mut rng = synth::rng(args.seed);
    let mut dets: Vec<Detection> = synth::random_detections(
        &mut rng,
        &spec,
        args.detections,
        &DetectionParams::default(),
    );
    for d in &mut dets {
        d.mask = synth::random_mask(&mut rng, 28, 28, (0.0, 1.0));
    }
    let grad = Canvas::from_values(spec, vec![1.0f32; spec.len()])?;

    let (mut fwd, mut par, mut bwd) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..args.repeats {
        let (out, ms) = time(|| imp_forward(&dets, &spec));
        let (_, prov) = out?;
        fwd.push(ms);
        let (out, ms) = time(|| imp_forward_par(&dets, &spec));
        out?;
        par.push(ms);
        let (out, ms) = time(|| imp_backward(&grad, &prov, &dets));
        out?;
        bwd.push(ms);
    }

    let out = Output {
        canvas: [hc, wc],
        image: [hc * SCALE, wc * SCALE],
        classes: args.classes,
        detections: args.detections,
        mask_dims: [28, 28],
        repeats: args.repeats,
        threads: rayon::current_num_threads(),
        forward: timing(fwd),
        forward_parallel: timing(par),
        backward: timing(bwd),
    };
    print!("{}", util::to_pretty(&out));
    Ok(ExitCode::SUCCESS)
}
