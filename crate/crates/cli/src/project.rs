use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use imp_core::io::{load_detections, save_labelmap, write_canvas, DatasetConfig, ImageDetections};
use imp_core::projection::{labels_from_canvas, UpsampleMode};
use imp_core::{imp_forward, CanvasSpec, Error, LabelSpace};
use rayon::prelude::*;
use serde::Serialize;

use crate::util;

pub struct Args {
    pub detections: PathBuf,
    pub config: PathBuf,
    pub scale: Option<usize>,
    pub tau: f64,
    pub out_dir: PathBuf,
    pub emit_canvas: bool,
    pub mode: UpsampleMode,
}

#[derive(Serialize)]
struct ImageSummary {
    id: String,
    height: usize,
    width: usize,
    detections: usize,
    /// Pixels per label, background last.
    label_counts: Vec<u64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a DatasetConfig,
    scale: usize,
    tau: f64,
    mode: &'static str,
    images: Vec<ImageSummary>,
}

fn project_image(
    image: &ImageDetections,
    args: &Args,
    space: LabelSpace,
    scale: usize,
) -> Result<ImageSummary, Error> {
    let stem = util::file_stem_for(&image.id)?;
    let (height, width) = image.size.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "image {:?} has no declared size; list it under \"images\"",
            image.id
        ))
    })?;
    let spec = CanvasSpec::new(space.num_classes as usize, height, width, scale)?;
    let (canvas, _) = imp_forward(&image.detections, &spec)?;
    let labels = labels_from_canvas(&canvas, args.tau, Some(space), args.mode)?;
    save_labelmap(&labels, args.out_dir.join(format!("{stem}.png")))?;
    if args.emit_canvas {
        let path = args.out_dir.join(format!("{stem}.canvas"));
        let file = File::create(&path).map_err(|e| util::io_error(&path, e))?;
        write_canvas(BufWriter::new(file), &canvas).map_err(|e| util::io_error(&path, e))?;
    }
    let mut label_counts = vec![0u64; space.num_classes as usize + 1];
    for &l in labels.labels() {
        label_counts[l as usize] += 1;
    }
    Ok(ImageSummary {
        id: image.id.clone(),
        height,
        width,
        detections: image.detections.len(),
        label_counts,
    })
}

pub fn run(args: &Args) -> Result<ExitCode, Error> {
    let config = DatasetConfig::load(&args.config)?;
    if !(0.0..=1.0).contains(&args.tau) {
        return Err(Error::InvalidArgument(format!("tau must lie in [0, 1], got {}", args.tau)));
    }
    let scale = args.scale.unwrap_or(config.scale);
    let space = config.label_space()?;
    let mut set = load_detections(&args.detections, &config)?;
    set.images.sort_by(|a, b| a.id.cmp(&b.id));
    util::create_dir(&args.out_dir)?;

    let images = set
        .images
        .par_iter()
        .map(|im| project_image(im, args, space, scale))
        .collect::<Result<Vec<_>, _>>()?;

    let summary = Summary {
        config: &config,
        scale,
        tau: args.tau,
        mode: match args.mode {
            UpsampleMode::Nearest => "nearest",
            UpsampleMode::BilinearCanvas => "bilinear",
        },
        images,
    };
    print!("{}", util::to_pretty(&summary));
    Ok(ExitCode::SUCCESS)
}
