use std::path::PathBuf;
use std::process::ExitCode;

use imp_core::io::{detections_to_json, load_labelmap, segments_to_instances, DatasetConfig, DetectionSet, ImageDetections};
use imp_core::Error;
use rayon::prelude::*;

use crate::util;

pub struct Args {
    pub gt_dir: PathBuf,
    pub config: PathBuf,
    pub mask_dims: Option<(usize, usize)>,
    pub min_area: usize,
    pub out: Option<PathBuf>,
}

pub fn run(args: &Args) -> Result<ExitCode, Error> {
    let config = DatasetConfig::load(&args.config)?;
    let space = config.label_space()?;
    let mask_dims = args.mask_dims.unwrap_or_else(|| config.mask_dims());
    let files = util::list_pngs(&args.gt_dir)?;

    let images = files
        .par_iter()
        .map(|(stem, path)| {
            let gt = load_labelmap(path, space)?;
            Ok(ImageDetections {
                id: stem.clone(),
                size: Some(gt.dims()),
                detections: segments_to_instances(&gt, mask_dims, args.min_area),
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;

    let text = detections_to_json(&DetectionSet { images }, &config)? + "\n";
    match &args.out {
        Some(path) => util::write_text(path, &text)?,
        None => print!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}
