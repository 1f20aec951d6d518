use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use imp_core::boundary::{gt_distance_field, miou_within, DEFAULT_THRESHOLDS};
use imp_core::io::{load_labelmap, DatasetConfig};
use imp_core::metrics::ConfusionMatrix;
use imp_core::{Error, LabelSpace};
use rayon::prelude::*;
use serde::Serialize;

use crate::util;

pub struct Args {
    pub pred_dir: PathBuf,
    pub gt_dir: PathBuf,
    pub config: PathBuf,
    pub boundary_thresholds: Option<Vec<f64>>,
    pub out_dir: Option<PathBuf>,
    pub min_miou: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ResolvedConfig<'a> {
    #[serde(flatten)]
    dataset: &'a DatasetConfig,
    boundary_thresholds: Option<&'a [f64]>,
    min_miou: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ClassRow {
    id: usize,
    name: String,
    iou: Option<f64>,
    acc: Option<f64>,
    gt_pixels: u64,
    pred_pixels: u64,
    intersection: u64,
}

#[derive(Debug, Serialize)]
struct BoundaryRow {
    d: f64,
    miou: f64,
    pixels: u64,
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    config: ResolvedConfig<'a>,
    images: usize,
    evaluated_pixels: u64,
    ignored_pixels: u64,
    classes: Vec<ClassRow>,
    miou: f64,
    macc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary: Option<Vec<BoundaryRow>>,
}

/// Confusion counts for one image: whole image, then one per threshold.
struct ImageCounts {
    full: ConfusionMatrix,
    within: Vec<ConfusionMatrix>,
    ignored: u64,
}

fn pair_paths(pred_dir: &Path, gt_dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>, Error> {
    let preds: BTreeMap<String, PathBuf> = util::list_pngs(pred_dir)?.into_iter().collect();
    let gts: BTreeMap<String, PathBuf> = util::list_pngs(gt_dir)?.into_iter().collect();
    for (stem, path) in &gts {
        if !preds.contains_key(stem) {
            return Err(Error::MissingPair(format!(
                "{} has no prediction in {}",
                path.display(),
                pred_dir.display()
            )));
        }
    }
    if let Some((stem, path)) = preds.iter().find(|(s, _)| !gts.contains_key(*s)) {
        return Err(Error::MissingPair(format!(
            "{} ({stem}) has no ground truth in {}",
            path.display(),
            gt_dir.display()
        )));
    }
    Ok(gts.into_iter().map(|(stem, gt)| (preds[&stem].clone(), gt)).collect())
}

fn score_pair(
    pred_path: &Path,
    gt_path: &Path,
    space: LabelSpace,
    thresholds: &[f64],
) -> Result<ImageCounts, Error> {
    let gt = load_labelmap(gt_path, space)?;
    let pred = load_labelmap(pred_path, space)?;
    if pred.dims() != gt.dims() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} ({})", gt.height(), gt.width(), gt_path.display()),
            actual: format!("{}x{} ({})", pred.height(), pred.width(), pred_path.display()),
        });
    }
    let mut full = ConfusionMatrix::new(space);
    full.accumulate(&pred, &gt)?;
    let mut within = Vec::with_capacity(thresholds.len());
    if !thresholds.is_empty() {
        let dist = gt_distance_field(&gt);
        for &d in thresholds {
            let mut cm = ConfusionMatrix::new(space);
            miou_within(&mut cm, &pred, &gt, &dist, d)?;
            within.push(cm);
        }
    }
    let ignored = gt.labels().iter().filter(|&&l| l == space.ignore).count() as u64;
    Ok(ImageCounts { full, within, ignored })
}

fn class_rows(cm: &ConfusionMatrix, config: &DatasetConfig) -> Vec<ClassRow> {
    let ious = cm.iou_per_class();
    let accs = cm.acc_per_class();
    (0..cm.size())
        .map(|c| ClassRow {
            id: c,
            name: config
                .class_names
                .get(c)
                .cloned()
                .unwrap_or_else(|| "background".into()),
            iou: ious[c],
            acc: accs[c],
            gt_pixels: cm.row_sum(c),
            pred_pixels: cm.col_sum(c),
            intersection: cm.get(c, c),
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn class_csv(rows: &[ClassRow]) -> String {
    let mut s = String::from("class_id,name,iou,acc,gt_pixels,pred_pixels,intersection\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.id,
            r.name,
            opt(r.iou),
            opt(r.acc),
            r.gt_pixels,
            r.pred_pixels,
            r.intersection
        );
    }
    s
}

fn boundary_csv(rows: &[BoundaryRow]) -> String {
    let mut s = String::from("d,miou\n");
    for r in rows {
        let _ = writeln!(s, "{},{}", r.d, r.miou);
    }
    s
}

pub fn run(args: &Args) -> Result<ExitCode, Error> {
    let config = DatasetConfig::load(&args.config)?;
    let space = config.label_space()?;
    let thresholds: Vec<f64> = match &args.boundary_thresholds {
        None => Vec::new(),
        Some(t) if t.is_empty() => DEFAULT_THRESHOLDS.to_vec(),
        Some(t) => t.clone(),
    };
    if let Some(bad) = thresholds.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::InvalidArgument(format!("boundary threshold {bad} must be finite and >= 0")));
    }

    let pairs = pair_paths(&args.pred_dir, &args.gt_dir)?;
    let per_image = pairs
        .par_iter()
        .map(|(pred, gt)| score_pair(pred, gt, space, &thresholds))
        .collect::<Result<Vec<_>, _>>()?;

    let mut total = ConfusionMatrix::new(space);
    let mut within: Vec<ConfusionMatrix> = thresholds.iter().map(|_| ConfusionMatrix::new(space)).collect();
    let mut ignored = 0;
    for counts in &per_image {
        total += &counts.full;
        for (acc, cm) in within.iter_mut().zip(&counts.within) {
            *acc += cm;
        }
        ignored += counts.ignored;
    }

    let include_bg = config.background_in_metrics;
    let classes = class_rows(&total, &config);
    let boundary = (!thresholds.is_empty()).then(|| {
        thresholds
            .iter()
            .zip(&within)
            .map(|(&d, cm)| BoundaryRow { d, miou: cm.miou(include_bg), pixels: cm.total() })
            .collect::<Vec<_>>()
    });
    let report = Report {
        config: ResolvedConfig {
            dataset: &config,
            boundary_thresholds: (!thresholds.is_empty()).then_some(&thresholds[..]),
            min_miou: args.min_miou,
        },
        images: pairs.len(),
        evaluated_pixels: total.total(),
        ignored_pixels: ignored,
        miou: total.miou(include_bg),
        macc: total.macc(include_bg),
        classes,
        boundary,
    };

    let text = util::to_pretty(&report);
    if let Some(dir) = &args.out_dir {
        util::create_dir(dir)?;
        util::write_text(&dir.join("report.json"), &text)?;
        util::write_text(&dir.join("per_class.csv"), &class_csv(&report.classes))?;
        if let Some(rows) = &report.boundary {
            util::write_text(&dir.join("boundary.csv"), &boundary_csv(rows))?;
        }
    }
    print!("{text}");

    match args.min_miou {
        Some(floor) if report.miou.is_nan() || report.miou < floor => {
            eprintln!(
                "{}",
                serde_json::json!({ "failure": "miou below threshold", "miou": report.miou, "min_miou": floor })
            );
            Ok(ExitCode::from(1))
        }
        _ => Ok(ExitCode::SUCCESS),
    }
}
