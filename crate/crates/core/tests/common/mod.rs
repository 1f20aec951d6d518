//! Reference implementations used as oracles. These deliberately avoid the
//! library's kernels: each one evaluates its definition directly, cell by cell
//! or pixel by pixel.

#![allow(dead_code)]

use imp_core::boundary::BoundaryMask;
use imp_core::{BBox, CanvasSpec, Detection, LabelMap, Real};

/// Scaled bilinear sample of detection `d` at canvas cell `(py, px)`, or `None`
/// when the cell center is outside the box.
pub fn oracle_contribution<T: Real>(d: &Detection<T>, py: usize, px: usize, scale: usize) -> Option<T> {
    let BBox { x0, y0, x1, y1 } = d.bbox;
    let s = scale as f64;
    let x = (px as f64 + 0.5) * s;
    let y = (py as f64 + 0.5) * s;
    let un = (x - x0) / (x1 - x0);
    let vn = (y - y0) / (y1 - y0);
    if un < 0.0 || un >= 1.0 || vn < 0.0 || vn >= 1.0 {
        return None;
    }
    let (h, w) = d.mask.dims();
    let u = (un * w as f64 - 0.5).max(0.0).min((w - 1) as f64);
    let v = (vn * h as f64 - 0.5).max(0.0).min((h - 1) as f64);
    let j0 = u.floor() as usize;
    let i0 = v.floor() as usize;
    let j1 = if j0 + 1 < w { j0 + 1 } else { w - 1 };
    let i1 = if i0 + 1 < h { i0 + 1 } else { h - 1 };
    let fx = u - j0 as f64;
    let fy = v - i0 as f64;
    let m = |i: usize, j: usize| d.mask.values()[i * w + j].to_f64();
    let val = (1.0 - fy) * (1.0 - fx) * m(i0, j0)
        + (1.0 - fy) * fx * m(i0, j1)
        + fy * (1.0 - fx) * m(i1, j0)
        + fy * fx * m(i1, j1);
    Some(T::from_f64(d.score.to_f64() * val))
}

/// O(N·C·Hc·Wc) projection: for every class and cell, scan all detections.
/// Returns canvas values and winner indices (lowest index on ties).
pub fn brute_force_forward<T: Real>(dets: &[Detection<T>], spec: &CanvasSpec) -> (Vec<T>, Vec<Option<usize>>) {
    let (hc, wc) = (spec.canvas_height(), spec.canvas_width());
    let mut values = Vec::with_capacity(spec.len());
    let mut winners = Vec::with_capacity(spec.len());
    for c in 0..spec.num_classes {
        for py in 0..hc {
            for px in 0..wc {
                let mut best = T::ZERO;
                let mut winner: Option<usize> = None;
                for d in dets.iter().filter(|d| d.class_id == c) {
                    let Some(v) = oracle_contribution(d, py, px, spec.scale) else {
                        continue;
                    };
                    let better = v > best || (v == best && winner.is_some_and(|w| d.index < w));
                    if better {
                        best = v;
                        winner = Some(d.index);
                    }
                }
                values.push(best);
                winners.push(winner);
            }
        }
    }
    (values, winners)
}

/// Direct rasterizer: each image pixel takes its canvas cell's class when that
/// class's best binarized (> tau) sample is the largest over classes.
pub fn rasterize(dets: &[Detection], spec: &CanvasSpec, tau: f64) -> Vec<u16> {
    let (h, w, s) = (spec.image_height, spec.image_width, spec.scale);
    let mut out = vec![spec.num_classes as u16; h * w];
    for y in 0..h {
        for x in 0..w {
            let (py, px) = (y / s, x / s);
            let mut best: Option<(f64, usize)> = None;
            for c in 0..spec.num_classes {
                let v = dets
                    .iter()
                    .filter(|d| d.class_id == c)
                    .filter_map(|d| oracle_contribution(d, py, px, s))
                    .map(f64::from)
                    .fold(0.0, f64::max);
                if v > tau && best.is_none_or(|(b, _)| v > b) {
                    best = Some((v, c));
                }
            }
            if let Some((_, c)) = best {
                out[y * w + x] = c as u16;
            }
        }
    }
    out
}

/// Naive confusion counts: a `(C+1)²` array filled by one pass of pixel pairs.
pub fn naive_confusion(pairs: &[(&LabelMap, &LabelMap)]) -> Vec<Vec<u64>> {
    let space = pairs[0].1.space();
    let n = space.num_classes as usize + 1;
    let mut cm = vec![vec![0u64; n]; n];
    for (pred, gt) in pairs {
        for y in 0..gt.height() {
            for x in 0..gt.width() {
                let g = gt.get(y, x);
                if g == space.ignore {
                    continue;
                }
                cm[g as usize][pred.get(y, x) as usize] += 1;
            }
        }
    }
    cm
}

/// Naive (mIOU, mAcc) over all classes including background.
pub fn naive_miou_macc(cm: &[Vec<u64>]) -> (f64, f64) {
    let n = cm.len();
    let mut ious = Vec::new();
    let mut accs = Vec::new();
    for c in 0..n {
        let tp = cm[c][c] as f64;
        let gt: u64 = cm[c].iter().sum();
        let pred: u64 = (0..n).map(|r| cm[r][c]).sum();
        let union = gt as f64 + pred as f64 - tp;
        if union > 0.0 {
            ious.push(tp / union);
        }
        if gt > 0 {
            accs.push(tp / gt as f64);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&ious), mean(&accs))
}

/// O(HW·B) nearest boundary pixel scan.
pub fn brute_force_distance(b: &BoundaryMask) -> Vec<f64> {
    let w = b.width;
    let pts: Vec<(i64, i64)> = (0..b.data.len())
        .filter(|&i| b.data[i])
        .map(|i| ((i / w) as i64, (i % w) as i64))
        .collect();
    (0..b.data.len())
        .map(|i| {
            let (y, x) = ((i / w) as i64, (i % w) as i64);
            pts.iter()
                .map(|&(py, px)| (((py - y).pow(2) + (px - x).pow(2)) as f64).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Random binary grid with roughly `density` set pixels.
pub fn random_boundary(rng: &mut imp_core::synth::SynthRng, h: usize, w: usize, density: f64) -> BoundaryMask {
    use rand::Rng;
    BoundaryMask {
        height: h,
        width: w,
        data: (0..h * w).map(|_| rng.random_bool(density)).collect(),
    }
}
