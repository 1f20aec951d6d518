//! The projection kernel: box-relative bilinear resampling, per-class max
//! fusion and the routed backward pass.
//!
//! Canvas cell `(py, px)` is sampled at its image-space center
//! `((px + 0.5)·s, (py + 0.5)·s)`. A detection covers the cell when that point
//! falls in the half-open box `[x0, x1) × [y0, y1)`. Inside the box the point
//! is mapped to continuous mask coordinates with half-cell alignment
//! (`u = u'·w − 0.5`), clamped to the mask extent, and read bilinearly.
//!
//! Each class channel keeps the running maximum of `score · mask(sample)`.
//! Detections are visited in ascending `index` and a cell is overwritten only
//! by a strictly larger contribution, so ties resolve to the lowest index and
//! the result does not depend on the order of the input slice.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{validate_detections, BBox, Canvas, CanvasSpec, Detection, InstanceMask, Real};

const NO_WINNER: u32 = u32::MAX;

/// Resampling along one axis: two clamped grid indices and their weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSample {
    /// Unclamped continuous grid coordinate.
    pub coord: f64,
    pub lo: usize,
    pub hi: usize,
    pub w_lo: f64,
    pub w_hi: f64,
}

/// Maps canvas index `cell` on one axis into a box spanning `[start, end)` and
/// a mask axis of `len` cells. `None` when the cell center is outside the box.
#[inline]
pub fn axis_sample(cell: usize, scale: usize, start: f64, end: f64, len: usize) -> Option<AxisSample> {
    let center = (cell as f64 + 0.5) * scale as f64;
    let t = (center - start) / (end - start);
    if !(0.0..1.0).contains(&t) {
        return None;
    }
    let coord = t * len as f64 - 0.5;
    let clamped = coord.clamp(0.0, (len - 1) as f64);
    let lo = clamped.floor() as usize;
    let hi = (lo + 1).min(len - 1);
    let frac = clamped - lo as f64;
    Some(AxisSample {
        coord,
        lo,
        hi,
        w_lo: 1.0 - frac,
        w_hi: frac,
    })
}

/// Location of a canvas cell inside a detection's mask grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    /// Continuous column coordinate in mask cells.
    pub u: f64,
    /// Continuous row coordinate in mask cells.
    pub v: f64,
    /// Corner `(row, col)` pairs in the order top-left, top-right, bottom-left,
    /// bottom-right. Corners coincide where the sample is clamped.
    pub corners: [(usize, usize); 4],
    /// Bilinear weight of each corner; nonnegative, summing to one.
    pub weights: [f64; 4],
}

impl SamplePoint {
    #[inline]
    pub fn from_axes(row: &AxisSample, col: &AxisSample) -> Self {
        SamplePoint {
            u: col.coord,
            v: row.coord,
            corners: [
                (row.lo, col.lo),
                (row.lo, col.hi),
                (row.hi, col.lo),
                (row.hi, col.hi),
            ],
            weights: [
                row.w_lo * col.w_lo,
                row.w_lo * col.w_hi,
                row.w_hi * col.w_lo,
                row.w_hi * col.w_hi,
            ],
        }
    }

    /// Bilinear read of `mask` at this point, in `f64`.
    #[inline]
    pub fn interpolate<T: Real>(&self, mask: &InstanceMask<T>) -> f64 {
        let mut acc = 0.0;
        for (&(r, c), &w) in self.corners.iter().zip(&self.weights) {
            acc += w * mask.get(r, c).to_f64();
        }
        acc
    }
}

/// Maps canvas cell `(row, col)` into the mask grid of a detection with box
/// `bbox` and mask dims `(h, w)`. Returns `None` when the cell center lies
/// outside the box.
pub fn pre_map(
    cell: (usize, usize),
    bbox: &BBox,
    mask_dims: (usize, usize),
    spec: &CanvasSpec,
) -> Option<SamplePoint> {
    let (row, col) = cell;
    let (h, w) = mask_dims;
    let ys = axis_sample(row, spec.scale, bbox.y0, bbox.y1, h)?;
    let xs = axis_sample(col, spec.scale, bbox.x0, bbox.x1, w)?;
    Some(SamplePoint::from_axes(&ys, &xs))
}

/// Score-scaled contribution of a detection at a sample point, rounded once
/// into storage precision.
#[inline]
pub fn contribution<T: Real>(d: &Detection<T>, sample: &SamplePoint) -> T {
    T::from_f64(d.score.to_f64() * sample.interpolate(&d.mask))
}

/// Per-cell record of which detection won the max.
///
/// Only the winner's index is stored; its sample point is a pure function of
/// the cell, the winner's box and mask dims, and is recomputed on demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    spec: CanvasSpec,
    num_detections: usize,
    winners: Vec<u32>,
}

impl Provenance {
    pub fn spec(&self) -> &CanvasSpec {
        &self.spec
    }

    pub fn num_detections(&self) -> usize {
        self.num_detections
    }

    /// Winning detection index at `(class, row, col)`, if any.
    pub fn winner(&self, class: usize, row: usize, col: usize) -> Option<usize> {
        decode_winner(self.winners[self.spec.offset(class, row, col)])
    }

    /// Raw winner indices in canvas layout, `u32::MAX` meaning none.
    pub fn winners(&self) -> &[u32] {
        &self.winners
    }

    /// Sample point of the winner at `(class, row, col)`.
    pub fn sample<T: Real>(
        &self,
        class: usize,
        row: usize,
        col: usize,
        detections: &[Detection<T>],
    ) -> Option<(usize, SamplePoint)> {
        let index = self.winner(class, row, col)?;
        let d = detections.iter().find(|d| d.index == index)?;
        pre_map((row, col), &d.bbox, d.mask.dims(), &self.spec).map(|s| (index, s))
    }
}

#[inline]
fn decode_winner(w: u32) -> Option<usize> {
    (w != NO_WINNER).then_some(w as usize)
}

/// Detections of each class, sorted by index.
fn group_by_class<'a, T: Real>(
    detections: &'a [Detection<T>],
    spec: &CanvasSpec,
) -> Vec<Vec<&'a Detection<T>>> {
    let mut groups: Vec<Vec<&Detection<T>>> = vec![Vec::new(); spec.num_classes];
    for d in detections {
        groups[d.class_id].push(d);
    }
    for g in &mut groups {
        g.sort_unstable_by_key(|d| d.index);
    }
    groups
}

/// Axis samples for every canvas index along one axis that the box covers.
fn covered_axis(
    extent: usize,
    scale: usize,
    start: f64,
    end: f64,
    len: usize,
) -> (usize, Vec<AxisSample>) {
    let s = scale as f64;
    // Conservative candidate range; `axis_sample` makes the exact call.
    let first = ((start / s - 0.5).floor() - 1.0).max(0.0);
    let last = ((end / s).ceil() + 1.0).min(extent as f64);
    if first >= last {
        return (0, Vec::new());
    }
    let (first, last) = (first as usize, last as usize);
    let mut begin = None;
    let mut samples = Vec::with_capacity(last - first);
    for cell in first..last {
        if let Some(a) = axis_sample(cell, scale, start, end, len) {
            begin.get_or_insert(cell);
            samples.push(a);
        }
    }
    (begin.unwrap_or(0), samples)
}

fn project_channel<T: Real>(
    detections: &[&Detection<T>],
    spec: &CanvasSpec,
    values: &mut [T],
    winners: &mut [u32],
) {
    let width = spec.canvas_width();
    for d in detections {
        let (h, w) = d.mask.dims();
        let (row0, rows) = covered_axis(spec.canvas_height(), spec.scale, d.bbox.y0, d.bbox.y1, h);
        let (col0, cols) = covered_axis(width, spec.scale, d.bbox.x0, d.bbox.x1, w);
        if rows.is_empty() || cols.is_empty() {
            continue;
        }
        let score = d.score.to_f64();
        let index = d.index as u32;
        for (dy, ys) in rows.iter().enumerate() {
            let base = (row0 + dy) * width + col0;
            let vals = &mut values[base..base + cols.len()];
            let wins = &mut winners[base..base + cols.len()];
            for ((xs, v), win) in cols.iter().zip(vals).zip(wins) {
                let sample = SamplePoint::from_axes(ys, xs);
                let c = T::from_f64(score * sample.interpolate(&d.mask));
                if c > *v {
                    *v = c;
                    *win = index;
                }
            }
        }
    }
}

fn forward_impl<T: Real>(
    detections: &[Detection<T>],
    spec: &CanvasSpec,
    parallel: bool,
) -> Result<(Canvas<T>, Provenance)> {
    validate_detections(detections, spec)?;
    if detections.len() >= NO_WINNER as usize {
        return Err(Error::InvalidArgument(format!(
            "{} detections exceed the provenance index range",
            detections.len()
        )));
    }
    let groups = group_by_class(detections, spec);
    let mut canvas = Canvas::zeros(*spec);
    let mut winners = vec![NO_WINNER; spec.len()];
    let n = spec.cells_per_channel();
    if parallel {
        canvas
            .values_mut()
            .par_chunks_mut(n)
            .zip(winners.par_chunks_mut(n))
            .zip(groups.par_iter())
            .for_each(|((vals, wins), group)| project_channel(group, spec, vals, wins));
    } else {
        for ((vals, wins), group) in canvas
            .values_mut()
            .chunks_mut(n)
            .zip(winners.chunks_mut(n))
            .zip(&groups)
        {
            project_channel(group, spec, vals, wins);
        }
    }
    let prov = Provenance {
        spec: *spec,
        num_detections: detections.len(),
        winners,
    };
    Ok((canvas, prov))
}

/// Projects all detections onto a zeroed canvas, single-threaded.
pub fn imp_forward<T: Real>(
    detections: &[Detection<T>],
    spec: &CanvasSpec,
) -> Result<(Canvas<T>, Provenance)> {
    forward_impl(detections, spec, false)
}

/// Same result as [`imp_forward`], with class channels processed in parallel.
pub fn imp_forward_par<T: Real>(
    detections: &[Detection<T>],
    spec: &CanvasSpec,
) -> Result<(Canvas<T>, Provenance)> {
    forward_impl(detections, spec, true)
}

/// Gradient of a scalar loss with respect to one detection's score and mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionGrad {
    pub index: usize,
    pub d_score: f64,
    pub mask_height: usize,
    pub mask_width: usize,
    /// Row-major, same dims as the detection's mask.
    pub d_mask: Vec<f64>,
}

impl DetectionGrad {
    fn zeros(index: usize, (h, w): (usize, usize)) -> Self {
        DetectionGrad {
            index,
            d_score: 0.0,
            mask_height: h,
            mask_width: w,
            d_mask: vec![0.0; h * w],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BackwardOptions {
    /// Treat scores as constants (their gradient stays zero).
    pub freeze_scores: bool,
}

/// Backward pass of [`imp_forward`] with scores trainable.
pub fn imp_backward<T: Real, G: Real>(
    grad_canvas: &Canvas<G>,
    prov: &Provenance,
    detections: &[Detection<T>],
) -> Result<Vec<DetectionGrad>> {
    imp_backward_with(grad_canvas, prov, detections, BackwardOptions::default())
}

/// Routes the upstream canvas gradient to the winning detection of each cell.
///
/// For a cell won by detection `i` with bilinear weights `w_k`:
/// `d_score_i += g · M_i(sample)` and `d_mask_i[k] += g · S_i · w_k`.
/// The returned list follows the order of `detections`.
pub fn imp_backward_with<T: Real, G: Real>(
    grad_canvas: &Canvas<G>,
    prov: &Provenance,
    detections: &[Detection<T>],
    opts: BackwardOptions,
) -> Result<Vec<DetectionGrad>> {
    let spec = prov.spec();
    let gspec = grad_canvas.spec();
    if (gspec.num_classes, gspec.canvas_height(), gspec.canvas_width())
        != (spec.num_classes, spec.canvas_height(), spec.canvas_width())
    {
        return Err(Error::shape(
            format!(
                "{}x{}x{}",
                spec.num_classes,
                spec.canvas_height(),
                spec.canvas_width()
            ),
            format!(
                "{}x{}x{}",
                gspec.num_classes,
                gspec.canvas_height(),
                gspec.canvas_width()
            ),
        ));
    }
    if detections.len() != prov.num_detections() {
        return Err(Error::shape(
            format!("{} detections", prov.num_detections()),
            format!("{} detections", detections.len()),
        ));
    }
    // index -> position in `detections`
    let mut position = vec![usize::MAX; detections.len()];
    for (pos, d) in detections.iter().enumerate() {
        match position.get_mut(d.index) {
            Some(slot) if *slot == usize::MAX => *slot = pos,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "detection index {} is duplicated or out of range",
                    d.index
                )))
            }
        }
    }
    let mut grads: Vec<DetectionGrad> = detections
        .iter()
        .map(|d| DetectionGrad::zeros(d.index, d.mask.dims()))
        .collect();

    let (hc, wc) = (spec.canvas_height(), spec.canvas_width());
    let g = grad_canvas.values();
    for class in 0..spec.num_classes {
        for row in 0..hc {
            for col in 0..wc {
                let off = spec.offset(class, row, col);
                let Some(winner) = decode_winner(prov.winners[off]) else {
                    continue;
                };
                let upstream = g[off].to_f64();
                if upstream == 0.0 {
                    continue;
                }
                let pos = position[winner];
                let d = &detections[pos];
                let sample = pre_map((row, col), &d.bbox, d.mask.dims(), spec).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "provenance names detection {winner} at ({class}, {row}, {col}) outside its box"
                    ))
                })?;
                let grad = &mut grads[pos];
                if !opts.freeze_scores {
                    grad.d_score += upstream * sample.interpolate(&d.mask);
                }
                let scaled = upstream * d.score.to_f64();
                for (&(r, c), &w) in sample.corners.iter().zip(&sample.weights) {
                    grad.d_mask[r * grad.mask_width + c] += scaled * w;
                }
            }
        }
    }
    Ok(grads)
}

/// A canvas cell where the best contributions are within `eps` of each other.
#[derive(Debug, Clone, PartialEq)]
pub struct TieSite {
    pub class: usize,
    pub row: usize,
    pub col: usize,
    /// Detection indices whose contribution is within `eps` of the cell max.
    pub contenders: Vec<usize>,
    /// Whether the empty-cell value 0 is also within `eps` of the max.
    pub near_zero: bool,
}

/// Finds cells where the max-fusion is within `eps` of switching winner.
pub fn near_ties<T: Real>(detections: &[Detection<T>], spec: &CanvasSpec, eps: f64) -> Vec<TieSite> {
    let groups = group_by_class(detections, spec);
    let (hc, wc) = (spec.canvas_height(), spec.canvas_width());
    let mut sites = Vec::new();
    let mut contribs: Vec<(usize, f64)> = Vec::new();
    for (class, group) in groups.iter().enumerate() {
        for row in 0..hc {
            for col in 0..wc {
                contribs.clear();
                for d in group {
                    if let Some(s) = pre_map((row, col), &d.bbox, d.mask.dims(), spec) {
                        contribs.push((d.index, contribution(d, &s).to_f64()));
                    }
                }
                if contribs.is_empty() {
                    continue;
                }
                let best = contribs.iter().map(|c| c.1).fold(0.0, f64::max);
                let contenders: Vec<usize> = contribs
                    .iter()
                    .filter(|c| best - c.1 < eps)
                    .map(|c| c.0)
                    .collect();
                let near_zero = best < eps;
                if contenders.len() > 1 || near_zero {
                    sites.push(TieSite {
                        class,
                        row,
                        col,
                        contenders,
                        near_zero,
                    });
                }
            }
        }
    }
    sites
}
