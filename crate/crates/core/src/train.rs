//! Differentiable glue around the projection: canvas/feature concatenation, a
//! fixed linear readout, hard-bootstrapped cross entropy, and a central
//! finite-difference gradient checker.

use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::imp::{imp_backward, imp_forward, near_ties, pre_map};
use crate::types::{BBox, Canvas, CanvasSpec, Detection, InstanceMask, LabelMap, Real};

/// Dense `channels × height × width` tensor in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor3 {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(
                format!("{channels}x{height}x{width}"),
                data.len(),
            ));
        }
        Ok(Tensor3 {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.plane()..(c + 1) * self.plane()]
    }

    /// Channels `range` as a new tensor.
    pub fn slice_channels(&self, range: Range<usize>) -> Tensor3 {
        let p = self.plane();
        Tensor3 {
            channels: range.len(),
            height: self.height,
            width: self.width,
            data: self.data[range.start * p..range.end * p].to_vec(),
        }
    }
}

/// Features first, canvas channels after.
pub fn concat_canvas<T: Real>(features: &Tensor3, canvas: &Canvas<T>) -> Result<Tensor3> {
    let spec = canvas.spec();
    if (features.height, features.width) != (spec.canvas_height(), spec.canvas_width()) {
        return Err(Error::shape(
            format!("{}x{}", spec.canvas_height(), spec.canvas_width()),
            format!("{}x{}", features.height, features.width),
        ));
    }
    let mut data = Vec::with_capacity(features.data.len() + canvas.values().len());
    data.extend_from_slice(&features.data);
    data.extend(canvas.values().iter().map(|v| v.to_f64()));
    Tensor3::from_vec(
        features.channels + spec.num_classes,
        features.height,
        features.width,
        data,
    )
}

/// Splits an upstream gradient of [`concat_canvas`] into (features, canvas) parts.
pub fn concat_canvas_backward(grad: &Tensor3, feature_channels: usize) -> Result<(Tensor3, Tensor3)> {
    if feature_channels > grad.channels {
        return Err(Error::shape(
            format!("at least {feature_channels} channels"),
            grad.channels,
        ));
    }
    Ok((
        grad.slice_channels(0..feature_channels),
        grad.slice_channels(feature_channels..grad.channels),
    ))
}

/// Per-pixel `1×1` linear map: `out[k] = Σ_c W[k][c]·in[c] + b[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearReadout {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearReadout {
    pub fn forward(&self, x: &Tensor3) -> Result<Tensor3> {
        if x.channels != self.inputs {
            return Err(Error::shape(format!("{} channels", self.inputs), x.channels));
        }
        let p = x.plane();
        let mut out = Tensor3::zeros(self.outputs, x.height, x.width);
        for k in 0..self.outputs {
            let dst = &mut out.data[k * p..(k + 1) * p];
            dst.fill(self.bias[k]);
            for c in 0..self.inputs {
                let w = self.weights[k * self.inputs + c];
                for (d, s) in dst.iter_mut().zip(x.channel(c)) {
                    *d += w * s;
                }
            }
        }
        Ok(out)
    }

    /// Gradient with respect to the input.
    pub fn backward(&self, grad_out: &Tensor3) -> Result<Tensor3> {
        if grad_out.channels != self.outputs {
            return Err(Error::shape(
                format!("{} channels", self.outputs),
                grad_out.channels,
            ));
        }
        let p = grad_out.plane();
        let mut grad_in = Tensor3::zeros(self.inputs, grad_out.height, grad_out.width);
        for c in 0..self.inputs {
            let dst = &mut grad_in.data[c * p..(c + 1) * p];
            for k in 0..self.outputs {
                let w = self.weights[k * self.inputs + c];
                for (d, g) in dst.iter_mut().zip(grad_out.channel(k)) {
                    *d += w * g;
                }
            }
        }
        Ok(grad_in)
    }
}

/// Loss, logit gradient and the kept pixels (flat indices, ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutput {
    pub loss: f64,
    pub grad: Tensor3,
    pub kept: Vec<usize>,
}

fn check_target(logits: &Tensor3, target: &LabelMap) -> Result<()> {
    if logits.channels < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 logit channels, got {}",
            logits.channels
        )));
    }
    if (logits.height, logits.width) != target.dims() {
        return Err(Error::shape(
            format!("{}x{}", target.height(), target.width()),
            format!("{}x{}", logits.height, logits.width),
        ));
    }
    let ignore = target.space().ignore;
    for (i, &l) in target.labels().iter().enumerate() {
        if l != ignore && l as usize >= logits.channels {
            return Err(Error::LabelOutOfRange {
                label: l as u32,
                index: i,
                num_classes: logits.channels as u16,
                ignore,
            });
        }
    }
    Ok(())
}

/// Softmax cross entropy at one pixel: `(loss, softmax probabilities)`.
fn pixel_ce(logits: &Tensor3, pixel: usize, label: usize, probs: &mut [f64]) -> f64 {
    let p = logits.plane();
    let mut max = f64::NEG_INFINITY;
    for (c, slot) in probs.iter_mut().enumerate() {
        *slot = logits.data[c * p + pixel];
        max = max.max(*slot);
    }
    let mut sum = 0.0;
    for v in probs.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in probs.iter_mut() {
        *v /= sum;
    }
    max + sum.ln() - logits.data[label * p + pixel]
}

/// Mean cross entropy and its gradient over an explicit pixel set.
pub fn cross_entropy_on(logits: &Tensor3, target: &LabelMap, pixels: &[usize]) -> Result<(f64, Tensor3)> {
    check_target(logits, target)?;
    if pixels.is_empty() {
        return Err(Error::NoValidPixels);
    }
    let p = logits.plane();
    let k = pixels.len() as f64;
    let mut probs = vec![0.0; logits.channels];
    let mut grad = Tensor3::zeros(logits.channels, logits.height, logits.width);
    let mut total = 0.0;
    for &pixel in pixels {
        let label = target.labels()[pixel] as usize;
        total += pixel_ce(logits, pixel, label, &mut probs);
        for (c, &pr) in probs.iter().enumerate() {
            let onehot = if c == label { 1.0 } else { 0.0 };
            grad.data[c * p + pixel] += (pr - onehot) / k;
        }
    }
    Ok((total / k, grad))
}

/// Hard-bootstrapped cross entropy: keeps the `ceil(keep_fraction · valid)`
/// highest-loss non-ignore pixels (ties by lowest flat index) and averages
/// over them.
pub fn bootstrapped_ce(logits: &Tensor3, target: &LabelMap, keep_fraction: f64) -> Result<BootstrapOutput> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "keep_fraction {keep_fraction} must be in (0, 1]"
        )));
    }
    check_target(logits, target)?;
    let ignore = target.space().ignore;
    let mut probs = vec![0.0; logits.channels];
    let mut losses: Vec<(usize, f64)> = target
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != ignore)
        .map(|(i, &l)| (i, pixel_ce(logits, i, l as usize, &mut probs)))
        .collect();
    if losses.is_empty() {
        return Err(Error::NoValidPixels);
    }
    let keep = ((keep_fraction * losses.len() as f64).ceil() as usize).clamp(1, losses.len());
    losses.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut kept: Vec<usize> = losses[..keep].iter().map(|&(i, _)| i).collect();
    kept.sort_unstable();
    let (loss, grad) = cross_entropy_on(logits, target, &kept)?;
    Ok(BootstrapOutput { loss, grad, kept })
}

/// Worst disagreement for one named block of coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorReport {
    pub name: String,
    pub coords: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordError {
    pub coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub coords: usize,
    pub checked: usize,
    /// Worst relative error over checked (non-tie-proximal) coordinates.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub tensors: Vec<TensorReport>,
    /// Checked coordinates exceeding the tolerance.
    pub offending: Vec<CoordError>,
    /// Coordinates excluded because a max-fusion switch lies within reach.
    pub tie_proximal: Vec<usize>,
    /// Worst relative error among the tie-proximal coordinates.
    pub tie_max_rel_error: f64,
    pub passed: bool,
}

/// Denominator floor for [`relative_error`].
///
/// Central differences at step `h` carry an `O(h²)` truncation error, so
/// gradients much smaller than this cannot be resolved to a relative tolerance.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares `analytic` with central differences of `f` around `x`.
///
/// `blocks` names coordinate ranges for the per-tensor summary.
pub fn gradcheck(
    f: impl Fn(&[f64]) -> Result<f64>,
    x: &[f64],
    analytic: &[f64],
    step: f64,
    tolerance: f64,
    tie_proximal: &[bool],
    blocks: &[(String, Range<usize>)],
) -> Result<GradcheckReport> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(format!("step {step} must be positive")));
    }
    if analytic.len() != x.len() || tie_proximal.len() != x.len() {
        return Err(Error::shape(x.len(), analytic.len().min(tie_proximal.len())));
    }
    let mut probe = x.to_vec();
    let mut numeric = vec![0.0; x.len()];
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe)?;
        probe[i] = x[i] - step;
        let down = f(&probe)?;
        probe[i] = x[i];
        for v in [up, down] {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { coordinate: i, value: v });
            }
        }
        numeric[i] = (up - down) / (2.0 * step);
    }

    let mut report = GradcheckReport {
        step,
        tolerance,
        coords: x.len(),
        checked: 0,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        tensors: Vec::new(),
        offending: Vec::new(),
        tie_proximal: Vec::new(),
        tie_max_rel_error: 0.0,
        passed: true,
    };
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let rel = relative_error(a, n);
        if tie_proximal[i] {
            report.tie_proximal.push(i);
            report.tie_max_rel_error = report.tie_max_rel_error.max(rel);
            continue;
        }
        report.checked += 1;
        report.max_rel_error = report.max_rel_error.max(rel);
        report.max_abs_error = report.max_abs_error.max((a - n).abs());
        if rel > tolerance {
            report.offending.push(CoordError {
                coordinate: i,
                analytic: a,
                numeric: n,
                rel_error: rel,
            });
        }
    }
    for (name, range) in blocks {
        let mut t = TensorReport {
            name: name.clone(),
            coords: range.len(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for i in range.clone().filter(|&i| !tie_proximal[i]) {
            t.max_rel_error = t.max_rel_error.max(relative_error(analytic[i], numeric[i]));
            t.max_abs_error = t.max_abs_error.max((analytic[i] - numeric[i]).abs());
        }
        report.tensors.push(t);
    }
    report.passed = report.offending.is_empty();
    Ok(report)
}

/// Shape of one detection in an [`ImpProgram`]; score and mask values come
/// from the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionShape {
    pub class_id: usize,
    pub bbox: BBox,
    pub mask_dims: (usize, usize),
}

/// The checked composition: `bootstrapped_ce ∘ readout ∘ concat_canvas ∘ imp_forward`,
/// differentiated with respect to every detection's score and mask values.
///
/// Parameter layout: per detection in order, `[score, mask values (row-major)]`.
#[derive(Debug, Clone)]
pub struct ImpProgram {
    pub spec: CanvasSpec,
    pub shapes: Vec<DetectionShape>,
    pub features: Tensor3,
    pub readout: LinearReadout,
    /// Canvas-resolution target for the loss.
    pub target: LabelMap,
    pub keep_fraction: f64,
}

/// Result of one analytic evaluation.
#[derive(Debug, Clone)]
pub struct ProgramEval {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub kept: Vec<usize>,
}

impl ImpProgram {
    pub fn num_params(&self) -> usize {
        self.shapes.iter().map(|s| 1 + s.mask_dims.0 * s.mask_dims.1).sum()
    }

    /// Named coordinate ranges (`det{i}.score`, `det{i}.mask`).
    pub fn blocks(&self) -> Vec<(String, Range<usize>)> {
        let mut out = Vec::new();
        let mut at = 0;
        for (i, s) in self.shapes.iter().enumerate() {
            let n = s.mask_dims.0 * s.mask_dims.1;
            out.push((format!("det{i}.score"), at..at + 1));
            out.push((format!("det{i}.mask"), at + 1..at + 1 + n));
            at += 1 + n;
        }
        out
    }

    pub fn detections(&self, params: &[f64]) -> Result<Vec<Detection<f64>>> {
        if params.len() != self.num_params() {
            return Err(Error::shape(self.num_params(), params.len()));
        }
        let mut at = 0;
        let mut out = Vec::with_capacity(self.shapes.len());
        for (index, s) in self.shapes.iter().enumerate() {
            let n = s.mask_dims.0 * s.mask_dims.1;
            out.push(Detection {
                class_id: s.class_id,
                score: params[at],
                bbox: s.bbox,
                mask: InstanceMask::new_unchecked(
                    s.mask_dims.0,
                    s.mask_dims.1,
                    params[at + 1..at + 1 + n].to_vec(),
                ),
                index,
            });
            at += 1 + n;
        }
        Ok(out)
    }

    fn logits(&self, dets: &[Detection<f64>]) -> Result<(Tensor3, crate::imp::Provenance)> {
        let (canvas, prov) = imp_forward(dets, &self.spec)?;
        let x = concat_canvas(&self.features, &canvas)?;
        Ok((self.readout.forward(&x)?, prov))
    }

    /// Loss over a fixed pixel set.
    pub fn loss_with_kept(&self, params: &[f64], kept: &[usize]) -> Result<f64> {
        let dets = self.detections(params)?;
        let (logits, _) = self.logits(&dets)?;
        Ok(cross_entropy_on(&logits, &self.target, kept)?.0)
    }

    /// Loss, analytic gradient and the bootstrapped pixel set at `params`.
    pub fn evaluate(&self, params: &[f64]) -> Result<ProgramEval> {
        let dets = self.detections(params)?;
        let (logits, prov) = self.logits(&dets)?;
        let boot = bootstrapped_ce(&logits, &self.target, self.keep_fraction)?;
        let grad_x = self.readout.backward(&boot.grad)?;
        let (_, grad_canvas) = concat_canvas_backward(&grad_x, self.features.channels)?;
        let grad_canvas = Canvas::from_values(self.spec, grad_canvas.data)?;
        let det_grads = imp_backward(&grad_canvas, &prov, &dets)?;
        let mut grad = Vec::with_capacity(params.len());
        for g in det_grads {
            grad.push(g.d_score);
            grad.extend_from_slice(&g.d_mask);
        }
        Ok(ProgramEval {
            loss: boot.loss,
            grad,
            kept: boot.kept,
        })
    }

    /// Marks parameters that feed a cell whose max-fusion winner could change
    /// under a perturbation of size `eps`.
    pub fn tie_proximal(&self, params: &[f64], eps: f64) -> Result<Vec<bool>> {
        let dets = self.detections(params)?;
        let offsets: Vec<usize> = self
            .blocks()
            .iter()
            .step_by(2)
            .map(|(_, r)| r.start)
            .collect();
        let mut flags = vec![false; params.len()];
        for site in near_ties(&dets, &self.spec, eps) {
            for &idx in &site.contenders {
                let d = &dets[idx];
                let base = offsets[idx];
                flags[base] = true;
                if let Some(s) = pre_map((site.row, site.col), &d.bbox, d.mask.dims(), &self.spec) {
                    for &(r, c) in &s.corners {
                        flags[base + 1 + r * d.mask.width() + c] = true;
                    }
                }
            }
        }
        Ok(flags)
    }

    /// Full check at `params`, holding the bootstrapped pixel set fixed.
    pub fn gradcheck(&self, params: &[f64], step: f64, tolerance: f64, tie_eps: f64) -> Result<GradcheckReport> {
        let eval = self.evaluate(params)?;
        let ties = self.tie_proximal(params, tie_eps)?;
        gradcheck(
            |p| self.loss_with_kept(p, &eval.kept),
            params,
            &eval.grad,
            step,
            tolerance,
            &ties,
            &self.blocks(),
        )
    }
}
