//! Learning-free semantic segmentation straight from the projected canvas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imp::imp_forward;
use crate::types::{Canvas, CanvasSpec, Detection, LabelMap, LabelSpace, Real};

/// Default background threshold.
pub const DEFAULT_TAU: f64 = 0.5;

/// How canvas-resolution output is brought to image resolution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpsampleMode {
    /// Argmax at canvas resolution, then replicate each cell over its s×s pixels.
    #[default]
    Nearest,
    /// Bilinearly resample the canvas to image resolution, then argmax per pixel.
    BilinearCanvas,
}

#[inline]
fn argmax_label(values: impl Iterator<Item = f64>, tau: f64, background: u16) -> u16 {
    let mut best = f64::NEG_INFINITY;
    let mut label = background;
    for (class, v) in values.enumerate() {
        if v > best {
            best = v;
            label = class as u16;
        }
    }
    if best > tau {
        label
    } else {
        background
    }
}

fn label_space_for(spec: &CanvasSpec, space: Option<LabelSpace>) -> Result<LabelSpace> {
    match space {
        Some(s) if s.num_classes as usize == spec.num_classes => Ok(s),
        Some(s) => Err(Error::shape(
            format!("{} classes", spec.num_classes),
            format!("{} classes", s.num_classes),
        )),
        None => {
            let c = u16::try_from(spec.num_classes)
                .map_err(|_| Error::InvalidSpec(format!("{} classes", spec.num_classes)))?;
            LabelSpace::with_default_ignore(c)
        }
    }
}

/// Per-cell argmax over classes when the max exceeds `tau`, else background.
/// Ties go to the lowest class id.
pub fn canvas_to_labels<T: Real>(canvas: &Canvas<T>, tau: f64) -> Result<LabelMap> {
    canvas_to_labels_in(canvas, tau, None)
}

/// [`canvas_to_labels`] with an explicit label space (e.g. a custom ignore value).
pub fn canvas_to_labels_in<T: Real>(
    canvas: &Canvas<T>,
    tau: f64,
    space: Option<LabelSpace>,
) -> Result<LabelMap> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau {tau} is outside [0, 1]")));
    }
    let spec = canvas.spec();
    let space = label_space_for(spec, space)?;
    let n = spec.cells_per_channel();
    let values = canvas.values();
    let labels = (0..n)
        .map(|cell| {
            argmax_label(
                (0..spec.num_classes).map(|c| values[c * n + cell].to_f64()),
                tau,
                space.background(),
            )
        })
        .collect();
    LabelMap::new(spec.canvas_height(), spec.canvas_width(), labels, space)
}

/// Nearest-cell replication: pixel `(y, x)` takes cell `(y / s, x / s)`.
pub fn upsample_labels(labels: &LabelMap, spec: &CanvasSpec) -> Result<LabelMap> {
    let (hc, wc) = (spec.canvas_height(), spec.canvas_width());
    if labels.dims() != (hc, wc) {
        return Err(Error::shape(
            format!("{hc}x{wc}"),
            format!("{}x{}", labels.height(), labels.width()),
        ));
    }
    let (h, w, s) = (spec.image_height, spec.image_width, spec.scale);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let row = &labels.labels()[(y / s) * wc..(y / s + 1) * wc];
        out.extend((0..w).map(|x| row[x / s]));
    }
    LabelMap::new(h, w, out, labels.space())
}

/// Samples every class channel bilinearly at pixel centers (cell centers sit at
/// `(i + 0.5)·s`, edges replicate), then applies the tau-argmax rule per pixel.
pub fn canvas_to_labels_bilinear<T: Real>(
    canvas: &Canvas<T>,
    tau: f64,
    space: Option<LabelSpace>,
) -> Result<LabelMap> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau {tau} is outside [0, 1]")));
    }
    let spec = canvas.spec();
    let space = label_space_for(spec, space)?;
    let (hc, wc) = (spec.canvas_height(), spec.canvas_width());
    let s = spec.scale as f64;
    let axis = |pixel: usize, len: usize| {
        let coord = ((pixel as f64 + 0.5) / s - 0.5).clamp(0.0, (len - 1) as f64);
        let lo = coord.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        (lo, hi, coord - lo as f64)
    };
    let xs: Vec<_> = (0..spec.image_width).map(|x| axis(x, wc)).collect();
    let mut labels = Vec::with_capacity(spec.image_height * spec.image_width);
    for y in 0..spec.image_height {
        let (r0, r1, fy) = axis(y, hc);
        for &(c0, c1, fx) in &xs {
            let sample = (0..spec.num_classes).map(|c| {
                let v = |r, col| canvas.get(c, r, col).to_f64();
                let top = v(r0, c0) * (1.0 - fx) + v(r0, c1) * fx;
                let bottom = v(r1, c0) * (1.0 - fx) + v(r1, c1) * fx;
                top * (1.0 - fy) + bottom * fy
            });
            labels.push(argmax_label(sample, tau, space.background()));
        }
    }
    LabelMap::new(spec.image_height, spec.image_width, labels, space)
}

/// Canvas → labels → image-resolution labels in one call.
pub fn project_to_semantic<T: Real>(
    detections: &[Detection<T>],
    spec: &CanvasSpec,
    tau: f64,
) -> Result<LabelMap> {
    project_to_semantic_with(detections, spec, tau, None, UpsampleMode::Nearest)
}

pub fn project_to_semantic_with<T: Real>(
    detections: &[Detection<T>],
    spec: &CanvasSpec,
    tau: f64,
    space: Option<LabelSpace>,
    mode: UpsampleMode,
) -> Result<LabelMap> {
    let (canvas, _) = imp_forward(detections, spec)?;
    labels_from_canvas(&canvas, tau, space, mode)
}

/// Image-resolution labels from an already projected canvas.
pub fn labels_from_canvas<T: Real>(
    canvas: &Canvas<T>,
    tau: f64,
    space: Option<LabelSpace>,
    mode: UpsampleMode,
) -> Result<LabelMap> {
    match mode {
        UpsampleMode::Nearest => {
            let coarse = canvas_to_labels_in(canvas, tau, space)?;
            upsample_labels(&coarse, canvas.spec())
        }
        UpsampleMode::BilinearCanvas => canvas_to_labels_bilinear(canvas, tau, space),
    }
}
