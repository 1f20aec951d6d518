//! Seeded random instances and synthetic scenes.
//!
//! All randomness comes from [`Xoshiro256PlusPlus`] seeded through
//! `seed_from_u64` (SplitMix64 expansion), so a seed reproduces the same
//! fixtures on every platform.

use rand::{Rng, SeedableRng};
pub use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::Result;
use crate::types::{BBox, CanvasSpec, Detection, InstanceMask, LabelMap, LabelSpace, Real};
use crate::train::{DetectionShape, ImpProgram, LinearReadout, Tensor3};

pub type SynthRng = Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> SynthRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Knobs for [`random_detections`].
#[derive(Debug, Clone, Copy)]
pub struct DetectionParams {
    pub max_mask_dim: usize,
    pub score_range: (f64, f64),
    pub value_range: (f64, f64),
    /// Fraction of the box allowed to hang outside the image on each side.
    pub overhang: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            max_mask_dim: 8,
            score_range: (0.0, 1.0),
            value_range: (0.0, 1.0),
            overhang: 0.25,
        }
    }
}

pub fn random_bbox(rng: &mut SynthRng, spec: &CanvasSpec, overhang: f64) -> BBox {
    let (h, w) = (spec.image_height as f64, spec.image_width as f64);
    let side = |rng: &mut SynthRng, extent: f64| {
        let len = rng.random_range(0.05 * extent..=0.8 * extent).max(0.5);
        let start = rng.random_range(-overhang * len..=extent - (1.0 - overhang) * len);
        (start, start + len)
    };
    let (x0, x1) = side(rng, w);
    let (y0, y1) = side(rng, h);
    BBox::new(x0, y0, x1, y1)
}

pub fn random_mask<T: Real>(rng: &mut SynthRng, h: usize, w: usize, range: (f64, f64)) -> InstanceMask<T> {
    let values = (0..h * w)
        .map(|_| T::from_f64(rng.random_range(range.0..=range.1)))
        .collect();
    InstanceMask::new_unchecked(h, w, values)
}

/// `n` valid detections with indices `0..n`.
pub fn random_detections<T: Real>(
    rng: &mut SynthRng,
    spec: &CanvasSpec,
    n: usize,
    params: &DetectionParams,
) -> Vec<Detection<T>> {
    (0..n)
        .map(|index| {
            let h = rng.random_range(1..=params.max_mask_dim);
            let w = rng.random_range(1..=params.max_mask_dim);
            Detection {
                class_id: rng.random_range(0..spec.num_classes),
                score: T::from_f64(rng.random_range(params.score_range.0..=params.score_range.1)),
                bbox: random_bbox(rng, spec, params.overhang),
                mask: random_mask(rng, h, w, params.value_range),
                index,
            }
        })
        .collect()
}

/// A random spec plus detections within the given bounds: canvas sides up to
/// `max_canvas`, at most `max_classes` classes and `max_dets` detections.
pub fn random_instance(
    rng: &mut SynthRng,
    max_canvas: usize,
    max_classes: usize,
    max_dets: usize,
    max_mask_dim: usize,
) -> (CanvasSpec, Vec<Detection>) {
    let scale = rng.random_range(1..=4);
    let hc = rng.random_range(1..=max_canvas);
    let wc = rng.random_range(1..=max_canvas);
    // image size in ((n-1)·s, n·s] keeps ceil(H/s) == n
    let h = (hc - 1) * scale + rng.random_range(1..=scale);
    let w = (wc - 1) * scale + rng.random_range(1..=scale);
    let c = rng.random_range(1..=max_classes);
    let spec = CanvasSpec::new(c, h, w, scale).expect("valid spec");
    let n = rng.random_range(0..=max_dets);
    let params = DetectionParams {
        max_mask_dim,
        ..Default::default()
    };
    let dets = random_detections(rng, &spec, n, &params);
    (spec, dets)
}

/// Uniform random label map over classes, background and (optionally) ignore.
pub fn random_label_map(rng: &mut SynthRng, h: usize, w: usize, space: LabelSpace, ignore_rate: f64) -> LabelMap {
    let labels = (0..h * w)
        .map(|_| {
            if rng.random_bool(ignore_rate) {
                space.ignore
            } else {
                rng.random_range(0..=space.num_classes)
            }
        })
        .collect();
    LabelMap::new(h, w, labels, space).expect("labels in range")
}

/// Sizes for [`random_program`].
#[derive(Debug, Clone, Copy)]
pub struct ProgramParams {
    pub canvas: (usize, usize),
    pub num_classes: usize,
    pub detections: usize,
    pub feature_channels: usize,
    pub max_mask_dim: usize,
    pub keep_fraction: f64,
}

impl Default for ProgramParams {
    fn default() -> Self {
        ProgramParams {
            canvas: (16, 16),
            num_classes: 3,
            detections: 4,
            feature_channels: 2,
            max_mask_dim: 6,
            keep_fraction: 0.5,
        }
    }
}

/// A gradient-check program and its parameter vector.
///
/// Scores and mask values are drawn away from 0 and 1 so finite-difference
/// probes stay inside the valid range. Candidates with a max-fusion near-tie
/// (within `tie_eps`) are redrawn, up to 64 times.
pub fn random_program(rng: &mut SynthRng, p: &ProgramParams, tie_eps: f64) -> Result<(ImpProgram, Vec<f64>)> {
    let scale = 4;
    let spec = CanvasSpec::new(p.num_classes, p.canvas.0 * scale, p.canvas.1 * scale, scale)?;
    let det_params = DetectionParams {
        max_mask_dim: p.max_mask_dim,
        score_range: (0.3, 0.95),
        value_range: (0.05, 0.95),
        overhang: 0.2,
    };
    let (hc, wc) = p.canvas;
    let inputs = p.feature_channels + p.num_classes;
    let outputs = p.num_classes + 1;
    let features = Tensor3::from_vec(
        p.feature_channels,
        hc,
        wc,
        (0..p.feature_channels * hc * wc)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )?;
    let readout = LinearReadout {
        inputs,
        outputs,
        weights: (0..inputs * outputs).map(|_| rng.random_range(-2.0..2.0)).collect(),
        bias: (0..outputs).map(|_| rng.random_range(-0.5..0.5)).collect(),
    };
    let space = LabelSpace::with_default_ignore(p.num_classes as u16)?;
    let target = random_label_map(rng, hc, wc, space, 0.05);

    let mut attempt = 0;
    loop {
        attempt += 1;
        let dets: Vec<Detection<f64>> = random_detections(rng, &spec, p.detections, &det_params);
        let program = ImpProgram {
            spec,
            shapes: dets
                .iter()
                .map(|d| DetectionShape {
                    class_id: d.class_id,
                    bbox: d.bbox,
                    mask_dims: d.mask.dims(),
                })
                .collect(),
            features: features.clone(),
            readout: readout.clone(),
            target: target.clone(),
            keep_fraction: p.keep_fraction,
        };
        let mut params = Vec::with_capacity(program.num_params());
        for d in &dets {
            params.push(d.score);
            params.extend_from_slice(d.mask.values());
        }
        let tie_free = !program.tie_proximal(&params, tie_eps)?.contains(&true);
        if tie_free || attempt >= 64 {
            return Ok((program, params));
        }
    }
}

/// Shapes drawn into a synthetic ground-truth scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Pixel rectangle `[x0, x1) × [y0, y1)`.
    Rect { x0: usize, y0: usize, x1: usize, y1: usize },
    /// Axis-aligned ellipse; pixel centers inside are filled.
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
}

impl Shape {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => (x0..x1).contains(&x) && (y0..y1).contains(&y),
            Shape::Ellipse { cx, cy, rx, ry } => {
                let dx = (x as f64 + 0.5 - cx) / rx;
                let dy = (y as f64 + 0.5 - cy) / ry;
                dx * dx + dy * dy <= 1.0
            }
        }
    }
}

/// Paints `(class, shape)` pairs in order over a background map.
pub fn paint(h: usize, w: usize, space: LabelSpace, shapes: &[(u16, Shape)]) -> LabelMap {
    let mut labels = vec![space.background(); h * w];
    for y in 0..h {
        for x in 0..w {
            for &(class, shape) in shapes {
                if shape.contains(y, x) {
                    labels[y * w + x] = class;
                }
            }
        }
    }
    LabelMap::new(h, w, labels, space).expect("classes in range")
}

/// A scene of non-overlapping rectangles and ellipses whose smaller side is at
/// least `min_side` pixels, separated by at least `gap` pixels.
pub fn large_shape_scene(
    rng: &mut SynthRng,
    h: usize,
    w: usize,
    space: LabelSpace,
    count: usize,
    min_side: usize,
    gap: usize,
) -> LabelMap {
    let mut placed: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut shapes = Vec::new();
    let max_side = (min_side * 3).min(h.min(w) - 2 * gap);
    for _ in 0..count * 50 {
        if shapes.len() == count {
            break;
        }
        let sw = rng.random_range(min_side..=max_side);
        let sh = rng.random_range(min_side..=max_side);
        if sw + 2 * gap > w || sh + 2 * gap > h {
            continue;
        }
        let x0 = rng.random_range(gap..=w - sw - gap);
        let y0 = rng.random_range(gap..=h - sh - gap);
        let clear = placed.iter().all(|&(px0, py0, px1, py1)| {
            x0 + sw + gap <= px0 || px1 + gap <= x0 || y0 + sh + gap <= py0 || py1 + gap <= y0
        });
        if !clear {
            continue;
        }
        placed.push((x0, y0, x0 + sw, y0 + sh));
        let class = rng.random_range(0..space.num_classes);
        let shape = if rng.random_bool(0.5) {
            Shape::Rect {
                x0,
                y0,
                x1: x0 + sw,
                y1: y0 + sh,
            }
        } else {
            Shape::Ellipse {
                cx: x0 as f64 + sw as f64 / 2.0,
                cy: y0 as f64 + sh as f64 / 2.0,
                rx: sw as f64 / 2.0,
                ry: sh as f64 / 2.0,
            }
        };
        shapes.push((class, shape));
    }
    paint(h, w, space, &shapes)
}
