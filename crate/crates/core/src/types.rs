//! Domain types shared by every stage: boxes, masks, detections, canvases and
//! label maps.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default label value for pixels excluded from evaluation and losses.
pub const DEFAULT_IGNORE: u16 = 255;

/// Storage scalar for masks, scores and canvases.
///
/// Kernels do their arithmetic in `f64` and round once into the storage type,
/// so `f32` storage stays within `[0, 1]` and `f64` storage is exact enough
/// for finite-difference checks.
pub trait Real: Copy + Debug + Default + PartialOrd + Send + Sync + 'static {
    const ZERO: Self;
    const ONE: Self;
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
}

/// Axis-aligned box in continuous image coordinates (pixels, origin at the
/// top-left image corner).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BBox { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [
            ("bbox.x0", self.x0),
            ("bbox.y0", self.y0),
            ("bbox.x1", self.x1),
            ("bbox.y1", self.y1),
        ];
        for (name, v) in coords {
            if !v.is_finite() {
                return Err(Error::InvalidBox {
                    field: name.to_string(),
                    reason: format!("coordinate {v} is not finite"),
                });
            }
        }
        if self.x1 <= self.x0 {
            return Err(Error::InvalidBox {
                field: "bbox.x1".to_string(),
                reason: format!("x1 = {} must exceed x0 = {}", self.x1, self.x0),
            });
        }
        if self.y1 <= self.y0 {
            return Err(Error::InvalidBox {
                field: "bbox.y1".to_string(),
                reason: format!("y1 = {} must exceed y0 = {}", self.y1, self.y0),
            });
        }
        Ok(())
    }
}

/// Row-major `height × width` grid of mask probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask<T = f32> {
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Real> InstanceMask<T> {
    /// Builds a mask, checking dimensions and that every value lies in `[0, 1]`.
    pub fn new(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        let mask = InstanceMask {
            height,
            width,
            values,
        };
        mask.validate()?;
        Ok(mask)
    }

    /// Builds a mask without range checks. Shape must still agree.
    pub fn new_unchecked(height: usize, width: usize, values: Vec<T>) -> Self {
        assert_eq!(values.len(), height * width, "mask length must equal h*w");
        InstanceMask {
            height,
            width,
            values,
        }
    }

    pub fn filled(height: usize, width: usize, value: T) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.width + col]
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidMaskValue {
                field: "mask.dims".to_string(),
                reason: format!("{}x{} mask must be at least 1x1", self.height, self.width),
            });
        }
        if self.values.len() != self.height * self.width {
            return Err(Error::InvalidMaskValue {
                field: "mask.values".to_string(),
                reason: format!(
                    "{} values for a {}x{} mask",
                    self.values.len(),
                    self.height,
                    self.width
                ),
            });
        }
        for (i, v) in self.values.iter().enumerate() {
            let v = v.to_f64();
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidMaskValue {
                    field: format!("mask.values[{i}]"),
                    reason: format!("{v} is outside [0, 1]"),
                });
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> InstanceMask<U> {
        InstanceMask {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

/// One scored instance prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T = f32> {
    pub class_id: usize,
    pub score: T,
    pub bbox: BBox,
    pub mask: InstanceMask<T>,
    /// Ordinal within its image. Ties in the max-fusion go to the lowest index.
    pub index: usize,
}

impl<T: Real> Detection<T> {
    pub fn cast<U: Real>(&self) -> Detection<U> {
        Detection {
            class_id: self.class_id,
            score: U::from_f64(self.score.to_f64()),
            bbox: self.bbox,
            mask: self.mask.cast(),
            index: self.index,
        }
    }
}

/// Checks a detection against its own invariants and the canvas class count.
///
/// Boxes may extend past the image; projection clips to the canvas.
pub fn validate_detection<T: Real>(d: &Detection<T>, spec: &CanvasSpec) -> Result<()> {
    let score = d.score.to_f64();
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::InvalidScore {
            field: "score".to_string(),
            value: score,
        });
    }
    d.bbox.validate()?;
    d.mask.validate()?;
    if d.class_id >= spec.num_classes {
        return Err(Error::ClassOutOfRange {
            field: "class_id".to_string(),
            class_id: d.class_id,
            num_classes: spec.num_classes,
        });
    }
    Ok(())
}

/// Checks a whole detection list, including that indices are `0..n` in some order.
pub fn validate_detections<T: Real>(detections: &[Detection<T>], spec: &CanvasSpec) -> Result<()> {
    let mut seen = vec![false; detections.len()];
    for (record, d) in detections.iter().enumerate() {
        validate_detection(d, spec).map_err(|e| Error::Validation {
            record,
            source: Box::new(e),
        })?;
        match seen.get_mut(d.index) {
            Some(slot) if !*slot => *slot = true,
            _ => {
                return Err(Error::Validation {
                    record,
                    source: Box::new(Error::InvalidArgument(format!(
                        "detection index {} is duplicated or not in 0..{}",
                        d.index,
                        detections.len()
                    ))),
                })
            }
        }
    }
    Ok(())
}

/// Canvas geometry: class count, image size and integer downsampling factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanvasSpec {
    pub num_classes: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub scale: usize,
}

impl CanvasSpec {
    pub fn new(
        num_classes: usize,
        image_height: usize,
        image_width: usize,
        scale: usize,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidSpec("num_classes must be at least 1".into()));
        }
        if scale == 0 {
            return Err(Error::InvalidSpec("scale must be at least 1".into()));
        }
        if image_height == 0 || image_width == 0 {
            return Err(Error::InvalidSpec(format!(
                "image size {image_height}x{image_width} must be non-empty"
            )));
        }
        Ok(CanvasSpec {
            num_classes,
            image_height,
            image_width,
            scale,
        })
    }

    /// Canvas rows, `ceil(H / s)`.
    pub fn canvas_height(&self) -> usize {
        self.image_height.div_ceil(self.scale)
    }

    /// Canvas columns, `ceil(W / s)`.
    pub fn canvas_width(&self) -> usize {
        self.image_width.div_ceil(self.scale)
    }

    pub fn cells_per_channel(&self) -> usize {
        self.canvas_height() * self.canvas_width()
    }

    pub fn len(&self) -> usize {
        self.num_classes * self.cells_per_channel()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn offset(&self, class: usize, row: usize, col: usize) -> usize {
        (class * self.canvas_height() + row) * self.canvas_width() + col
    }
}

/// `C × Hc × Wc` row-major grid of fused, score-scaled mask probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Canvas<T = f32> {
    spec: CanvasSpec,
    values: Vec<T>,
}

impl<T: Real> Canvas<T> {
    pub fn zeros(spec: CanvasSpec) -> Self {
        Canvas {
            spec,
            values: vec![T::ZERO; spec.len()],
        }
    }

    pub fn from_values(spec: CanvasSpec, values: Vec<T>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::shape(spec.len(), values.len()));
        }
        Ok(Canvas { spec, values })
    }

    pub fn spec(&self) -> &CanvasSpec {
        &self.spec
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, class: usize, row: usize, col: usize) -> T {
        self.values[self.spec.offset(class, row, col)]
    }

    pub fn channel(&self, class: usize) -> &[T] {
        let n = self.spec.cells_per_channel();
        &self.values[class * n..(class + 1) * n]
    }
}

/// Label id conventions for one dataset: `0..num_classes` are classes,
/// `num_classes` is background and `ignore` marks unlabeled pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub num_classes: u16,
    pub ignore: u16,
}

impl LabelSpace {
    pub fn new(num_classes: u16, ignore: u16) -> Result<Self> {
        if num_classes == 0 || num_classes == u16::MAX {
            return Err(Error::InvalidSpec(format!(
                "num_classes {num_classes} out of range"
            )));
        }
        if ignore <= num_classes {
            return Err(Error::InvalidSpec(format!(
                "ignore label {ignore} collides with classes 0..={num_classes}"
            )));
        }
        Ok(LabelSpace {
            num_classes,
            ignore,
        })
    }

    /// Uses [`DEFAULT_IGNORE`] when it fits, else `u16::MAX`.
    pub fn with_default_ignore(num_classes: u16) -> Result<Self> {
        let ignore = if num_classes < DEFAULT_IGNORE {
            DEFAULT_IGNORE
        } else {
            u16::MAX
        };
        Self::new(num_classes, ignore)
    }

    pub fn background(&self) -> u16 {
        self.num_classes
    }

    pub fn is_valid(&self, label: u16) -> bool {
        label <= self.num_classes || label == self.ignore
    }
}

/// `H × W` grid of label ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u16>,
    space: LabelSpace,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u16>, space: LabelSpace) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::shape(
                format!("{height}x{width} = {}", height * width),
                labels.len(),
            ));
        }
        if let Some((index, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| !space.is_valid(l))
        {
            return Err(Error::LabelOutOfRange {
                label: label as u32,
                index,
                num_classes: space.num_classes,
                ignore: space.ignore,
            });
        }
        Ok(LabelMap {
            height,
            width,
            labels,
            space,
        })
    }

    pub fn filled(height: usize, width: usize, label: u16, space: LabelSpace) -> Result<Self> {
        Self::new(height, width, vec![label; height * width], space)
    }

    pub fn background(height: usize, width: usize, space: LabelSpace) -> Self {
        LabelMap {
            height,
            width,
            labels: vec![space.background(); height * width],
            space,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn space(&self) -> LabelSpace {
        self.space
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.width + col]
    }

    pub fn check_same_dims(&self, other: &LabelMap) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> CanvasSpec {
        CanvasSpec::new(3, 16, 16, 4).unwrap()
    }

    fn det(score: f32, bbox: BBox) -> Detection {
        Detection {
            class_id: 0,
            score,
            bbox,
            mask: InstanceMask::filled(2, 2, 0.5).unwrap(),
            index: 0,
        }
    }

    #[test]
    fn valid_detection_passes() {
        let d = det(0.5, BBox::new(0.0, 0.0, 10.0, 10.0));
        validate_detection(&d, &spec()).unwrap();
    }

    #[test]
    fn score_above_one_is_rejected() {
        let d = det(1.2, BBox::new(0.0, 0.0, 10.0, 10.0));
        let err = validate_detection(&d, &spec()).unwrap_err();
        assert!(matches!(err, Error::InvalidScore { ref field, .. } if field == "score"));
    }

    #[test]
    fn zero_width_box_is_rejected() {
        let d = det(0.5, BBox::new(5.0, 5.0, 5.0, 9.0));
        let err = validate_detection(&d, &spec()).unwrap_err();
        assert!(matches!(err, Error::InvalidBox { ref field, .. } if field == "bbox.x1"));
    }

    #[test]
    fn nan_box_and_bad_mask_and_class() {
        let d = det(0.5, BBox::new(f64::NAN, 0.0, 1.0, 1.0));
        assert!(matches!(
            validate_detection(&d, &spec()),
            Err(Error::InvalidBox { .. })
        ));

        let mut d = det(0.5, BBox::new(0.0, 0.0, 1.0, 1.0));
        d.mask.values_mut()[3] = 1.5;
        match validate_detection(&d, &spec()) {
            Err(Error::InvalidMaskValue { field, .. }) => assert_eq!(field, "mask.values[3]"),
            other => panic!("unexpected {other:?}"),
        }

        let mut d = det(0.5, BBox::new(0.0, 0.0, 1.0, 1.0));
        d.class_id = 3;
        assert!(matches!(
            validate_detection(&d, &spec()),
            Err(Error::ClassOutOfRange { class_id: 3, .. })
        ));
    }

    #[test]
    fn box_outside_image_is_legal() {
        let d = det(0.5, BBox::new(-40.0, -3.0, 100.0, 200.0));
        validate_detection(&d, &spec()).unwrap();
    }

    #[test]
    fn duplicate_indices_rejected() {
        let a = det(0.5, BBox::new(0.0, 0.0, 1.0, 1.0));
        let b = a.clone();
        assert!(validate_detections(&[a.clone(), b], &spec()).is_err());
        let mut c = a.clone();
        c.index = 1;
        validate_detections(&[c, a], &spec()).unwrap();
    }

    #[test]
    fn canvas_dims_round_up() {
        let s = CanvasSpec::new(2, 5, 9, 4).unwrap();
        assert_eq!((s.canvas_height(), s.canvas_width()), (2, 3));
        let c: Canvas = Canvas::zeros(s);
        assert!(c.values().iter().all(|&v| v == 0.0));
        assert!(CanvasSpec::new(2, 5, 9, 0).is_err());
        assert!(CanvasSpec::new(0, 5, 9, 1).is_err());
    }

    #[test]
    fn label_map_rejects_unknown_labels() {
        let space = LabelSpace::new(3, 255).unwrap();
        assert!(LabelMap::new(1, 3, vec![0, 3, 255], space).is_ok());
        let err = LabelMap::new(1, 3, vec![0, 4, 255], space).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 4, index: 1, .. }));
        assert!(LabelSpace::new(3, 2).is_err());
        assert_eq!(LabelSpace::with_default_ignore(300).unwrap().ignore, u16::MAX);
    }
}
