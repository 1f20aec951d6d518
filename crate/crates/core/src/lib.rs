//! Instance mask projection (IMP).
//!
//! Scored instance masks are resampled into their boxes and max-fused onto a
//! per-class canvas at `1/scale` image resolution. The operator records which
//! detection won each canvas cell, so the backward pass routes gradients to
//! exactly one detection per cell and is deterministic.
//!
//! On top of the kernel the crate provides:
//!
//! * [`projection`]: the learning-free canvas → label map pipeline,
//! * [`metrics`]: confusion matrices, per-class IOU, mIOU and mAcc,
//! * [`boundary`]: exact Euclidean distance to ground-truth boundaries and
//!   distance-restricted evaluation,
//! * [`io`]: detection JSON, RLE masks, label-map PNGs, dataset configs and the
//!   segments-to-instances conversion,
//! * [`train`]: canvas/feature concatenation, hard-bootstrapped cross entropy
//!   and a finite-difference gradient checker,
//! * [`synth`]: seeded random instances and synthetic scenes.

pub mod boundary;
pub mod error;
pub mod imp;
pub mod io;
pub mod metrics;
pub mod projection;
pub mod synth;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use imp::{
    imp_backward, imp_backward_with, imp_forward, imp_forward_par, pre_map, BackwardOptions,
    DetectionGrad, Provenance, SamplePoint,
};
pub use types::{
    validate_detection, BBox, Canvas, CanvasSpec, Detection, InstanceMask, LabelMap, LabelSpace,
    Real, DEFAULT_IGNORE,
};
