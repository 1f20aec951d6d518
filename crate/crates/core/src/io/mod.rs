//! File formats and dataset conversion.
//!
//! * [`config`]: dataset configuration (TOML or JSON),
//! * [`detections`]: detection interchange JSON,
//! * [`rle`]: COCO-style uncompressed run-length masks,
//! * [`labelmap`]: single-channel PNG label maps,
//! * [`segments`]: semantic label map → per-component pseudo-detections,
//! * [`canvas`]: raw little-endian canvas dumps.

pub mod canvas;
pub mod config;
pub mod detections;
pub mod labelmap;
pub mod rle;
pub mod segments;

pub use canvas::{read_canvas, write_canvas, CanvasDump};
pub use config::DatasetConfig;
pub use detections::{detections_to_json, load_detections, parse_detections, write_detections, DetectionSet, ImageDetections};
pub use labelmap::{load_labelmap, save_labelmap};
pub use rle::{decode_rle, encode_rle};
pub use segments::{segments_to_instances, DEFAULT_MIN_AREA};
