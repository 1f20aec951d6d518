//! Detection interchange JSON.
//!
//! ```json
//! {
//!   "images": [{"id": "a", "height": 512, "width": 384}],
//!   "detections": [
//!     {"image_id": "a", "class": "dress", "score": 0.93,
//!      "bbox": [x0, y0, x1, y1],
//!      "mask": {"h": 28, "w": 28, "data": [/* h*w row-major floats */]}}
//!   ]
//! }
//! ```
//!
//! `class` is a class name from the dataset config or an integer id. `mask`
//! carries exactly one of `data` (row-major probabilities), `rle`
//! (uncompressed column-major run lengths, decoded to 0/1) or `png_path`
//! (8/16-bit grayscale PNG scaled to `[0, 1]`, relative to the JSON file).
//! A bare array of detection records is also accepted; its images are then
//! the distinct `image_id`s in order of first appearance, without a size.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::io::config::DatasetConfig;
use crate::io::rle::decode_rle;
use crate::types::{validate_detection, BBox, CanvasSpec, Detection, InstanceMask};

/// Detections of one image, with ordinals assigned in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDetections {
    pub id: String,
    /// `(height, width)` when the file declares it.
    pub size: Option<(usize, usize)>,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    pub images: Vec<ImageDetections>,
}

impl DetectionSet {
    pub fn total(&self) -> usize {
        self.images.iter().map(|i| i.detections.len()).sum()
    }

    pub fn image(&self, id: &str) -> Option<&ImageDetections> {
        self.images.iter().find(|i| i.id == id)
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawImage {
    id: Value,
    height: usize,
    width: usize,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(untagged)]
enum RawClass {
    Id(u64),
    Name(String),
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawMask {
    h: usize,
    w: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rle: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    png_path: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    image_id: Value,
    class: RawClass,
    score: f32,
    bbox: [f64; 4],
    mask: RawMask,
}

#[derive(Debug, Serialize)]
struct RawFile {
    images: Vec<RawImage>,
    detections: Vec<RawDetection>,
}

pub(crate) fn parse_error(source_name: &str, text: &str, e: &serde_json::Error) -> Error {
    let (line, column) = (e.line(), e.column());
    // serde_json columns are 1-based byte columns within the line
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    let offset = (line_start + column.saturating_sub(1)).min(text.len());
    Error::Parse {
        source_name: source_name.to_string(),
        line,
        column,
        offset,
        message: e.to_string(),
    }
}

fn image_key(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn record_error(record: usize, err: Error) -> Error {
    Error::Validation {
        record,
        source: Box::new(err),
    }
}

fn decode_mask(raw: RawMask, base_dir: &Path) -> Result<InstanceMask> {
    let RawMask {
        h,
        w,
        data,
        rle,
        png_path,
    } = raw;
    match (data, rle, png_path) {
        (Some(values), None, None) => {
            if values.len() != h * w {
                return Err(Error::InvalidMaskValue {
                    field: "mask.data".into(),
                    reason: format!("{} values for a {h}x{w} mask", values.len()),
                });
            }
            InstanceMask::new(h, w, values)
        }
        (None, Some(counts), None) => {
            let bits = decode_rle(&counts, h, w)?;
            InstanceMask::new(h, w, bits.into_iter().map(|b| b as u8 as f32).collect())
        }
        (None, None, Some(rel)) => {
            let path = base_dir.join(rel);
            let img = image::open(&path).map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?;
            let values: Vec<f32> = match img {
                image::DynamicImage::ImageLuma8(g) => {
                    g.into_raw().into_iter().map(|v| v as f32 / 255.0).collect()
                }
                image::DynamicImage::ImageLuma16(g) => {
                    g.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()
                }
                other => {
                    return Err(Error::UnsupportedFormat {
                        path,
                        reason: format!("expected grayscale mask PNG, got {:?}", other.color()),
                    })
                }
            };
            if values.len() != h * w {
                return Err(Error::InvalidMaskValue {
                    field: "mask.png_path".into(),
                    reason: format!("image has {} pixels, declared {h}x{w}", values.len()),
                });
            }
            InstanceMask::new(h, w, values)
        }
        _ => Err(Error::InvalidMaskValue {
            field: "mask".into(),
            reason: "exactly one of data, rle, png_path is required".into(),
        }),
    }
}

/// Parses detection JSON text. `base_dir` resolves `png_path` masks.
pub fn parse_detections(
    text: &str,
    source_name: &str,
    base_dir: &Path,
    config: &DatasetConfig,
) -> Result<DetectionSet> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| parse_error(source_name, text, &e))?;
    let (raw_images, raw_dets) = match root {
        Value::Array(dets) => (Vec::new(), dets),
        Value::Object(mut obj) => {
            let images = match obj.remove("images") {
                Some(Value::Array(a)) => a,
                None => Vec::new(),
                Some(_) => return Err(Error::InvalidArgument("\"images\" must be an array".into())),
            };
            let dets = match obj.remove("detections") {
                Some(Value::Array(a)) => a,
                None => Vec::new(),
                Some(_) => {
                    return Err(Error::InvalidArgument("\"detections\" must be an array".into()))
                }
            };
            if let Some(key) = obj.keys().next() {
                return Err(Error::InvalidArgument(format!("unknown top-level key {key:?}")));
            }
            (images, dets)
        }
        _ => {
            return Err(Error::InvalidArgument(
                "detection file must be an array or an object".into(),
            ))
        }
    };

    let mut set = DetectionSet::default();
    for (i, v) in raw_images.into_iter().enumerate() {
        let img: RawImage = serde_json::from_value(v)
            .map_err(|e| Error::InvalidArgument(format!("images[{i}]: {e}")))?;
        let id = image_key(&img.id)
            .ok_or_else(|| Error::InvalidArgument(format!("images[{i}].id must be a string or number")))?;
        if set.image(&id).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate image id {id:?}")));
        }
        set.images.push(ImageDetections {
            id,
            size: Some((img.height, img.width)),
            detections: Vec::new(),
        });
    }
    let declared = !set.images.is_empty();

    let num_classes = config.num_classes();
    for (record, v) in raw_dets.into_iter().enumerate() {
        let raw: RawDetection = serde_json::from_value(v)
            .map_err(|e| record_error(record, Error::InvalidArgument(e.to_string())))?;
        let id = image_key(&raw.image_id).ok_or_else(|| {
            record_error(record, Error::InvalidArgument("image_id must be a string or number".into()))
        })?;
        let class_id = match &raw.class {
            RawClass::Id(c) => *c as usize,
            RawClass::Name(name) => config.class_id(name).ok_or_else(|| Error::UnknownClassName {
                name: name.clone(),
                record,
            })?,
        };
        let [x0, y0, x1, y1] = raw.bbox;
        let mask = decode_mask(raw.mask, base_dir).map_err(|e| record_error(record, e))?;
        let pos = match set.images.iter().position(|im| im.id == id) {
            Some(p) => p,
            None if declared => {
                return Err(record_error(
                    record,
                    Error::InvalidArgument(format!("image_id {id:?} not declared in images")),
                ))
            }
            None => {
                set.images.push(ImageDetections {
                    id,
                    size: None,
                    detections: Vec::new(),
                });
                set.images.len() - 1
            }
        };
        let image = &mut set.images[pos];
        let d = Detection {
            class_id,
            score: raw.score,
            bbox: BBox::new(x0, y0, x1, y1),
            mask,
            index: image.detections.len(),
        };
        // only the class count matters for validation here
        let spec = CanvasSpec {
            num_classes,
            image_height: 1,
            image_width: 1,
            scale: 1,
        };
        validate_detection(&d, &spec).map_err(|e| record_error(record, e))?;
        image.detections.push(d);
    }
    Ok(set)
}

pub fn load_detections(path: impl AsRef<Path>, config: &DatasetConfig) -> Result<DetectionSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_detections(&text, &path.display().to_string(), base, config)
}

/// Serializes a detection set in object form with dense masks and class names.
pub fn detections_to_json(set: &DetectionSet, config: &DatasetConfig) -> Result<String> {
    let mut images = Vec::new();
    let mut detections = Vec::new();
    for im in &set.images {
        if let Some((height, width)) = im.size {
            images.push(RawImage {
                id: Value::String(im.id.clone()),
                height,
                width,
            });
        }
        let mut dets: Vec<&Detection> = im.detections.iter().collect();
        dets.sort_by_key(|d| d.index);
        for d in dets {
            let class = match config.class_names.get(d.class_id) {
                Some(name) => RawClass::Name(name.clone()),
                None => RawClass::Id(d.class_id as u64),
            };
            detections.push(RawDetection {
                image_id: Value::String(im.id.clone()),
                class,
                score: d.score,
                bbox: [d.bbox.x0, d.bbox.y0, d.bbox.x1, d.bbox.y1],
                mask: RawMask {
                    h: d.mask.height(),
                    w: d.mask.width(),
                    data: Some(d.mask.values().to_vec()),
                    rle: None,
                    png_path: None,
                },
            });
        }
    }
    if images.len() != set.images.len() {
        // some image has no size: fall back to the bare-array form
        return Ok(serde_json::to_string_pretty(&detections).expect("serializable"));
    }
    Ok(serde_json::to_string_pretty(&RawFile { images, detections }).expect("serializable"))
}

pub fn write_detections(
    path: impl AsRef<Path>,
    set: &DetectionSet,
    config: &DatasetConfig,
) -> Result<()> {
    let path = path.as_ref();
    let text = detections_to_json(set, config)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
