//! Single-channel PNG label maps. Pixel values are label ids verbatim.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::types::{LabelMap, LabelSpace};

/// Whether label ids of `space` need a 16-bit PNG.
pub fn needs_16_bit(space: LabelSpace) -> bool {
    space.num_classes >= 255 || space.ignore > 255
}

/// Reads an 8- or 16-bit grayscale PNG and checks every value against `space`.
pub fn load_labelmap(path: impl AsRef<Path>, space: LabelSpace) -> Result<LabelMap> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels: Vec<u16> = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(u16::from).collect(),
        DynamicImage::ImageLuma16(g) => g.into_raw(),
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("expected 8/16-bit grayscale, got {:?}", other.color()),
            })
        }
    };
    LabelMap::new(h, w, labels, space)
}

/// Writes 8-bit PNG, or 16-bit when the label space does not fit in a byte.
pub fn save_labelmap(lm: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (lm.width() as u32, lm.height() as u32);
    let result = if needs_16_bit(lm.space()) {
        ImageBuffer::<Luma<u16>, _>::from_raw(w, h, lm.labels().to_vec())
            .expect("buffer matches dims")
            .save(path)
    } else {
        let bytes: Vec<u8> = lm.labels().iter().map(|&l| l as u8).collect();
        ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes)
            .expect("buffer matches dims")
            .save(path)
    };
    result.map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}
