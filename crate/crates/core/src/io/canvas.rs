//! Raw canvas dumps: three little-endian `u32` (C, Hc, Wc) followed by
//! `C·Hc·Wc` little-endian `f32` values in row-major `(class, row, col)` order.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::types::Canvas;

#[derive(Debug, Clone, PartialEq)]
pub struct CanvasDump {
    pub num_classes: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl From<&Canvas<f32>> for CanvasDump {
    fn from(c: &Canvas<f32>) -> Self {
        let spec = c.spec();
        CanvasDump {
            num_classes: spec.num_classes,
            height: spec.canvas_height(),
            width: spec.canvas_width(),
            values: c.values().to_vec(),
        }
    }
}

pub fn write_canvas(mut w: impl Write, canvas: &Canvas<f32>) -> std::io::Result<()> {
    let spec = canvas.spec();
    for dim in [spec.num_classes, spec.canvas_height(), spec.canvas_width()] {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(canvas.values().len() * 4);
    for v in canvas.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_canvas(mut r: impl Read) -> Result<CanvasDump> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::io("<canvas>", e))?;
    if bytes.len() < 12 {
        return Err(Error::shape("at least 12 header bytes", bytes.len()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let (c, h, w) = (dim(0), dim(1), dim(2));
    let body = &bytes[12..];
    if body.len() != c * h * w * 4 {
        return Err(Error::shape(
            format!("{} value bytes for {c}x{h}x{w}", c * h * w * 4),
            body.len(),
        ));
    }
    let values = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(CanvasDump {
        num_classes: c,
        height: h,
        width: w,
        values,
    })
}
