//! Semantic label map → instance pseudo-detections.
//!
//! Every 8-connected component of a class becomes one detection with score 1,
//! a tight box on pixel edges, and a mask obtained by area-averaging the
//! component raster over an `h × w` grid spanning the box.

use std::collections::VecDeque;

use crate::types::{BBox, Detection, InstanceMask, LabelMap};

/// Components smaller than this many pixels are dropped by default.
pub const DEFAULT_MIN_AREA: usize = 16;

/// One connected component: its class, pixel extent and member pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub class: u16,
    /// Inclusive pixel bounds.
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
    /// Flat pixel indices in the label map.
    pub pixels: Vec<usize>,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn bbox(&self) -> BBox {
        BBox::new(
            self.min_col as f64,
            self.min_row as f64,
            (self.max_col + 1) as f64,
            (self.max_row + 1) as f64,
        )
    }
}

/// 8-connected components of every class label (background and ignore
/// excluded), ordered by their first pixel in row-major scan order.
pub fn connected_components(gt: &LabelMap) -> Vec<Component> {
    let (h, w) = gt.dims();
    let labels = gt.labels();
    let num_classes = gt.space().num_classes;
    let mut visited = vec![false; h * w];
    let mut queue = VecDeque::new();
    let mut out = Vec::new();
    for start in 0..h * w {
        let class = labels[start];
        if visited[start] || class >= num_classes {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        let mut comp = Component {
            class,
            min_row: start / w,
            min_col: start % w,
            max_row: start / w,
            max_col: start % w,
            pixels: Vec::new(),
        };
        while let Some(p) = queue.pop_front() {
            let (y, x) = (p / w, p % w);
            comp.pixels.push(p);
            comp.min_row = comp.min_row.min(y);
            comp.max_row = comp.max_row.max(y);
            comp.min_col = comp.min_col.min(x);
            comp.max_col = comp.max_col.max(x);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if !visited[q] && labels[q] == class {
                        visited[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        comp.pixels.sort_unstable();
        out.push(comp);
    }
    out
}

/// Overlap weights of `len` source pixels onto `cells` equal target cells:
/// for each target cell, `(pixel, fraction of the cell it covers)`.
fn box_filter_weights(len: usize, cells: usize) -> Vec<Vec<(usize, f64)>> {
    let step = len as f64 / cells as f64;
    (0..cells)
        .map(|j| {
            let a = j as f64 * step;
            let b = (j + 1) as f64 * step;
            let first = a.floor() as usize;
            let last = (b.ceil() as usize).min(len);
            (first..last)
                .filter_map(|p| {
                    let overlap = b.min(p as f64 + 1.0) - a.max(p as f64);
                    (overlap > 0.0).then(|| (p, overlap / (b - a)))
                })
                .collect()
        })
        .collect()
}

/// Area-averages a `rows × cols` binary raster down (or up) to `h × w`.
pub fn area_average(raster: &[bool], rows: usize, cols: usize, h: usize, w: usize) -> Vec<f32> {
    let wx = box_filter_weights(cols, w);
    let wy = box_filter_weights(rows, h);
    // horizontal pass: rows × w
    let mut tmp = vec![0.0f64; rows * w];
    for r in 0..rows {
        let src = &raster[r * cols..(r + 1) * cols];
        for (j, weights) in wx.iter().enumerate() {
            tmp[r * w + j] = weights
                .iter()
                .filter(|(p, _)| src[*p])
                .map(|(_, f)| f)
                .sum();
        }
    }
    let mut out = Vec::with_capacity(h * w);
    for weights in &wy {
        for j in 0..w {
            let v: f64 = weights.iter().map(|&(r, f)| f * tmp[r * w + j]).sum();
            out.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    out
}

/// Converts each component with at least `min_area` pixels into a detection.
pub fn segments_to_instances(
    gt: &LabelMap,
    mask_dims: (usize, usize),
    min_area: usize,
) -> Vec<Detection> {
    let (mh, mw) = mask_dims;
    assert!(mh > 0 && mw > 0, "mask dims must be at least 1x1");
    let w = gt.width();
    connected_components(gt)
        .into_iter()
        .filter(|c| c.area() >= min_area.max(1))
        .enumerate()
        .map(|(index, comp)| {
            let rows = comp.max_row - comp.min_row + 1;
            let cols = comp.max_col - comp.min_col + 1;
            let mut raster = vec![false; rows * cols];
            for &p in &comp.pixels {
                let (y, x) = (p / w - comp.min_row, p % w - comp.min_col);
                raster[y * cols + x] = true;
            }
            let values = area_average(&raster, rows, cols, mh, mw);
            Detection {
                class_id: comp.class as usize,
                score: 1.0,
                bbox: comp.bbox(),
                mask: InstanceMask::new_unchecked(mh, mw, values),
                index,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::LabelSpace;

    fn space() -> LabelSpace {
        LabelSpace::new(3, 255).unwrap()
    }

    fn map_with(h: usize, w: usize, rects: &[(u16, usize, usize, usize, usize)]) -> LabelMap {
        let mut labels = vec![3u16; h * w];
        for &(class, y0, x0, y1, x1) in rects {
            for y in y0..y1 {
                for x in x0..x1 {
                    labels[y * w + x] = class;
                }
            }
        }
        LabelMap::new(h, w, labels, space()).unwrap()
    }

    #[test]
    fn background_only_is_empty() {
        let lm = LabelMap::background(10, 10, space());
        assert!(segments_to_instances(&lm, (28, 28), 16).is_empty());
    }

    #[test]
    fn solid_square() {
        let lm = map_with(20, 20, &[(0, 5, 3, 13, 11)]);
        let dets = segments_to_instances(&lm, (28, 28), 16);
        assert_eq!(dets.len(), 1);
        let d = &dets[0];
        assert_eq!(d.bbox, BBox::new(3.0, 5.0, 11.0, 13.0));
        assert_eq!(d.score, 1.0);
        assert!(d.mask.values().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn disjoint_squares_are_separate_instances() {
        let lm = map_with(20, 20, &[(1, 0, 0, 5, 5), (1, 10, 10, 15, 15)]);
        let dets = segments_to_instances(&lm, (28, 28), 16);
        assert_eq!(dets.len(), 2);
        assert_eq!((dets[0].index, dets[1].index), (0, 1));
    }

    #[test]
    fn diagonal_touch_is_one_component() {
        let lm = map_with(10, 10, &[(2, 0, 0, 4, 4), (2, 4, 4, 8, 8)]);
        assert_eq!(connected_components(&lm).len(), 1);
    }

    #[test]
    fn min_area_filters() {
        let lm = map_with(10, 10, &[(0, 0, 0, 3, 3)]);
        assert!(segments_to_instances(&lm, (4, 4), 16).is_empty());
        assert_eq!(segments_to_instances(&lm, (4, 4), 9).len(), 1);
    }

    #[test]
    fn native_resolution_mask_is_the_raster() {
        let mut labels = vec![3u16; 36];
        for p in [7, 8, 13, 14, 15, 20] {
            labels[p] = 0;
        }
        let lm = LabelMap::new(6, 6, labels, space()).unwrap();
        let d = &segments_to_instances(&lm, (3, 3), 1)[0];
        // bbox rows 1..4, cols 1..4
        assert_eq!(d.bbox, BBox::new(1.0, 1.0, 4.0, 4.0));
        assert_eq!(
            d.mask.values(),
            &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn area_average_partial_coverage() {
        // 1x3 raster [1,0,0] onto 1x2: cell 0 covers pixels 0 and half of 1
        let v = area_average(&[true, false, false], 1, 3, 1, 2);
        assert!((v[0] - 2.0 / 3.0).abs() < 1e-6);
        assert_eq!(v[1], 0.0);
    }
}
