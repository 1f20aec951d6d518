//! Distance-to-boundary analysis over ground-truth label maps.
//!
//! Boundaries are 4-connected label changes between non-ignore pixels. The
//! distance field is the exact Euclidean distance to the nearest boundary
//! pixel, computed with the separable lower-envelope transform (one pass of
//! 1-D squared-distance parabolas over columns, then over rows).

use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::types::LabelMap;

/// Thresholds (pixels) used for the boundary-stratified mIOU table.
pub const DEFAULT_THRESHOLDS: [f64; 6] = [10.0, 20.0, 50.0, 100.0, 200.0, 400.0];

/// Binary `H × W` grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl BoundaryMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Euclidean distance from every pixel to the nearest boundary pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl DistanceField {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

/// Marks pixels with a 4-neighbor of a different (non-ignore) label.
/// Ignore pixels are never boundary and never count as differing neighbors.
pub fn boundary_pixels(gt: &LabelMap) -> BoundaryMask {
    let (h, w) = gt.dims();
    let ignore = gt.space().ignore;
    let labels = gt.labels();
    let mut data = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let l = labels[i];
            if l == ignore {
                continue;
            }
            let differs = |j: usize| labels[j] != ignore && labels[j] != l;
            data[i] = (x > 0 && differs(i - 1))
                || (x + 1 < w && differs(i + 1))
                || (y > 0 && differs(i - w))
                || (y + 1 < h && differs(i + w));
        }
    }
    BoundaryMask {
        height: h,
        width: w,
        data,
    }
}

/// 1-D squared distance transform of a sampled function `f` (lower envelope of
/// parabolas rooted at each finite sample). Writes into `out`.
fn edt_1d(f: &[f64], out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    let n = f.len();
    sites.clear();
    bounds.clear();
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        let qf = q as f64;
        loop {
            let Some(&p) = sites.last() else {
                sites.push(q);
                bounds.push(f64::NEG_INFINITY);
                break;
            };
            let pf = p as f64;
            // intersection of the parabolas rooted at p and q
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
            if s <= *bounds.last().unwrap() {
                sites.pop();
                bounds.pop();
            } else {
                sites.push(q);
                bounds.push(s);
                break;
            }
        }
    }
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < sites.len() && bounds[k + 1] < qf {
            k += 1;
        }
        let p = sites[k];
        let d = qf - p as f64;
        *o = d * d + f[p];
    }
}

/// Squared Euclidean distance to the nearest set pixel; `+inf` everywhere when
/// no pixel is set.
pub fn squared_distance_transform(boundary: &BoundaryMask) -> Vec<f64> {
    let (h, w) = (boundary.height, boundary.width);
    let mut grid: Vec<f64> = boundary
        .data
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    let mut sites = Vec::new();
    let mut bounds = Vec::new();

    let mut col = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = grid[y * w + x];
        }
        edt_1d(&col, &mut col_out, &mut sites, &mut bounds);
        for y in 0..h {
            grid[y * w + x] = col_out[y];
        }
    }
    let mut row_out = vec![0.0; w];
    for y in 0..h {
        let row = &mut grid[y * w..(y + 1) * w];
        edt_1d(row, &mut row_out, &mut sites, &mut bounds);
        row.copy_from_slice(&row_out);
    }
    grid
}

pub fn distance_transform(boundary: &BoundaryMask) -> DistanceField {
    let data = squared_distance_transform(boundary)
        .into_iter()
        .map(f64::sqrt)
        .collect();
    DistanceField {
        height: boundary.height,
        width: boundary.width,
        data,
    }
}

/// Distance field of the ground-truth boundaries of `gt`.
pub fn gt_distance_field(gt: &LabelMap) -> DistanceField {
    distance_transform(&boundary_pixels(gt))
}

/// Accumulates into `cm` only pixels with `dist <= d_max` (and gt not ignore).
pub fn miou_within(
    cm: &mut ConfusionMatrix,
    pred: &LabelMap,
    gt: &LabelMap,
    dist: &DistanceField,
    d_max: f64,
) -> Result<()> {
    if (dist.height, dist.width) != gt.dims() {
        return Err(Error::shape(
            format!("{}x{}", gt.height(), gt.width()),
            format!("{}x{}", dist.height, dist.width),
        ));
    }
    cm.accumulate_where(pred, gt, |i| dist.data[i] <= d_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::LabelSpace;

    fn space() -> LabelSpace {
        LabelSpace::new(3, 255).unwrap()
    }

    fn half_split(h: usize, w: usize) -> LabelMap {
        let labels = (0..h * w).map(|i| if i % w < w / 2 { 0 } else { 1 }).collect();
        LabelMap::new(h, w, labels, space()).unwrap()
    }

    fn brute(boundary: &BoundaryMask) -> Vec<f64> {
        let w = boundary.width;
        let pts: Vec<(usize, usize)> = (0..boundary.data.len())
            .filter(|&i| boundary.data[i])
            .map(|i| (i / w, i % w))
            .collect();
        (0..boundary.data.len())
            .map(|i| {
                let (y, x) = ((i / w) as f64, (i % w) as f64);
                pts.iter()
                    .map(|&(py, px)| ((py as f64 - y).powi(2) + (px as f64 - x).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn uniform_map_has_no_boundary() {
        let lm = LabelMap::filled(5, 7, 1, space()).unwrap();
        assert_eq!(boundary_pixels(&lm).count(), 0);
        let d = gt_distance_field(&lm);
        assert!(d.data.iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn half_split_marks_two_columns() {
        let b = boundary_pixels(&half_split(4, 6));
        for y in 0..4 {
            for x in 0..6 {
                assert_eq!(b.data[y * 6 + x], x == 2 || x == 3, "({y},{x})");
            }
        }
    }

    #[test]
    fn single_pixel_and_ignore() {
        let mut labels = vec![0u16; 25];
        labels[12] = 1;
        let lm = LabelMap::new(5, 5, labels.clone(), space()).unwrap();
        let b = boundary_pixels(&lm);
        let set: Vec<usize> = (0..25).filter(|&i| b.data[i]).collect();
        assert_eq!(set, vec![7, 11, 12, 13, 17]);

        labels[12] = 255;
        let lm = LabelMap::new(5, 5, labels, space()).unwrap();
        assert_eq!(boundary_pixels(&lm).count(), 0);
    }

    #[test]
    fn all_boundary_is_zero_distance() {
        let b = BoundaryMask {
            height: 3,
            width: 4,
            data: vec![true; 12],
        };
        assert!(distance_transform(&b).data.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn pythagoras() {
        let mut data = vec![false; 100];
        data[0] = true;
        let b = BoundaryMask {
            height: 10,
            width: 10,
            data,
        };
        let d = distance_transform(&b);
        assert_eq!(d.get(3, 4), 5.0);
        assert_eq!(d.get(4, 3), 5.0);
    }

    #[test]
    fn matches_brute_force_on_sparse_masks() {
        // small deterministic pseudo-random patterns
        let mut state = 0x1234_5678_u64;
        for _ in 0..20 {
            let (h, w) = (9, 13);
            let data: Vec<bool> = (0..h * w)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    state % 11 == 0
                })
                .collect();
            let b = BoundaryMask {
                height: h,
                width: w,
                data,
            };
            let fast = distance_transform(&b);
            let slow = brute(&b);
            for (a, e) in fast.data.iter().zip(&slow) {
                assert!(a == e || (a - e).abs() <= 1e-9, "{a} vs {e}");
            }
        }
    }

    #[test]
    fn restricted_counts() {
        let gt = half_split(4, 8);
        let pred = gt.clone();
        let dist = gt_distance_field(&gt);

        let mut all = ConfusionMatrix::new(space());
        all.accumulate(&pred, &gt).unwrap();
        let mut inf = ConfusionMatrix::new(space());
        miou_within(&mut inf, &pred, &gt, &dist, f64::INFINITY).unwrap();
        assert_eq!(all, inf);

        let mut zero = ConfusionMatrix::new(space());
        miou_within(&mut zero, &pred, &gt, &dist, 0.0).unwrap();
        assert_eq!(zero.total(), 8);

        let mut one = ConfusionMatrix::new(space());
        miou_within(&mut one, &pred, &gt, &dist, 1.0).unwrap();
        // columns 2..=5: two boundary columns plus their outer neighbors
        assert_eq!(one.total(), 16);

        let mut half = ConfusionMatrix::new(space());
        miou_within(&mut half, &pred, &gt, &dist, 0.5).unwrap();
        assert_eq!(half.total(), 8);

        let bad = DistanceField {
            height: 1,
            width: 1,
            data: vec![0.0],
        };
        assert!(miou_within(&mut one, &pred, &gt, &bad, 1.0).is_err());
    }
}
