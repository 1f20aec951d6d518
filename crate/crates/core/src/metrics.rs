//! Confusion-matrix based semantic segmentation metrics.

use std::ops::AddAssign;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{LabelMap, LabelSpace};

/// `(C + 1) × (C + 1)` pixel counts; rows are ground truth, columns are
/// predictions, index `C` is background. Ignored pixels are never counted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    space: LabelSpace,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(space: LabelSpace) -> Self {
        let n = space.num_classes as usize + 1;
        ConfusionMatrix {
            space,
            counts: vec![0; n * n],
        }
    }

    pub fn space(&self) -> LabelSpace {
        self.space
    }

    /// Rows (and columns): classes plus background.
    pub fn size(&self) -> usize {
        self.space.num_classes as usize + 1
    }

    #[inline]
    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.size() + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        let n = self.size();
        self.counts[class * n..(class + 1) * n].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        let n = self.size();
        (0..n).map(|r| self.counts[r * n + class]).sum()
    }

    /// Counts every pixel where `gt` is not ignore.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        self.accumulate_where(pred, gt, |_| true)
    }

    /// Counts pixels where `gt` is not ignore and `keep(flat_index)` holds.
    pub fn accumulate_where(
        &mut self,
        pred: &LabelMap,
        gt: &LabelMap,
        keep: impl Fn(usize) -> bool,
    ) -> Result<()> {
        pred.check_same_dims(gt)?;
        let n = self.size();
        let ignore = self.space.ignore;
        let check = |label: u16, index: usize| -> Result<usize> {
            if (label as usize) < n {
                Ok(label as usize)
            } else {
                Err(Error::LabelOutOfRange {
                    label: label as u32,
                    index,
                    num_classes: self.space.num_classes,
                    ignore,
                })
            }
        };
        // validate first so a failed call leaves the matrix untouched
        let mut pairs = Vec::new();
        for (i, (&p, &g)) in pred.labels().iter().zip(gt.labels()).enumerate() {
            if g == ignore || !keep(i) {
                continue;
            }
            pairs.push((check(g, i)?, check(p, i)?));
        }
        for (g, p) in pairs {
            self.counts[g * n + p] += 1;
        }
        Ok(())
    }

    /// Per-class IOU over all `C + 1` rows; `None` where the class appears in
    /// neither ground truth nor prediction.
    pub fn iou_per_class(&self) -> Vec<Option<f64>> {
        (0..self.size())
            .map(|c| {
                let tp = self.get(c, c);
                let denom = self.row_sum(c) + self.col_sum(c) - tp;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect()
    }

    /// Per-class recall; `None` where the class is absent from ground truth.
    pub fn acc_per_class(&self) -> Vec<Option<f64>> {
        (0..self.size())
            .map(|c| {
                let row = self.row_sum(c);
                (row > 0).then(|| self.get(c, c) as f64 / row as f64)
            })
            .collect()
    }

    fn considered(&self, include_background: bool) -> usize {
        if include_background {
            self.size()
        } else {
            self.size() - 1
        }
    }

    /// Mean IOU over present classes; NaN when no class is present.
    pub fn miou(&self, include_background: bool) -> f64 {
        mean_present(&self.iou_per_class()[..self.considered(include_background)])
    }

    /// Mean per-class recall over classes present in ground truth.
    pub fn macc(&self, include_background: bool) -> f64 {
        mean_present(&self.acc_per_class()[..self.considered(include_background)])
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.space != other.space {
            return Err(Error::shape(
                format!("{:?}", self.space),
                format!("{:?}", other.space),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

impl AddAssign<&ConfusionMatrix> for ConfusionMatrix {
    fn add_assign(&mut self, rhs: &ConfusionMatrix) {
        self.merge(rhs).expect("confusion matrices over different label spaces");
    }
}

fn mean_present(values: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        f64::NAN
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

/// Confusion matrix of a single prediction/ground-truth pair.
pub fn accumulate(cm: &mut ConfusionMatrix, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
    cm.accumulate(pred, gt)
}
