//! Uncompressed COCO run-length encoding.
//!
//! Runs traverse the mask in column-major order and alternate between 0 and 1,
//! starting with a (possibly empty) run of zeros. The in-memory masks here are
//! row-major; conversion happens inside [`encode_rle`] and [`decode_rle`].

use crate::error::{Error, Result};

/// Run lengths of a row-major `h × w` binary mask.
pub fn encode_rle(mask: &[bool], h: usize, w: usize) -> Vec<u64> {
    assert_eq!(mask.len(), h * w, "mask length must equal h*w");
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for x in 0..w {
        for y in 0..h {
            let v = mask[y * w + x];
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    counts
}

/// Expands run lengths into a row-major `h × w` binary mask.
pub fn decode_rle(counts: &[u64], h: usize, w: usize) -> Result<Vec<bool>> {
    let n = h * w;
    let total: u64 = counts.iter().sum();
    if total != n as u64 {
        return Err(Error::RunSumMismatch {
            expected: n,
            actual: total as usize,
        });
    }
    let mut mask = vec![false; n];
    let mut pos = 0usize;
    let mut value = false;
    for &c in counts {
        if value {
            for k in pos..pos + c as usize {
                let (x, y) = (k / h, k % h);
                mask[y * w + x] = true;
            }
        }
        pos += c as usize;
        value = !value;
    }
    Ok(mask)
}
