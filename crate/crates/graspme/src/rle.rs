//! COCO run-length mask encoding: column-major scan order, first run
//! counts background pixels (possibly zero).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RleError {
    #[error("run lengths sum to {got}, expected {expected} for the stated size")]
    SizeMismatch { got: u64, expected: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RleMask {
    /// [height, width]
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

/// Encodes a row-major boolean mask (index = y·width + x).
pub fn encode_rle(mask: &[bool], width: u32, height: u32) -> RleMask {
    assert_eq!(mask.len(), (width * height) as usize);
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for x in 0..width {
        for y in 0..height {
            let bit = mask[(y * width + x) as usize];
            if bit == current {
                run += 1;
            } else {
                counts.push(run);
                current = bit;
                run = 1;
            }
        }
    }
    counts.push(run);
    RleMask { size: [height, width], counts }
}

/// Decodes back to a row-major boolean mask.
pub fn decode_rle(rle: &RleMask) -> Result<Vec<bool>, RleError> {
    let [height, width] = rle.size;
    let total = width as u64 * height as u64;
    let sum: u64 = rle.counts.iter().map(|&c| c as u64).sum();
    if sum != total {
        return Err(RleError::SizeMismatch { got: sum, expected: total });
    }
    let mut mask = vec![false; total as usize];
    let mut pos = 0u64;
    let mut value = false;
    for &run in &rle.counts {
        if value {
            for i in pos..pos + run as u64 {
                let (x, y) = (i / height as u64, i % height as u64);
                mask[(y * width as u64 + x) as usize] = true;
            }
        }
        pos += run as u64;
        value = !value;
    }
    Ok(mask)
}

/// Mask pixel count straight from the runs.
pub fn rle_area(rle: &RleMask) -> u64 {
    rle.counts
        .iter()
        .skip(1)
        .step_by(2)
        .map(|&c| c as u64)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_mask() {
        let rle = encode_rle(&[false; 4], 2, 2);
        assert_eq!(rle.counts, vec![4]);
        assert_eq!(rle_area(&rle), 0);
    }

    #[test]
    fn full_mask() {
        let rle = encode_rle(&[true; 4], 2, 2);
        assert_eq!(rle.counts, vec![0, 4]);
        assert_eq!(rle_area(&rle), 4);
    }

    #[test]
    fn single_pixel_column_major() {
        // pixel (x=0, y=0) is the first in column-major order
        let mut mask = vec![false; 4];
        mask[0] = true;
        let rle = encode_rle(&mask, 2, 2);
        assert_eq!(rle.counts, vec![0, 1, 3]);
    }

    #[test]
    fn decode_rejects_bad_sum() {
        let rle = RleMask { size: [2, 2], counts: vec![3] };
        assert_eq!(
            decode_rle(&rle),
            Err(RleError::SizeMismatch { got: 3, expected: 4 })
        );
    }

    proptest! {
        #[test]
        fn roundtrip(bits in proptest::collection::vec(any::<bool>(), 48), w in 1u32..8) {
            let h = 48 / w;
            let mask = &bits[..(w * h) as usize];
            let rle = encode_rle(mask, w, h);
            prop_assert_eq!(decode_rle(&rle).unwrap(), mask);
            prop_assert_eq!(rle_area(&rle) as usize, mask.iter().filter(|&&b| b).count());
        }
    }
}
