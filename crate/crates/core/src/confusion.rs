//! Per-pixel entropy and class-specific confusion vectors.
//!
//! For every class `c` the confusion vector `P^c` is the entropy-weighted
//! average of the softmax vectors of the pixels whose argmax is `c`. Uncertain
//! pixels dominate the average, so `P^c` puts mass on the classes that compete
//! with `c` in that frame.

use crate::error::{Error, Result};
use crate::tensor_store::DenseTensor;

/// Tolerance on the sum of a pixel's probability vector.
pub const PMF_TOLERANCE: f64 = 1e-4;

/// H×W×C per-pixel class probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    num_classes: usize,
    probs: Vec<f32>,
}

impl ProbMap {
    /// Validates every pixel vector and renormalizes it to sum to one.
    pub fn new(height: usize, width: usize, num_classes: usize, mut probs: Vec<f32>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::validation("probability map needs at least one class"));
        }
        if probs.len() != height * width * num_classes {
            return Err(Error::validation(format!(
                "{height}x{width}x{num_classes} probability map needs {} values, got {}",
                height * width * num_classes,
                probs.len()
            )));
        }
        for (i, px) in probs.chunks_exact_mut(num_classes).enumerate() {
            let sum = check_pmf(px).map_err(|e| Error::validation(format!("pixel {i}: {e}")))?;
            if sum != 1.0 {
                for p in px.iter_mut() {
                    *p = (*p as f64 / sum) as f32;
                }
            }
        }
        Ok(Self {
            height,
            width,
            num_classes,
            probs,
        })
    }

    /// Wraps an H×W×C f32 tensor.
    pub fn from_tensor(t: &DenseTensor) -> Result<Self> {
        let data = t
            .as_f32()
            .ok_or_else(|| Error::validation("probability map tensor must be f32"))?;
        match *t.shape() {
            [h, w, c] => Self::new(h, w, c, data.to_vec()),
            _ => Err(Error::validation(format!(
                "probability map tensor must be H×W×C, got shape {:?}",
                t.shape()
            ))),
        }
    }

    pub fn to_tensor(&self) -> DenseTensor {
        DenseTensor::from_f32(vec![self.height, self.width, self.num_classes], self.probs.clone())
            .expect("shape matches by construction")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn probs(&self) -> &[f32] {
        &self.probs
    }

    pub fn pixel(&self, i: usize) -> &[f32] {
        &self.probs[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f32]> {
        self.probs.chunks_exact(self.num_classes)
    }

    /// Per-pixel predicted class, lowest index on ties.
    pub fn argmax_labels(&self) -> Vec<u8> {
        self.pixels().map(|p| argmax(p) as u8).collect()
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(p: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Returns the f64 sum of a valid pmf.
fn check_pmf(p: &[f32]) -> std::result::Result<f64, String> {
    let mut sum = 0.0f64;
    for &v in p {
        if !v.is_finite() || v < 0.0 {
            return Err(format!("invalid probability {v}"));
        }
        sum += v as f64;
    }
    if (sum - 1.0).abs() > PMF_TOLERANCE {
        return Err(format!("probabilities sum to {sum}"));
    }
    Ok(sum)
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
///
/// The vector is renormalized before evaluation so that a uniform pmf stored
/// in f32 yields `log2 C` to f64 precision.
pub fn pixel_entropy(p: &[f32]) -> Result<f64> {
    let sum = check_pmf(p).map_err(Error::validation)?;
    Ok(entropy_unchecked(p, sum))
}

fn entropy_unchecked(p: &[f32], sum: f64) -> f64 {
    let mut h = 0.0f64;
    for &v in p {
        if v > 0.0 {
            let q = v as f64 / sum;
            h -= q * q.log2();
        }
    }
    // guard -0.0 from one-hot inputs
    h.max(0.0)
}

/// C×C matrix whose row `c` is the confusion vector of class `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassConfusion {
    num_classes: usize,
    rows: Vec<f32>,
    valid: Vec<bool>,
}

impl ClassConfusion {
    pub fn new(num_classes: usize, rows: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        if rows.len() != num_classes * num_classes || valid.len() != num_classes {
            return Err(Error::validation("class confusion dimensions do not match class count"));
        }
        for (c, row) in rows.chunks_exact(num_classes).enumerate() {
            if valid[c] {
                let sum = check_pmf(row).map_err(|e| Error::validation(format!("confusion row {c}: {e}")))?;
                if (sum - 1.0).abs() > 1e-5 {
                    return Err(Error::validation(format!("confusion row {c} sums to {sum}")));
                }
            } else if row.iter().any(|&v| v != 0.0) {
                return Err(Error::validation(format!("invalid confusion row {c} is not zero")));
            }
        }
        Ok(Self {
            num_classes,
            rows,
            valid,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn rows(&self) -> &[f32] {
        &self.rows
    }

    pub fn row(&self, c: usize) -> Option<&[f32]> {
        self.valid[c].then(|| &self.rows[c * self.num_classes..(c + 1) * self.num_classes])
    }

    pub fn is_valid(&self, c: usize) -> bool {
        self.valid[c]
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    /// Invalid rows are stored as zeros, so validity is recoverable on load.
    pub fn to_tensor(&self) -> DenseTensor {
        DenseTensor::from_f32(vec![self.num_classes, self.num_classes], self.rows.clone())
            .expect("shape matches by construction")
    }

    pub fn from_tensor(t: &DenseTensor) -> Result<Self> {
        let data = t
            .as_f32()
            .ok_or_else(|| Error::validation("confusion tensor must be f32"))?;
        let c = match *t.shape() {
            [a, b] if a == b => a,
            _ => return Err(Error::validation(format!("confusion tensor must be C×C, got {:?}", t.shape()))),
        };
        let valid = data.chunks_exact(c).map(|r| r.iter().any(|&v| v != 0.0)).collect();
        Self::new(c, data.to_vec(), valid)
    }
}

/// Class confusion together with the frame's mean pixel entropy.
#[derive(Clone, Debug)]
pub struct FrameStats {
    pub confusion: ClassConfusion,
    pub mean_entropy: f64,
}

pub fn class_confusion(pm: &ProbMap) -> ClassConfusion {
    frame_stats(pm).confusion
}

/// Computes the confusion matrix and mean entropy in one pass over the pixels.
pub fn frame_stats(pm: &ProbMap) -> FrameStats {
    let c_n = pm.num_classes();
    let mut weighted = vec![0.0f64; c_n * c_n];
    let mut weight_sum = vec![0.0f64; c_n];
    let mut plain = vec![0.0f64; c_n * c_n];
    let mut count = vec![0usize; c_n];
    let mut entropy_total = 0.0f64;

    for p in pm.pixels() {
        let c = argmax(p);
        let w = entropy_unchecked(p, p.iter().map(|&v| v as f64).sum());
        entropy_total += w;
        weight_sum[c] += w;
        count[c] += 1;
        let row = c * c_n;
        for (k, &v) in p.iter().enumerate() {
            weighted[row + k] += w * v as f64;
            plain[row + k] += v as f64;
        }
    }

    let mut rows = vec![0.0f32; c_n * c_n];
    let mut valid = vec![false; c_n];
    for c in 0..c_n {
        if count[c] == 0 {
            continue;
        }
        valid[c] = true;
        let span = c * c_n..(c + 1) * c_n;
        // every pixel of N_c one-hot: weights vanish, fall back to the plain mean
        let (src, denom) = if weight_sum[c] > 0.0 {
            (&weighted[span.clone()], weight_sum[c])
        } else {
            (&plain[span.clone()], count[c] as f64)
        };
        for (dst, &s) in rows[span.clone()].iter_mut().zip(src) {
            *dst = (s / denom) as f32;
        }
    }

    let n = pm.num_pixels().max(1);
    FrameStats {
        confusion: ClassConfusion {
            num_classes: c_n,
            rows,
            valid,
        },
        mean_entropy: entropy_total / n as f64,
    }
}
