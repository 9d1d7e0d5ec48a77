//! Weak/strong test-time augmentation and augmentation-disagreement class selection.
//!
//! The same model predicts on a weakly and a strongly augmented copy of a
//! frame. Classes whose confusion vectors move by more than `delta` between
//! the two copies are the ones the model has not learned robustly.
//! Confusion vectors aggregate over pixels, so geometric transforms need no
//! re-alignment before comparison.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anchor::{l2_distance, ClassSelection};
use crate::confusion::{class_confusion, ClassConfusion};
use crate::error::{Error, Result};
use crate::learner::Segmenter;
use crate::tensor_store::RgbImage;
use crate::FrameId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugKind {
    Weak,
    Strong,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugPolicy {
    pub kind: AugKind,
    /// Probability of a horizontal flip.
    pub hflip_p: f32,
    /// Probability of a rotation.
    pub rotate_p: f32,
    pub rotate_max_deg: f32,
    /// Maximum relative jitter magnitudes.
    pub brightness: f32,
    pub saturation: f32,
    pub contrast: f32,
    pub seed: u64,
}

impl AugPolicy {
    /// `hflip(0.5)`.
    pub fn weak() -> Self {
        Self {
            kind: AugKind::Weak,
            hflip_p: 0.5,
            rotate_p: 0.0,
            rotate_max_deg: 0.0,
            brightness: 0.0,
            saturation: 0.0,
            contrast: 0.0,
            seed: 0x5eed_0001,
        }
    }

    /// `brightness(0.3), saturation(0.1), contrast(0.3), hflip(0.5), rotate(0.2)`,
    /// rotating by up to ±10° when the rotation fires.
    pub fn strong() -> Self {
        Self {
            kind: AugKind::Strong,
            hflip_p: 0.5,
            rotate_p: 0.2,
            rotate_max_deg: 10.0,
            brightness: 0.3,
            saturation: 0.1,
            contrast: 0.3,
            seed: 0x5eed_0002,
        }
    }

    /// Leaves every image untouched.
    pub fn identity(kind: AugKind) -> Self {
        Self {
            kind,
            hflip_p: 0.0,
            rotate_p: 0.0,
            rotate_max_deg: 0.0,
            brightness: 0.0,
            saturation: 0.0,
            contrast: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f32| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::validation(format!("augmentation {name} must lie in [0, 1], got {v}")))
            }
        };
        unit("hflip_p", self.hflip_p)?;
        unit("rotate_p", self.rotate_p)?;
        unit("brightness", self.brightness)?;
        unit("saturation", self.saturation)?;
        unit("contrast", self.contrast)?;
        if !(self.rotate_max_deg.is_finite() && self.rotate_max_deg >= 0.0) {
            return Err(Error::validation(format!(
                "rotate_max_deg must be a non-negative angle, got {}",
                self.rotate_max_deg
            )));
        }
        Ok(())
    }

    /// The random parameters this policy applies, fixed by its seed.
    pub fn draw(&self) -> AugDraw {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut factor = |m: f32| {
            let u: f32 = rng.random();
            1.0 - m + 2.0 * m * u
        };
        let brightness = factor(self.brightness);
        let saturation = factor(self.saturation);
        let contrast = factor(self.contrast);
        let flip = rng.random::<f32>() < self.hflip_p;
        let rotate = rng.random::<f32>() < self.rotate_p;
        let angle = (2.0 * rng.random::<f32>() - 1.0) * self.rotate_max_deg;
        AugDraw {
            brightness,
            saturation,
            contrast,
            flip,
            rotation_deg: rotate.then_some(angle),
        }
    }
}

/// Concrete augmentation parameters sampled from a policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugDraw {
    pub brightness: f32,
    pub saturation: f32,
    pub contrast: f32,
    pub flip: bool,
    pub rotation_deg: Option<f32>,
}

/// Applies, in order: brightness, saturation, contrast about the image mean,
/// horizontal flip, then nearest-neighbour rotation with edge clamping.
pub fn augment_image(img: &RgbImage, policy: &AugPolicy) -> Result<RgbImage> {
    policy.validate()?;
    Ok(apply_draw(img, &policy.draw()))
}

pub fn apply_draw(img: &RgbImage, draw: &AugDraw) -> RgbImage {
    let mut buf: Vec<f32> = img.pixels().iter().map(|&v| v as f32).collect();

    if draw.brightness != 1.0 {
        for v in buf.iter_mut() {
            *v = (*v * draw.brightness).clamp(0.0, 255.0);
        }
    }
    if draw.saturation != 1.0 {
        for px in buf.chunks_exact_mut(3) {
            let gray = luma(px);
            for v in px.iter_mut() {
                *v = (gray + (*v - gray) * draw.saturation).clamp(0.0, 255.0);
            }
        }
    }
    if draw.contrast != 1.0 {
        let n = (buf.len() / 3).max(1) as f64;
        let mean = (buf.chunks_exact(3).map(|px| luma(px) as f64).sum::<f64>() / n) as f32;
        for v in buf.iter_mut() {
            *v = (mean + (*v - mean) * draw.contrast).clamp(0.0, 255.0);
        }
    }

    let pixels = buf.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
    let mut out = RgbImage::new(img.width(), img.height(), pixels).expect("same dimensions");
    if draw.flip {
        out = hflip(&out);
    }
    if let Some(deg) = draw.rotation_deg {
        out = rotate_nearest(&out, deg);
    }
    out
}

fn luma(px: &[f32]) -> f32 {
    0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
}

pub fn hflip(img: &RgbImage) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            out.put(x, y, img.get(w - 1 - x, y));
        }
    }
    out
}

/// Rotates about the image centre; samples falling outside the canvas are
/// clamped to the nearest edge pixel.
pub fn rotate_nearest(img: &RgbImage, degrees: f32) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let theta = (degrees as f64).to_radians();
    let (sin, cos) = theta.sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            // inverse map: rotate the output coordinate by -theta
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            let sx = sx.round().clamp(0.0, w as f64 - 1.0) as usize;
            let sy = sy.round().clamp(0.0, h as f64 - 1.0) as usize;
            out.put(x, y, img.get(sx, sy));
        }
    }
    out
}

/// Per-class L2 distance between weak- and strong-branch confusion rows.
pub fn aug_disparity(cc_weak: &ClassConfusion, cc_strong: &ClassConfusion) -> Result<Vec<Option<f32>>> {
    if cc_weak.num_classes() != cc_strong.num_classes() {
        return Err(Error::validation(format!(
            "weak branch has {} classes, strong branch {}",
            cc_weak.num_classes(),
            cc_strong.num_classes()
        )));
    }
    Ok((0..cc_weak.num_classes())
        .map(|c| match (cc_weak.row(c), cc_strong.row(c)) {
            (Some(a), Some(b)) => Some(l2_distance(a, b)),
            _ => None,
        })
        .collect())
}

/// Augment twice, predict twice with the same model, compare confusion rows.
pub fn select_classes_aug(
    frame_id: FrameId,
    img: &RgbImage,
    model: &dyn Segmenter,
    weak: &AugPolicy,
    strong: &AugPolicy,
    delta: f32,
) -> Result<ClassSelection> {
    if !(delta >= 0.0) {
        return Err(Error::validation(format!("threshold must be non-negative, got {delta}")));
    }
    let weak_img = augment_image(img, weak)?;
    let strong_img = augment_image(img, strong)?;
    let cc_weak = class_confusion(&model.predict(&weak_img)?);
    let cc_strong = class_confusion(&model.predict(&strong_img)?);
    Ok(ClassSelection::threshold(frame_id, aug_disparity(&cc_weak, &cc_strong)?, delta))
}
