//! Per-pixel linear softmax classifier, the stand-in segmentation model.
//!
//! Each pixel is described by eight handcrafted features and classified by
//! `softmax(W f + b)`. Training is seeded mini-batch SGD on cross entropy
//! with an ignore label; the two-stage schedule fine-tunes on the labeled
//! pool, then continues on labeled plus pseudo-labeled pixels with both
//! cross-entropy terms weighted equally.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confusion::{argmax, ProbMap};
use crate::error::{Error, Result};
use crate::tensor_store::{read_tensor, write_tensor, DenseTensor, LabelMap, RgbImage, IGNORE_LABEL};

/// Anything that turns an image into per-pixel class probabilities.
pub trait Segmenter {
    fn num_classes(&self) -> usize;
    fn predict(&self, img: &RgbImage) -> Result<ProbMap>;
}

pub const NUM_FEATURES: usize = 8;

/// Describes the featurization a classifier was trained against.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub dim: usize,
    pub components: Vec<String>,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            name: "rgb-xy-mean3x3".into(),
            dim: NUM_FEATURES,
            components: ["r", "g", "b", "x", "y", "mean3x3_r", "mean3x3_g", "mean3x3_b"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// Per-pixel features, row-major H×W×8: rgb/255, x/W, y/H, and the 3×3
/// neighbourhood channel means /255 (neighbours outside the image are skipped).
pub fn featurize(img: &RgbImage) -> Vec<f32> {
    let (w, h) = (img.width(), img.height());
    let px = img.pixels();
    let mut out = Vec::with_capacity(w * h * NUM_FEATURES);
    for y in 0..h {
        for x in 0..w {
            let i = 3 * (y * w + x);
            out.extend(px[i..i + 3].iter().map(|&v| v as f32 / 255.0));
            out.push(x as f32 / w as f32);
            out.push(y as f32 / h as f32);
            let mut sum = [0u32; 3];
            let mut n = 0u32;
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = 3 * (ny * w + nx);
                    for k in 0..3 {
                        sum[k] += px[j + k] as u32;
                    }
                    n += 1;
                }
            }
            out.extend(sum.iter().map(|&s| s as f32 / (255.0 * n as f32)));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_pixels: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Pseudo-labels below this confidence become ignore; 0 keeps plain argmax.
    pub pseudo_confidence_threshold: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_pixels: 256,
            learning_rate: 0.5,
            seed: 0,
            pseudo_confidence_threshold: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be at least 1"));
        }
        if self.batch_pixels == 0 {
            return Err(Error::validation("batch_pixels must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.pseudo_confidence_threshold) {
            return Err(Error::validation("pseudo_confidence_threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Linear softmax classifier over [`featurize`] features.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelClassifier {
    num_classes: usize,
    /// C×F, row-major.
    weights: Vec<f32>,
    bias: Vec<f32>,
    feature_spec: FeatureSpec,
}

impl PixelClassifier {
    pub fn zeros(num_classes: usize) -> Self {
        Self {
            num_classes,
            weights: vec![0.0; num_classes * NUM_FEATURES],
            bias: vec![0.0; num_classes],
            feature_spec: FeatureSpec::default(),
        }
    }

    pub fn from_parts(num_classes: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if weights.len() != num_classes * NUM_FEATURES || bias.len() != num_classes {
            return Err(Error::validation("classifier parameter shapes do not match class count"));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::validation("classifier parameters must be finite"));
        }
        Ok(Self {
            num_classes,
            weights,
            bias,
            feature_spec: FeatureSpec::default(),
        })
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn feature_spec(&self) -> &FeatureSpec {
        &self.feature_spec
    }

    pub fn predict_probmap(&self, img: &RgbImage) -> ProbMap {
        let feats = featurize(img);
        let params = Params::from_model(self);
        let c_n = self.num_classes;
        let mut probs = Vec::with_capacity(img.width() * img.height() * c_n);
        let mut scratch = vec![0.0f64; c_n];
        for f in feats.chunks_exact(NUM_FEATURES) {
            params.softmax(f, &mut scratch);
            probs.extend(scratch.iter().map(|&p| p as f32));
        }
        ProbMap::new(img.height(), img.width(), c_n, probs).expect("softmax rows are pmfs")
    }

    /// Argmax labels, no ignore.
    pub fn predict_labels(&self, img: &RgbImage) -> LabelMap {
        let pm = self.predict_probmap(img);
        LabelMap::new(img.width(), img.height(), pm.argmax_labels()).expect("same dimensions")
    }

    /// Writes a C×(F+1) PTNS tensor (weights, bias as the last column) and a
    /// JSON sidecar with the same stem describing the features.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut data = Vec::with_capacity(self.num_classes * (NUM_FEATURES + 1));
        for c in 0..self.num_classes {
            data.extend_from_slice(&self.weights[c * NUM_FEATURES..(c + 1) * NUM_FEATURES]);
            data.push(self.bias[c]);
        }
        let t = DenseTensor::from_f32(vec![self.num_classes, NUM_FEATURES + 1], data)?;
        write_tensor(&t, path)?;
        let sidecar = Sidecar {
            num_classes: self.num_classes,
            layout: "weights|bias".into(),
            feature_spec: self.feature_spec.clone(),
        };
        let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        let side = path.with_extension("json");
        std::fs::write(&side, json).map_err(|e| Error::io(side, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side = path.with_extension("json");
        let raw = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let sidecar: Sidecar =
            serde_json::from_str(&raw).map_err(|e| Error::format(&side, "sidecar", e.to_string()))?;
        if sidecar.feature_spec != FeatureSpec::default() {
            return Err(Error::validation(format!(
                "checkpoint {} uses unsupported features {:?}",
                path.display(),
                sidecar.feature_spec.name
            )));
        }
        let t = read_tensor(path)?;
        let data = t
            .as_f32()
            .ok_or_else(|| Error::format(path, "dtype", "checkpoint must be f32"))?;
        if t.shape() != [sidecar.num_classes, NUM_FEATURES + 1] {
            return Err(Error::format(path, "dims", format!("unexpected checkpoint shape {:?}", t.shape())));
        }
        let mut weights = Vec::with_capacity(sidecar.num_classes * NUM_FEATURES);
        let mut bias = Vec::with_capacity(sidecar.num_classes);
        for row in data.chunks_exact(NUM_FEATURES + 1) {
            weights.extend_from_slice(&row[..NUM_FEATURES]);
            bias.push(row[NUM_FEATURES]);
        }
        Self::from_parts(sidecar.num_classes, weights, bias)
    }
}

impl Segmenter for PixelClassifier {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn predict(&self, img: &RgbImage) -> Result<ProbMap> {
        Ok(self.predict_probmap(img))
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    num_classes: usize,
    layout: String,
    feature_spec: FeatureSpec,
}

/// Per-pixel argmax; pixels whose top probability is below `tau` become ignore.
pub fn pseudo_labels(pm: &ProbMap, tau: f32) -> LabelMap {
    let labels = pm
        .pixels()
        .map(|p| {
            let c = argmax(p);
            if p[c] < tau {
                IGNORE_LABEL
            } else {
                c as u8
            }
        })
        .collect();
    LabelMap::new(pm.width(), pm.height(), labels).expect("same dimensions")
}

/// Flattened training pixels: features and labels of the non-ignore pixels.
#[derive(Clone, Debug, Default)]
pub struct PixelSet {
    pub features: Vec<f32>,
    pub labels: Vec<u8>,
}

impl PixelSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        &self.features[i * NUM_FEATURES..(i + 1) * NUM_FEATURES]
    }

    pub fn push(&mut self, feature: &[f32], label: u8) {
        self.features.extend_from_slice(feature);
        self.labels.push(label);
    }

    /// Collects every non-ignore pixel of the frames, in frame then raster order.
    pub fn from_frames<'a>(frames: impl IntoIterator<Item = (&'a RgbImage, &'a LabelMap)>, num_classes: usize) -> Result<Self> {
        let mut set = PixelSet::default();
        for (img, labels) in frames {
            if img.width() != labels.width() || img.height() != labels.height() {
                return Err(Error::validation(format!(
                    "image {}x{} does not match label map {}x{}",
                    img.width(),
                    img.height(),
                    labels.width(),
                    labels.height()
                )));
            }
            if !labels.labels().iter().any(|&l| l != IGNORE_LABEL) {
                continue;
            }
            let feats = featurize(img);
            for (i, &l) in labels.labels().iter().enumerate() {
                if l == IGNORE_LABEL {
                    continue;
                }
                if l as usize >= num_classes {
                    return Err(Error::validation(format!("label {l} out of range for {num_classes} classes")));
                }
                set.push(&feats[i * NUM_FEATURES..(i + 1) * NUM_FEATURES], l);
            }
        }
        Ok(set)
    }
}

/// f64 working copy of the classifier parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub num_classes: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Params {
    pub fn from_model(m: &PixelClassifier) -> Self {
        Self {
            num_classes: m.num_classes,
            weights: m.weights.iter().map(|&v| v as f64).collect(),
            bias: m.bias.iter().map(|&v| v as f64).collect(),
        }
    }

    fn into_model(self, spec: FeatureSpec) -> PixelClassifier {
        PixelClassifier {
            num_classes: self.num_classes,
            weights: self.weights.iter().map(|&v| v as f32).collect(),
            bias: self.bias.iter().map(|&v| v as f32).collect(),
            feature_spec: spec,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            num_classes: self.num_classes,
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn softmax(&self, f: &[f32], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weights[c * NUM_FEATURES..(c + 1) * NUM_FEATURES];
            *o = self.bias[c] + w.iter().zip(f).map(|(&a, &b)| a * b as f64).sum::<f64>();
        }
        let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for o in out.iter_mut() {
            *o = (*o - m).exp();
            s += *o;
        }
        for o in out.iter_mut() {
            *o /= s;
        }
    }

    fn axpy(&mut self, alpha: f64, g: &Params) {
        for (w, d) in self.weights.iter_mut().zip(&g.weights) {
            *w += alpha * d;
        }
        for (b, d) in self.bias.iter_mut().zip(&g.bias) {
            *b += alpha * d;
        }
    }
}

/// Mean cross entropy (nats) over the selected pixels, accumulating its
/// gradient into `grad` scaled by `scale`. Returns the mean loss; an empty
/// selection contributes nothing.
fn accumulate_ce(params: &Params, set: &PixelSet, idx: &[usize], scale: f64, grad: &mut Params) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let n = idx.len() as f64;
    let mut probs = vec![0.0f64; params.num_classes];
    let mut loss = 0.0;
    for &i in idx {
        let f = set.feature(i);
        let y = set.labels[i] as usize;
        params.softmax(f, &mut probs);
        loss -= probs[y].max(f64::MIN_POSITIVE).ln();
        for (c, &p) in probs.iter().enumerate() {
            let delta = (p - if c == y { 1.0 } else { 0.0 }) * scale / n;
            grad.bias[c] += delta;
            for (g, &x) in grad.weights[c * NUM_FEATURES..(c + 1) * NUM_FEATURES].iter_mut().zip(f) {
                *g += delta * x as f64;
            }
        }
    }
    loss / n
}

/// Mean cross entropy over `idx` and its gradient.
pub fn ce_loss_and_grad(params: &Params, set: &PixelSet, idx: &[usize]) -> (f64, Params) {
    let mut grad = params.zeros_like();
    let loss = accumulate_ce(params, set, idx, 1.0, &mut grad);
    (loss, grad)
}

/// `L_CE(labeled) + L_CE(pseudo)`, equally weighted, and its gradient.
pub fn seg_loss_and_grad(
    params: &Params,
    labeled: &PixelSet,
    labeled_idx: &[usize],
    pseudo: &PixelSet,
    pseudo_idx: &[usize],
) -> (f64, Params) {
    let mut grad = params.zeros_like();
    let l_ce = accumulate_ce(params, labeled, labeled_idx, 1.0, &mut grad);
    let l_pseudo = accumulate_ce(params, pseudo, pseudo_idx, 1.0, &mut grad);
    (l_ce + l_pseudo, grad)
}

/// Cycles through a set in reshuffled passes.
struct BatchCursor {
    order: Vec<usize>,
    pos: usize,
}

impl BatchCursor {
    fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self { order, pos: 0 }
    }

    fn next_batch(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if self.order.is_empty() {
            return Vec::new();
        }
        if self.pos >= self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let end = (self.pos + size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        batch
    }
}

/// SGD on the mean cross entropy of `set`, starting from `model`.
pub fn train_on_pixels(model: &PixelClassifier, set: &PixelSet, cfg: &TrainConfig) -> Result<PixelClassifier> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::precondition("no labeled pixels to train on"));
    }
    let mut params = Params::from_model(model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cursor = BatchCursor::new(set.len(), &mut rng);
    let steps = set.len().div_ceil(cfg.batch_pixels);
    for _ in 0..cfg.epochs {
        for _ in 0..steps {
            let batch = cursor.next_batch(cfg.batch_pixels, &mut rng);
            let (_, grad) = ce_loss_and_grad(&params, set, &batch);
            params.axpy(-cfg.learning_rate, &grad);
        }
    }
    Ok(params.into_model(model.feature_spec.clone()))
}

/// Cross-entropy fine-tuning on the non-ignore pixels of the frames.
pub fn train_supervised(model: &PixelClassifier, frames: &[(&RgbImage, &LabelMap)], cfg: &TrainConfig) -> Result<PixelClassifier> {
    let set = PixelSet::from_frames(frames.iter().copied(), model.num_classes)?;
    train_on_pixels(model, &set, cfg)
}

/// SGD on `L_CE(labeled) + L_CE(pseudo)`: each step draws one batch from each
/// set; an epoch is one pass over the larger set.
pub fn train_on_union(model: &PixelClassifier, labeled: &PixelSet, pseudo: &PixelSet, cfg: &TrainConfig) -> Result<PixelClassifier> {
    cfg.validate()?;
    if pseudo.is_empty() {
        return if labeled.is_empty() {
            Ok(model.clone())
        } else {
            train_on_pixels(model, labeled, cfg)
        };
    }
    let mut params = Params::from_model(model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut lab_cursor = BatchCursor::new(labeled.len(), &mut rng);
    let mut pseudo_cursor = BatchCursor::new(pseudo.len(), &mut rng);
    let steps = labeled.len().max(pseudo.len()).div_ceil(cfg.batch_pixels);
    for _ in 0..cfg.epochs {
        for _ in 0..steps {
            let lb = lab_cursor.next_batch(cfg.batch_pixels, &mut rng);
            let pb = pseudo_cursor.next_batch(cfg.batch_pixels, &mut rng);
            let (_, grad) = seg_loss_and_grad(&params, labeled, &lb, pseudo, &pb);
            params.axpy(-cfg.learning_rate, &grad);
        }
    }
    Ok(params.into_model(model.feature_spec.clone()))
}

/// Models produced by the two training stages of one iteration.
#[derive(Clone, Debug)]
pub struct TwoStage {
    pub stage1: PixelClassifier,
    pub stage2: PixelClassifier,
    pub pseudo_pixels: usize,
}

/// Stage 1 fine-tunes `model` on the labeled frames. Stage 2 pseudo-labels the
/// unlabeled images with the stage-1 model and continues from it on the
/// equally weighted sum of both cross-entropy terms.
pub fn train_two_stage(
    model: &PixelClassifier,
    labeled: &[(&RgbImage, &LabelMap)],
    unlabeled: &[&RgbImage],
    cfg: &TrainConfig,
) -> Result<TwoStage> {
    let labeled_set = PixelSet::from_frames(labeled.iter().copied(), model.num_classes)?;
    let stage1 = train_on_pixels(model, &labeled_set, cfg)?;
    let pseudo_maps: Vec<(&RgbImage, LabelMap)> = unlabeled
        .iter()
        .map(|img| (*img, pseudo_labels(&stage1.predict_probmap(img), cfg.pseudo_confidence_threshold)))
        .collect();
    let pseudo_set = PixelSet::from_frames(pseudo_maps.iter().map(|(i, l)| (*i, l)), model.num_classes)?;
    let stage2 = if pseudo_set.is_empty() {
        stage1.clone()
    } else {
        train_on_union(&stage1, &labeled_set, &pseudo_set, cfg)?
    };
    Ok(TwoStage {
        stage1,
        stage2,
        pseudo_pixels: pseudo_set.len(),
    })
}
