//! Synthetic source/target segmentation worlds.
//!
//! Each frame has a sky band (class 0) above a ground band (class 1) and
//! 2 to 5 shaped objects drawn from classes `2..C`. Class colours are evenly
//! spaced hues. The target domain rotates every hue, offsets brightness and
//! skews object-class frequencies so the last classes become rare.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::write_json;
use crate::tensor_store::{read_image, read_label_map, write_image, write_label_map, LabelMap, RgbImage, IGNORE_LABEL};
use crate::FrameId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainShift {
    /// Rotation applied to every class hue, in degrees.
    pub hue_deg: f32,
    /// Added to every channel after colouring.
    pub brightness: f32,
    /// Object class `2 + j` is drawn with weight `(1 - skew)^j` in the target.
    pub class_skew: f32,
}

impl Default for DomainShift {
    fn default() -> Self {
        Self {
            hue_deg: 25.0,
            brightness: -20.0,
            class_skew: 0.5,
        }
    }
}

impl DomainShift {
    pub fn none() -> Self {
        Self {
            hue_deg: 0.0,
            brightness: 0.0,
            class_skew: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub num_classes: usize,
    pub width: usize,
    pub height: usize,
    pub source_train_frames: usize,
    pub target_train_frames: usize,
    pub target_val_frames: usize,
    pub shift: DomainShift,
    /// Std-dev of the per-object colour offset, channel units.
    pub object_jitter: f32,
    /// Std-dev of independent per-pixel noise, channel units.
    pub pixel_noise: f32,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            num_classes: 6,
            width: 64,
            height: 64,
            source_train_frames: 60,
            target_train_frames: 100,
            target_val_frames: 30,
            shift: DomainShift::default(),
            object_jitter: 8.0,
            pixel_noise: 6.0,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(3..IGNORE_LABEL as usize).contains(&self.num_classes) {
            return Err(Error::validation(format!(
                "num_classes must lie in 3..{IGNORE_LABEL}, got {}",
                self.num_classes
            )));
        }
        if self.width < 8 || self.height < 8 {
            return Err(Error::validation(format!("image size {}x{} below 8x8", self.width, self.height)));
        }
        for (name, n) in [
            ("source_train_frames", self.source_train_frames),
            ("target_train_frames", self.target_train_frames),
            ("target_val_frames", self.target_val_frames),
        ] {
            if n == 0 {
                return Err(Error::validation(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.shift.class_skew) {
            return Err(Error::validation(format!("class_skew must lie in [0, 1), got {}", self.shift.class_skew)));
        }
        let finite = [self.shift.hue_deg, self.shift.brightness, self.object_jitter, self.pixel_noise];
        if finite.iter().any(|v| !v.is_finite()) || self.object_jitter < 0.0 || self.pixel_noise < 0.0 {
            return Err(Error::validation("shift and noise parameters must be finite, noise non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    SourceTrain,
    TargetTrain,
    TargetVal,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::SourceTrain, Split::TargetTrain, Split::TargetVal];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::SourceTrain => "source_train",
            Split::TargetTrain => "target_train",
            Split::TargetVal => "target_val",
        }
    }

    pub fn is_target(self) -> bool {
        self != Split::SourceTrain
    }

    fn stream(self) -> u64 {
        self as u64
    }

    fn frames(self, cfg: &WorldConfig) -> usize {
        match self {
            Split::SourceTrain => cfg.source_train_frames,
            Split::TargetTrain => cfg.target_train_frames,
            Split::TargetVal => cfg.target_val_frames,
        }
    }
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) * 255.0, (g + m) * 255.0, (b + m) * 255.0]
}

/// Mean colour of class `c` in the given domain, before noise and brightness.
pub fn class_base_colour(cfg: &WorldConfig, class: usize, target: bool) -> [f32; 3] {
    let rot = if target { cfg.shift.hue_deg } else { 0.0 };
    let hue = 360.0 * class as f32 / cfg.num_classes as f32 + rot;
    hsv_to_rgb(hue, 0.6, 0.8)
}

#[derive(Clone, Copy)]
enum Shape {
    Rect,
    Ellipse,
    Triangle,
}

struct Object {
    class: u8,
    shape: Shape,
    cx: f32,
    cy: f32,
    rx: f32,
    ry: f32,
    colour: [f32; 3],
}

impl Object {
    fn covers(&self, x: f32, y: f32) -> bool {
        let (dx, dy) = ((x - self.cx) / self.rx, (y - self.cy) / self.ry);
        match self.shape {
            Shape::Rect => dx.abs() <= 1.0 && dy.abs() <= 1.0,
            Shape::Ellipse => dx * dx + dy * dy <= 1.0,
            // apex up, base at dy = 1
            Shape::Triangle => (-1.0..=1.0).contains(&dy) && dx.abs() <= (dy + 1.0) / 2.0,
        }
    }
}

fn frame_rng(cfg: &WorldConfig, split: Split, attempt: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream((split.stream() << 56) | (attempt << 32) | index as u64);
    rng
}

/// Generates one frame of `split`. Pure function of the config and indices.
pub fn generate_frame(cfg: &WorldConfig, split: Split, attempt: u64, index: usize) -> (RgbImage, LabelMap) {
    let mut rng = frame_rng(cfg, split, attempt, index);
    let (w, h) = (cfg.width, cfg.height);
    let target = split.is_target();
    let jitter = Normal::new(0.0f32, cfg.object_jitter).expect("validated jitter");
    let noise = Normal::new(0.0f32, cfg.pixel_noise).expect("validated noise");
    let tinted = |class: usize, rng: &mut ChaCha8Rng| {
        let base = class_base_colour(cfg, class, target);
        [base[0] + jitter.sample(rng), base[1] + jitter.sample(rng), base[2] + jitter.sample(rng)]
    };

    let horizon = rng.random_range(0.35..0.6) * h as f32;
    let tilt = rng.random_range(-0.15f32..0.15);
    let sky = tinted(0, &mut rng);
    let ground = tinted(1, &mut rng);

    let skew = if target { cfg.shift.class_skew } else { 0.0 };
    let weights: Vec<f64> = (0..cfg.num_classes - 2).map(|j| (1.0 - skew as f64).powi(j as i32)).collect();
    let pick = WeightedIndex::new(&weights).expect("positive class weights");
    let n_objects = rng.random_range(2..=5);
    let mut objects = Vec::with_capacity(n_objects);
    for _ in 0..n_objects {
        let class = 2 + pick.sample(&mut rng);
        let shape = match rng.random_range(0..3) {
            0 => Shape::Rect,
            1 => Shape::Ellipse,
            _ => Shape::Triangle,
        };
        let rx = rng.random_range(0.06..0.16) * w as f32;
        let ry = rng.random_range(0.06..0.16) * h as f32;
        let cx = rng.random_range(0.0..w as f32);
        let cy = rng.random_range(0.25 * h as f32..h as f32);
        objects.push(Object {
            class: class as u8,
            shape,
            cx,
            cy,
            rx,
            ry,
            colour: tinted(class, &mut rng),
        });
    }

    let brightness = if target { cfg.shift.brightness } else { 0.0 };
    let mut img = RgbImage::filled(w, h, [0, 0, 0]);
    let mut labels = LabelMap::filled(w, h, 0);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f32 + 0.5, y as f32 + 0.5);
            let line = horizon + tilt * (fx - w as f32 / 2.0);
            let (mut class, mut colour) = if fy < line { (0u8, sky) } else { (1u8, ground) };
            for o in objects.iter().filter(|o| o.covers(fx, fy)) {
                class = o.class;
                colour = o.colour;
            }
            let px = colour.map(|c| (c + brightness + noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8);
            img.put(x, y, px);
            labels.labels_mut()[y * w + x] = class;
        }
    }
    (img, labels)
}

/// Classes present in a label map and their pixel counts.
fn inventory(labels: &LabelMap, num_classes: usize) -> (Vec<u8>, Vec<u64>) {
    let mut counts = vec![0u64; num_classes];
    for &l in labels.labels() {
        if (l as usize) < num_classes {
            counts[l as usize] += 1;
        }
    }
    let present = (0..num_classes as u8).filter(|&c| counts[c as usize] > 0).collect();
    (present, counts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub id: FrameId,
    pub image: String,
    pub labels: String,
    pub classes: Vec<u8>,
    pub class_pixels: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub split: Split,
    /// Generation attempt that achieved class coverage.
    pub attempt: u64,
    pub frames: Vec<FrameEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: WorldConfig,
    pub splits: Vec<SplitEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
const MAX_ATTEMPTS: u64 = 64;

fn image_name(i: usize) -> String {
    format!("img_{i:04}.ppm")
}

fn label_name(i: usize) -> String {
    format!("lbl_{i:04}.pgm")
}

/// Frames of a split, regenerated until every class occurs (training splits only).
fn generate_split(cfg: &WorldConfig, split: Split) -> Result<(u64, Vec<(RgbImage, LabelMap)>)> {
    for attempt in 0..MAX_ATTEMPTS {
        let frames: Vec<(RgbImage, LabelMap)> = (0..split.frames(cfg))
            .into_par_iter()
            .map(|i| generate_frame(cfg, split, attempt, i))
            .collect();
        if split == Split::TargetVal {
            return Ok((attempt, frames));
        }
        let mut seen = BTreeSet::new();
        for (_, l) in &frames {
            seen.extend(inventory(l, cfg.num_classes).0);
        }
        if seen.len() == cfg.num_classes {
            return Ok((attempt, frames));
        }
    }
    Err(Error::validation(format!(
        "{} never covered all {} classes in {MAX_ATTEMPTS} attempts; add frames or lower the skew",
        split.dir_name(),
        cfg.num_classes
    )))
}

/// Writes the dataset tree under `root` and returns its manifest.
pub fn generate_world(cfg: &WorldConfig, root: impl AsRef<Path>) -> Result<Manifest> {
    cfg.validate()?;
    let root = root.as_ref();
    let mut splits = Vec::new();
    for split in Split::ALL {
        let (attempt, frames) = generate_split(cfg, split)?;
        let dir = root.join(split.dir_name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut entries = Vec::with_capacity(frames.len());
        for (i, (img, lbl)) in frames.iter().enumerate() {
            write_image(img, dir.join(image_name(i)))?;
            write_label_map(lbl, dir.join(label_name(i)))?;
            let (classes, class_pixels) = inventory(lbl, cfg.num_classes);
            entries.push(FrameEntry {
                id: FrameId(i as u32),
                image: format!("{}/{}", split.dir_name(), image_name(i)),
                labels: format!("{}/{}", split.dir_name(), label_name(i)),
                classes,
                class_pixels,
            });
        }
        splits.push(SplitEntry {
            split,
            attempt,
            frames: entries,
        });
    }
    let manifest = Manifest {
        config: cfg.clone(),
        splits,
    };
    write_json(&root.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[derive(Clone, Debug)]
pub struct Frame {
    pub id: FrameId,
    pub image: RgbImage,
    pub labels: LabelMap,
}

/// A generated world loaded back from disk.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub num_classes: usize,
    pub manifest: Manifest,
    pub source_train: Vec<Frame>,
    pub target_train: Vec<Frame>,
    pub target_val: Vec<Frame>,
}

impl Dataset {
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| Error::format(&path, "json", e.to_string()))?;
        let num_classes = manifest.config.num_classes;
        let load_split = |split: Split| -> Result<Vec<Frame>> {
            let entry = manifest
                .splits
                .iter()
                .find(|s| s.split == split)
                .ok_or_else(|| Error::format(&path, "splits", format!("missing split {}", split.dir_name())))?;
            entry
                .frames
                .iter()
                .map(|f| {
                    let image = read_image(root.join(&f.image))?;
                    let labels = read_label_map(root.join(&f.labels))?;
                    if image.width() != labels.width() || image.height() != labels.height() {
                        return Err(Error::validation(format!("{}: image and labels differ in size", f.image)));
                    }
                    if let Some(&l) = labels.labels().iter().find(|&&l| l != IGNORE_LABEL && l as usize >= num_classes) {
                        return Err(Error::validation(format!("{}: label {l} out of range", f.labels)));
                    }
                    Ok(Frame {
                        id: f.id,
                        image,
                        labels,
                    })
                })
                .collect()
        };
        Ok(Self {
            source_train: load_split(Split::SourceTrain)?,
            target_train: load_split(Split::TargetTrain)?,
            target_val: load_split(Split::TargetVal)?,
            num_classes,
            manifest,
            root,
        })
    }

    pub fn split(&self, split: Split) -> &[Frame] {
        match split {
            Split::SourceTrain => &self.source_train,
            Split::TargetTrain => &self.target_train,
            Split::TargetVal => &self.target_val,
        }
    }

    pub fn target_train_pixels(&self) -> u64 {
        self.target_train.iter().map(|f| f.labels.len() as u64).sum()
    }
}
