//! Target-domain class anchors and anchor-disparity class selection.
//!
//! An anchor is the mean confusion vector of a class over the labeled target
//! pool. A class in a candidate frame is selected when its confusion vector is
//! farther than `delta` (L2) from the anchor: the model confuses that class in
//! a way the labeled pool does not yet cover.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::confusion::{class_confusion, ClassConfusion, ProbMap};
use crate::error::{Error, Result};
use crate::FrameId;

/// Default selection threshold on the disparity score.
pub const DEFAULT_DELTA: f32 = 0.5;

/// One anchor per class, the mean of the valid confusion rows of the labeled pool.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorSet {
    num_classes: usize,
    anchors: Vec<f32>,
    valid: Vec<bool>,
    built_from: usize,
}

impl AnchorSet {
    pub fn from_confusions(frames: &[ClassConfusion], num_classes: usize) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::precondition("anchor set needs at least one labeled frame"));
        }
        let mut sum = vec![0.0f64; num_classes * num_classes];
        let mut count = vec![0usize; num_classes];
        for (i, cc) in frames.iter().enumerate() {
            if cc.num_classes() != num_classes {
                return Err(Error::validation(format!(
                    "labeled frame {i} has {} classes, expected {num_classes}",
                    cc.num_classes()
                )));
            }
            for c in 0..num_classes {
                if let Some(row) = cc.row(c) {
                    count[c] += 1;
                    for (acc, &v) in sum[c * num_classes..].iter_mut().zip(row) {
                        *acc += v as f64;
                    }
                }
            }
        }
        let mut anchors = vec![0.0f32; num_classes * num_classes];
        for c in 0..num_classes {
            if count[c] > 0 {
                let span = c * num_classes..(c + 1) * num_classes;
                for (dst, &s) in anchors[span.clone()].iter_mut().zip(&sum[span]) {
                    *dst = (s / count[c] as f64) as f32;
                }
            }
        }
        Ok(Self {
            num_classes,
            anchors,
            valid: count.iter().map(|&n| n > 0).collect(),
            built_from: frames.len(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn anchor(&self, c: usize) -> Option<&[f32]> {
        self.valid[c].then(|| &self.anchors[c * self.num_classes..(c + 1) * self.num_classes])
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn built_from(&self) -> usize {
        self.built_from
    }
}

/// Builds anchors from the model's probability maps on the labeled frames.
pub fn build_anchor_set(labeled_frames: &[ProbMap], num_classes: usize) -> Result<AnchorSet> {
    if let Some((i, pm)) = labeled_frames.iter().enumerate().find(|(_, pm)| pm.num_classes() != num_classes) {
        return Err(Error::validation(format!(
            "labeled frame {i} has {} classes, expected {num_classes}",
            pm.num_classes()
        )));
    }
    let confusions: Vec<_> = labeled_frames.iter().map(class_confusion).collect();
    AnchorSet::from_confusions(&confusions, num_classes)
}

pub(crate) fn l2_distance(a: &[f32], b: &[f32]) -> f32 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt() as f32
}

/// Per-class L2 distance between the frame's confusion rows and the anchors;
/// `None` where either side is invalid.
pub fn anchor_disparity(frame_cc: &ClassConfusion, anchors: &AnchorSet) -> Result<Vec<Option<f32>>> {
    if frame_cc.num_classes() != anchors.num_classes() {
        return Err(Error::validation(format!(
            "frame has {} classes but anchors have {}",
            frame_cc.num_classes(),
            anchors.num_classes()
        )));
    }
    Ok((0..anchors.num_classes())
        .map(|c| match (frame_cc.row(c), anchors.anchor(c)) {
            (Some(p), Some(a)) => Some(l2_distance(p, a)),
            _ => None,
        })
        .collect())
}

/// Classes chosen for annotation in one frame, with the scores behind the choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "SelectionRecord", try_from = "SelectionRecord")]
pub struct ClassSelection {
    pub frame_id: FrameId,
    /// Sorted ascending, no duplicates.
    pub selected: Vec<u8>,
    pub disparities: Vec<Option<f32>>,
    /// Set when the thresholded set was empty and the single highest-scoring
    /// class was taken instead.
    pub fallback: bool,
}

impl ClassSelection {
    /// `selected = { c : disparity defined and > delta }`.
    pub fn threshold(frame_id: FrameId, disparities: Vec<Option<f32>>, delta: f32) -> Self {
        let selected = disparities
            .iter()
            .enumerate()
            .filter(|(_, d)| d.is_some_and(|d| d > delta))
            .map(|(c, _)| c as u8)
            .collect();
        Self {
            frame_id,
            selected,
            disparities,
            fallback: false,
        }
    }

    /// Every class, used by the full-frame baselines.
    pub fn all_classes(frame_id: FrameId, num_classes: usize) -> Self {
        Self {
            frame_id,
            selected: (0..num_classes as u8).collect(),
            disparities: vec![None; num_classes],
            fallback: false,
        }
    }

    /// When nothing passed the threshold, takes the class with the largest
    /// defined disparity (lowest index on ties). No-op if nothing is defined.
    pub fn with_fallback(mut self) -> Self {
        if !self.selected.is_empty() {
            return self;
        }
        let best = self
            .disparities
            .iter()
            .enumerate()
            .filter_map(|(c, d)| d.map(|d| (c, d)))
            .fold(None::<(usize, f32)>, |best, (c, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((c, d)),
            });
        if let Some((c, _)) = best {
            self.selected = vec![c as u8];
            self.fallback = true;
        }
        self
    }

    pub fn contains(&self, class: u8) -> bool {
        self.selected.binary_search(&class).is_ok()
    }
}

pub fn select_classes_anchor(
    frame_id: FrameId,
    frame_cc: &ClassConfusion,
    anchors: &AnchorSet,
    delta: f32,
) -> Result<ClassSelection> {
    if !(delta >= 0.0) {
        return Err(Error::validation(format!("threshold must be non-negative, got {delta}")));
    }
    Ok(ClassSelection::threshold(frame_id, anchor_disparity(frame_cc, anchors)?, delta))
}

#[derive(Serialize, Deserialize)]
struct SelectionRecord {
    frame_id: FrameId,
    selected_classes: Vec<u8>,
    disparities: BTreeMap<u8, f32>,
    num_classes: usize,
    #[serde(default)]
    fallback: bool,
}

impl From<ClassSelection> for SelectionRecord {
    fn from(s: ClassSelection) -> Self {
        Self {
            frame_id: s.frame_id,
            selected_classes: s.selected,
            disparities: s
                .disparities
                .iter()
                .enumerate()
                .filter_map(|(c, d)| d.map(|d| (c as u8, d)))
                .collect(),
            num_classes: s.disparities.len(),
            fallback: s.fallback,
        }
    }
}

impl TryFrom<SelectionRecord> for ClassSelection {
    type Error = String;

    fn try_from(r: SelectionRecord) -> std::result::Result<Self, String> {
        let mut disparities = vec![None; r.num_classes];
        for (c, d) in r.disparities {
            *disparities
                .get_mut(c as usize)
                .ok_or_else(|| format!("disparity for class {c} out of range"))? = Some(d);
        }
        let mut selected = r.selected_classes;
        selected.sort_unstable();
        selected.dedup();
        if selected.last().is_some_and(|&c| c as usize >= r.num_classes) {
            return Err("selected class out of range".into());
        }
        Ok(Self {
            frame_id: r.frame_id,
            selected,
            disparities,
            fallback: r.fallback,
        })
    }
}
