//! Simulated annotator and pixel-budget accounting.
//!
//! The oracle labels every ground-truth pixel of each selected class in a
//! frame. Budget is counted in annotated pixels over the whole target
//! training split.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anchor::ClassSelection;
use crate::error::{Error, Result};
use crate::tensor_store::{LabelMap, IGNORE_LABEL};
use crate::FrameId;

/// Labels with `IGNORE_LABEL` on every pixel the oracle has not annotated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialLabelMap {
    labels: LabelMap,
}

impl PartialLabelMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            labels: LabelMap::filled(width, height, IGNORE_LABEL),
        }
    }

    pub fn from_labels(labels: LabelMap) -> Self {
        Self { labels }
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }

    pub fn into_labels(self) -> LabelMap {
        self.labels
    }

    pub fn annotated_mask(&self) -> Vec<bool> {
        self.labels.labels().iter().map(|&l| l != IGNORE_LABEL).collect()
    }

    pub fn annotated_pixels(&self) -> u64 {
        self.labels.labels().iter().filter(|&&l| l != IGNORE_LABEL).count() as u64
    }

    /// Classes with at least one annotated pixel, ascending.
    pub fn annotated_classes(&self) -> BTreeSet<u8> {
        self.labels.labels().iter().copied().filter(|&l| l != IGNORE_LABEL).collect()
    }
}

/// Annotates all ground-truth pixels whose class is selected, keeping any
/// earlier annotation.
pub fn apply_class_oracle(
    gt: &LabelMap,
    selection: &ClassSelection,
    existing: Option<&PartialLabelMap>,
) -> Result<PartialLabelMap> {
    let num_classes = selection.disparities.len();
    if let Some(&c) = selection.selected.iter().find(|&&c| c as usize >= num_classes) {
        return Err(Error::validation(format!(
            "frame {}: selected class {c} out of range for {num_classes} classes",
            selection.frame_id
        )));
    }
    let mut out = match existing {
        Some(prev) => {
            if !prev.labels.same_shape(gt) {
                return Err(Error::validation(format!(
                    "frame {}: partial labels {}x{} do not match ground truth {}x{}",
                    selection.frame_id,
                    prev.labels.width(),
                    prev.labels.height(),
                    gt.width(),
                    gt.height()
                )));
            }
            let disagrees = prev
                .labels
                .labels()
                .iter()
                .zip(gt.labels())
                .any(|(&p, &g)| p != IGNORE_LABEL && p != g);
            if disagrees {
                return Err(Error::validation(format!(
                    "frame {}: existing annotation disagrees with ground truth",
                    selection.frame_id
                )));
            }
            prev.clone()
        }
        None => PartialLabelMap::empty(gt.width(), gt.height()),
    };
    let mut wanted = [false; 256];
    for &c in &selection.selected {
        wanted[c as usize] = true;
    }
    for (o, &g) in out.labels.labels_mut().iter_mut().zip(gt.labels()) {
        if g != IGNORE_LABEL && wanted[g as usize] {
            *o = g;
        }
    }
    Ok(out)
}

/// One row of the ledger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetRecord {
    pub iteration: usize,
    pub frames: Vec<FrameId>,
    pub classes: BTreeMap<FrameId, Vec<u8>>,
    pub pixels_added: u64,
    pub cumulative_pixels: u64,
    pub total_target_pixels: u64,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    total_target_pixels: u64,
    records: Vec<BudgetRecord>,
    /// Annotated pixel count and annotated classes per frame, as of the last record.
    per_frame: BTreeMap<FrameId, (u64, BTreeSet<u8>)>,
}

impl BudgetLedger {
    pub fn new(total_target_pixels: u64) -> Result<Self> {
        if total_target_pixels == 0 {
            return Err(Error::validation("target pool has no pixels"));
        }
        Ok(Self {
            total_target_pixels,
            records: Vec::new(),
            per_frame: BTreeMap::new(),
        })
    }

    pub fn records(&self) -> &[BudgetRecord] {
        &self.records
    }

    pub fn total_target_pixels(&self) -> u64 {
        self.total_target_pixels
    }

    pub fn cumulative_pixels(&self) -> u64 {
        self.records.last().map_or(0, |r| r.cumulative_pixels)
    }

    pub fn fraction(&self) -> f64 {
        self.cumulative_pixels() as f64 / self.total_target_pixels as f64
    }

    /// Appends the record for iteration `k`. `partials` holds the full state of
    /// every annotated frame after this iteration's oracle calls.
    pub fn record_budget(
        &mut self,
        k: usize,
        selections: &[ClassSelection],
        partials: &BTreeMap<FrameId, PartialLabelMap>,
    ) -> Result<&BudgetRecord> {
        if let Some(last) = self.records.last() {
            if k <= last.iteration {
                return Err(Error::validation(format!(
                    "iteration {k} recorded after iteration {}",
                    last.iteration
                )));
            }
        }
        let mut classes: BTreeMap<FrameId, Vec<u8>> = BTreeMap::new();
        for sel in selections {
            if classes.insert(sel.frame_id, sel.selected.clone()).is_some() {
                return Err(Error::validation(format!("frame {} selected twice in iteration {k}", sel.frame_id)));
            }
        }
        let mut next = self.per_frame.clone();
        let mut added = 0u64;
        for (id, partial) in partials {
            let count = partial.annotated_pixels();
            let seen = partial.annotated_classes();
            let (prev_count, prev_classes) = self.per_frame.get(id).cloned().unwrap_or_default();
            match classes.get(id) {
                Some(selected) => {
                    if let Some(c) = seen.iter().find(|c| !prev_classes.contains(c) && !selected.contains(c)) {
                        return Err(Error::validation(format!(
                            "frame {id}: class {c} annotated without being selected"
                        )));
                    }
                    if count < prev_count || !prev_classes.is_subset(&seen) {
                        return Err(Error::validation(format!("frame {id}: annotation shrank")));
                    }
                    added += count - prev_count;
                }
                None => {
                    if count != prev_count || seen != prev_classes {
                        return Err(Error::validation(format!(
                            "frame {id}: annotation changed without a selection"
                        )));
                    }
                }
            }
            next.insert(*id, (count, seen));
        }
        if let Some(id) = classes.keys().find(|id| !partials.contains_key(id)) {
            return Err(Error::validation(format!("frame {id} selected but has no partial label map")));
        }
        if let Some(id) = self.per_frame.keys().find(|id| !partials.contains_key(id)) {
            return Err(Error::validation(format!("frame {id} lost its annotation")));
        }
        let cumulative = self.cumulative_pixels() + added;
        if cumulative > self.total_target_pixels {
            return Err(Error::validation(format!(
                "{cumulative} annotated pixels exceed the pool of {}",
                self.total_target_pixels
            )));
        }
        self.per_frame = next;
        self.records.push(BudgetRecord {
            iteration: k,
            frames: selections.iter().map(|s| s.frame_id).collect(),
            classes,
            pixels_added: added,
            cumulative_pixels: cumulative,
            total_target_pixels: self.total_target_pixels,
            fraction: cumulative as f64 / self.total_target_pixels as f64,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    /// `iteration,frames,classes,pixels_added,cumulative_pixels,fraction`, where
    /// `frames` counts the frames selected and `classes` the (frame, class) pairs annotated.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::validation(format!("ledger csv: {e}"));
        w.write_record(["iteration", "frames", "classes", "pixels_added", "cumulative_pixels", "fraction"])
            .map_err(csv_err)?;
        for r in &self.records {
            let pairs: usize = r.classes.values().map(Vec::len).sum();
            w.write_record([
                r.iteration.to_string(),
                r.frames.len().to_string(),
                pairs.to_string(),
                r.pixels_added.to_string(),
                r.cumulative_pixels.to_string(),
                format!("{:.8}", r.fraction),
            ])
            .map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::validation(format!("ledger csv: {e}")))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_csv()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }
}
