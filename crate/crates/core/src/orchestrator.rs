//! The closed active-learning loop: warm-up on source labels, then per
//! iteration frame selection, class selection, simulated annotation, two-stage
//! training and evaluation, each persisted under `iter_XX/`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchor::{build_anchor_set, select_classes_anchor, ClassSelection};
use crate::augment::{aug_disparity, select_classes_aug, AugPolicy};
use crate::confusion::{class_confusion, ProbMap};
use crate::error::{Error, Result, StageContext};
use crate::frame_select::{select_frames, FrameFeature, FrameSelector};
use crate::learner::{pseudo_labels, train_on_pixels, train_on_union, PixelClassifier, PixelSet, TrainConfig};
use crate::metrics::{emit_report, evaluate, write_json, EvalResult, IterationEval, RunInfo, RUN_INFO_FILE};
use crate::oracle::{apply_class_oracle, BudgetLedger, BudgetRecord, PartialLabelMap};
use crate::skyline::iou_gap_selection;
use crate::synth::{Dataset, Frame};
use crate::tensor_store::{read_label_map, read_tensor, write_label_map, LabelMap};
use crate::FrameId;

/// What decides the annotated pixels of each picked frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Anchor,
    Aug,
    IouSkyline,
    /// Whole frames chosen by the given selector.
    FrameFull(FrameSelector),
}

impl Method {
    pub fn is_class_method(self) -> bool {
        !matches!(self, Method::FrameFull(_))
    }

    pub fn all() -> Vec<Method> {
        let mut v = vec![Method::Anchor, Method::Aug, Method::IouSkyline];
        v.extend(FrameSelector::ALL.map(Method::FrameFull));
        v
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Anchor => f.write_str("anchor"),
            Method::Aug => f.write_str("aug"),
            Method::IouSkyline => f.write_str("iou_skyline"),
            Method::FrameFull(s) => write!(f, "frame_full_{s}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anchor" => Ok(Method::Anchor),
            "aug" => Ok(Method::Aug),
            "iou_skyline" => Ok(Method::IouSkyline),
            _ => s
                .strip_prefix("frame_full_")
                .and_then(|sel| sel.parse().ok())
                .map(Method::FrameFull)
                .ok_or_else(|| {
                    Error::validation(format!(
                        "unknown method {s:?} (anchor|aug|iou_skyline|frame_full_{{random,entropy,coreset,diversity}})"
                    ))
                }),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugConfig {
    pub weak: AugPolicy,
    pub strong: AugPolicy,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            weak: AugPolicy::weak(),
            strong: AugPolicy::strong(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Root of a generated world.
    pub dataset: PathBuf,
    /// Run directory.
    pub out_dir: PathBuf,
    pub method: Method,
    /// Frame selector used by the class methods.
    pub frame_selector: FrameSelector,
    pub frames_per_iteration: usize,
    pub iterations: usize,
    pub delta: f32,
    /// Annotate the top-scoring class of a frame when none clears `delta`.
    /// Never applies to an infinite threshold.
    pub fallback: bool,
    /// Annotate the first batch of frames completely, whatever the method.
    pub full_first_iteration: bool,
    /// Source pre-training.
    pub warmup: TrainConfig,
    /// Stage-1 and stage-2 fine-tuning.
    pub train: TrainConfig,
    pub aug: AugConfig,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("world"),
            out_dir: PathBuf::from("run"),
            method: Method::Anchor,
            frame_selector: FrameSelector::Diversity,
            frames_per_iteration: 5,
            iterations: 4,
            delta: 0.5,
            fallback: true,
            full_first_iteration: true,
            warmup: TrainConfig::default(),
            train: TrainConfig::default(),
            aug: AugConfig::default(),
            seed: 0,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::validation("iterations must be at least 1"));
        }
        if self.frames_per_iteration == 0 {
            return Err(Error::validation("frames_per_iteration must be at least 1"));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::validation(format!("delta must be non-negative, got {}", self.delta)));
        }
        self.warmup.validate()?;
        self.train.validate()?;
        self.aug.weak.validate()?;
        self.aug.strong.validate()
    }

    /// Fine-tuning settings of iteration `k`, seeded for that iteration.
    pub fn train_config(&self, k: usize) -> TrainConfig {
        with_seed(&self.train, derive_seed(self.seed, TAG_TRAIN, k as u64))
    }

    fn selector(&self) -> FrameSelector {
        match self.method {
            Method::FrameFull(s) => s,
            _ => self.frame_selector,
        }
    }
}

/// Everything one iteration decided and measured; `iter_XX/record.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub frames: Vec<FrameId>,
    pub selections: Vec<ClassSelection>,
    pub fallback_frames: Vec<FrameId>,
    /// Classes present in a frame's ground truth that had no score, because
    /// the model never predicted them there (or no anchor exists for them).
    /// Such classes cannot be selected.
    #[serde(default)]
    pub unselectable: BTreeMap<FrameId, Vec<u8>>,
    pub ledger: BudgetRecord,
    pub pseudo_pixels: usize,
    pub eval: IterationEval,
}

const TAG_WARMUP: u64 = 1;
const TAG_SUPREF: u64 = 2;
const TAG_SELECT: u64 = 3;
const TAG_TRAIN: u64 = 4;
const TAG_AUG_WEAK: u64 = 5;
const TAG_AUG_STRONG: u64 = 6;

/// Independent seed for one purpose and index, fixed by the run seed.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 48) ^ index);
    rng.next_u64()
}

fn with_seed(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..cfg.clone() }
}

pub fn iteration_dir(run_dir: &Path, k: usize) -> PathBuf {
    run_dir.join(format!("iter_{k:02}"))
}

fn predict_all(model: &PixelClassifier, frames: &[&Frame]) -> Vec<ProbMap> {
    frames.par_iter().map(|f| model.predict_probmap(&f.image)).collect()
}

pub fn evaluate_model(model: &PixelClassifier, frames: &[Frame], num_classes: usize) -> Result<EvalResult> {
    let preds: Vec<_> = frames.par_iter().map(|f| model.predict_labels(&f.image)).collect();
    let gts: Vec<_> = frames.iter().map(|f| f.labels.clone()).collect();
    evaluate(&preds, &gts, num_classes)
}

/// Source pre-training from zero weights.
pub fn train_warmup(ds: &Dataset, cfg: &LoopConfig) -> Result<PixelClassifier> {
    let pairs: Vec<_> = ds.source_train.iter().map(|f| (&f.image, &f.labels)).collect();
    let set = PixelSet::from_frames(pairs, ds.num_classes)?;
    train_on_pixels(
        &PixelClassifier::zeros(ds.num_classes),
        &set,
        &with_seed(&cfg.warmup, derive_seed(cfg.seed, TAG_WARMUP, 0)),
    )
}

/// The warm-up model fine-tuned on the whole labeled target training split.
pub fn train_reference(ds: &Dataset, warmup: &PixelClassifier, cfg: &LoopConfig) -> Result<PixelClassifier> {
    let pairs: Vec<_> = ds.target_train.iter().map(|f| (&f.image, &f.labels)).collect();
    let set = PixelSet::from_frames(pairs, ds.num_classes)?;
    train_on_pixels(warmup, &set, &with_seed(&cfg.train, derive_seed(cfg.seed, TAG_SUPREF, 0)))
}

fn load_or_train(path: &Path, train: impl FnOnce() -> Result<PixelClassifier>) -> Result<PixelClassifier> {
    if path.exists() {
        return PixelClassifier::load(path);
    }
    let model = train()?;
    model.save(path)?;
    Ok(model)
}

fn partial_name(id: FrameId) -> String {
    format!("lbl_{:04}.pgm", id.0)
}

/// State carried from one iteration to the next.
struct LoopState {
    model: PixelClassifier,
    ledger: BudgetLedger,
    partials: BTreeMap<FrameId, PartialLabelMap>,
}

impl LoopState {
    fn labeled(&self) -> BTreeSet<FrameId> {
        self.partials.keys().copied().collect()
    }
}

fn persist_iteration(
    dir: &Path,
    record: &IterationRecord,
    state: &LoopState,
    stage1: &PixelClassifier,
) -> Result<()> {
    let partial_dir = dir.join("partial_labels");
    fs::create_dir_all(&partial_dir).map_err(|e| Error::io(&partial_dir, e))?;
    write_json(&dir.join("selections.json"), &record.selections)?;
    for (id, p) in &state.partials {
        write_label_map(p.labels(), partial_dir.join(partial_name(*id)))?;
    }
    stage1.save(dir.join("checkpoint_stage1.ptns"))?;
    state.model.save(dir.join("checkpoint_stage2.ptns"))?;
    write_json(&dir.join("eval.json"), &record.eval)?;
    write_json(&dir.join("ledger.json"), &state.ledger)?;
    // written last: its presence marks the iteration as complete
    write_json(&dir.join("record.json"), record)
}

fn load_iteration(dir: &Path) -> Result<(IterationRecord, LoopState)> {
    let read = |name: &str| -> Result<Vec<u8>> {
        let p = dir.join(name);
        fs::read(&p).map_err(|e| Error::io(&p, e))
    };
    let record: IterationRecord = serde_json::from_slice(&read("record.json")?)
        .map_err(|e| Error::format(dir.join("record.json"), "json", e.to_string()))?;
    let ledger: BudgetLedger = serde_json::from_slice(&read("ledger.json")?)
        .map_err(|e| Error::format(dir.join("ledger.json"), "json", e.to_string()))?;
    let mut partials = BTreeMap::new();
    let partial_dir = dir.join("partial_labels");
    for entry in fs::read_dir(&partial_dir).map_err(|e| Error::io(&partial_dir, e))? {
        let path = entry.map_err(|e| Error::io(&partial_dir, e))?.path();
        let Some(id) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.strip_prefix("lbl_"))
            .and_then(|s| s.parse().ok())
        else {
            continue;
        };
        partials.insert(FrameId(id), PartialLabelMap::from_labels(read_label_map(&path)?));
    }
    let model = PixelClassifier::load(dir.join("checkpoint_stage2.ptns"))?;
    Ok((record, LoopState { model, ledger, partials }))
}

/// Picks frames and their classes for iteration `k`.
fn select_batch(
    k: usize,
    cfg: &LoopConfig,
    ds: &Dataset,
    state: &LoopState,
    reference: Option<&PixelClassifier>,
) -> Result<(Vec<ClassSelection>, bool)> {
    let labeled = state.labeled();
    let pool: Vec<&Frame> = ds.target_train.iter().filter(|f| !labeled.contains(&f.id)).collect();
    let n_b = cfg.frames_per_iteration.min(pool.len());
    if n_b == 0 {
        return Ok((Vec::new(), false));
    }
    let pool_maps = predict_all(&state.model, &pool);
    let pool_features: Vec<FrameFeature> = pool
        .iter()
        .zip(&pool_maps)
        .map(|(f, pm)| FrameFeature::from_probmap(f.id, pm))
        .collect();
    let labeled_frames: Vec<&Frame> = ds.target_train.iter().filter(|f| labeled.contains(&f.id)).collect();
    let labeled_maps = predict_all(&state.model, &labeled_frames);
    let selector = cfg.selector();
    let labeled_features: Vec<FrameFeature> = match selector {
        FrameSelector::Coreset | FrameSelector::Diversity => labeled_frames
            .iter()
            .zip(&labeled_maps)
            .map(|(f, pm)| FrameFeature::from_probmap(f.id, pm))
            .collect(),
        _ => Vec::new(),
    };
    let batch = select_frames(
        selector,
        &pool_features,
        &labeled_features,
        n_b,
        derive_seed(cfg.seed, TAG_SELECT, k as u64),
    )
    .stage(k, "frame_select")?;
    let mut ids = batch.ids;
    ids.sort_unstable();

    let c_n = ds.num_classes;
    let full = !cfg.method.is_class_method() || (cfg.full_first_iteration && labeled.is_empty());
    if full {
        return Ok((ids.iter().map(|&id| ClassSelection::all_classes(id, c_n)).collect(), false));
    }
    let index_of = |id: FrameId| pool.iter().position(|f| f.id == id).expect("selected from pool");
    let selections: Vec<ClassSelection> = match cfg.method {
        Method::Anchor => {
            // before any target label exists the anchors come from the unlabeled pool
            let anchor_maps = if labeled_maps.is_empty() { &pool_maps } else { &labeled_maps };
            let anchors = build_anchor_set(anchor_maps, c_n).stage(k, "anchor")?;
            ids.iter()
                .map(|&id| select_classes_anchor(id, &class_confusion(&pool_maps[index_of(id)]), &anchors, cfg.delta))
                .collect::<Result<_>>()
                .stage(k, "class_select")?
        }
        Method::Aug => ids
            .par_iter()
            .map(|&id| {
                let weak = cfg.aug.weak.with_seed(derive_seed(cfg.seed, TAG_AUG_WEAK, ((k as u64) << 32) | id.0 as u64));
                let strong = cfg.aug.strong.with_seed(derive_seed(cfg.seed, TAG_AUG_STRONG, ((k as u64) << 32) | id.0 as u64));
                select_classes_aug(id, &pool[index_of(id)].image, &state.model, &weak, &strong, cfg.delta)
            })
            .collect::<Result<_>>()
            .stage(k, "class_select")?,
        Method::IouSkyline => {
            let reference = reference.expect("skyline runs carry a reference model");
            ids.par_iter()
                .map(|&id| {
                    let f = pool[index_of(id)];
                    iou_gap_selection(id, &f.image, &f.labels, &state.model, reference, cfg.delta)
                })
                .collect::<Result<_>>()
                .stage(k, "class_select")?
        }
        Method::FrameFull(_) => unreachable!("handled above"),
    };
    let fallback = cfg.fallback && cfg.delta.is_finite();
    let selections = selections
        .into_iter()
        .map(|s| if fallback { s.with_fallback() } else { s })
        .collect();
    Ok((selections, true))
}

/// Classes present in the ground truth that received no score.
fn unscored_classes(sel: &ClassSelection, gt: &LabelMap) -> Vec<u8> {
    let mut present = vec![false; sel.disparities.len()];
    for &l in gt.labels() {
        if let Some(p) = present.get_mut(l as usize) {
            *p = true;
        }
    }
    (0..present.len())
        .filter(|&c| present[c] && sel.disparities[c].is_none())
        .map(|c| c as u8)
        .collect()
}

/// Stage 1 from the warm-up weights on the labeled pool, stage 2 from stage 1
/// on labeled plus pseudo-labeled unlabeled frames. Without any labeled pixel
/// both stages keep the warm-up model.
fn train_stages(
    k: usize,
    cfg: &LoopConfig,
    ds: &Dataset,
    warmup: &PixelClassifier,
    partials: &BTreeMap<FrameId, PartialLabelMap>,
) -> Result<(PixelClassifier, PixelClassifier, usize)> {
    let labeled_pairs: Vec<_> = ds
        .target_train
        .iter()
        .filter_map(|f| partials.get(&f.id).map(|p| (&f.image, p.labels())))
        .collect();
    let labeled_set = PixelSet::from_frames(labeled_pairs, ds.num_classes).stage(k, "stage1")?;
    if labeled_set.is_empty() {
        return Ok((warmup.clone(), warmup.clone(), 0));
    }
    let train = cfg.train_config(k);
    let stage1 = train_on_pixels(warmup, &labeled_set, &train).stage(k, "stage1")?;
    let unlabeled: Vec<&Frame> = ds.target_train.iter().filter(|f| !partials.contains_key(&f.id)).collect();
    let pseudo: Vec<_> = unlabeled
        .par_iter()
        .map(|f| pseudo_labels(&stage1.predict_probmap(&f.image), cfg.train.pseudo_confidence_threshold))
        .collect();
    let pseudo_set = PixelSet::from_frames(unlabeled.iter().map(|f| &f.image).zip(&pseudo), ds.num_classes)
        .stage(k, "pseudo_label")?;
    let stage2 = if pseudo_set.is_empty() {
        stage1.clone()
    } else {
        train_on_union(&stage1, &labeled_set, &pseudo_set, &train).stage(k, "stage2")?
    };
    Ok((stage1, stage2, pseudo_set.len()))
}

fn ensure_config(run_dir: &Path, cfg: &LoopConfig) -> Result<()> {
    let path = run_dir.join("config.json");
    let mut fresh = serde_json::to_vec_pretty(cfg).map_err(|e| Error::format(&path, "json", e.to_string()))?;
    fresh.push(b'\n');
    if path.exists() {
        let existing = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if existing != fresh {
            return Err(Error::validation(format!(
                "{} holds a run with a different config; use a fresh out_dir",
                run_dir.display()
            )));
        }
        return Ok(());
    }
    fs::write(&path, fresh).map_err(|e| Error::io(&path, e))
}

/// Runs (or resumes) the loop described by `cfg`, writing everything under
/// `cfg.out_dir`, and returns the records of iterations `1..=K`.
pub fn run_active_loop(cfg: &LoopConfig) -> Result<Vec<IterationRecord>> {
    cfg.validate()?;
    let ds = Dataset::load(&cfg.dataset)?;
    run_active_loop_on(cfg, &ds)
}

/// [`run_active_loop`] over an already loaded dataset.
pub fn run_active_loop_on(cfg: &LoopConfig, ds: &Dataset) -> Result<Vec<IterationRecord>> {
    cfg.validate()?;
    let run_dir = cfg.out_dir.as_path();
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    ensure_config(run_dir, cfg)?;
    write_json(
        &run_dir.join(RUN_INFO_FILE),
        &RunInfo {
            method: cfg.method.to_string(),
            seed: cfg.seed,
            num_classes: ds.num_classes,
        },
    )?;

    let warmup = load_or_train(&run_dir.join("warmup.ptns"), || train_warmup(ds, cfg)).stage(0, "warmup")?;
    let reference = match cfg.method {
        Method::IouSkyline => Some(
            load_or_train(&run_dir.join("reference.ptns"), || train_reference(ds, &warmup, cfg)).stage(0, "reference")?,
        ),
        _ => None,
    };
    let iter0 = iteration_dir(run_dir, 0);
    if !iter0.join("eval.json").exists() {
        fs::create_dir_all(&iter0).map_err(|e| Error::io(&iter0, e))?;
        let eval = IterationEval {
            iteration: 0,
            cumulative_pixels: 0,
            fraction: 0.0,
            stage1: None,
            stage2: evaluate_model(&warmup, &ds.target_val, ds.num_classes).stage(0, "evaluate")?,
        };
        write_json(&iter0.join("eval.json"), &eval)?;
    }

    let mut state = LoopState {
        model: warmup.clone(),
        ledger: BudgetLedger::new(ds.target_train_pixels())?,
        partials: BTreeMap::new(),
    };
    let mut records = Vec::with_capacity(cfg.iterations);
    for k in 1..=cfg.iterations {
        let dir = iteration_dir(run_dir, k);
        if dir.join("record.json").exists() {
            let (record, loaded) = load_iteration(&dir).stage(k, "resume")?;
            state = loaded;
            records.push(record);
            continue;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

        let (selections, scored) = select_batch(k, cfg, ds, &state, reference.as_ref())?;
        let mut unselectable = BTreeMap::new();
        for sel in &selections {
            let frame = &ds.target_train[ds
                .target_train
                .iter()
                .position(|f| f.id == sel.frame_id)
                .expect("selection comes from the pool")];
            if scored {
                let missing = unscored_classes(sel, &frame.labels);
                if !missing.is_empty() {
                    unselectable.insert(sel.frame_id, missing);
                }
            }
            let partial = apply_class_oracle(&frame.labels, sel, state.partials.get(&sel.frame_id)).stage(k, "oracle")?;
            state.partials.insert(sel.frame_id, partial);
        }
        let ledger_record = state.ledger.record_budget(k, &selections, &state.partials).stage(k, "ledger")?.clone();

        let (stage1, stage2, pseudo_pixels) = train_stages(k, cfg, ds, &warmup, &state.partials)?;
        let stage1_eval = evaluate_model(&stage1, &ds.target_val, ds.num_classes).stage(k, "evaluate")?;
        let stage2_eval = evaluate_model(&stage2, &ds.target_val, ds.num_classes).stage(k, "evaluate")?;
        state.model = stage2;
        let record = IterationRecord {
            iteration: k,
            frames: selections.iter().map(|s| s.frame_id).collect(),
            fallback_frames: selections.iter().filter(|s| s.fallback).map(|s| s.frame_id).collect(),
            unselectable,
            selections,
            eval: IterationEval {
                iteration: k,
                cumulative_pixels: ledger_record.cumulative_pixels,
                fraction: ledger_record.fraction,
                stage1: Some(stage1_eval),
                stage2: stage2_eval,
            },
            ledger: ledger_record,
            pseudo_pixels,
        };
        persist_iteration(&dir, &record, &state, &stage1)?;
        state.ledger.write_csv(run_dir.join("ledger.csv"))?;
        records.push(record);
    }
    state.ledger.write_csv(run_dir.join("ledger.csv"))?;
    emit_report(run_dir)?;
    Ok(records)
}

/// Frame id from the trailing digits of a file stem (`img_0007`, `0007_weak`).
fn frame_id_of(path: &Path, suffix: &str) -> Option<FrameId> {
    let stem = path.file_stem()?.to_str()?.strip_suffix(suffix)?;
    let digits = stem.len() - stem.bytes().rev().take_while(u8::is_ascii_digit).count();
    stem[digits..].parse().ok().map(FrameId)
}

/// Probability maps `*{suffix}.ptns` in `dir`, keyed by frame id.
fn read_probmaps(dir: &Path, suffix: &str) -> Result<BTreeMap<FrameId, ProbMap>> {
    let mut maps = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_none_or(|e| e != "ptns") {
            continue;
        }
        let Some(id) = frame_id_of(&path, suffix) else { continue };
        let pm = ProbMap::from_tensor(&read_tensor(&path)?)?;
        if maps.insert(id, pm).is_some() {
            return Err(Error::validation(format!("two probability maps for frame {id} in {}", dir.display())));
        }
    }
    Ok(maps)
}

/// Class selection on probability maps produced by an external model, no
/// training involved.
///
/// `anchor` reads `<id>.ptns` from `probmaps` and builds anchors from the maps
/// in `labeled`, or from the candidates themselves when no labeled directory
/// is given. `aug` reads the pairs `<id>_weak.ptns` / `<id>_strong.ptns`.
pub fn select_from_probmaps(
    method: Method,
    probmaps: &Path,
    labeled: Option<&Path>,
    delta: f32,
    fallback: bool,
) -> Result<Vec<ClassSelection>> {
    if !(delta >= 0.0) {
        return Err(Error::validation(format!("threshold must be non-negative, got {delta}")));
    }
    let selections: Vec<ClassSelection> = match method {
        Method::Anchor => {
            let pool = read_probmaps(probmaps, "")?;
            let anchor_maps: Vec<ProbMap> = match labeled {
                Some(dir) => read_probmaps(dir, "")?.into_values().collect(),
                None => pool.values().cloned().collect(),
            };
            let c_n = pool
                .values()
                .chain(&anchor_maps)
                .next()
                .ok_or_else(|| Error::validation(format!("no probability maps in {}", probmaps.display())))?
                .num_classes();
            let anchors = build_anchor_set(&anchor_maps, c_n)?;
            pool.iter()
                .map(|(&id, pm)| select_classes_anchor(id, &class_confusion(pm), &anchors, delta))
                .collect::<Result<_>>()?
        }
        Method::Aug => {
            let weak = read_probmaps(probmaps, "_weak")?;
            let strong = read_probmaps(probmaps, "_strong")?;
            if weak.len() != strong.len() || weak.keys().ne(strong.keys()) {
                return Err(Error::validation("every frame needs both a _weak and a _strong map"));
            }
            weak.iter()
                .map(|(&id, pw)| {
                    let d = aug_disparity(&class_confusion(pw), &class_confusion(&strong[&id]))?;
                    Ok(ClassSelection::threshold(id, d, delta))
                })
                .collect::<Result<_>>()?
        }
        other => return Err(Error::validation(format!("{other} cannot run on precomputed maps; use anchor or aug"))),
    };
    if selections.is_empty() {
        return Err(Error::validation(format!("no probability maps in {}", probmaps.display())));
    }
    let fallback = fallback && delta.is_finite();
    Ok(selections
        .into_iter()
        .map(|s| if fallback { s.with_fallback() } else { s })
        .collect())
}
