//! Frame selectors: which `n_b` unlabeled frames enter the batch each iteration.
//!
//! All selectors break ties by ascending frame id. The diversity selector is a
//! stand-in for contextual-diversity selection: greedy max-min over a
//! symmetric KL distance between class-confusion matrices.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confusion::{frame_stats, ClassConfusion, ProbMap};
use crate::error::{Error, Result};
use crate::FrameId;

/// Smoothing added to every entry before taking a KL divergence.
pub const KL_EPSILON: f64 = 1e-8;

/// Per-frame representation consumed by the selectors.
#[derive(Clone, Debug)]
pub struct FrameFeature {
    pub frame_id: FrameId,
    pub confusion: ClassConfusion,
    pub mean_entropy: f64,
    /// Row-concatenated confusion matrix; invalid rows stay zero.
    pub flat_feature: Vec<f32>,
}

impl FrameFeature {
    pub fn from_probmap(frame_id: FrameId, pm: &ProbMap) -> Self {
        let stats = frame_stats(pm);
        Self {
            frame_id,
            flat_feature: stats.confusion.rows().to_vec(),
            confusion: stats.confusion,
            mean_entropy: stats.mean_entropy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameBatch {
    pub ids: Vec<FrameId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameSelector {
    Random,
    Entropy,
    Coreset,
    Diversity,
}

impl FrameSelector {
    pub const ALL: [FrameSelector; 4] = [Self::Random, Self::Entropy, Self::Coreset, Self::Diversity];

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Entropy => "entropy",
            Self::Coreset => "coreset",
            Self::Diversity => "diversity",
        }
    }
}

impl fmt::Display for FrameSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FrameSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|sel| sel.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown frame selector {s:?} (random|entropy|coreset|diversity)")))
    }
}

fn check_budget(n_b: usize, pool: usize) -> Result<()> {
    if n_b > pool {
        return Err(Error::precondition(format!(
            "cannot select {n_b} frames from a pool of {pool}"
        )));
    }
    Ok(())
}

/// Uniform sample without replacement, fixed by `seed`.
pub fn random_frames(pool: &[FrameId], n_b: usize, seed: u64) -> Result<FrameBatch> {
    check_budget(n_b, pool.len())?;
    let mut sorted = pool.to_vec();
    sorted.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = index::sample(&mut rng, sorted.len(), n_b)
        .into_iter()
        .map(|i| sorted[i])
        .collect();
    Ok(FrameBatch { ids })
}

/// Top `n_b` frames by mean pixel entropy.
pub fn entropy_frames(pool: &[FrameFeature], n_b: usize) -> Result<FrameBatch> {
    check_budget(n_b, pool.len())?;
    let mut ranked: Vec<&FrameFeature> = pool.iter().collect();
    ranked.sort_by(|a, b| {
        b.mean_entropy
            .total_cmp(&a.mean_entropy)
            .then(a.frame_id.cmp(&b.frame_id))
    });
    Ok(FrameBatch {
        ids: ranked[..n_b].iter().map(|f| f.frame_id).collect(),
    })
}

/// Greedy max-min (farthest-first) selection over an abstract distance.
///
/// `to_centers(i, j)` is the distance from candidate `i` to the `j`-th
/// existing center, `between(i, k)` the distance between two candidates.
/// Candidates must be ordered by frame id so that the lowest index wins ties.
/// With no existing centers, `first` chooses the seed candidate.
/// Returns the chosen candidate indices in pick order.
pub fn greedy_max_min(
    num_candidates: usize,
    num_centers: usize,
    n_b: usize,
    to_centers: impl Fn(usize, usize) -> f64,
    between: impl Fn(usize, usize) -> f64,
    first: impl Fn() -> usize,
) -> Vec<usize> {
    let n_b = n_b.min(num_candidates);
    let mut nearest: Vec<f64> = (0..num_candidates)
        .map(|i| (0..num_centers).map(|j| to_centers(i, j)).fold(f64::INFINITY, f64::min))
        .collect();
    let mut taken = vec![false; num_candidates];
    let mut order = Vec::with_capacity(n_b);
    while order.len() < n_b {
        let pick = if num_centers == 0 && order.is_empty() {
            first()
        } else {
            let mut best: Option<usize> = None;
            for i in (0..num_candidates).filter(|&i| !taken[i]) {
                if best.is_none_or(|b| nearest[i] > nearest[b]) {
                    best = Some(i);
                }
            }
            best.expect("fewer picks than candidates")
        };
        taken[pick] = true;
        order.push(pick);
        for i in 0..num_candidates {
            if !taken[i] {
                nearest[i] = nearest[i].min(between(i, pick));
            }
        }
    }
    order
}

pub fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn norm(a: &[f32]) -> f64 {
    a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
}

/// Index of the largest-norm point, lowest index on ties.
fn max_norm_index(points: &[&[f32]]) -> usize {
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if norm(p) > norm(points[best]) {
            best = i;
        }
    }
    best
}

/// k-center greedy over Euclidean points; `points` ordered by frame id.
pub fn kcenter_indices(points: &[&[f32]], centers: &[&[f32]], n_b: usize) -> Vec<usize> {
    greedy_max_min(
        points.len(),
        centers.len(),
        n_b,
        |i, j| euclidean(points[i], centers[j]),
        |i, k| euclidean(points[i], points[k]),
        || max_norm_index(points),
    )
}

fn sorted_by_id(pool: &[FrameFeature]) -> Vec<&FrameFeature> {
    let mut v: Vec<&FrameFeature> = pool.iter().collect();
    v.sort_by_key(|f| f.frame_id);
    v
}

/// Farthest-first over flattened confusion features, starting from the
/// labeled frames as centers (or the largest-norm frame when none are labeled).
pub fn coreset_kcenter(pool: &[FrameFeature], labeled: &[FrameFeature], n_b: usize) -> Result<FrameBatch> {
    check_budget(n_b, pool.len())?;
    let pool = sorted_by_id(pool);
    let points: Vec<&[f32]> = pool.iter().map(|f| f.flat_feature.as_slice()).collect();
    let centers: Vec<&[f32]> = labeled.iter().map(|f| f.flat_feature.as_slice()).collect();
    if let Some(bad) = points.iter().chain(&centers).find(|p| p.len() != points[0].len()) {
        return Err(Error::validation(format!(
            "feature dimension {} differs from {}",
            bad.len(),
            points[0].len()
        )));
    }
    Ok(FrameBatch {
        ids: kcenter_indices(&points, &centers, n_b)
            .into_iter()
            .map(|i| pool[i].frame_id)
            .collect(),
    })
}

fn smoothed(row: &[f32]) -> Vec<f64> {
    let z = 1.0 + KL_EPSILON * row.len() as f64;
    row.iter().map(|&p| (p as f64 + KL_EPSILON) / z).collect()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&a, &b)| a * (a / b).ln()).sum()
}

/// Mean symmetric KL divergence over the classes valid in both frames;
/// infinite when they share no valid class.
pub fn confusion_distance(a: &ClassConfusion, b: &ClassConfusion) -> f64 {
    let mut total = 0.0;
    let mut shared = 0usize;
    for c in 0..a.num_classes().min(b.num_classes()) {
        if let (Some(ra), Some(rb)) = (a.row(c), b.row(c)) {
            let (pa, pb) = (smoothed(ra), smoothed(rb));
            total += 0.5 * (kl(&pa, &pb) + kl(&pb, &pa));
            shared += 1;
        }
    }
    if shared == 0 {
        f64::INFINITY
    } else {
        (total / shared as f64).max(0.0)
    }
}

/// Greedy max-min under [`confusion_distance`].
pub fn diversity_frames(pool: &[FrameFeature], labeled: &[FrameFeature], n_b: usize) -> Result<FrameBatch> {
    check_budget(n_b, pool.len())?;
    let pool = sorted_by_id(pool);
    let points: Vec<&[f32]> = pool.iter().map(|f| f.flat_feature.as_slice()).collect();
    let order = greedy_max_min(
        pool.len(),
        labeled.len(),
        n_b,
        |i, j| confusion_distance(&pool[i].confusion, &labeled[j].confusion),
        |i, k| confusion_distance(&pool[i].confusion, &pool[k].confusion),
        || max_norm_index(&points),
    );
    Ok(FrameBatch {
        ids: order.into_iter().map(|i| pool[i].frame_id).collect(),
    })
}

/// Runs `selector` on the unlabeled pool.
pub fn select_frames(
    selector: FrameSelector,
    pool: &[FrameFeature],
    labeled: &[FrameFeature],
    n_b: usize,
    seed: u64,
) -> Result<FrameBatch> {
    match selector {
        FrameSelector::Random => {
            let ids: Vec<FrameId> = pool.iter().map(|f| f.frame_id).collect();
            random_frames(&ids, n_b, seed)
        }
        FrameSelector::Entropy => entropy_frames(pool, n_b),
        FrameSelector::Coreset => coreset_kcenter(pool, labeled, n_b),
        FrameSelector::Diversity => diversity_frames(pool, labeled, n_b),
    }
}
