//! Class-balanced active learning for semantic segmentation under domain shift.
//!
//! The pipeline picks frames with any standard frame selector, then asks the
//! annotator only for the hard classes of each picked frame. Hard classes are
//! found by comparing the frame's class-confusion matrix against anchors built
//! from the labeled pool, by the consistency of predictions across weak and
//! strong augmentations, or (as a skyline) with ground-truth IoU.

pub mod anchor;
pub mod augment;
pub mod confusion;
pub mod error;
pub mod frame_select;
pub mod learner;
pub mod metrics;
pub mod oracle;
pub mod orchestrator;
pub mod skyline;
pub mod synth;
pub mod tensor_store;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};

/// Index of a frame within its split.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameId(pub u32);

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
