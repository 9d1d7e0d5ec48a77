//! Ground-truth skyline: selects the classes where a fully supervised
//! reference model beats the current model by more than `delta` IoU on the
//! frame. It consumes ground truth and only serves as an upper reference.

use crate::anchor::ClassSelection;
use crate::error::{Error, Result};
use crate::learner::Segmenter;
use crate::tensor_store::{LabelMap, RgbImage, IGNORE_LABEL};
use crate::FrameId;

/// A model trained on the fully labeled target training split.
pub struct SupervisedReference<M> {
    pub model: M,
    /// Describes how the reference was trained (config digest or summary).
    pub provenance: String,
}

/// Per-class IoU on one frame; pixels whose ground truth is ignore are
/// excluded from both intersection and union. `None` when the union is empty.
pub fn per_image_class_iou(pred: &LabelMap, gt: &LabelMap, num_classes: usize) -> Result<Vec<Option<f32>>> {
    if !pred.same_shape(gt) {
        return Err(Error::validation(format!(
            "prediction {}x{} does not match ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut inter = vec![0u64; num_classes];
    let mut union = vec![0u64; num_classes];
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        if g == IGNORE_LABEL {
            continue;
        }
        let (p, g) = (p as usize, g as usize);
        if p == g {
            if p < num_classes {
                inter[p] += 1;
                union[p] += 1;
            }
        } else {
            if p < num_classes {
                union[p] += 1;
            }
            if g < num_classes {
                union[g] += 1;
            }
        }
    }
    Ok(inter
        .iter()
        .zip(&union)
        .map(|(&i, &u)| (u > 0).then(|| (i as f64 / u as f64) as f32))
        .collect())
}

/// `D^c = IoU_c(reference) - IoU_c(current)`, selected where both are defined
/// and `D^c > delta`.
pub fn select_classes_iou<R: Segmenter>(
    frame_id: FrameId,
    img: &RgbImage,
    gt: Option<&LabelMap>,
    model: &dyn Segmenter,
    reference: &SupervisedReference<R>,
    delta: f32,
) -> Result<ClassSelection> {
    let gt = gt.ok_or_else(|| Error::precondition(format!("skyline selection needs ground truth for frame {frame_id}")))?;
    iou_gap_selection(frame_id, img, gt, model, &reference.model, delta)
}

pub(crate) fn iou_gap_selection(
    frame_id: FrameId,
    img: &RgbImage,
    gt: &LabelMap,
    model: &(impl Segmenter + ?Sized),
    reference: &(impl Segmenter + ?Sized),
    delta: f32,
) -> Result<ClassSelection> {
    if !(delta >= 0.0) {
        return Err(Error::validation(format!("threshold must be non-negative, got {delta}")));
    }
    let c_n = model.num_classes();
    if reference.num_classes() != c_n {
        return Err(Error::validation("reference and current model disagree on the class count"));
    }
    let to_labels = |pm: crate::confusion::ProbMap| LabelMap::new(img.width(), img.height(), pm.argmax_labels());
    let current = per_image_class_iou(&to_labels(model.predict(img)?)?, gt, c_n)?;
    let sup = per_image_class_iou(&to_labels(reference.predict(img)?)?, gt, c_n)?;
    let disparities = sup
        .iter()
        .zip(&current)
        .map(|(s, m)| match (s, m) {
            (Some(s), Some(m)) => Some(s - m),
            _ => None,
        })
        .collect();
    Ok(ClassSelection::threshold(frame_id, disparities, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confusion::ProbMap;
    use proptest::prelude::*;

    /// Predicts a fixed label map, one-hot.
    struct Fixed {
        labels: LabelMap,
        classes: usize,
    }

    impl Segmenter for Fixed {
        fn num_classes(&self) -> usize {
            self.classes
        }

        fn predict(&self, img: &RgbImage) -> Result<ProbMap> {
            let mut probs = vec![0.0f32; self.labels.len() * self.classes];
            for (i, &l) in self.labels.labels().iter().enumerate() {
                probs[i * self.classes + l as usize] = 1.0;
            }
            ProbMap::new(img.height(), img.width(), self.classes, probs)
        }
    }

    #[test]
    fn iou_reference_values() {
        let gt = LabelMap::new(4, 2, vec![1, 1, 1, 1, 0, 0, 0, 0]).unwrap();
        assert_eq!(per_image_class_iou(&gt, &gt, 3).unwrap(), vec![Some(1.0), Some(1.0), None]);

        let disjoint = LabelMap::new(4, 2, vec![0, 0, 0, 0, 1, 1, 1, 1]).unwrap();
        assert_eq!(per_image_class_iou(&disjoint, &gt, 2).unwrap(), vec![Some(0.0), Some(0.0)]);

        // class 1: pred 4 px, gt 4 px, overlap 2 -> 2 / 6
        let pred = LabelMap::new(4, 2, vec![0, 0, 1, 1, 1, 1, 0, 0]).unwrap();
        let iou = per_image_class_iou(&pred, &gt, 2).unwrap();
        assert!((iou[1].unwrap() - 2.0 / 6.0).abs() < 1e-7);
    }

    #[test]
    fn ignore_pixels_are_excluded() {
        let gt = LabelMap::new(3, 1, vec![0, IGNORE_LABEL, 1]).unwrap();
        let pred = LabelMap::new(3, 1, vec![0, 1, 1]).unwrap();
        assert_eq!(per_image_class_iou(&pred, &gt, 2).unwrap(), vec![Some(1.0), Some(1.0)]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = LabelMap::filled(2, 2, 0);
        let b = LabelMap::filled(4, 1, 0);
        assert!(matches!(per_image_class_iou(&a, &b, 1), Err(Error::Validation(_))));
    }

    fn as_reference(f: Fixed) -> SupervisedReference<Fixed> {
        SupervisedReference {
            model: f,
            provenance: "fixture".into(),
        }
    }

    #[test]
    fn same_model_selects_nothing() {
        let gt = LabelMap::new(2, 2, vec![0, 1, 1, 0]).unwrap();
        let img = RgbImage::filled(2, 2, [0, 0, 0]);
        let m = Fixed {
            labels: gt.clone(),
            classes: 2,
        };
        let r = as_reference(Fixed {
            labels: gt.clone(),
            classes: 2,
        });
        let sel = select_classes_iou(FrameId(0), &img, Some(&gt), &m, &r, 0.5).unwrap();
        assert!(sel.selected.is_empty());
        assert_eq!(sel.disparities, vec![Some(0.0), Some(0.0)]);
    }

    #[test]
    fn missing_region_is_selected_and_nailed_class_is_not() {
        // 10x10 frame: class 0 background, class 1 a 4x4 square, class 2 a 3x3 square
        let (w, h) = (10, 10);
        let mut gt = LabelMap::filled(w, h, 0);
        for y in 1..5 {
            for x in 1..5 {
                gt.labels_mut()[y * w + x] = 1;
            }
        }
        for y in 6..9 {
            for x in 6..9 {
                gt.labels_mut()[y * w + x] = 2;
            }
        }
        // current model misses class 2 entirely (predicts background there)
        let mut current = gt.clone();
        for l in current.labels_mut() {
            if *l == 2 {
                *l = 0;
            }
        }
        // reference gets class 2 right except one corner pixel: IoU 8/9
        let mut reference = gt.clone();
        reference.labels_mut()[8 * w + 8] = 0;

        let img = RgbImage::filled(w, h, [0, 0, 0]);
        let m = Fixed {
            labels: current,
            classes: 3,
        };
        let r = as_reference(Fixed {
            labels: reference,
            classes: 3,
        });
        let sel = select_classes_iou(FrameId(2), &img, Some(&gt), &m, &r, 0.5).unwrap();
        assert_eq!(sel.selected, vec![2]);
        assert_eq!(sel.disparities[1], Some(0.0));
        // class 2 is absent from the current prediction but present in gt, so IoU 0
        assert!((sel.disparities[2].unwrap() - 8.0 / 9.0).abs() < 1e-6);
    }

    #[test]
    fn missing_ground_truth_is_a_precondition_error() {
        let img = RgbImage::filled(1, 1, [0, 0, 0]);
        let m = Fixed {
            labels: LabelMap::filled(1, 1, 0),
            classes: 1,
        };
        let r = as_reference(Fixed {
            labels: LabelMap::filled(1, 1, 0),
            classes: 1,
        });
        assert!(matches!(
            select_classes_iou(FrameId(0), &img, None, &m, &r, 0.5),
            Err(Error::Precondition(_))
        ));
    }

    proptest! {
        /// Matches IoU read off a per-frame confusion matrix.
        #[test]
        fn agrees_with_confusion_matrix(pred in proptest::collection::vec(0u8..4, 64), gt in proptest::collection::vec(0u8..4, 64)) {
            let pred = LabelMap::new(8, 8, pred).unwrap();
            let gt = LabelMap::new(8, 8, gt).unwrap();
            let mut conf = [[0u32; 4]; 4];
            for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
                conf[g as usize][p as usize] += 1;
            }
            let iou = per_image_class_iou(&pred, &gt, 4).unwrap();
            for c in 0..4 {
                let row: u32 = conf[c].iter().sum();
                let col: u32 = conf.iter().map(|r| r[c]).sum();
                let union = row + col - conf[c][c];
                let expect = (union > 0).then(|| (conf[c][c] as f64 / union as f64) as f32);
                prop_assert_eq!(iou[c], expect);
            }
        }

        #[test]
        fn gap_is_bounded(a in proptest::collection::vec(0u8..3, 16), b in proptest::collection::vec(0u8..3, 16), g in proptest::collection::vec(0u8..3, 16)) {
            let gt = LabelMap::new(4, 4, g).unwrap();
            let img = RgbImage::filled(4, 4, [0, 0, 0]);
            let m = Fixed { labels: LabelMap::new(4, 4, a).unwrap(), classes: 3 };
            let r = Fixed { labels: LabelMap::new(4, 4, b).unwrap(), classes: 3 };
            let sel = iou_gap_selection(FrameId(0), &img, &gt, &m, &r, 0.5).unwrap();
            for d in sel.disparities.iter().flatten() {
                prop_assert!((-1.0..=1.0).contains(d));
            }
        }
    }
}
