//! Pixel IoU per class and its unweighted mean.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scene::{ClassId, LabelMap, Region, RegionLabel, BACKGROUND};
use crate::{Error, Grid, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub intersection: u64,
    pub union: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "per_class")]
    pub per_class_iou: BTreeMap<ClassId, f64>,
    pub miou: f64,
    pub counts: BTreeMap<ClassId, ClassCounts>,
}

impl EvalReport {
    /// Mean IoU over the non-background classes in the report; `None` if there are none.
    pub fn object_miou(&self) -> Option<f64> {
        let ious: Vec<f64> = self.per_class_iou.iter().filter(|(&c, _)| c != BACKGROUND).map(|(_, &v)| v).collect();
        (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64)
    }
}

/// Aggregates intersection and union over all views, per class. A class is
/// reported when it appears in either prediction or ground truth, except
/// background, which is reported only when it appears in ground truth.
pub fn evaluate(preds: &BTreeMap<String, LabelMap>, gts: &BTreeMap<String, LabelMap>) -> Result<EvalReport> {
    if gts.is_empty() {
        return Err(Error::Validation("no views to evaluate".into()));
    }
    for id in preds.keys() {
        if !gts.contains_key(id) {
            return Err(Error::Validation(format!("view {id} has a prediction but no ground truth")));
        }
    }
    let mut pred_n = [0u64; 256];
    let mut gt_n = [0u64; 256];
    let mut inter = [0u64; 256];
    for (id, gt) in gts {
        let pred = preds.get(id).ok_or_else(|| Error::Validation(format!("view {id} has no prediction")))?;
        if pred.dims() != gt.dims() {
            return Err(Error::DimensionMismatch {
                context: format!("prediction for view {id}"),
                expected_width: gt.width(),
                expected_height: gt.height(),
                width: pred.width(),
                height: pred.height(),
            });
        }
        for (&p, &g) in pred.iter().zip(gt.iter()) {
            pred_n[p as usize] += 1;
            gt_n[g as usize] += 1;
            if p == g {
                inter[p as usize] += 1;
            }
        }
    }
    let mut per_class_iou = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for c in 0..=255u8 {
        let i = c as usize;
        let present = if c == BACKGROUND { gt_n[i] > 0 } else { pred_n[i] + gt_n[i] > 0 };
        if !present {
            continue;
        }
        let union = pred_n[i] + gt_n[i] - inter[i];
        counts.insert(c, ClassCounts { intersection: inter[i], union });
        per_class_iou.insert(c, inter[i] as f64 / union as f64);
    }
    let miou =
        if per_class_iou.is_empty() { 0.0 } else { per_class_iou.values().sum::<f64>() / per_class_iou.len() as f64 };
    Ok(EvalReport { per_class_iou, miou, counts })
}

/// Label map with every box filled by its class; larger boxes are drawn
/// first so smaller ones stay visible where they overlap.
pub fn box_fill(labels: &[RegionLabel], width: usize, height: usize) -> LabelMap {
    let mut boxes: Vec<_> = labels
        .iter()
        .filter_map(|l| match l.region {
            Region::Box { x0, y0, x1, y1 } => Some(((x1 - x0) * (y1 - y0), l.class_id, (x0, y0, x1, y1))),
            Region::Mask(_) => None,
        })
        .collect();
    boxes.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut map = Grid::filled(width, height, BACKGROUND);
    for (_, class, (x0, y0, x1, y1)) in boxes {
        for y in y0..y1.min(height) {
            for x in x0..x1.min(width) {
                map[(x, y)] = class;
            }
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one(map: LabelMap) -> BTreeMap<String, LabelMap> {
        BTreeMap::from([("v".to_string(), map)])
    }

    fn squares(offset: usize) -> LabelMap {
        Grid::from_fn(12, 4, |x, y| u8::from(y < 4 && (offset..offset + 4).contains(&x)))
    }

    #[test]
    fn perfect_prediction() {
        let gt = squares(0);
        let r = evaluate(&one(gt.clone()), &one(gt)).unwrap();
        assert!(r.per_class_iou.values().all(|&v| v == 1.0));
        assert_eq!(r.miou, 1.0);
    }

    #[test]
    fn disjoint_masks() {
        let r = evaluate(&one(squares(6)), &one(squares(0))).unwrap();
        assert_eq!(r.per_class_iou[&1], 0.0);
    }

    #[test]
    fn half_overlap_is_one_third() {
        let r = evaluate(&one(squares(2)), &one(squares(0))).unwrap();
        assert!((r.per_class_iou[&1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.counts[&1], ClassCounts { intersection: 8, union: 24 });
    }

    #[test]
    fn background_counts_only_when_in_ground_truth() {
        let full = Grid::filled(3, 1, 1u8);
        let r = evaluate(&one(Grid::filled(3, 1, 0)), &one(full.clone())).unwrap();
        assert!(!r.per_class_iou.contains_key(&0));
        assert_eq!(r.miou, 0.0);
        let r = evaluate(&one(full.clone()), &one(full)).unwrap();
        assert_eq!(r.per_class_iou.keys().copied().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn mismatched_views_are_errors() {
        let err = evaluate(&one(Grid::filled(3, 2, 0)), &one(Grid::filled(2, 3, 0))).unwrap_err();
        assert!(err.to_string().contains("view v"), "{err}");
        let other = BTreeMap::from([("w".to_string(), Grid::filled(2, 2, 0u8))]);
        assert!(evaluate(&other, &one(Grid::filled(2, 2, 0))).is_err());
        assert!(evaluate(&BTreeMap::new(), &BTreeMap::new()).is_err());
    }

    #[test]
    fn json_shape() {
        let r = evaluate(&one(squares(2)), &one(squares(0))).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert!(v["per_class"]["1"].is_f64());
        assert!(v["miou"].is_f64());
        assert_eq!(v["counts"]["1"]["intersection"], 8);
    }

    #[test]
    fn box_fill_draws_small_boxes_on_top() {
        let labels = vec![RegionLabel::new_box("v", 2, 1, 0, 2, 1), RegionLabel::new_box("v", 1, 0, 0, 3, 1)];
        assert_eq!(box_fill(&labels, 4, 1).as_slice(), &[1, 2, 1, 0]);
    }

    fn arb_maps() -> impl Strategy<Value = (LabelMap, LabelMap)> {
        (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
            (prop::collection::vec(0u8..4, w * h), prop::collection::vec(0u8..4, w * h))
                .prop_map(move |(a, b)| (Grid::from_vec(w, h, a), Grid::from_vec(w, h, b)))
        })
    }

    proptest! {
        #[test]
        fn relabeling_permutes_the_report((pred, gt) in arb_maps(), shuffled in Just(vec![1u8, 2, 3]).prop_shuffle()) {
            // Background stays fixed; object classes are permuted.
            let perm = [0, shuffled[0], shuffled[1], shuffled[2]];
            let relabel = |m: &LabelMap| m.map(|&c| perm[c as usize]);
            let base = evaluate(&one(pred.clone()), &one(gt.clone())).unwrap();
            let moved = evaluate(&one(relabel(&pred)), &one(relabel(&gt))).unwrap();
            for (c, iou) in &base.per_class_iou {
                prop_assert_eq!(moved.per_class_iou[&perm[*c as usize]], *iou);
            }
            prop_assert!((base.miou - moved.miou).abs() < 1e-12);
        }

        #[test]
        fn background_prediction_scores_below_perfect((_, gt) in arb_maps()) {
            prop_assume!(gt.iter().any(|&c| c != 0));
            let bg = gt.map(|_| 0u8);
            let worse = evaluate(&one(bg), &one(gt.clone())).unwrap().miou;
            let best = evaluate(&one(gt.clone()), &one(gt)).unwrap().miou;
            prop_assert!(worse < best);
        }
    }
}
