//! mAP@IoU evaluation of BEV detections against synthetic ground truth.
//!
//! Predictions of each class are ranked by confidence across all frames and
//! greedily matched to the best-overlapping unmatched ground-truth box in the
//! same frame. AP is the area under the all-points interpolated
//! precision/recall envelope; mAP averages over classes present in the
//! ground truth.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;

use crate::csv::Cell;
use crate::error::{Error, Result};
use crate::fusion::{ClassLabel, Detection};
use crate::geometry::oriented_iou;
use crate::scenario::FrameTruth;

#[derive(Debug, Clone, PartialEq)]
pub struct FramePredictions {
    pub anchor_time: f64,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub class: ClassLabel,
    pub ap: f64,
    pub num_gt: usize,
    pub num_pred: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassAp>,
    /// NaN when the ground truth holds no objects.
    pub map: f64,
}

impl EvalReport {
    pub fn ap(&self, class: ClassLabel) -> Option<f64> {
        self.per_class.iter().find(|c| c.class == class).map(|c| c.ap)
    }

    /// Rows for `class,ap,num_gt,num_pred`, with a trailing `mAP` row.
    pub fn csv_rows(&self) -> Vec<Vec<Cell>> {
        let mut rows: Vec<Vec<Cell>> = self
            .per_class
            .iter()
            .map(|c| vec![c.class.as_str().into(), c.ap.into(), c.num_gt.into(), c.num_pred.into()])
            .collect();
        let gt: usize = self.per_class.iter().map(|c| c.num_gt).sum();
        let pred: usize = self.per_class.iter().map(|c| c.num_pred).sum();
        rows.push(vec!["mAP".into(), self.map.into(), gt.into(), pred.into()]);
        rows
    }
}

/// All-points interpolated AP from a ranked TP/FP sequence.
pub fn average_precision(ranked_tp: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(ranked_tp.len());
    for (i, &hit) in ranked_tp.iter().enumerate() {
        if hit {
            tp += 1;
        }
        points.push((tp as f64 / num_gt as f64, tp as f64 / (i + 1) as f64));
    }
    // envelope: precision at recall r is the best precision at any recall >= r
    for i in (0..points.len().saturating_sub(1)).rev() {
        points[i].1 = points[i].1.max(points[i + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (recall, precision) in points {
        if recall > prev_recall {
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
    }
    ap
}

fn geometry_key(d: &Detection) -> [f64; 6] {
    [d.position[0], d.position[1], d.yaw, d.size[0], d.size[1], d.size[2]]
}

pub fn evaluate_map(predictions: &[FramePredictions], truths: &[FrameTruth], iou_threshold: f64) -> Result<EvalReport> {
    let mut frame_index: BTreeMap<u64, usize> = BTreeMap::new();
    for (i, f) in truths.iter().enumerate() {
        frame_index.insert(f.anchor_time.to_bits(), i);
    }

    // (confidence, frame, index within frame, detection)
    let mut ranked: Vec<(f64, usize, usize, &Detection)> = Vec::new();
    for fp in predictions {
        let frame = *frame_index
            .get(&fp.anchor_time.to_bits())
            .ok_or_else(|| Error::input(format!("prediction for unknown anchor {} ms", fp.anchor_time)))?;
        ranked.extend(
            fp.detections
                .iter()
                .enumerate()
                .map(|(i, d)| (d.confidence, frame, i, d)),
        );
    }
    // ties on confidence break on frame, then box geometry, so reordering
    // the input cannot change the ranking of distinct detections
    ranked.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then_with(|| {
                geometry_key(a.3)
                    .partial_cmp(&geometry_key(b.3))
                    .unwrap_or(Ordering::Equal)
            })
            .then(a.2.cmp(&b.2))
    });

    let mut per_class = Vec::new();
    for class in ClassLabel::ALL {
        let num_gt: usize = truths
            .iter()
            .map(|f| f.objects.iter().filter(|o| o.class_label == class).count())
            .sum();
        if num_gt == 0 {
            continue;
        }
        let mut matched: Vec<Vec<bool>> = truths.iter().map(|f| vec![false; f.objects.len()]).collect();
        let mut hits = Vec::new();
        for &(_, frame, _, det) in ranked.iter().filter(|r| r.3.class_label == class) {
            let pbox = det.bev_box();
            let best = truths[frame]
                .objects
                .iter()
                .enumerate()
                .filter(|(gi, o)| o.class_label == class && !matched[frame][*gi])
                .map(|(gi, o)| (oriented_iou(&pbox, &o.bbox).unwrap_or(0.0), gi))
                .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
            match best {
                Some((iou, gi)) if iou >= iou_threshold => {
                    matched[frame][gi] = true;
                    hits.push(true);
                }
                _ => hits.push(false),
            }
        }
        per_class.push(ClassAp {
            class,
            ap: average_precision(&hits, num_gt),
            num_gt,
            num_pred: hits.len(),
        });
    }
    let map = if per_class.is_empty() {
        f64::NAN
    } else {
        per_class.iter().map(|c| c.ap).sum::<f64>() / per_class.len() as f64
    };
    Ok(EvalReport { per_class, map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::OrientedBox;
    use crate::scenario::TruthObject;

    fn truth(x: f64) -> TruthObject {
        TruthObject {
            object_id: 0,
            bbox: OrientedBox::new([x, 0.0], 4.5, 1.8, 0.0),
            height: 1.5,
            class_label: ClassLabel::Car,
            velocity: [0.0, 0.0],
            base_points: 390.0,
        }
    }

    fn pred(x: f64, conf: f64) -> Detection {
        Detection {
            confidence: conf,
            ..truth(x).to_detection(0.0)
        }
    }

    #[test]
    fn perfect_detector() {
        let gt = vec![FrameTruth {
            anchor_time: 0.0,
            objects: vec![truth(0.0)],
        }];
        let p = vec![FramePredictions {
            anchor_time: 0.0,
            detections: vec![pred(0.0, 0.9)],
        }];
        let r = evaluate_map(&p, &gt, 0.5).unwrap();
        assert_eq!(r.ap(ClassLabel::Car), Some(1.0));
        assert_eq!(r.map, 1.0);
    }

    #[test]
    fn false_positive_ranked_first_halves_ap() {
        let gt = vec![FrameTruth {
            anchor_time: 0.0,
            objects: vec![truth(0.0)],
        }];
        let p = vec![FramePredictions {
            anchor_time: 0.0,
            detections: vec![pred(30.0, 0.9), pred(0.0, 0.5)],
        }];
        let r = evaluate_map(&p, &gt, 0.5).unwrap();
        assert!((r.map - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hand_traced_envelope() {
        // ranks: TP FP TP FP with 3 GT -> recall 1/3 @ 1, 2/3 @ 2/3
        let ap = average_precision(&[true, false, true, false], 3);
        assert!((ap - (1.0 / 3.0 + (1.0 / 3.0) * (2.0 / 3.0))).abs() < 1e-12);
        assert_eq!(average_precision(&[], 2), 0.0);
        assert_eq!(average_precision(&[false, false], 2), 0.0);
    }

    #[test]
    fn unknown_anchor_is_input_error() {
        let gt = vec![FrameTruth {
            anchor_time: 0.0,
            objects: vec![truth(0.0)],
        }];
        let p = vec![FramePredictions {
            anchor_time: 100.0,
            detections: vec![],
        }];
        assert!(matches!(evaluate_map(&p, &gt, 0.5), Err(Error::Input(_))));
    }

    #[test]
    fn duplicate_prediction_counts_as_fp() {
        let gt = vec![FrameTruth {
            anchor_time: 0.0,
            objects: vec![truth(0.0)],
        }];
        let p = vec![FramePredictions {
            anchor_time: 0.0,
            detections: vec![pred(0.0, 0.9), pred(0.0, 0.8)],
        }];
        let r = evaluate_map(&p, &gt, 0.5).unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.per_class[0].num_pred, 2);
    }

    #[test]
    fn report_rows() {
        let gt = vec![FrameTruth {
            anchor_time: 0.0,
            objects: vec![truth(0.0)],
        }];
        let r = evaluate_map(&[], &gt, 0.5).unwrap();
        let rows = r.csv_rows();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1][0], Cell::Text("mAP".into()));
    }
}
