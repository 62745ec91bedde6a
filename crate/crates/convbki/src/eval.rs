//! Point-wise evaluation of a map against ground-truth frames.
//!
//! Every ground-truth point is looked up in the map by its voxel; the
//! stored Dirichlet argmax is the prediction. Points whose voxel holds no
//! evidence fall back to a caller-supplied per-point prediction (typically
//! the segmentation input's label) so the map is scored on exactly the
//! points the input was, or are skipped when no fallback is given.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{argmax_label, FrameRecord, VoxelKey};
use crate::map::GlobalMap;

/// Plain confusion-matrix accumulator; rows are ground truth, columns are
/// predictions.
#[derive(Debug, Clone)]
pub struct Confusion {
    num_classes: usize,
    counts: Vec<u64>,
}

impl Confusion {
    pub fn new(num_classes: usize) -> Self {
        Confusion {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn add(&mut self, gt: usize, pred: usize) {
        assert!(gt < self.num_classes && pred < self.num_classes);
        self.counts[gt * self.num_classes + pred] += 1;
    }

    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    /// Ground-truth points per class.
    pub fn support(&self) -> Vec<u64> {
        (0..self.num_classes)
            .map(|c| (0..self.num_classes).map(|p| self.count(c, p)).sum())
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Intersection-over-union of one class as a fraction, or `None` when
    /// the class appears in neither the ground truth nor the predictions.
    pub fn iou(&self, class: usize) -> Option<f64> {
        let tp = self.count(class, class);
        let fn_: u64 = (0..self.num_classes)
            .filter(|&p| p != class)
            .map(|p| self.count(class, p))
            .sum();
        let fp: u64 = (0..self.num_classes)
            .filter(|&g| g != class)
            .map(|g| self.count(g, class))
            .sum();
        let union = tp + fn_ + fp;
        (union > 0).then(|| tp as f64 / union as f64)
    }

    /// Mean IoU as a fraction over the classes with a nonzero union.
    pub fn miou(&self) -> Option<f64> {
        let ious: Vec<f64> = (0..self.num_classes).filter_map(|c| self.iou(c)).collect();
        if ious.is_empty() {
            None
        } else {
            Some(ious.iter().sum::<f64>() / ious.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Ignore ground-truth points farther than this from their frame's
    /// sensor origin, meters.
    pub max_range: Option<f64>,
}

/// Evaluation summary. IoU values are percentages; `per_class_iou_pct`
/// holds `null` for classes absent from both ground truth and predictions
/// (they are excluded from the mean).
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub num_classes: usize,
    pub per_class_iou_pct: Vec<Option<f64>>,
    pub miou_pct: f64,
    /// Ground-truth points per class among the evaluated ones.
    pub support: Vec<u64>,
    /// Points scored (map hits + fallback).
    pub evaluated: u64,
    /// Points dropped: out of range, or unmapped with no fallback.
    pub skipped: u64,
    /// Evaluated points whose voxel held no evidence.
    pub fallback_used: u64,
    pub eval_seconds: f64,
}

/// Scores the map against ground-truth frames. `fallback`, when given,
/// must hold one predicted class per ground-truth point (outer index =
/// frame, inner = point) and is used wherever the map has no stored voxel.
pub fn evaluate(
    map: &GlobalMap,
    gt_frames: &[FrameRecord],
    fallback: Option<&[Vec<usize>]>,
    resolution: f64,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if !resolution.is_finite() || resolution <= 0.0 {
        return Err(Error::domain(format!(
            "voxel resolution must be finite and > 0, got {resolution}"
        )));
    }
    let num_classes = map.num_classes;
    if let Some(fb) = fallback {
        if fb.len() != gt_frames.len() {
            return Err(Error::shape(format!(
                "{} fallback rows for {} ground-truth frames",
                fb.len(),
                gt_frames.len()
            )));
        }
        for (fi, (row, frame)) in fb.iter().zip(gt_frames).enumerate() {
            if row.len() != frame.points.len() {
                return Err(Error::shape(format!(
                    "frame {fi}: {} fallback predictions for {} points",
                    row.len(),
                    frame.points.len()
                )));
            }
            if let Some(&bad) = row.iter().find(|&&c| c >= num_classes) {
                return Err(Error::domain(format!(
                    "frame {fi}: fallback class {bad} out of range for {num_classes} classes"
                )));
            }
        }
    }

    let start = Instant::now();
    let mut confusion = Confusion::new(num_classes);
    let mut skipped = 0u64;
    let mut fallback_used = 0u64;
    for (fi, frame) in gt_frames.iter().enumerate() {
        for (pi, point) in frame.points.iter().enumerate() {
            if point.label.len() != num_classes {
                return Err(Error::shape(format!(
                    "frame {fi}: point has {} label entries but the map has {num_classes} classes",
                    point.label.len()
                )));
            }
            let global = frame.pose.apply(&point.position);
            if let Some(range) = options.max_range {
                if (global - frame.pose.translation).norm() > range {
                    skipped += 1;
                    continue;
                }
            }
            let gt_class = point.hard_class();
            let key = VoxelKey::containing(&global, resolution);
            match map.get(&key) {
                Some(cell) => confusion.add(gt_class, argmax_label(&cell.alpha)),
                None => match fallback {
                    Some(fb) => {
                        confusion.add(gt_class, fb[fi][pi]);
                        fallback_used += 1;
                    }
                    None => skipped += 1,
                },
            }
        }
    }

    let miou = confusion
        .miou()
        .ok_or_else(|| Error::domain("no points were evaluated"))?;
    Ok(EvalReport {
        num_classes,
        per_class_iou_pct: (0..num_classes)
            .map(|c| confusion.iou(c).map(|v| v * 100.0))
            .collect(),
        miou_pct: miou * 100.0,
        support: confusion.support(),
        evaluated: confusion.total(),
        skipped,
        fallback_used,
        eval_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::grid::SemanticPoint;
    use crate::map::MapCell;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    /// The worked two-class example: 10 points, class 0 fully correct
    /// (5/5), class 1 at 3/5 with both misses predicted as class 0.
    fn worked_confusion(num_classes: usize) -> Confusion {
        let mut c = Confusion::new(num_classes);
        for _ in 0..5 {
            c.add(0, 0);
        }
        for _ in 0..3 {
            c.add(1, 1);
        }
        for _ in 0..2 {
            c.add(1, 0);
        }
        c
    }

    #[test]
    fn iou_matches_the_worked_example() {
        let c = worked_confusion(2);
        assert_relative_eq!(c.iou(0).unwrap(), 5.0 / 7.0, max_relative = 1e-15);
        assert_relative_eq!(c.iou(1).unwrap(), 3.0 / 5.0, max_relative = 1e-15);
        assert_relative_eq!(
            c.miou().unwrap() * 100.0,
            65.71428571428571,
            max_relative = 1e-13
        );
    }

    #[test]
    fn absent_classes_are_excluded_from_the_mean() {
        let c = worked_confusion(3);
        assert_eq!(c.iou(2), None);
        assert_relative_eq!(
            c.miou().unwrap() * 100.0,
            65.71428571428571,
            max_relative = 1e-13
        );
    }

    fn one_hot_frame(points: Vec<(f64, f64, f64, usize)>) -> FrameRecord {
        FrameRecord {
            index: 0,
            points: points
                .into_iter()
                .map(|(x, y, z, c)| SemanticPoint::one_hot(Vector3::new(x, y, z), c, 2).unwrap())
                .collect(),
            pose: Pose::identity(),
        }
    }

    fn map_with_class0_at_origin() -> GlobalMap {
        let mut map = GlobalMap::new(2, 1e-3, 10).unwrap();
        map.insert(
            VoxelKey::new(0, 0, 0),
            MapCell {
                alpha: vec![5.0, 1.0],
                last_update: 0,
            },
        )
        .unwrap();
        map
    }

    #[test]
    fn map_hits_score_and_unmapped_points_use_the_fallback() {
        let map = map_with_class0_at_origin();
        let frames = vec![one_hot_frame(vec![
            (0.1, 0.1, 0.1, 0), // mapped voxel, predicted 0 → TP
            (5.0, 5.0, 5.0, 1), // unmapped → fallback
        ])];
        let fallback = vec![vec![0usize, 1]];
        let report =
            evaluate(&map, &frames, Some(&fallback), 0.2, &EvalOptions::default()).unwrap();
        assert_eq!(report.evaluated, 2);
        assert_eq!(report.fallback_used, 1);
        assert_eq!(report.skipped, 0);
        assert_relative_eq!(report.miou_pct, 100.0, max_relative = 1e-12);
    }

    #[test]
    fn unmapped_points_without_fallback_are_skipped() {
        let map = map_with_class0_at_origin();
        let frames = vec![one_hot_frame(vec![(0.1, 0.1, 0.1, 0), (5.0, 5.0, 5.0, 1)])];
        let report = evaluate(&map, &frames, None, 0.2, &EvalOptions::default()).unwrap();
        assert_eq!(report.evaluated, 1);
        assert_eq!(report.skipped, 1);
    }

    #[test]
    fn range_filter_drops_far_points() {
        let map = map_with_class0_at_origin();
        let frames = vec![one_hot_frame(vec![(0.1, 0.1, 0.1, 0), (50.0, 0.0, 0.0, 0)])];
        let opts = EvalOptions {
            max_range: Some(10.0),
        };
        let report = evaluate(&map, &frames, None, 0.2, &opts).unwrap();
        assert_eq!(report.evaluated, 1);
        assert_eq!(report.skipped, 1);
    }

    #[test]
    fn fallback_shape_mismatches_are_rejected() {
        let map = map_with_class0_at_origin();
        let frames = vec![one_hot_frame(vec![(0.1, 0.1, 0.1, 0)])];
        let wrong_frames = vec![vec![0usize, 0]];
        assert!(evaluate(
            &map,
            &frames,
            Some(&wrong_frames),
            0.2,
            &EvalOptions::default()
        )
        .is_err());
        let bad_class = vec![vec![7usize]];
        assert!(evaluate(
            &map,
            &frames,
            Some(&bad_class),
            0.2,
            &EvalOptions::default()
        )
        .is_err());
        let empty: Vec<Vec<usize>> = vec![];
        assert!(evaluate(&map, &frames, Some(&empty), 0.2, &EvalOptions::default()).is_err());
    }

    #[test]
    fn evaluating_nothing_is_an_error() {
        let map = map_with_class0_at_origin();
        assert!(evaluate(&map, &[], None, 0.2, &EvalOptions::default()).is_err());
    }
}
