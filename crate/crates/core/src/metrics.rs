//! Ray-based IoU, velocity-error variants and the combined score.
//!
//! IoU counts are integers, so they are exact regardless of ray order or
//! parallelism. Velocity-error sums accumulate sequentially in ray (or
//! voxel) order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_spec, FlowField, OccupancyGrid};
use crate::raycast::{cast_bundle, RayBundle, RayHit};

/// RayIoU distance thresholds, meters.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [1.0, 2.0, 4.0];
/// Depth threshold gating true positives for mAVE@TP, meters.
pub const DEFAULT_MAVE_THRESHOLD: f64 = 2.0;
/// Returned by the mAVE variants when nothing can be averaged.
pub const MAVE_EMPTY: f64 = 1.0;

/// Ground-truth and predicted first hits of one ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayEval {
    pub gt_hit: RayHit,
    pub pred_hit: RayHit,
    /// Meaningful only when `gt_hit.hit`.
    pub gt_flow: [f64; 2],
    /// Meaningful only when `pred_hit.hit`.
    pub pred_flow: [f64; 2],
}

impl RayEval {
    fn is_tp(&self, class: u8, threshold: f64) -> bool {
        self.gt_hit.hit
            && self.pred_hit.hit
            && self.gt_hit.label == class
            && self.pred_hit.label == class
            && (self.pred_hit.depth - self.gt_hit.depth).abs() <= threshold
    }

    fn flow_error(&self) -> f64 {
        let dx = self.pred_flow[0] - self.gt_flow[0];
        let dy = self.pred_flow[1] - self.gt_flow[1];
        dx.hypot(dy)
    }
}

/// Casts every ray of the bundle through both grids and records hits and flows.
pub fn evaluate_rays(
    gt: &OccupancyGrid,
    pred: &OccupancyGrid,
    gt_flow: &FlowField,
    pred_flow: &FlowField,
    bundle: &RayBundle,
) -> Result<Vec<RayEval>> {
    ensure_same_spec(gt.spec(), pred.spec())?;
    ensure_same_spec(gt.spec(), gt_flow.spec())?;
    ensure_same_spec(gt.spec(), pred_flow.spec())?;
    let gt_hits = cast_bundle(gt, bundle);
    let pred_hits = cast_bundle(pred, bundle);
    Ok(gt_hits
        .into_par_iter()
        .zip(pred_hits)
        .map(|(g, p)| RayEval {
            gt_hit: g,
            pred_hit: p,
            gt_flow: if g.hit { gt_flow.get(g.voxel) } else { [0.0; 2] },
            pred_flow: if p.hit { pred_flow.get(p.voxel) } else { [0.0; 2] },
        })
        .collect())
}

/// Per-class hit counts shared by every threshold.
#[derive(Default, Clone, Copy)]
struct ClassCounts {
    gt: u64,
    pred: u64,
    tp: u64,
}

fn class_counts(evals: &[RayEval], threshold: f64, classes: &[u8]) -> BTreeMap<u8, ClassCounts> {
    let mut counts: BTreeMap<u8, ClassCounts> = classes.iter().map(|&c| (c, ClassCounts::default())).collect();
    for e in evals {
        if e.gt_hit.hit {
            if let Some(c) = counts.get_mut(&e.gt_hit.label) {
                c.gt += 1;
                if e.is_tp(e.gt_hit.label, threshold) {
                    c.tp += 1;
                }
            }
        }
        if e.pred_hit.hit {
            if let Some(c) = counts.get_mut(&e.pred_hit.label) {
                c.pred += 1;
            }
        }
    }
    counts
}

/// Class-averaged RayIoU at one depth threshold, plus the per-class values.
///
/// Classes with no ground-truth or predicted hits are left out of the mean.
/// If no class has any hit the mean is 1.0 (nothing was mispredicted).
pub fn ray_iou(evals: &[RayEval], threshold: f64, classes: &[u8]) -> Result<(f64, BTreeMap<u8, f64>)> {
    if evals.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be > 0, got {threshold}")));
    }
    let per_class: BTreeMap<u8, f64> = class_counts(evals, threshold, classes)
        .into_iter()
        .filter_map(|(class, c)| {
            // TP + FP + FN = gt + pred - TP
            let union = c.gt + c.pred - c.tp;
            (union > 0).then(|| (class, c.tp as f64 / union as f64))
        })
        .collect();
    let mean = if per_class.is_empty() {
        1.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    Ok((mean, per_class))
}

/// Mean of [`ray_iou`] over the thresholds.
pub fn ray_iou_mean(evals: &[RayEval], thresholds: &[f64], classes: &[u8]) -> Result<f64> {
    if thresholds.is_empty() {
        return Err(Error::InvalidArgument("at least one threshold is required".into()));
    }
    let per = thresholds
        .iter()
        .map(|&t| ray_iou(evals, t, classes).map(|(m, _)| m))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_of(&per))
}

/// Arithmetic mean of per-threshold IoU values.
pub fn mean_of(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// How per-element velocity errors are combined into one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MavePooling {
    /// Mean per class, then mean over classes (the default).
    #[default]
    ClassMean,
    /// One mean over all selected elements.
    Pooled,
}

#[derive(Default)]
struct ErrorSums {
    per_class: BTreeMap<u8, (f64, u64)>,
}

impl ErrorSums {
    fn add(&mut self, class: u8, err: f64) {
        let e = self.per_class.entry(class).or_insert((0.0, 0));
        e.0 += err;
        e.1 += 1;
    }

    fn finish(self, pooling: MavePooling) -> f64 {
        if self.per_class.is_empty() {
            return MAVE_EMPTY;
        }
        match pooling {
            MavePooling::ClassMean => {
                let means: Vec<f64> = self.per_class.values().map(|&(s, n)| s / n as f64).collect();
                mean_of(&means)
            }
            MavePooling::Pooled => {
                let (s, n) = self.per_class.values().fold((0.0, 0u64), |(s, n), &(cs, cn)| (s + cs, n + cn));
                s / n as f64
            }
        }
    }
}

/// Velocity error over true-positive rays of foreground classes.
pub fn mave_tp(evals: &[RayEval], threshold: f64, foreground: &[u8], pooling: MavePooling) -> f64 {
    let mut sums = ErrorSums::default();
    for e in evals {
        let class = e.gt_hit.label;
        if foreground.contains(&class) && e.is_tp(class, threshold) {
            sums.add(class, e.flow_error());
        }
    }
    sums.finish(pooling)
}

/// Velocity error over voxels where both grids carry the same foreground class.
pub fn mave_per_voxel(
    gt: &OccupancyGrid,
    pred: &OccupancyGrid,
    gt_flow: &FlowField,
    pred_flow: &FlowField,
    foreground: &[u8],
    pooling: MavePooling,
) -> Result<f64> {
    ensure_same_spec(gt.spec(), pred.spec())?;
    ensure_same_spec(gt.spec(), gt_flow.spec())?;
    ensure_same_spec(gt.spec(), pred_flow.spec())?;
    let mut sums = ErrorSums::default();
    let (gv, pv) = (gt_flow.values(), pred_flow.values());
    for (i, (&g, &p)) in gt.labels().iter().zip(pred.labels()).enumerate() {
        if g == p && foreground.contains(&g) {
            sums.add(g, (pv[i][0] - gv[i][0]).hypot(pv[i][1] - gv[i][1]));
        }
    }
    Ok(sums.finish(pooling))
}

/// Velocity error over every ray whose ground-truth hit is foreground and
/// whose prediction hit anything, without depth or class gating.
pub fn mave_lq(evals: &[RayEval], foreground: &[u8], pooling: MavePooling) -> f64 {
    let mut sums = ErrorSums::default();
    for e in evals {
        if e.gt_hit.hit && e.pred_hit.hit && foreground.contains(&e.gt_hit.label) {
            sums.add(e.gt_hit.label, e.flow_error());
        }
    }
    sums.finish(pooling)
}

/// `0.9 * ray_iou + 0.1 * max(1 - mave, 0)`.
pub fn occ_score(ray_iou_mean: f64, mave: f64) -> f64 {
    0.9 * ray_iou_mean + 0.1 * (1.0 - mave).max(0.0)
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    /// Classes entering RayIoU; defaults to every non-free class.
    pub classes: Option<Vec<u8>>,
    pub foreground: Vec<u8>,
    pub mave_threshold: f64,
    pub pooling: MavePooling,
}

/// car, truck, trailer, bus, construction vehicle, bicycle, motorcycle, pedestrian.
pub const DEFAULT_FOREGROUND: [u8; 8] = [0, 1, 2, 3, 4, 5, 6, 7];

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            classes: None,
            foreground: DEFAULT_FOREGROUND.to_vec(),
            mave_threshold: DEFAULT_MAVE_THRESHOLD,
            pooling: MavePooling::ClassMean,
        }
    }
}

/// Full metric set for one scene.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    #[serde(serialize_with = "serialize_thresholds")]
    pub ray_iou_at: Vec<(f64, f64)>,
    pub ray_iou_mean: f64,
    pub mave_tp: f64,
    pub mave_per_voxel: f64,
    pub mave_lq: f64,
    pub occ_score: f64,
    /// Mean over thresholds of each counted class's IoU.
    pub per_class_iou: BTreeMap<u8, f64>,
}

fn serialize_thresholds<S: Serializer>(values: &[(f64, f64)], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(values.len()))?;
    for (t, v) in values {
        map.serialize_entry(&format!("{t}"), v)?;
    }
    map.end()
}

pub fn evaluate(
    gt: &OccupancyGrid,
    pred: &OccupancyGrid,
    gt_flow: &FlowField,
    pred_flow: &FlowField,
    bundle: &RayBundle,
    config: &EvalConfig,
) -> Result<MetricReport> {
    if config.thresholds.is_empty() {
        return Err(Error::InvalidArgument("at least one threshold is required".into()));
    }
    let classes: Vec<u8> = match &config.classes {
        Some(c) => c.clone(),
        None => (0..gt.num_classes()).filter(|&c| c != gt.free_class()).collect(),
    };
    let evals = evaluate_rays(gt, pred, gt_flow, pred_flow, bundle)?;
    let mut thresholds = config.thresholds.clone();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut ray_iou_at = Vec::with_capacity(thresholds.len());
    let mut class_sums: BTreeMap<u8, f64> = BTreeMap::new();
    for &t in &thresholds {
        let (mean, per_class) = ray_iou(&evals, t, &classes)?;
        ray_iou_at.push((t, mean));
        for (c, v) in per_class {
            *class_sums.entry(c).or_insert(0.0) += v;
        }
    }
    let ray_iou_mean = mean_of(&ray_iou_at.iter().map(|&(_, v)| v).collect::<Vec<_>>());
    let per_class_iou = class_sums.into_iter().map(|(c, s)| (c, s / thresholds.len() as f64)).collect();
    let mave_tp = mave_tp(&evals, config.mave_threshold, &config.foreground, config.pooling);
    Ok(MetricReport {
        ray_iou_at,
        ray_iou_mean,
        mave_tp,
        mave_per_voxel: mave_per_voxel(gt, pred, gt_flow, pred_flow, &config.foreground, config.pooling)?,
        mave_lq: mave_lq(&evals, &config.foreground, config.pooling),
        occ_score: occ_score(ray_iou_mean, mave_tp),
        per_class_iou,
    })
}
