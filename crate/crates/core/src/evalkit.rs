//! Detection metrics: IoU, greedy TP/FP/FN matching, precision/recall
//! curves, all-point interpolated AP and mAP.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::postproc::Detection;

/// Axis-aligned box in pixel corners.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn width(&self) -> f64 {
        (self.x2 - self.x1).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y2 - self.y1).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn is_ordered(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    pub fn clip(&self, width: f64, height: f64) -> Self {
        Self::new(
            self.x1.clamp(0.0, width),
            self.y1.clamp(0.0, height),
            self.x2.clamp(0.0, width),
            self.y2.clamp(0.0, height),
        )
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }
}

/// Intersection over union. Fails when both boxes are degenerate.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    if !(union > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "IoU undefined for zero-area union of {a:?} and {b:?}"
        )));
    }
    Ok((inter / union).clamp(0.0, 1.0))
}

pub(crate) fn iou_or_zero(a: &BBox, b: &BBox) -> f64 {
    iou(a, b).unwrap_or(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub class_id: usize,
    pub bbox: BBox,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub num_gt: usize,
}

/// TP/FP verdict for one detection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionFlag {
    pub class_id: usize,
    pub score: f64,
    pub tp: bool,
    /// Index into the detection list given to [`match_image`].
    pub det_index: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatchStats {
    pub per_class: BTreeMap<usize, ClassCounts>,
    pub flags: Vec<DetectionFlag>,
}

/// Greedy score-ordered matching of one image's detections to its ground
/// truth. A detection is a TP when an unmatched same-class GT overlaps it
/// with IoU >= `iou_thresh`; it takes the best-overlapping such GT.
pub fn match_image(dets: &[Detection], gts: &[GroundTruthBox], iou_thresh: f64) -> MatchStats {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));

    let mut stats = MatchStats::default();
    for g in gts {
        stats.per_class.entry(g.class_id).or_default().num_gt += 1;
    }
    let mut matched = vec![false; gts.len()];
    for i in order {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if matched[j] || g.class_id != d.class_id {
                continue;
            }
            let o = iou_or_zero(&d.bbox, &g.bbox);
            if o >= iou_thresh && best.is_none_or(|(_, b)| o > b) {
                best = Some((j, o));
            }
        }
        let counts = stats.per_class.entry(d.class_id).or_default();
        let tp = if let Some((j, _)) = best {
            matched[j] = true;
            counts.tp += 1;
            true
        } else {
            counts.fp += 1;
            false
        };
        stats.flags.push(DetectionFlag {
            class_id: d.class_id,
            score: d.score,
            tp,
            det_index: i,
        });
    }
    for (g, m) in gts.iter().zip(&matched) {
        if !m {
            stats.per_class.entry(g.class_id).or_default().fn_ += 1;
        }
    }
    stats
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
}

/// Cumulative precision/recall after each rank. `flags` are `(score, is_tp)`;
/// ranking is by descending score with ties kept in input order.
pub fn pr_curve(flags: &[(f64, bool)], total_gt: usize) -> Vec<PrPoint> {
    let mut ranked: Vec<&(f64, bool)> = flags.iter().collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    ranked
        .iter()
        .enumerate()
        .map(|(rank, &&(_, is_tp))| {
            tp += usize::from(is_tp);
            PrPoint {
                precision: tp as f64 / (rank + 1) as f64,
                recall: if total_gt == 0 {
                    0.0
                } else {
                    tp as f64 / total_gt as f64
                },
            }
        })
        .collect()
}

/// Area under the precision envelope, integrated over recall steps.
/// `None` when the class has no ground truth.
pub fn average_precision(curve: &[PrPoint], total_gt: usize) -> Option<f64> {
    if total_gt == 0 {
        return None;
    }
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, env) in curve.iter().zip(&envelope) {
        ap += (p.recall - prev_recall).max(0.0) * env;
        prev_recall = prev_recall.max(p.recall);
    }
    Some(ap.clamp(0.0, 1.0))
}

pub fn map_at(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::InvalidArgument(
            "mAP needs at least one class with ground truth".into(),
        ));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassReport {
    pub class_id: usize,
    /// `None` for classes without ground truth, which are left out of mAP.
    pub ap: Option<f64>,
    pub num_detections: usize,
    #[serde(flatten)]
    pub counts: ClassCounts,
    #[serde(skip)]
    pub curve: Vec<PrPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub iou_thresh: f64,
    pub map: f64,
    pub num_images: usize,
    pub classes: Vec<ClassReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Plain-text PR table: one row per ranked detection per class.
    pub fn pr_table(&self) -> String {
        let mut out = String::from("class rank precision recall\n");
        for c in &self.classes {
            for (i, p) in c.curve.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{} {} {:.6} {:.6}",
                    c.class_id,
                    i + 1,
                    p.precision,
                    p.recall
                );
            }
        }
        out
    }
}

/// Dataset-level evaluation. Detections are pooled per class and ranked
/// globally by score (ties by image id, then detection index), so the
/// result does not depend on image order.
pub fn evaluate(
    detections: &BTreeMap<String, Vec<Detection>>,
    ground_truth: &BTreeMap<String, Vec<GroundTruthBox>>,
    iou_thresh: f64,
) -> Result<EvalReport> {
    if let Some(id) = detections.keys().find(|id| !ground_truth.contains_key(*id)) {
        return Err(Error::UnknownImage(id.clone()));
    }
    let mut class_ids = BTreeSet::new();
    let mut counts: BTreeMap<usize, ClassCounts> = BTreeMap::new();
    // (score, image id, det index, tp) per class
    let mut pooled: BTreeMap<usize, Vec<(f64, &str, usize, bool)>> = BTreeMap::new();
    let empty = Vec::new();
    for (id, gts) in ground_truth {
        let dets = detections.get(id).unwrap_or(&empty);
        let stats = match_image(dets, gts, iou_thresh);
        for (c, k) in stats.per_class {
            class_ids.insert(c);
            let e = counts.entry(c).or_default();
            e.tp += k.tp;
            e.fp += k.fp;
            e.fn_ += k.fn_;
            e.num_gt += k.num_gt;
        }
        for f in stats.flags {
            pooled
                .entry(f.class_id)
                .or_default()
                .push((f.score, id.as_str(), f.det_index, f.tp));
        }
    }

    let mut classes = Vec::new();
    let mut aps = Vec::new();
    for c in class_ids {
        let k = counts.get(&c).copied().unwrap_or_default();
        let mut flags = pooled.remove(&c).unwrap_or_default();
        flags.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| a.1.cmp(b.1))
                .then_with(|| a.2.cmp(&b.2))
        });
        let ranked: Vec<(f64, bool)> = flags.iter().map(|f| (f.0, f.3)).collect();
        let curve = pr_curve(&ranked, k.num_gt);
        let ap = average_precision(&curve, k.num_gt);
        if let Some(ap) = ap {
            aps.push(ap);
        }
        classes.push(ClassReport {
            class_id: c,
            ap,
            num_detections: ranked.len(),
            counts: k,
            curve,
        });
    }
    Ok(EvalReport {
        iou_thresh,
        map: map_at(&aps)?,
        num_images: ground_truth.len(),
        classes,
    })
}
