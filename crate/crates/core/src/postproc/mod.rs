//! From raw head outputs to final detections.
//!
//! Anchor heads are decoded with sigmoid offsets and exponential sizes, then
//! filtered with class-aware greedy NMS. The set-prediction head needs only
//! thresholding: each query is one candidate and nothing is suppressed.

mod dump;
mod hungarian;

pub use dump::{format_dump, parse_dump, write_dump_line};
pub use hungarian::{assignment_cost, hungarian_match};

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::{iou_or_zero, BBox};
use crate::ops::sigmoid_scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: usize,
    pub score: f64,
    pub bbox: BBox,
}

/// One anchor slot at one grid cell, as emitted by the network.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCell {
    pub tx: f32,
    pub ty: f32,
    pub tw: f32,
    pub th: f32,
    pub objectness: f32,
    pub class_logits: Vec<f32>,
}

/// Keeps `exp` finite; anything this large is clipped to the image anyway.
const MAX_LOG_SCALE: f64 = 20.0;

impl RawCell {
    /// Decodes against an anchor `(w, h)` at grid cell `(cx, cy)`. Returns
    /// the box in pixels, the score `σ(obj) · max σ(class)` and the class.
    pub fn decode(&self, cell: (usize, usize), stride: f64, anchor: [f32; 2]) -> (BBox, f64, usize) {
        let s = |v: f32| f64::from(sigmoid_scalar(v));
        let bx = (s(self.tx) + cell.0 as f64) * stride;
        let by = (s(self.ty) + cell.1 as f64) * stride;
        let bw = f64::from(anchor[0]) * f64::from(self.tw).min(MAX_LOG_SCALE).exp();
        let bh = f64::from(anchor[1]) * f64::from(self.th).min(MAX_LOG_SCALE).exp();
        let (class_id, best) = argmax(&self.class_logits);
        let score = s(self.objectness) * s(best);
        (BBox::from_center(bx, by, bw, bh), score, class_id)
    }
}

/// Index and value of the largest entry; ties go to the lowest index.
fn argmax(v: &[f32]) -> (usize, f32) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |best, (i, x)| if x > best.1 { (i, x) } else { best })
}

fn finish_box(b: BBox, width: f64, height: f64) -> Option<BBox> {
    let b = b.clip(width, height);
    b.is_ordered().then_some(b)
}

/// Decodes single-sample anchor head maps (`1 x 3(5+C) x H x W` each) into
/// candidate detections with score >= `conf_thresh`, clipped to the image.
pub fn decode_anchor_heads(
    heads: &[Tensor],
    anchors: &[Vec<[f32; 2]>],
    strides: &[usize],
    conf_thresh: f64,
    num_classes: usize,
) -> Result<Vec<Detection>> {
    if heads.len() != anchors.len() || heads.len() != strides.len() {
        return Err(Error::InvalidArgument(format!(
            "{} head maps, {} anchor groups, {} strides",
            heads.len(),
            anchors.len(),
            strides.len()
        )));
    }
    let per_anchor = 5 + num_classes;
    let mut out = Vec::new();
    for ((map, group), &stride) in heads.iter().zip(anchors).zip(strides) {
        let (n, c, h, w) = map.nchw()?;
        if n != 1 {
            return Err(Error::Shape(format!("decode expects one sample, got batch {n}")));
        }
        if c != group.len() * per_anchor {
            return Err(Error::Shape(format!(
                "head has {c} channels, expected {} for {num_classes} classes",
                group.len() * per_anchor
            )));
        }
        let (img_w, img_h) = ((w * stride) as f64, (h * stride) as f64);
        let data = map.data();
        let plane = h * w;
        for (a, &anchor) in group.iter().enumerate() {
            let ch = |k: usize, y: usize, x: usize| data[(a * per_anchor + k) * plane + y * w + x];
            for y in 0..h {
                for x in 0..w {
                    let cell = RawCell {
                        tx: ch(0, y, x),
                        ty: ch(1, y, x),
                        tw: ch(2, y, x),
                        th: ch(3, y, x),
                        objectness: ch(4, y, x),
                        class_logits: (0..num_classes).map(|k| ch(5 + k, y, x)).collect(),
                    };
                    let (bbox, score, class_id) = cell.decode((x, y), stride as f64, anchor);
                    if score < conf_thresh {
                        continue;
                    }
                    if let Some(bbox) = finish_box(bbox, img_w, img_h) {
                        out.push(Detection {
                            class_id,
                            score,
                            bbox,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Ranking order: score descending, then class id ascending.
fn rank_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.class_id.cmp(&b.class_id))
}

/// Class-aware greedy non-maximum suppression. A box is dropped when a kept
/// box of the same class with a higher rank overlaps it with IoU above
/// `iou_thresh`. Output is ranked by score.
pub fn nms(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let mut ranked: Vec<Detection> = dets.to_vec();
    // stable: equal keys keep input order
    ranked.sort_by(rank_order);
    let mut kept: Vec<Detection> = Vec::with_capacity(ranked.len());
    for d in ranked {
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == d.class_id && iou_or_zero(&k.bbox, &d.bbox) > iou_thresh);
        if !suppressed {
            kept.push(d);
        }
    }
    kept
}

/// Thresholds per-query predictions of a single sample. `class_logits` is
/// `Q x C` (or `1 x Q x C`) and `boxes` the matching normalized
/// `(cx, cy, w, h)`. Every query yields at most one detection.
pub fn decode_set_prediction(
    class_logits: &Tensor,
    boxes: &Tensor,
    score_thresh: f64,
    input_size: usize,
) -> Result<Vec<Detection>> {
    let strip = |t: &Tensor| -> Result<(usize, usize)> {
        match *t.dims() {
            [q, c] | [1, q, c] => Ok((q, c)),
            _ => Err(Error::Shape(format!(
                "set-prediction output must be Q x K for one sample, got {:?}",
                t.dims()
            ))),
        }
    };
    let (q, nc) = strip(class_logits)?;
    let (qb, four) = strip(boxes)?;
    if qb != q || four != 4 {
        return Err(Error::Shape(format!(
            "{q} queries of logits but boxes are {qb} x {four}"
        )));
    }
    let size = input_size as f64;
    let mut out = Vec::new();
    for i in 0..q {
        let (class_id, best) = argmax(&class_logits.data()[i * nc..(i + 1) * nc]);
        let score = f64::from(sigmoid_scalar(best));
        if score < score_thresh {
            continue;
        }
        let b = &boxes.data()[i * 4..i * 4 + 4];
        let bbox = BBox::from_center(
            f64::from(b[0]) * size,
            f64::from(b[1]) * size,
            f64::from(b[2]) * size,
            f64::from(b[3]) * size,
        );
        if let Some(bbox) = finish_box(bbox, size, size) {
            out.push(Detection {
                class_id,
                score,
                bbox,
            });
        }
    }
    Ok(out)
}
