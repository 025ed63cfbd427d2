//! Flips and ±15° rotations applied to an image together with its labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::BBox;
use crate::tensor::Tensor;

use super::labels::{snap6, LabelBox, LabelSet};
use super::ImageRecord;

/// Rotated boxes keeping less than this share of their area are dropped.
pub const MIN_SURVIVING_AREA: f64 = 0.1;

pub const SUPPORTED_ANGLES: [f64; 2] = [15.0, -15.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipAxis {
    Horizontal,
    Vertical,
}

pub fn flip_augment(img: &ImageRecord, labels: &LabelSet, axis: FlipAxis) -> (ImageRecord, LabelSet) {
    let (w, h) = (img.width, img.height);
    let src = img.pixels.data();
    let mut data = vec![0.0f32; src.len()];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = match axis {
                    FlipAxis::Horizontal => (w - 1 - x, y),
                    FlipAxis::Vertical => (x, h - 1 - y),
                };
                data[(c * h + y) * w + x] = src[(c * h + sy) * w + sx];
            }
        }
    }
    let boxes = labels
        .boxes
        .iter()
        .map(|b| match axis {
            FlipAxis::Horizontal => LabelBox { cx: snap6(1.0 - b.cx), ..*b },
            FlipAxis::Vertical => LabelBox { cy: snap6(1.0 - b.cy), ..*b },
        })
        .collect();
    let pixels = Tensor::new(vec![3, h, w], data).expect("same shape as source");
    (
        ImageRecord {
            id: img.id.clone(),
            width: w,
            height: h,
            pixels,
        },
        LabelSet::new(boxes),
    )
}

/// Rotates `p` about `center` by `theta_deg` (x right, y down; +90° maps
/// (1, 0) to (0, 1) about the origin).
pub fn rotate_point(p: (f64, f64), center: (f64, f64), theta_deg: f64) -> (f64, f64) {
    let (s, c) = theta_deg.to_radians().sin_cos();
    let (dx, dy) = (p.0 - center.0, p.1 - center.1);
    (center.0 + dx * c - dy * s, center.1 + dx * s + dy * c)
}

fn sample_bilinear_zero(plane: &[f32], w: usize, h: usize, x: f64, y: f64) -> f32 {
    // pixel centers at integer + 0.5
    let (u, v) = (x - 0.5, y - 0.5);
    let (x0, y0) = (u.floor(), v.floor());
    let (fx, fy) = (u - x0, v - y0);
    let tap = |xi: f64, yi: f64| -> f64 {
        if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
            0.0
        } else {
            f64::from(plane[yi as usize * w + xi as usize])
        }
    };
    let top = tap(x0, y0) * (1.0 - fx) + tap(x0 + 1.0, y0) * fx;
    let bottom = tap(x0, y0 + 1.0) * (1.0 - fx) + tap(x0 + 1.0, y0 + 1.0) * fx;
    (top * (1.0 - fy) + bottom * fy) as f32
}

/// Rotation restricted to the ±15° recipe.
pub fn rotate_augment(
    img: &ImageRecord,
    labels: &LabelSet,
    theta_deg: f64,
) -> Result<(ImageRecord, LabelSet)> {
    if !SUPPORTED_ANGLES.contains(&theta_deg) {
        return Err(Error::InvalidArgument(format!(
            "rotation angle {theta_deg} not supported (expected +15 or -15)"
        )));
    }
    rotate_augment_any(img, labels, theta_deg)
}

/// Rotation by an arbitrary finite angle.
pub fn rotate_augment_any(
    img: &ImageRecord,
    labels: &LabelSet,
    theta_deg: f64,
) -> Result<(ImageRecord, LabelSet)> {
    if !theta_deg.is_finite() {
        return Err(Error::InvalidArgument("rotation angle must be finite".into()));
    }
    let (w, h) = (img.width, img.height);
    let center = (w as f64 / 2.0, h as f64 / 2.0);
    let src = img.pixels.data();
    let plane = w * h;
    let mut data = vec![0.0f32; src.len()];
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = rotate_point((x as f64 + 0.5, y as f64 + 0.5), center, -theta_deg);
            for c in 0..3 {
                data[c * plane + y * w + x] =
                    sample_bilinear_zero(&src[c * plane..(c + 1) * plane], w, h, sx, sy);
            }
        }
    }
    let pixels = Tensor::new(vec![3, h, w], data)?;

    let mut boxes = Vec::with_capacity(labels.boxes.len());
    for b in &labels.boxes {
        let px = b.to_pixels(w, h);
        let corners = [(px.x1, px.y1), (px.x2, px.y1), (px.x1, px.y2), (px.x2, px.y2)]
            .map(|p| rotate_point(p, center, theta_deg));
        let hull = BBox::new(
            corners.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
            corners.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
            corners.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
            corners.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
        );
        let clipped = hull.clip(w as f64, h as f64);
        if clipped.area() < MIN_SURVIVING_AREA * px.area() {
            continue;
        }
        let nb = LabelBox::from_pixels(b.class_id, &clipped, w, h);
        if nb.validate().is_ok() {
            boxes.push(nb);
        }
    }
    Ok((
        ImageRecord {
            id: img.id.clone(),
            width: w,
            height: h,
            pixels,
        },
        LabelSet::new(boxes),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Identity,
    RotatePos15,
    RotateNeg15,
    FlipHorizontal,
    FlipVertical,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Identity,
        Variant::RotatePos15,
        Variant::RotateNeg15,
        Variant::FlipHorizontal,
        Variant::FlipVertical,
    ];

    pub fn suffix(self) -> &'static str {
        match self {
            Variant::Identity => "",
            Variant::RotatePos15 => "_rot_p15",
            Variant::RotateNeg15 => "_rot_m15",
            Variant::FlipHorizontal => "_hflip",
            Variant::FlipVertical => "_vflip",
        }
    }
}

/// The five-variant recipe. A rotated variant is skipped when any of its
/// boxes fails the area rule.
pub fn augment_recipe(img: &ImageRecord, labels: &LabelSet) -> Result<Vec<(ImageRecord, LabelSet)>> {
    let mut out = Vec::with_capacity(5);
    for v in Variant::ALL {
        let (mut im, lb) = match v {
            Variant::Identity => (img.clone(), labels.clone()),
            Variant::RotatePos15 => rotate_augment(img, labels, 15.0)?,
            Variant::RotateNeg15 => rotate_augment(img, labels, -15.0)?,
            Variant::FlipHorizontal => flip_augment(img, labels, FlipAxis::Horizontal),
            Variant::FlipVertical => flip_augment(img, labels, FlipAxis::Vertical),
        };
        if lb.boxes.len() < labels.boxes.len() {
            continue;
        }
        im.id = format!("{}{}", img.id, v.suffix());
        out.push((im, lb));
    }
    Ok(out)
}
