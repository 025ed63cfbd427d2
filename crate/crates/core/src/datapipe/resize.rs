//! Stretch-resize to the square model input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::BBox;
use crate::postproc::Detection;
use crate::tensor::Tensor;

use super::ImageRecord;

/// Maps boxes between source pixels and model-input pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordTransform {
    pub src_width: usize,
    pub src_height: usize,
    pub size: usize,
}

impl CoordTransform {
    pub fn scale_x(&self) -> f64 {
        self.size as f64 / self.src_width as f64
    }

    pub fn scale_y(&self) -> f64 {
        self.size as f64 / self.src_height as f64
    }

    pub fn to_model(&self, b: &BBox) -> BBox {
        let (sx, sy) = (self.scale_x(), self.scale_y());
        BBox::new(b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy)
    }

    pub fn to_source(&self, b: &BBox) -> BBox {
        let (sx, sy) = (self.scale_x(), self.scale_y());
        BBox::new(b.x1 / sx, b.y1 / sy, b.x2 / sx, b.y2 / sy)
    }

    pub fn detections_to_source(&self, dets: &[Detection]) -> Vec<Detection> {
        dets.iter()
            .map(|d| Detection {
                bbox: self.to_source(&d.bbox),
                ..*d
            })
            .collect()
    }
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize_bilinear(pixels: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let d = pixels.dims();
    if d.len() != 3 || d[1] == 0 || d[2] == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize needs a non-empty C×H×W image and target, got {d:?} -> {out_h}×{out_w}"
        )));
    }
    let (c, h, w) = (d[0], d[1], d[2]);
    let axis = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f32)> {
        (0..n_out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5)
                    .clamp(0.0, (n_in - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let xs = axis(out_w, w);
    let ys = axis(out_h, h);
    let src = pixels.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

/// 1×3×S×S model input and the transform back to source pixels.
pub fn to_model_tensor(record: &ImageRecord, input_size: usize) -> Result<(Tensor, CoordTransform)> {
    let d = record.pixels.dims();
    if record.width == 0
        || record.height == 0
        || d != [3, record.height, record.width]
    {
        return Err(Error::InvalidArgument(format!(
            "degenerate source image `{}`: declared {}×{}, pixels {d:?}",
            record.id, record.width, record.height
        )));
    }
    let t = resize_bilinear(&record.pixels, input_size, input_size)?;
    let t = t.reshape(&[1, 3, input_size, input_size])?;
    Ok((
        t,
        CoordTransform {
            src_width: record.width,
            src_height: record.height,
            size: input_size,
        },
    ))
}
