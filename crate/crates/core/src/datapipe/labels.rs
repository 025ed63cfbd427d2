//! YOLO text labels: one `class cx cy w h` line per box, normalized to
//! `[0, 1]`. An empty file marks an image with no objects.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::{BBox, GroundTruthBox};
use crate::fsutil;

/// Label values are stored on the 6-decimal grid of the text format.
pub fn snap6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelBox {
    pub class_id: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl LabelBox {
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [("cx", self.cx), ("cy", self.cy)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} {v} outside [0, 1]"));
            }
        }
        for (name, v) in [("w", self.w), ("h", self.h)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(format!("{name} {v} outside (0, 1]"));
            }
        }
        Ok(())
    }

    /// Pixel-space corners for an image of the given size.
    pub fn to_pixels(&self, width: usize, height: usize) -> BBox {
        let (w, h) = (width as f64, height as f64);
        BBox::from_center(self.cx * w, self.cy * h, self.w * w, self.h * h)
    }

    pub fn from_pixels(class_id: usize, b: &BBox, width: usize, height: usize) -> Self {
        let (w, h) = (width as f64, height as f64);
        let (cx, cy) = b.center();
        Self {
            class_id,
            cx: snap6(cx / w),
            cy: snap6(cy / h),
            w: snap6(b.width() / w),
            h: snap6(b.height() / h),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub boxes: Vec<LabelBox>,
}

impl LabelSet {
    pub fn new(boxes: Vec<LabelBox>) -> Self {
        Self { boxes }
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.boxes.iter().try_for_each(LabelBox::validate)
    }

    pub fn to_ground_truth(&self, width: usize, height: usize) -> Vec<GroundTruthBox> {
        self.boxes
            .iter()
            .map(|b| GroundTruthBox {
                class_id: b.class_id,
                bbox: b.to_pixels(width, height),
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for b in &self.boxes {
            let _ = writeln!(s, "{} {:.6} {:.6} {:.6} {:.6}", b.class_id, b.cx, b.cy, b.w, b.h);
        }
        s
    }
}

pub fn parse_labels(text: &str, path: &Path) -> Result<LabelSet> {
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Label {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(format!("expected `class cx cy w h`, got {} fields", fields.len())));
        }
        if fields[0].starts_with('-') {
            return Err(err(format!("negative class `{}`", fields[0])));
        }
        let class_id: usize = fields[0]
            .parse()
            .map_err(|_| err(format!("bad class `{}`", fields[0])))?;
        let mut v = [0.0f64; 4];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| err(format!("bad number `{f}`")))?;
        }
        let b = LabelBox {
            class_id,
            cx: v[0],
            cy: v[1],
            w: v[2],
            h: v[3],
        };
        b.validate().map_err(err)?;
        boxes.push(b);
    }
    Ok(LabelSet { boxes })
}

pub fn parse_yolo_labels(path: &Path) -> Result<LabelSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path)
}

pub fn write_yolo_labels(set: &LabelSet, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, set.to_text().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("l.txt")
    }

    #[test]
    fn empty_and_single_box() {
        assert!(parse_labels("", p()).unwrap().is_empty());
        assert!(parse_labels("\n  \n", p()).unwrap().is_empty());
        let s = parse_labels("0 0.5 0.5 0.25 0.25\n", p()).unwrap();
        assert_eq!(s.boxes.len(), 1);
        let px = s.boxes[0].to_pixels(640, 480);
        assert_eq!(px.center(), (320.0, 240.0));
    }

    #[test]
    fn text_roundtrip_six_decimals() {
        let s = LabelSet::new(vec![
            LabelBox { class_id: 1, cx: 0.123_456_7, cy: 0.9, w: 0.05, h: 1.0 },
            LabelBox { class_id: 0, cx: 0.0, cy: 1.0, w: 0.000_001, h: 0.333_333_3 },
        ]);
        let back = parse_labels(&s.to_text(), p()).unwrap();
        for (a, b) in s.boxes.iter().zip(&back.boxes) {
            assert_eq!(a.class_id, b.class_id);
            for (x, y) in [(a.cx, b.cx), (a.cy, b.cy), (a.w, b.w), (a.h, b.h)] {
                assert!((x - y).abs() <= 5e-7);
            }
        }
        assert_eq!(back.to_text(), s.to_text());
    }

    #[test]
    fn rejects_malformed_lines() {
        for bad in [
            "0 0.5 0.5 0.2",
            "-1 0.5 0.5 0.2 0.2",
            "a 0.5 0.5 0.2 0.2",
            "0 1.5 0.5 0.2 0.2",
            "0 0.5 0.5 0 0.2",
            "0 0.5 0.5 0.2 nan",
        ] {
            let e = parse_labels(&format!("0 0.5 0.5 0.1 0.1\n{bad}\n"), p()).unwrap_err();
            assert!(e.to_string().starts_with("l.txt:2:"), "{bad}: {e}");
        }
    }
}
