//! Detection dump: one line per detection,
//! `image_id class_id score x1 y1 x2 y2`, floats with 4 decimals.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evalkit::BBox;

use super::Detection;

pub fn write_dump_line(out: &mut String, image_id: &str, d: &Detection) {
    let _ = writeln!(
        out,
        "{image_id} {} {:.4} {:.4} {:.4} {:.4} {:.4}",
        d.class_id, d.score, d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2
    );
}

/// Formats detections grouped by image, images in the given order.
pub fn format_dump<'a>(items: impl IntoIterator<Item = (&'a str, &'a [Detection])>) -> String {
    let mut out = String::new();
    for (id, dets) in items {
        for d in dets {
            write_dump_line(&mut out, id, d);
        }
    }
    out
}

/// Parses a dump, grouping detections by image id in file order.
pub fn parse_dump(text: &str, path: &Path) -> Result<BTreeMap<String, Vec<Detection>>> {
    let mut out: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Label {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", fields.len())));
        }
        let class_id: usize = fields[1]
            .parse()
            .map_err(|_| err(format!("bad class id `{}`", fields[1])))?;
        let nums = fields[2..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("bad number `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        out.entry(fields[0].to_string()).or_default().push(Detection {
            class_id,
            score: nums[0],
            bbox: BBox::new(nums[1], nums[2], nums[3], nums[4]),
        });
    }
    Ok(out)
}
