//! Synthetic grayscale "scans" with bright elliptical blobs and exact
//! box labels.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::BBox;
use crate::tensor::Tensor;

use super::labels::{write_yolo_labels, LabelBox, LabelSet};
use super::ppm::write_ppm;
use super::{DatasetIndex, ImageRecord, IndexRecord};

/// Pixels above this byte value belong to a blob; noise stays below it.
pub const BLOB_THRESHOLD: u8 = 128;
pub const NOISE_MAX: u8 = 76;
pub const BLOB_MIN: u8 = 180;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureOptions {
    pub width: usize,
    pub height: usize,
    pub num_classes: usize,
    /// Share of images placed in the val split.
    pub val_fraction: f64,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            num_classes: 2,
            val_fraction: 223.0 / 1101.0,
        }
    }
}

/// One generated image: bytes (grayscale, row-major) plus labels.
#[derive(Clone, Debug)]
pub struct FixtureImage {
    pub id: String,
    pub gray: Vec<u8>,
    pub labels: LabelSet,
}

fn blob_count(rng: &mut ChaCha8Rng) -> usize {
    match rng.gen_range(0..20) {
        0..=2 => 0,
        3..=13 => 1,
        _ => 2,
    }
}

pub fn generate_fixture_images(n: usize, seed: u64, opts: &FixtureOptions) -> Result<Vec<FixtureImage>> {
    let (w, h) = (opts.width, opts.height);
    if n == 0 || opts.num_classes == 0 || w < 32 || h < 32 {
        return Err(Error::InvalidArgument(
            "fixture needs n >= 1, at least one class and images of at least 32×32".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next_class = 0usize;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut gray: Vec<u8> = (0..w * h).map(|_| rng.gen_range(0..=NOISE_MAX)).collect();
        let mut boxes = Vec::new();
        for _ in 0..blob_count(&mut rng) {
            let max_axis = (w.min(h) as f64 / 5.0).max(5.0);
            let a = rng.gen_range(4.0..max_axis);
            let b = rng.gen_range(4.0..max_axis);
            let cx = rng.gen_range(a + 1.0..w as f64 - a - 1.0);
            let cy = rng.gen_range(b + 1.0..h as f64 - b - 1.0);
            let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
            for y in 0..h {
                for x in 0..w {
                    let dx = (x as f64 + 0.5 - cx) / a;
                    let dy = (y as f64 + 0.5 - cy) / b;
                    if dx * dx + dy * dy <= 1.0 {
                        gray[y * w + x] = rng.gen_range(BLOB_MIN..=255);
                        x0 = x0.min(x);
                        y0 = y0.min(y);
                        x1 = x1.max(x);
                        y1 = y1.max(y);
                    }
                }
            }
            let px = BBox::new(x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64);
            boxes.push(LabelBox::from_pixels(next_class, &px, w, h));
            next_class = (next_class + 1) % opts.num_classes;
        }
        out.push(FixtureImage {
            id: format!("scan_{i:04}"),
            gray,
            labels: LabelSet::new(boxes),
        });
    }
    Ok(out)
}

impl FixtureImage {
    pub fn to_record(&self, width: usize, height: usize) -> Result<ImageRecord> {
        let n = width * height;
        let px = Tensor::from_fn(&[3, height, width], |i| f32::from(self.gray[i % n]) / 255.0)?;
        ImageRecord::new(&self.id, px)
    }
}

pub fn generate_fixture_dataset(n: usize, seed: u64, out_dir: &Path) -> Result<DatasetIndex> {
    generate_fixture_dataset_with(n, seed, out_dir, &FixtureOptions::default())
}

pub fn generate_fixture_dataset_with(
    n: usize,
    seed: u64,
    out_dir: &Path,
    opts: &FixtureOptions,
) -> Result<DatasetIndex> {
    let images = generate_fixture_images(n, seed, opts)?;
    let n_val = ((n as f64) * opts.val_fraction).round() as usize;
    let n_train = n - n_val.min(n);
    let mut index = DatasetIndex::default();
    for (i, img) in images.iter().enumerate() {
        let rec = IndexRecord::for_id(&img.id);
        write_ppm(&img.to_record(opts.width, opts.height)?, &out_dir.join(&rec.image))?;
        write_yolo_labels(&img.labels, &out_dir.join(&rec.label))?;
        if i < n_train {
            index.train.push(rec);
        } else {
            index.val.push(rec);
        }
    }
    index.save(&out_dir.join("index.json"))?;
    Ok(index)
}
