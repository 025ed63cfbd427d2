//! Images, YOLO labels, augmentations, model-input conversion and the
//! synthetic fixture dataset.
//!
//! Layout on disk: `images/<id>.ppm`, `labels/<id>.txt`, `index.json`.

mod augment;
mod fixture;
mod labels;
mod ppm;
mod resize;

pub use augment::{
    augment_recipe, flip_augment, rotate_augment, rotate_augment_any, rotate_point, FlipAxis,
    Variant, MIN_SURVIVING_AREA, SUPPORTED_ANGLES,
};
pub use fixture::{
    generate_fixture_dataset, generate_fixture_dataset_with, generate_fixture_images,
    FixtureImage, FixtureOptions, BLOB_MIN, BLOB_THRESHOLD, NOISE_MAX,
};
pub use labels::{parse_labels, parse_yolo_labels, snap6, write_yolo_labels, LabelBox, LabelSet};
pub use ppm::{decode_ppm, encode_ppm, read_ppm, read_ppm_size, write_ppm};
pub use resize::{resize_bilinear, to_model_tensor, CoordTransform};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::tensor::Tensor;

/// An RGB image with planar pixels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub width: usize,
    pub height: usize,
    /// 3×H×W
    pub pixels: Tensor,
}

impl ImageRecord {
    pub fn new(id: &str, pixels: Tensor) -> Result<Self> {
        let d = pixels.dims();
        if d.len() != 3 || d[0] != 3 {
            return Err(Error::Shape(format!("image pixels must be 3×H×W, got {d:?}")));
        }
        if !pixels.data().iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!("image `{id}` has pixels outside [0, 1]")));
        }
        Ok(Self {
            id: id.to_string(),
            width: d[2],
            height: d[1],
            pixels,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub id: String,
    /// Relative to the dataset root.
    pub image: PathBuf,
    pub label: PathBuf,
}

impl IndexRecord {
    pub fn for_id(id: &str) -> Self {
        Self {
            id: id.to_string(),
            image: PathBuf::from("images").join(format!("{id}.ppm")),
            label: PathBuf::from("labels").join(format!("{id}.txt")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub train: Vec<IndexRecord>,
    pub val: Vec<IndexRecord>,
}

impl DatasetIndex {
    pub fn split(&self, s: Split) -> &[IndexRecord] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
        }
    }

    pub fn records(&self) -> impl Iterator<Item = (Split, &IndexRecord)> {
        self.train
            .iter()
            .map(|r| (Split::Train, r))
            .chain(self.val.iter().map(|r| (Split::Val, r)))
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fsutil::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fsutil::write_atomic(path, s.as_bytes())
    }

    /// Checks every listed image has a label file under `root`.
    pub fn check_files(&self, root: &Path) -> Result<()> {
        for (_, r) in self.records() {
            for p in [&r.image, &r.label] {
                let full = root.join(p);
                if !full.is_file() {
                    return Err(Error::io(
                        &full,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "listed in index"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Reads an image and its labels from a dataset root.
pub fn load_sample(root: &Path, rec: &IndexRecord) -> Result<(ImageRecord, LabelSet)> {
    let mut img = read_ppm(&root.join(&rec.image))?;
    img.id = rec.id.clone();
    let labels = parse_yolo_labels(&root.join(&rec.label))?;
    Ok((img, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_record_validation() {
        assert!(ImageRecord::new("a", Tensor::zeros(&[1, 2, 2]).unwrap()).is_err());
        assert!(ImageRecord::new("a", Tensor::full(&[3, 2, 2], 1.5).unwrap()).is_err());
        let r = ImageRecord::new("a", Tensor::zeros(&[3, 2, 5]).unwrap()).unwrap();
        assert_eq!((r.width, r.height), (5, 2));
    }

    #[test]
    fn fixture_dataset_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let idx = generate_fixture_dataset(10, 1, dir.path()).unwrap();
        assert_eq!((idx.train.len(), idx.val.len()), (8, 2));
        let back = DatasetIndex::load(&dir.path().join("index.json")).unwrap();
        assert_eq!(back, idx);
        back.check_files(dir.path()).unwrap();
        let (img, lb) = load_sample(dir.path(), &idx.val[0]).unwrap();
        assert_eq!(img.id, idx.val[0].id);
        assert!(lb.validate().is_ok());
    }
}
