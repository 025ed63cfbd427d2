use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::TeConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ConvKind {
    Standard,
    Ghost,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum TailKind {
    C2f,
    Te,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum HeadKind {
    AnchorNms,
    SetPrediction,
}

/// Training hyperparameters of the reference experiments. Stored for
/// documentation only; nothing in this crate trains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: u32,
    pub batch: u32,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for TrainingMeta {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch: 16,
            lr: 0.01,
            momentum: 0.95,
            weight_decay: 0.0005,
        }
    }
}

/// Base channel widths of the stem and the four backbone stages.
pub const BASE_WIDTHS: [usize; 5] = [64, 128, 256, 512, 1024];
/// C2f bottleneck counts of the four backbone stages before depth scaling.
pub const BASE_DEPTHS: [usize; 4] = [1, 2, 2, 1];

pub fn default_anchors() -> Vec<Vec<[f32; 2]>> {
    vec![
        vec![[10.0, 13.0], [16.0, 30.0], [33.0, 23.0]],
        vec![[30.0, 61.0], [62.0, 45.0], [59.0, 119.0]],
        vec![[116.0, 90.0], [156.0, 198.0], [373.0, 326.0]],
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_size: usize,
    pub num_classes: usize,
    pub width_mult: f64,
    pub depth_mult: f64,
    pub conv_kind: ConvKind,
    pub tail_kind: TailKind,
    pub head_kind: HeadKind,
    /// Anchor `(w, h)` pairs in pixels for the stride 8, 16 and 32 heads.
    pub anchors: Vec<Vec<[f32; 2]>>,
    pub conf_thresh: f32,
    pub nms_iou_thresh: f32,
    /// Score threshold for the set-prediction head.
    pub set_score_thresh: f32,
    pub te: TeConfig,
    pub detr_queries: usize,
    pub detr_decoder_layers: usize,
    pub ghost_ratio: usize,
    pub ghost_cheap_kernel: usize,
    /// Explicit list of downsampling layers to ghost. `None` ghosts every
    /// downsampling conv except the stem.
    pub ghost_layers: Option<Vec<String>>,
    pub sppf_kernel: usize,
    pub seed: u64,
    pub recorded_training_meta: TrainingMeta,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: 640,
            num_classes: 2,
            width_mult: 0.25,
            depth_mult: 0.34,
            conv_kind: ConvKind::Ghost,
            tail_kind: TailKind::Te,
            head_kind: HeadKind::SetPrediction,
            anchors: default_anchors(),
            conf_thresh: 0.25,
            nms_iou_thresh: 0.45,
            set_score_thresh: 0.5,
            te: TeConfig::new(256, 4),
            detr_queries: 50,
            detr_decoder_layers: 2,
            ghost_ratio: 2,
            ghost_cheap_kernel: 3,
            ghost_layers: None,
            sppf_kernel: 5,
            seed: 0,
            recorded_training_meta: TrainingMeta::default(),
        }
    }
}

impl ModelConfig {
    /// The unmodified detector: standard convs, C2f tail, anchor heads + NMS.
    pub fn baseline() -> Self {
        Self {
            conv_kind: ConvKind::Standard,
            tail_kind: TailKind::C2f,
            head_kind: HeadKind::AnchorNms,
            ..Self::default()
        }
    }

    /// Sets the width multiplier and resizes the encoder to the new P5 width.
    pub fn with_width(mut self, width_mult: f64) -> Self {
        self.width_mult = width_mult;
        let d = self.channels(BASE_WIDTHS[4]);
        self.te.d_model = d;
        self.te.mlp_hidden = 2 * d;
        self
    }

    /// Scaled channel count, rounded up to a multiple of 8.
    pub fn channels(&self, base: usize) -> usize {
        let scaled = (base as f64 * self.width_mult).ceil() as usize;
        scaled.div_ceil(8).max(1) * 8
    }

    /// Scaled C2f bottleneck count, at least 1.
    pub fn depth(&self, base: usize) -> usize {
        ((3.0 * self.depth_mult * base as f64).round() as usize).max(1)
    }

    pub fn p5_channels(&self) -> usize {
        self.channels(BASE_WIDTHS[4])
    }

    pub fn head_channels(&self) -> usize {
        3 * (5 + self.num_classes)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_classes == 0 {
            return bad("num_classes must be >= 1".into());
        }
        if self.input_size == 0 || !self.input_size.is_multiple_of(32) {
            return bad(format!(
                "input_size {} must be a positive multiple of 32",
                self.input_size
            ));
        }
        if !(self.width_mult > 0.0) || !(self.depth_mult > 0.0) {
            return bad("width_mult and depth_mult must be positive".into());
        }
        for (name, v) in [
            ("conf_thresh", self.conf_thresh),
            ("nms_iou_thresh", self.nms_iou_thresh),
            ("set_score_thresh", self.set_score_thresh),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        if self.anchors.len() != 3 || self.anchors.iter().any(|s| s.len() != 3) {
            return bad("anchors must be 3 scales x 3 (w, h) pairs".into());
        }
        if self.anchors.iter().flatten().flatten().any(|v| !(*v > 0.0)) {
            return bad("anchor sizes must be positive".into());
        }
        self.te.validate()?;
        if !self.te.d_model.is_multiple_of(2) {
            return bad(format!("te.d_model {} must be even", self.te.d_model));
        }
        if self.tail_kind == TailKind::Te && self.te.d_model != self.p5_channels() {
            return bad(format!(
                "te.d_model {} must equal the P5 channel count {}",
                self.te.d_model,
                self.p5_channels()
            ));
        }
        if self.head_kind == HeadKind::SetPrediction
            && (self.detr_queries == 0 || self.detr_decoder_layers == 0)
        {
            return bad("set-prediction head needs queries and decoder layers".into());
        }
        if self.ghost_ratio < 2 {
            return bad(format!("ghost_ratio {} must be >= 2", self.ghost_ratio));
        }
        if self.ghost_cheap_kernel.is_multiple_of(2) {
            return bad("ghost_cheap_kernel must be odd".into());
        }
        if self.sppf_kernel.is_multiple_of(2) {
            return bad("sppf_kernel must be odd".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_channel_plan() {
        let cfg = ModelConfig::default();
        let widths: Vec<usize> = BASE_WIDTHS.iter().map(|&b| cfg.channels(b)).collect();
        assert_eq!(widths, vec![16, 32, 64, 128, 256]);
        let depths: Vec<usize> = BASE_DEPTHS.iter().map(|&d| cfg.depth(d)).collect();
        assert_eq!(depths, vec![1, 2, 2, 1]);
        assert_eq!(cfg.head_channels(), 21);
        cfg.validate().unwrap();
        ModelConfig::baseline().validate().unwrap();
    }

    #[test]
    fn width_keeps_encoder_in_sync() {
        for w in [0.25, 0.5, 1.0] {
            let cfg = ModelConfig::default().with_width(w);
            cfg.validate().unwrap();
            assert_eq!(cfg.te.d_model, (1024.0 * w) as usize);
        }
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let mut cfg = ModelConfig::default();
        cfg.te.d_model = 128;
        cfg.te.mlp_hidden = 256;
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig {
            input_size: 100,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig {
            conf_thresh: 1.5,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn json_uses_field_names_and_defaults() {
        let cfg = ModelConfig::from_json(r#"{"num_classes": 3, "head_kind": "anchor_nms"}"#)
            .unwrap();
        assert_eq!(cfg.num_classes, 3);
        assert_eq!(cfg.head_kind, HeadKind::AnchorNms);
        assert_eq!(cfg.recorded_training_meta.epochs, 200);
        let back = ModelConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert!(ModelConfig::from_json(r#"{"conv_kind": "fancy"}"#).is_err());
    }
}
