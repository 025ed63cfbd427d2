//! Backbone, neck and head assembly, weights, cost accounting and the
//! weight file.
//!
//! Backbone: stem conv, then four stages of stride-2 conv + C2f, with SPPF
//! at P5. The last C2f can be swapped for a transformer encoder block and
//! the downsampling convs for ghost convs. Neck: FPN top-down then PAN
//! bottom-up. Head: three anchor heads (decoded + NMS) or a query decoder
//! that predicts a fixed set of boxes.

mod config;
mod cost;
mod forward;
mod graph;
mod io;
mod weights;

pub use config::{
    default_anchors, ConvKind, HeadKind, ModelConfig, TailKind, TrainingMeta, BASE_DEPTHS,
    BASE_WIDTHS,
};
pub use cost::{count_macs, count_params, BlockCost, CostReport};
pub use forward::{
    backbone_forward, forward, forward_bound, forward_features, Features, HeadOutputs,
};
pub use graph::{BoundNetwork, ConvLayerSpec, ConvSpec, Graph, HeadSpec, TailSpec};
pub use io::{decode_weights, encode_weights, load_weights, save_weights, MAGIC, VERSION};
pub use weights::{Init, ModelWeights, ParamSpec};

use std::path::Path;

use crate::error::Result;
use crate::postproc::{decode_anchor_heads, decode_set_prediction, nms, Detection};
use crate::tensor::Tensor;

pub const HEAD_STRIDES: [usize; 3] = [8, 16, 32];

pub fn build_model(cfg: &ModelConfig) -> Result<(Graph, ModelWeights)> {
    let graph = Graph::new(cfg)?;
    let weights = graph.init_weights(cfg.seed)?;
    Ok((graph, weights))
}

/// A graph with weights bound, ready for repeated inference.
#[derive(Clone, Debug)]
pub struct Detector {
    graph: Graph,
    weights: ModelWeights,
    net: BoundNetwork,
}

impl Detector {
    pub fn new(graph: Graph, weights: ModelWeights) -> Result<Self> {
        graph.check_weights(&weights)?;
        let net = graph.bind(&weights)?;
        Ok(Self {
            graph,
            weights,
            net,
        })
    }

    pub fn build(cfg: &ModelConfig) -> Result<Self> {
        let (g, w) = build_model(cfg)?;
        Self::new(g, w)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (cfg, weights) = load_weights(path)?;
        Self::new(Graph::new(&cfg)?, weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_weights(&self.graph.config, &self.weights, path)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.graph.config
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn forward(&self, batch: &Tensor) -> Result<HeadOutputs> {
        forward_bound(&self.net, &self.graph.config, batch)
    }

    /// Final detections per sample in model-input pixel coordinates.
    pub fn detect(&self, batch: &Tensor) -> Result<Vec<Vec<Detection>>> {
        let cfg = &self.graph.config;
        let n = batch.dims()[0];
        match self.forward(batch)? {
            HeadOutputs::Anchor(maps) => (0..n)
                .map(|s| {
                    let sample: Vec<Tensor> =
                        maps.iter().map(|m| m.sample(s)).collect::<Result<_>>()?;
                    let raw = decode_anchor_heads(
                        &sample,
                        &cfg.anchors,
                        &HEAD_STRIDES,
                        f64::from(cfg.conf_thresh),
                        cfg.num_classes,
                    )?;
                    Ok(nms(&raw, f64::from(cfg.nms_iou_thresh)))
                })
                .collect(),
            HeadOutputs::SetPrediction {
                class_logits,
                boxes,
            } => (0..n)
                .map(|s| {
                    decode_set_prediction(
                        &class_logits.sample(s)?,
                        &boxes.sample(s)?,
                        f64::from(cfg.set_score_thresh),
                        cfg.input_size,
                    )
                })
                .collect(),
        }
    }
}
