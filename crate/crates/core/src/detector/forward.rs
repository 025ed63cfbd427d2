use crate::attention::{
    feature_map_to_tokens, mlp_forward, multi_head_cross_attention, positional_encoding,
    te_block_forward, TeConfig,
};
use crate::blocks::{c2f_forward, conv_block_forward, sppf_forward};
use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Tensor;

use super::config::ModelConfig;
use super::graph::{BoundNetwork, Graph, HeadParams, SetHeadParams, TailParams};
use super::weights::ModelWeights;

/// Backbone outputs at strides 8, 16 and 32 (P5 after SPPF).
#[derive(Clone, Debug)]
pub struct Features {
    pub p3: Tensor,
    pub p4: Tensor,
    pub p5: Tensor,
}

#[derive(Clone, Debug)]
pub enum HeadOutputs {
    /// Raw anchor-head maps at strides 8, 16, 32, each `N x 3(5+C) x H x W`.
    Anchor(Vec<Tensor>),
    /// `class_logits: N x Q x C`, `boxes: N x Q x 4` normalized `(cx, cy, w, h)`.
    SetPrediction { class_logits: Tensor, boxes: Tensor },
}

fn check_input(cfg: &ModelConfig, batch: &Tensor) -> Result<()> {
    let (_, c, h, w) = batch.nchw()?;
    if c != 3 || h != cfg.input_size || w != cfg.input_size {
        return Err(Error::Shape(format!(
            "model expects N x 3 x {s} x {s} input, got {:?}",
            batch.dims(),
            s = cfg.input_size
        )));
    }
    Ok(())
}

pub fn backbone_forward(net: &BoundNetwork, te: &TeConfig, x: &Tensor) -> Result<Features> {
    let mut x = conv_block_forward(x, &net.stem)?;
    let mut taps = Vec::with_capacity(4);
    for (down, tail) in &net.stages {
        x = down.forward(&x)?;
        x = match tail {
            TailParams::C2f(p) => c2f_forward(&x, p)?,
            TailParams::Te(w) => te_block_forward(&x, w, te)?,
        };
        taps.push(x.clone());
    }
    let p5 = sppf_forward(&x, &net.sppf)?;
    Ok(Features {
        p3: taps[1].clone(),
        p4: taps[2].clone(),
        p5,
    })
}

/// FPN top-down then PAN bottom-up; returns N3, N4, N5.
pub fn neck_forward(net: &BoundNetwork, f: &Features) -> Result<[Tensor; 3]> {
    let up5 = ops::upsample_nearest(&f.p5, 2)?;
    let t4 = c2f_forward(&ops::concat(&[&up5, &f.p4], 1)?, &net.fpn4)?;
    let up4 = ops::upsample_nearest(&t4, 2)?;
    let n3 = c2f_forward(&ops::concat(&[&up4, &f.p3], 1)?, &net.fpn3)?;
    let d3 = net.pan4_down.forward(&n3)?;
    let n4 = c2f_forward(&ops::concat(&[&d3, &t4], 1)?, &net.pan4)?;
    let d4 = net.pan5_down.forward(&n4)?;
    let n5 = c2f_forward(&ops::concat(&[&d4, &f.p5], 1)?, &net.pan5)?;
    Ok([n3, n4, n5])
}

/// Decoder over learned queries for one sample. Returns `(Q x C, Q x 4)`.
fn set_head_sample(
    p: &SetHeadParams,
    cfg: &TeConfig,
    levels: &[Tensor; 3],
) -> Result<(Tensor, Tensor)> {
    let mut memory_parts = Vec::with_capacity(3);
    for (level, (w, b)) in levels.iter().zip(&p.proj) {
        let tokens = ops::linear(&feature_map_to_tokens(level)?, w, Some(b))?;
        let (n, d) = tokens.matrix_dims()?;
        memory_parts.push(ops::add(&tokens, &positional_encoding(n, d)?.table)?);
    }
    let refs: Vec<&Tensor> = memory_parts.iter().collect();
    let memory = ops::concat(&refs, 0)?;

    let mut q = p.queries.clone();
    for layer in &p.layers {
        q = ops::add(&q, &multi_head_cross_attention(&q, &q, &layer.self_attn, cfg)?)?;
        q = ops::add(&q, &multi_head_cross_attention(&q, &memory, &layer.cross_attn, cfg)?)?;
        q = ops::add(&q, &mlp_forward(&q, &layer.mlp)?)?;
    }
    let logits = ops::linear(&q, &p.class_w, Some(&p.class_b))?;
    let boxes = ops::sigmoid(&ops::linear(&q, &p.box_w, Some(&p.box_b))?);
    Ok((logits, boxes))
}

pub fn head_forward(net: &BoundNetwork, cfg: &ModelConfig, n: &[Tensor; 3]) -> Result<HeadOutputs> {
    match &net.head {
        HeadParams::Anchor(heads) => {
            let maps = heads
                .iter()
                .zip(n)
                .map(|(h, x)| {
                    let y = conv_block_forward(&conv_block_forward(x, &h.conv1)?, &h.conv2)?;
                    ops::conv2d(&y, &h.pred_w, Some(&h.pred_b), 1, 0)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(HeadOutputs::Anchor(maps))
        }
        HeadParams::SetPrediction(p) => {
            let batch = n[0].dims()[0];
            let (mut logits, mut boxes) = (Vec::new(), Vec::new());
            for s in 0..batch {
                let levels = [n[0].sample(s)?, n[1].sample(s)?, n[2].sample(s)?];
                let (l, b) = set_head_sample(p, &cfg.te, &levels)?;
                logits.extend_from_slice(l.data());
                boxes.extend_from_slice(b.data());
            }
            let q = cfg.detr_queries;
            Ok(HeadOutputs::SetPrediction {
                class_logits: Tensor::new(vec![batch, q, cfg.num_classes], logits)?,
                boxes: Tensor::new(vec![batch, q, 4], boxes)?,
            })
        }
    }
}

/// Runs an already bound network on an `N x 3 x S x S` batch.
pub fn forward_bound(net: &BoundNetwork, cfg: &ModelConfig, batch: &Tensor) -> Result<HeadOutputs> {
    check_input(cfg, batch)?;
    let features = backbone_forward(net, &cfg.te, batch)?;
    let n = neck_forward(net, &features)?;
    head_forward(net, cfg, &n)
}

pub fn forward(graph: &Graph, weights: &ModelWeights, batch: &Tensor) -> Result<HeadOutputs> {
    let net = graph.bind(weights)?;
    forward_bound(&net, &graph.config, batch)
}

pub fn forward_features(graph: &Graph, weights: &ModelWeights, batch: &Tensor) -> Result<Features> {
    check_input(&graph.config, batch)?;
    let net = graph.bind(weights)?;
    backbone_forward(&net, &graph.config.te, batch)
}
