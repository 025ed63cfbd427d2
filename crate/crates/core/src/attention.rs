//! Transformer encoder block used as the backbone tail.
//!
//! Tokens are the per-position channel vectors of a feature map, offset by a
//! sinusoidal positional encoding. The block is multi-head self-attention
//! and an MLP, each wrapped in a residual connection. There is no layer
//! normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Tensor;

/// How attention logits are scaled before the softmax.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// `1 / sqrt(d_k)`
    Sqrt,
    /// `1 / d_k`
    Linear,
}

impl ScaleMode {
    pub fn factor(self, d_k: usize) -> f32 {
        match self {
            ScaleMode::Sqrt => 1.0 / (d_k as f32).sqrt(),
            ScaleMode::Linear => 1.0 / d_k as f32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeConfig {
    pub d_model: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
    pub scale_mode: ScaleMode,
}

impl TeConfig {
    pub fn new(d_model: usize, heads: usize) -> Self {
        Self {
            d_model,
            heads,
            mlp_hidden: 2 * d_model,
            scale_mode: ScaleMode::Sqrt,
        }
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "{} heads do not divide d_model {}",
                self.heads, self.d_model
            )));
        }
        if self.mlp_hidden == 0 {
            return Err(Error::Config("mlp_hidden must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for TeConfig {
    fn default() -> Self {
        Self::new(256, 4)
    }
}

/// Two-layer feed-forward network, `d_model -> hidden -> d_model`.
#[derive(Clone, Debug)]
pub struct MlpWeights {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Clone, Debug)]
pub struct AttentionWeights {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
}

#[derive(Clone, Debug)]
pub struct TeWeights {
    pub attn: AttentionWeights,
    pub mlp: MlpWeights,
}

impl AttentionWeights {
    pub fn check(&self, d_model: usize) -> Result<()> {
        for (name, t) in [
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_o", &self.w_o),
        ] {
            if t.dims() != [d_model, d_model] {
                return Err(Error::Shape(format!(
                    "{name} is {:?}, expected {d_model}x{d_model}",
                    t.dims()
                )));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> u64 {
        [&self.w_q, &self.w_k, &self.w_v, &self.w_o]
            .iter()
            .map(|t| t.len() as u64)
            .sum()
    }
}

impl MlpWeights {
    pub fn check(&self, d_model: usize, hidden: usize) -> Result<()> {
        let want: [(&str, &Tensor, Vec<usize>); 4] = [
            ("w1", &self.w1, vec![d_model, hidden]),
            ("b1", &self.b1, vec![hidden]),
            ("w2", &self.w2, vec![hidden, d_model]),
            ("b2", &self.b2, vec![d_model]),
        ];
        for (name, t, dims) in want {
            if t.dims() != dims.as_slice() {
                return Err(Error::Shape(format!(
                    "mlp {name} is {:?}, expected {dims:?}",
                    t.dims()
                )));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> u64 {
        (self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()) as u64
    }
}

/// Sinusoidal positional encoding, one row per sequence position.
#[derive(Clone, Debug)]
pub struct PositionalEncodingTable {
    pub table: Tensor,
}

pub fn positional_encoding(seq_len: usize, d_model: usize) -> Result<PositionalEncodingTable> {
    if seq_len == 0 || d_model == 0 || !d_model.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "positional encoding needs seq_len >= 1 and even d_model, got {seq_len}x{d_model}"
        )));
    }
    let table = Tensor::from_fn(&[seq_len, d_model], |idx| {
        let pos = (idx / d_model) as f64;
        let col = idx % d_model;
        let pair = (col / 2) as f64;
        let angle = pos / 10000f64.powf(2.0 * pair / d_model as f64);
        if col.is_multiple_of(2) {
            angle.sin() as f32
        } else {
            angle.cos() as f32
        }
    })?;
    Ok(PositionalEncodingTable { table })
}

/// Row-stochastic attention matrix `softmax(Q K^T * scale)`.
pub fn attention_weights(q: &Tensor, k: &Tensor, scale_mode: ScaleMode) -> Result<Tensor> {
    let (n, d_k) = q.matrix_dims()?;
    let (m, d_k2) = k.matrix_dims()?;
    if d_k != d_k2 {
        return Err(Error::Shape(format!(
            "query width {d_k} differs from key width {d_k2}"
        )));
    }
    let scale = scale_mode.factor(d_k);
    let mut scores = ops::matmul(q, &ops::transpose(k)?)?.into_data();
    for s in &mut scores {
        *s *= scale;
    }
    ops::softmax_rows_inplace(&mut scores, m);
    Tensor::new(vec![n, m], scores)?.ensure_finite("attention")
}

pub fn scaled_dot_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    scale_mode: ScaleMode,
) -> Result<Tensor> {
    let (m, _) = k.matrix_dims()?;
    let (mv, _) = v.matrix_dims()?;
    if m != mv {
        return Err(Error::Shape(format!(
            "{m} keys but {mv} values in attention"
        )));
    }
    ops::matmul(&attention_weights(q, k, scale_mode)?, v)
}

/// Attention from `queries` over `memory`. Self-attention passes the same
/// tensor for both.
pub fn multi_head_cross_attention(
    queries: &Tensor,
    memory: &Tensor,
    w: &AttentionWeights,
    cfg: &TeConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    w.check(cfg.d_model)?;
    for t in [queries, memory] {
        let (_, width) = t.matrix_dims()?;
        if width != cfg.d_model {
            return Err(Error::Shape(format!(
                "token width {width} differs from d_model {}",
                cfg.d_model
            )));
        }
    }
    let q = ops::matmul(queries, &w.w_q)?;
    let k = ops::matmul(memory, &w.w_k)?;
    let v = ops::matmul(memory, &w.w_v)?;
    let d_k = cfg.d_k();
    let mut heads = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = ops::narrow(&q, 1, h * d_k, d_k)?;
        let kh = ops::narrow(&k, 1, h * d_k, d_k)?;
        let vh = ops::narrow(&v, 1, h * d_k, d_k)?;
        heads.push(scaled_dot_attention(&qh, &kh, &vh, cfg.scale_mode)?);
    }
    let refs: Vec<&Tensor> = heads.iter().collect();
    ops::matmul(&ops::concat(&refs, 1)?, &w.w_o)
}

pub fn multi_head_attention(x: &Tensor, w: &AttentionWeights, cfg: &TeConfig) -> Result<Tensor> {
    multi_head_cross_attention(x, x, w, cfg)
}

/// `linear -> SiLU -> linear`.
pub fn mlp_forward(x: &Tensor, w: &MlpWeights) -> Result<Tensor> {
    let h = ops::silu(&ops::linear(x, &w.w1, Some(&w.b1))?);
    ops::linear(&h, &w.w2, Some(&w.b2))
}

/// Flattens a `1 x C x H x W` map into `H*W` tokens of width `C`, row-major
/// over positions.
pub fn feature_map_to_tokens(f: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = f.nchw()?;
    if n != 1 {
        return Err(Error::Shape(format!("expected a single sample, got batch {n}")));
    }
    let src = f.data();
    let hw = h * w;
    Tensor::from_fn(&[hw, c], |i| src[(i % c) * hw + i / c])
}

pub fn tokens_to_feature_map(tokens: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (n, c) = tokens.matrix_dims()?;
    if n != h * w {
        return Err(Error::Shape(format!(
            "{n} tokens cannot fill a {h}x{w} map"
        )));
    }
    let src = tokens.data();
    Tensor::from_fn(&[1, c, h, w], |i| src[(i % n) * c + i / n])
}

/// Encoder block on an NCHW feature map; samples are processed independently.
pub fn te_block_forward(f: &Tensor, w: &TeWeights, cfg: &TeConfig) -> Result<Tensor> {
    let (n, c, h, wd) = f.nchw()?;
    if c != cfg.d_model {
        return Err(Error::Config(format!(
            "feature map has {c} channels but d_model is {}",
            cfg.d_model
        )));
    }
    w.mlp.check(cfg.d_model, cfg.mlp_hidden)?;
    let pe = positional_encoding(h * wd, c)?;
    let mut outs = Vec::with_capacity(n);
    for s in 0..n {
        let tokens = feature_map_to_tokens(&f.sample(s)?)?;
        let x = ops::add(&tokens, &pe.table)?;
        let y = ops::add(&x, &multi_head_attention(&x, &w.attn, cfg)?)?;
        let z = ops::add(&y, &mlp_forward(&y, &w.mlp)?)?;
        outs.push(tokens_to_feature_map(&z, h, wd)?);
    }
    let refs: Vec<&Tensor> = outs.iter().collect();
    ops::concat(&refs, 0)
}
