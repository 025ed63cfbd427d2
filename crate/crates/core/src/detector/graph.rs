//! Static description of the detector: every layer with its parameter
//! names and shapes. Built once from a [`ModelConfig`]; the same description
//! drives initialization, binding of stored weights and cost accounting.

use crate::attention::{AttentionWeights, MlpWeights, TeConfig, TeWeights};
use crate::blocks::{
    BottleneckParams, C2fParams, ConvBlockParams, ConvLayer, Cost, GhostConvParams, SppfParams,
};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::config::{ConvKind, HeadKind, ModelConfig, TailKind, BASE_DEPTHS, BASE_WIDTHS};
use super::weights::{Init, ModelWeights, ParamSpec};

fn conv_out(size: usize, k: usize, stride: usize) -> usize {
    (size + 2 * (k / 2) - k) / stride + 1
}

#[derive(Clone, Debug)]
pub struct ConvSpec {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub groups: usize,
}

impl ConvSpec {
    fn new(name: impl Into<String>, c_in: usize, c_out: usize, k: usize, stride: usize) -> Self {
        Self {
            name: name.into(),
            c_in,
            c_out,
            k,
            stride,
            groups: 1,
        }
    }

    fn weight_dims(&self) -> Vec<usize> {
        vec![self.c_out, self.c_in / self.groups, self.k, self.k]
    }

    fn params(&self, out: &mut Vec<ParamSpec>) {
        let fan_in = self.c_in / self.groups * self.k * self.k;
        let n = &self.name;
        out.push(ParamSpec::new(
            format!("{n}.weight"),
            self.weight_dims(),
            Init::Uniform { fan_in },
        ));
        for (field, init) in [
            ("gamma", Init::Ones),
            ("beta", Init::Zeros),
            ("mean", Init::Zeros),
            ("var", Init::Ones),
        ] {
            out.push(ParamSpec::new(format!("{n}.bn.{field}"), vec![self.c_out], init));
        }
    }

    fn bind(&self, w: &ModelWeights) -> Result<ConvBlockParams> {
        let n = &self.name;
        let get = |s: &str| -> Result<Tensor> { Ok(w.get(&format!("{n}.{s}"))?.clone()) };
        ConvBlockParams::new(
            get("weight")?,
            get("bn.gamma")?,
            get("bn.beta")?,
            get("bn.mean")?,
            get("bn.var")?,
            self.stride,
            self.groups,
        )
    }

    pub fn cost(&self, h: usize, w: usize) -> (Cost, usize, usize) {
        let (ho, wo) = (conv_out(h, self.k, self.stride), conv_out(w, self.k, self.stride));
        let weights = (self.c_out * self.c_in / self.groups * self.k * self.k) as u64;
        let cost = Cost {
            params: weights + 4 * self.c_out as u64,
            macs: weights * (ho * wo) as u64,
        };
        (cost, ho, wo)
    }
}

/// Downsampling convolution, standard or ghost.
#[derive(Clone, Debug)]
pub enum ConvLayerSpec {
    Standard(ConvSpec),
    Ghost {
        name: String,
        primary: ConvSpec,
        cheap: ConvSpec,
        ratio: usize,
    },
}

impl ConvLayerSpec {
    fn build(
        name: String,
        c_in: usize,
        c_out: usize,
        stride: usize,
        ghost: Option<(usize, usize)>,
    ) -> Result<Self> {
        Ok(match ghost {
            None => ConvLayerSpec::Standard(ConvSpec::new(name, c_in, c_out, 3, stride)),
            Some((ratio, cheap_k)) => {
                let m = crate::blocks::ghost_split(c_out, ratio)?;
                let cheap = ConvSpec {
                    groups: m,
                    ..ConvSpec::new(format!("{name}.cheap"), m, (ratio - 1) * m, cheap_k, 1)
                };
                ConvLayerSpec::Ghost {
                    primary: ConvSpec::new(format!("{name}.primary"), c_in, m, 3, stride),
                    cheap,
                    ratio,
                    name,
                }
            }
        })
    }

    pub fn name(&self) -> &str {
        match self {
            ConvLayerSpec::Standard(c) => &c.name,
            ConvLayerSpec::Ghost { name, .. } => name,
        }
    }

    pub fn is_ghost(&self) -> bool {
        matches!(self, ConvLayerSpec::Ghost { .. })
    }

    fn params(&self, out: &mut Vec<ParamSpec>) {
        match self {
            ConvLayerSpec::Standard(c) => c.params(out),
            ConvLayerSpec::Ghost { primary, cheap, .. } => {
                primary.params(out);
                cheap.params(out);
            }
        }
    }

    fn bind(&self, w: &ModelWeights) -> Result<ConvLayer> {
        Ok(match self {
            ConvLayerSpec::Standard(c) => ConvLayer::Standard(c.bind(w)?),
            ConvLayerSpec::Ghost {
                primary,
                cheap,
                ratio,
                ..
            } => ConvLayer::Ghost(GhostConvParams::new(primary.bind(w)?, cheap.bind(w)?, *ratio)?),
        })
    }

    pub fn cost(&self, h: usize, w: usize) -> (Cost, usize, usize) {
        match self {
            ConvLayerSpec::Standard(c) => c.cost(h, w),
            ConvLayerSpec::Ghost { primary, cheap, .. } => {
                let (a, ho, wo) = primary.cost(h, w);
                let (b, _, _) = cheap.cost(ho, wo);
                (a + b, ho, wo)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct C2fSpec {
    pub name: String,
    pub entry: ConvSpec,
    pub bottlenecks: Vec<(ConvSpec, ConvSpec)>,
    pub exit: ConvSpec,
    pub shortcut: bool,
}

impl C2fSpec {
    fn new(name: String, c_in: usize, c_out: usize, n: usize, shortcut: bool) -> Self {
        let hidden = c_out / 2;
        let bottlenecks = (0..n)
            .map(|i| {
                (
                    ConvSpec::new(format!("{name}.m{i}.cv1"), hidden, hidden, 3, 1),
                    ConvSpec::new(format!("{name}.m{i}.cv2"), hidden, hidden, 3, 1),
                )
            })
            .collect();
        Self {
            entry: ConvSpec::new(format!("{name}.entry"), c_in, 2 * hidden, 1, 1),
            exit: ConvSpec::new(format!("{name}.exit"), (2 + n) * hidden, c_out, 1, 1),
            bottlenecks,
            shortcut,
            name,
        }
    }

    fn params(&self, out: &mut Vec<ParamSpec>) {
        self.entry.params(out);
        for (a, b) in &self.bottlenecks {
            a.params(out);
            b.params(out);
        }
        self.exit.params(out);
    }

    fn bind(&self, w: &ModelWeights) -> Result<C2fParams> {
        let bottlenecks = self
            .bottlenecks
            .iter()
            .map(|(a, b)| {
                Ok(BottleneckParams {
                    first: a.bind(w)?,
                    second: b.bind(w)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        C2fParams::new(self.entry.bind(w)?, bottlenecks, self.exit.bind(w)?, self.shortcut)
    }

    pub fn cost(&self, h: usize, w: usize) -> Cost {
        let inner: Cost = self
            .bottlenecks
            .iter()
            .map(|(a, b)| a.cost(h, w).0 + b.cost(h, w).0)
            .sum();
        self.entry.cost(h, w).0 + inner + self.exit.cost(h, w).0
    }
}

#[derive(Clone, Debug)]
pub struct SppfSpec {
    pub name: String,
    pub entry: ConvSpec,
    pub exit: ConvSpec,
    pub pool_kernel: usize,
}

impl SppfSpec {
    fn bind(&self, w: &ModelWeights) -> Result<SppfParams> {
        SppfParams::new(self.entry.bind(w)?, self.exit.bind(w)?, self.pool_kernel)
    }

    pub fn cost(&self, h: usize, w: usize) -> Cost {
        self.entry.cost(h, w).0 + self.exit.cost(h, w).0
    }
}

fn linear_params(out: &mut Vec<ParamSpec>, name: &str, d_in: usize, d_out: usize) {
    out.push(ParamSpec::new(
        format!("{name}.weight"),
        vec![d_in, d_out],
        Init::Uniform { fan_in: d_in },
    ));
    out.push(ParamSpec::new(
        format!("{name}.bias"),
        vec![d_out],
        Init::Uniform { fan_in: d_in },
    ));
}

fn attention_params(out: &mut Vec<ParamSpec>, name: &str, d: usize) {
    for m in ["w_q", "w_k", "w_v", "w_o"] {
        out.push(ParamSpec::new(
            format!("{name}.{m}"),
            vec![d, d],
            Init::Uniform { fan_in: d },
        ));
    }
}

fn bind_attention(w: &ModelWeights, name: &str) -> Result<AttentionWeights> {
    let get = |m: &str| -> Result<Tensor> { Ok(w.get(&format!("{name}.{m}"))?.clone()) };
    Ok(AttentionWeights {
        w_q: get("w_q")?,
        w_k: get("w_k")?,
        w_v: get("w_v")?,
        w_o: get("w_o")?,
    })
}

fn mlp_params(out: &mut Vec<ParamSpec>, name: &str, d: usize, hidden: usize) {
    linear_params(out, &format!("{name}.fc1"), d, hidden);
    linear_params(out, &format!("{name}.fc2"), hidden, d);
}

fn bind_mlp(w: &ModelWeights, name: &str) -> Result<MlpWeights> {
    let get = |m: &str| -> Result<Tensor> { Ok(w.get(&format!("{name}.{m}"))?.clone()) };
    Ok(MlpWeights {
        w1: get("fc1.weight")?,
        b1: get("fc1.bias")?,
        w2: get("fc2.weight")?,
        b2: get("fc2.bias")?,
    })
}

/// MACs of multi-head attention with `n` queries over `m` memory tokens.
pub fn attention_macs(n: usize, m: usize, d: usize) -> u64 {
    let (n, m, d) = (n as u64, m as u64, d as u64);
    // Q projection, K and V projections, scores, weighted sum, output projection.
    n * d * d + 2 * m * d * d + n * m * d + n * m * d + n * d * d
}

pub fn mlp_macs(n: usize, d: usize, hidden: usize) -> u64 {
    2 * (n * d * hidden) as u64
}

#[derive(Clone, Debug)]
pub struct TeSpec {
    pub name: String,
    pub cfg: TeConfig,
}

impl TeSpec {
    fn params(&self, out: &mut Vec<ParamSpec>) {
        attention_params(out, &format!("{}.attn", self.name), self.cfg.d_model);
        mlp_params(out, &format!("{}.mlp", self.name), self.cfg.d_model, self.cfg.mlp_hidden);
    }

    fn bind(&self, w: &ModelWeights) -> Result<TeWeights> {
        Ok(TeWeights {
            attn: bind_attention(w, &format!("{}.attn", self.name))?,
            mlp: bind_mlp(w, &format!("{}.mlp", self.name))?,
        })
    }

    pub fn cost(&self, h: usize, w: usize) -> Cost {
        let d = self.cfg.d_model;
        let n = h * w;
        let hid = self.cfg.mlp_hidden;
        Cost {
            params: (4 * d * d + d * hid + hid + hid * d + d) as u64,
            macs: attention_macs(n, n, d) + mlp_macs(n, d, hid),
        }
    }
}

#[derive(Clone, Debug)]
pub enum TailSpec {
    C2f(C2fSpec),
    Te(TeSpec),
}

impl TailSpec {
    pub fn name(&self) -> &str {
        match self {
            TailSpec::C2f(c) => &c.name,
            TailSpec::Te(t) => &t.name,
        }
    }

    fn params(&self, out: &mut Vec<ParamSpec>) {
        match self {
            TailSpec::C2f(c) => c.params(out),
            TailSpec::Te(t) => t.params(out),
        }
    }

    pub fn cost(&self, h: usize, w: usize) -> Cost {
        match self {
            TailSpec::C2f(c) => c.cost(h, w),
            TailSpec::Te(t) => t.cost(h, w),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StageSpec {
    pub down: ConvLayerSpec,
    pub tail: TailSpec,
}

#[derive(Clone, Debug)]
pub struct NeckSpec {
    pub fpn4: C2fSpec,
    pub fpn3: C2fSpec,
    pub pan4_down: ConvLayerSpec,
    pub pan4: C2fSpec,
    pub pan5_down: ConvLayerSpec,
    pub pan5: C2fSpec,
}

/// Conv with bias and no normalization or activation; emits raw logits.
#[derive(Clone, Debug)]
pub struct PredConvSpec {
    pub name: String,
    pub c_in: usize,
    pub c_out: usize,
}

#[derive(Clone, Debug)]
pub struct AnchorHeadSpec {
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub pred: PredConvSpec,
}

#[derive(Clone, Debug)]
pub struct DecoderLayerSpec {
    pub name: String,
}

#[derive(Clone, Debug)]
pub struct SetHeadSpec {
    pub name: String,
    pub in_channels: [usize; 3],
    pub cfg: TeConfig,
    pub num_queries: usize,
    pub num_classes: usize,
    pub layers: Vec<DecoderLayerSpec>,
}

#[derive(Clone, Debug)]
pub enum HeadSpec {
    Anchor(Vec<AnchorHeadSpec>),
    SetPrediction(SetHeadSpec),
}

/// Bound parameters of one decoder layer of the set-prediction head.
#[derive(Clone, Debug)]
pub struct DecoderLayerParams {
    pub self_attn: AttentionWeights,
    pub cross_attn: AttentionWeights,
    pub mlp: MlpWeights,
}

#[derive(Clone, Debug)]
pub struct SetHeadParams {
    /// Per-scale `(weight C_i x d, bias d)` token projections.
    pub proj: Vec<(Tensor, Tensor)>,
    pub queries: Tensor,
    pub layers: Vec<DecoderLayerParams>,
    pub class_w: Tensor,
    pub class_b: Tensor,
    pub box_w: Tensor,
    pub box_b: Tensor,
}

#[derive(Clone, Debug)]
pub struct AnchorHeadParams {
    pub conv1: ConvBlockParams,
    pub conv2: ConvBlockParams,
    pub pred_w: Tensor,
    pub pred_b: Tensor,
}

#[derive(Clone, Debug)]
pub enum TailParams {
    C2f(C2fParams),
    Te(TeWeights),
}

#[derive(Clone, Debug)]
pub enum HeadParams {
    Anchor(Vec<AnchorHeadParams>),
    SetPrediction(SetHeadParams),
}

/// All layers with their weights attached, ready to run.
#[derive(Clone, Debug)]
pub struct BoundNetwork {
    pub stem: ConvBlockParams,
    pub stages: Vec<(ConvLayer, TailParams)>,
    pub sppf: SppfParams,
    pub fpn4: C2fParams,
    pub fpn3: C2fParams,
    pub pan4_down: ConvLayer,
    pub pan4: C2fParams,
    pub pan5_down: ConvLayer,
    pub pan5: C2fParams,
    pub head: HeadParams,
}

#[derive(Clone, Debug)]
pub struct Graph {
    pub config: ModelConfig,
    pub stem: ConvSpec,
    pub stages: Vec<StageSpec>,
    pub sppf: SppfSpec,
    pub neck: NeckSpec,
    pub head: HeadSpec,
}

impl Graph {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let ch: Vec<usize> = BASE_WIDTHS.iter().map(|&b| cfg.channels(b)).collect();
        let ghost_for = |name: &str| -> Option<(usize, usize)> {
            let on = match (&cfg.ghost_layers, cfg.conv_kind) {
                (Some(list), _) => list.iter().any(|n| n == name),
                (None, ConvKind::Ghost) => true,
                (None, ConvKind::Standard) => false,
            };
            on.then_some((cfg.ghost_ratio, cfg.ghost_cheap_kernel))
        };

        let stem = ConvSpec::new("backbone.stem", 3, ch[0], 3, 2);
        let mut stages = Vec::with_capacity(4);
        for s in 0..4 {
            let prefix = format!("backbone.stage{}", s + 1);
            let down_name = format!("{prefix}.down");
            let down = ConvLayerSpec::build(
                down_name.clone(),
                ch[s],
                ch[s + 1],
                2,
                ghost_for(&down_name),
            )?;
            let tail = if s == 3 && cfg.tail_kind == TailKind::Te {
                TailSpec::Te(TeSpec {
                    name: format!("{prefix}.te"),
                    cfg: cfg.te.clone(),
                })
            } else {
                TailSpec::C2f(C2fSpec::new(
                    format!("{prefix}.c2f"),
                    ch[s + 1],
                    ch[s + 1],
                    cfg.depth(BASE_DEPTHS[s]),
                    true,
                ))
            };
            stages.push(StageSpec { down, tail });
        }
        let (c3, c4, c5) = (ch[2], ch[3], ch[4]);
        let sppf = SppfSpec {
            name: "backbone.sppf".into(),
            entry: ConvSpec::new("backbone.sppf.entry", c5, c5 / 2, 1, 1),
            exit: ConvSpec::new("backbone.sppf.exit", 4 * (c5 / 2), c5, 1, 1),
            pool_kernel: cfg.sppf_kernel,
        };

        let n = cfg.depth(1);
        let neck_conv = |name: &str, c: usize| {
            ConvLayerSpec::build(name.to_string(), c, c, 2, ghost_for(name))
        };
        let neck = NeckSpec {
            fpn4: C2fSpec::new("neck.fpn4.c2f".into(), c5 + c4, c4, n, false),
            fpn3: C2fSpec::new("neck.fpn3.c2f".into(), c4 + c3, c3, n, false),
            pan4_down: neck_conv("neck.pan4.down", c3)?,
            pan4: C2fSpec::new("neck.pan4.c2f".into(), c3 + c4, c4, n, false),
            pan5_down: neck_conv("neck.pan5.down", c4)?,
            pan5: C2fSpec::new("neck.pan5.c2f".into(), c4 + c5, c5, n, false),
        };

        let head = match cfg.head_kind {
            HeadKind::AnchorNms => HeadSpec::Anchor(
                [(3, c3), (4, c4), (5, c5)]
                    .iter()
                    .map(|&(level, c)| {
                        let p = format!("head.anchor.p{level}");
                        AnchorHeadSpec {
                            conv1: ConvSpec::new(format!("{p}.conv1"), c, c, 3, 1),
                            conv2: ConvSpec::new(format!("{p}.conv2"), c, c, 3, 1),
                            pred: PredConvSpec {
                                name: format!("{p}.pred"),
                                c_in: c,
                                c_out: cfg.head_channels(),
                            },
                        }
                    })
                    .collect(),
            ),
            HeadKind::SetPrediction => HeadSpec::SetPrediction(SetHeadSpec {
                name: "head.set".into(),
                in_channels: [c3, c4, c5],
                cfg: cfg.te.clone(),
                num_queries: cfg.detr_queries,
                num_classes: cfg.num_classes,
                layers: (0..cfg.detr_decoder_layers)
                    .map(|i| DecoderLayerSpec {
                        name: format!("head.set.layer{i}"),
                    })
                    .collect(),
            }),
        };

        let graph = Self {
            config: cfg.clone(),
            stem,
            stages,
            sppf,
            neck,
            head,
        };
        if let Some(list) = &cfg.ghost_layers {
            let known: Vec<&str> = graph.downsample_layers().iter().map(|l| l.name()).collect();
            if let Some(bad) = list.iter().find(|n| !known.contains(&n.as_str())) {
                return Err(Error::Config(format!(
                    "ghost_layers names unknown layer `{bad}` (downsampling layers: {})",
                    known.join(", ")
                )));
            }
        }
        Ok(graph)
    }

    /// Every downsampling conv layer, in graph order.
    pub fn downsample_layers(&self) -> Vec<&ConvLayerSpec> {
        let mut v: Vec<&ConvLayerSpec> = self.stages.iter().map(|s| &s.down).collect();
        v.push(&self.neck.pan4_down);
        v.push(&self.neck.pan5_down);
        v
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        self.stem.params(&mut out);
        for s in &self.stages {
            s.down.params(&mut out);
            s.tail.params(&mut out);
        }
        self.sppf.entry.params(&mut out);
        self.sppf.exit.params(&mut out);
        let nk = &self.neck;
        nk.fpn4.params(&mut out);
        nk.fpn3.params(&mut out);
        nk.pan4_down.params(&mut out);
        nk.pan4.params(&mut out);
        nk.pan5_down.params(&mut out);
        nk.pan5.params(&mut out);
        match &self.head {
            HeadSpec::Anchor(heads) => {
                for h in heads {
                    h.conv1.params(&mut out);
                    h.conv2.params(&mut out);
                    out.push(ParamSpec::new(
                        format!("{}.weight", h.pred.name),
                        vec![h.pred.c_out, h.pred.c_in, 1, 1],
                        Init::Uniform { fan_in: h.pred.c_in },
                    ));
                    out.push(ParamSpec::new(
                        format!("{}.bias", h.pred.name),
                        vec![h.pred.c_out],
                        Init::Uniform { fan_in: h.pred.c_in },
                    ));
                }
            }
            HeadSpec::SetPrediction(h) => {
                let d = h.cfg.d_model;
                for (i, &c) in h.in_channels.iter().enumerate() {
                    linear_params(&mut out, &format!("{}.proj{}", h.name, i + 3), c, d);
                }
                out.push(ParamSpec::new(
                    format!("{}.queries", h.name),
                    vec![h.num_queries, d],
                    Init::Uniform { fan_in: 1 },
                ));
                for l in &h.layers {
                    attention_params(&mut out, &format!("{}.self_attn", l.name), d);
                    attention_params(&mut out, &format!("{}.cross_attn", l.name), d);
                    mlp_params(&mut out, &format!("{}.mlp", l.name), d, h.cfg.mlp_hidden);
                }
                linear_params(&mut out, &format!("{}.class", h.name), d, h.num_classes);
                linear_params(&mut out, &format!("{}.box", h.name), d, 4);
            }
        }
        out
    }

    pub fn init_weights(&self, seed: u64) -> Result<ModelWeights> {
        ModelWeights::init(&self.param_specs(), seed)
    }

    pub fn zero_weights(&self) -> Result<ModelWeights> {
        ModelWeights::zero_init(&self.param_specs())
    }

    pub fn check_weights(&self, w: &ModelWeights) -> Result<()> {
        w.check_against(&self.param_specs())
    }

    /// Attaches stored tensors to every layer.
    pub fn bind(&self, w: &ModelWeights) -> Result<BoundNetwork> {
        let stages = self
            .stages
            .iter()
            .map(|s| {
                let tail = match &s.tail {
                    TailSpec::C2f(c) => TailParams::C2f(c.bind(w)?),
                    TailSpec::Te(t) => TailParams::Te(t.bind(w)?),
                };
                Ok((s.down.bind(w)?, tail))
            })
            .collect::<Result<Vec<_>>>()?;
        let head = match &self.head {
            HeadSpec::Anchor(heads) => HeadParams::Anchor(
                heads
                    .iter()
                    .map(|h| {
                        Ok(AnchorHeadParams {
                            conv1: h.conv1.bind(w)?,
                            conv2: h.conv2.bind(w)?,
                            pred_w: w.get(&format!("{}.weight", h.pred.name))?.clone(),
                            pred_b: w.get(&format!("{}.bias", h.pred.name))?.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            HeadSpec::SetPrediction(h) => {
                let get = |s: String| -> Result<Tensor> { Ok(w.get(&s)?.clone()) };
                let proj = (3..=5)
                    .map(|lvl| {
                        Ok((
                            get(format!("{}.proj{lvl}.weight", h.name))?,
                            get(format!("{}.proj{lvl}.bias", h.name))?,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let layers = h
                    .layers
                    .iter()
                    .map(|l| {
                        Ok(DecoderLayerParams {
                            self_attn: bind_attention(w, &format!("{}.self_attn", l.name))?,
                            cross_attn: bind_attention(w, &format!("{}.cross_attn", l.name))?,
                            mlp: bind_mlp(w, &format!("{}.mlp", l.name))?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                HeadParams::SetPrediction(SetHeadParams {
                    proj,
                    queries: get(format!("{}.queries", h.name))?,
                    layers,
                    class_w: get(format!("{}.class.weight", h.name))?,
                    class_b: get(format!("{}.class.bias", h.name))?,
                    box_w: get(format!("{}.box.weight", h.name))?,
                    box_b: get(format!("{}.box.bias", h.name))?,
                })
            }
        };
        Ok(BoundNetwork {
            stem: self.stem.bind(w)?,
            stages,
            sppf: self.sppf.bind(w)?,
            fpn4: self.neck.fpn4.bind(w)?,
            fpn3: self.neck.fpn3.bind(w)?,
            pan4_down: self.neck.pan4_down.bind(w)?,
            pan4: self.neck.pan4.bind(w)?,
            pan5_down: self.neck.pan5_down.bind(w)?,
            pan5: self.neck.pan5.bind(w)?,
            head,
        })
    }
}
