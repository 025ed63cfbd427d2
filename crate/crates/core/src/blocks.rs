//! Composite convolution blocks: Conv (conv + BN + SiLU), GhostConv,
//! Bottleneck, C2f and SPPF.

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Tensor;

pub const BN_EPS: f32 = 1e-5;

/// Parameter and multiply-accumulate totals for one block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Cost {
    pub params: u64,
    pub macs: u64,
}

impl std::ops::Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        Cost {
            params: self.params + rhs.params,
            macs: self.macs + rhs.macs,
        }
    }
}

impl std::iter::Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::default(), |a, b| a + b)
    }
}

fn conv_out(size: usize, k: usize, stride: usize, padding: usize) -> usize {
    (size + 2 * padding).saturating_sub(k) / stride + 1
}

/// Convolution followed by inference batch norm and SiLU.
#[derive(Clone, Debug)]
pub struct ConvBlockParams {
    pub weight: Tensor,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub mean: Tensor,
    pub var: Tensor,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvBlockParams {
    pub fn new(
        weight: Tensor,
        gamma: Tensor,
        beta: Tensor,
        mean: Tensor,
        var: Tensor,
        stride: usize,
        groups: usize,
    ) -> Result<Self> {
        let (o, _, kh, kw) = weight.nchw()?;
        if kh != kw {
            return Err(Error::Shape(format!("non-square kernel {kh}x{kw}")));
        }
        if stride == 0 || groups == 0 || o % groups != 0 {
            return Err(Error::InvalidArgument(format!(
                "bad conv block: stride {stride}, groups {groups}, out {o}"
            )));
        }
        for t in [&gamma, &beta, &mean, &var] {
            if t.len() != o {
                return Err(Error::Shape(format!(
                    "batchnorm vector of length {} for {o} channels",
                    t.len()
                )));
            }
        }
        Ok(Self {
            weight,
            gamma,
            beta,
            mean,
            var,
            stride,
            padding: kh / 2,
            groups,
        })
    }

    /// Block with the given weight and identity batch norm.
    pub fn with_identity_bn(weight: Tensor, stride: usize, groups: usize) -> Result<Self> {
        let o = weight.dims()[0];
        let ones = Tensor::full(&[o], 1.0)?;
        let zeros = Tensor::zeros(&[o])?;
        Self::new(weight, ones.clone(), zeros.clone(), zeros, ones, stride, groups)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1] * self.groups
    }

    pub fn kernel(&self) -> usize {
        self.weight.dims()[2]
    }

    pub fn weight_params(&self) -> u64 {
        self.weight.len() as u64
    }

    pub fn cost(&self, h: usize, w: usize) -> (Cost, usize, usize) {
        let k = self.kernel();
        let (ho, wo) = (
            conv_out(h, k, self.stride, self.padding),
            conv_out(w, k, self.stride, self.padding),
        );
        let o = self.out_channels() as u64;
        let cost = Cost {
            params: self.weight_params() + 4 * o,
            macs: self.weight_params() * (ho * wo) as u64,
        };
        (cost, ho, wo)
    }
}

pub fn conv_block_forward(x: &Tensor, p: &ConvBlockParams) -> Result<Tensor> {
    let y = ops::conv2d_grouped(x, &p.weight, None, p.stride, p.padding, p.groups)?;
    let y = ops::batchnorm_inference(&y, &p.gamma, &p.beta, &p.mean, &p.var, BN_EPS)?;
    Ok(ops::silu(&y))
}

/// Ghost convolution: a primary conv produces `C_out / ratio` maps and a
/// depthwise "cheap" conv derives the remaining `(ratio - 1) * C_out / ratio`.
#[derive(Clone, Debug)]
pub struct GhostConvParams {
    pub primary: ConvBlockParams,
    pub cheap: ConvBlockParams,
    pub ratio: usize,
}

impl GhostConvParams {
    pub fn new(primary: ConvBlockParams, cheap: ConvBlockParams, ratio: usize) -> Result<Self> {
        if ratio < 2 {
            return Err(Error::InvalidArgument(format!(
                "ghost ratio must be >= 2, got {ratio}"
            )));
        }
        let m = primary.out_channels();
        if cheap.groups != m || cheap.in_channels() != m {
            return Err(Error::Shape(format!(
                "cheap branch must be depthwise over {m} primary maps"
            )));
        }
        if cheap.out_channels() != (ratio - 1) * m {
            return Err(Error::Shape(format!(
                "cheap branch emits {} maps, expected {}",
                cheap.out_channels(),
                (ratio - 1) * m
            )));
        }
        if cheap.stride != 1 || cheap.kernel().is_multiple_of(2) {
            return Err(Error::InvalidArgument(
                "cheap branch must be stride 1 with an odd kernel".into(),
            ));
        }
        Ok(Self {
            primary,
            cheap,
            ratio,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.primary.out_channels() * self.ratio
    }

    pub fn weight_params(&self) -> u64 {
        self.primary.weight_params() + self.cheap.weight_params()
    }

    pub fn cost(&self, h: usize, w: usize) -> (Cost, usize, usize) {
        let (a, ho, wo) = self.primary.cost(h, w);
        let (b, _, _) = self.cheap.cost(ho, wo);
        (a + b, ho, wo)
    }
}

/// Checks that a ghost conv with this ratio can replace a standard conv with
/// `c_out` output channels.
pub fn ghost_split(c_out: usize, ratio: usize) -> Result<usize> {
    if ratio < 2 || !c_out.is_multiple_of(ratio) {
        return Err(Error::InvalidArgument(format!(
            "ghost ratio {ratio} does not divide {c_out} output channels"
        )));
    }
    Ok(c_out / ratio)
}

pub fn ghost_conv_forward(x: &Tensor, p: &GhostConvParams) -> Result<Tensor> {
    let primary = conv_block_forward(x, &p.primary)?;
    let ghosts = conv_block_forward(&primary, &p.cheap)?;
    ops::concat(&[&primary, &ghosts], 1)
}

/// Either convolution flavour; downsampling layers pick one per config.
#[derive(Clone, Debug)]
pub enum ConvLayer {
    Standard(ConvBlockParams),
    Ghost(GhostConvParams),
}

impl ConvLayer {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            ConvLayer::Standard(p) => conv_block_forward(x, p),
            ConvLayer::Ghost(p) => ghost_conv_forward(x, p),
        }
    }

    pub fn cost(&self, h: usize, w: usize) -> (Cost, usize, usize) {
        match self {
            ConvLayer::Standard(p) => p.cost(h, w),
            ConvLayer::Ghost(p) => p.cost(h, w),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BottleneckParams {
    pub first: ConvBlockParams,
    pub second: ConvBlockParams,
}

impl BottleneckParams {
    pub fn cost(&self, h: usize, w: usize) -> Cost {
        let (a, ho, wo) = self.first.cost(h, w);
        let (b, _, _) = self.second.cost(ho, wo);
        a + b
    }
}

pub fn bottleneck_forward(x: &Tensor, p: &BottleneckParams, shortcut: bool) -> Result<Tensor> {
    let (_, c, _, _) = x.nchw()?;
    if shortcut && p.second.out_channels() != c {
        return Err(Error::Shape(format!(
            "bottleneck shortcut needs {c} output channels, block emits {}",
            p.second.out_channels()
        )));
    }
    let y = conv_block_forward(&conv_block_forward(x, &p.first)?, &p.second)?;
    if shortcut {
        ops::add(x, &y)
    } else {
        Ok(y)
    }
}

#[derive(Clone, Debug)]
pub struct C2fParams {
    pub entry: ConvBlockParams,
    pub bottlenecks: Vec<BottleneckParams>,
    pub exit: ConvBlockParams,
    pub shortcut: bool,
}

impl C2fParams {
    pub fn new(
        entry: ConvBlockParams,
        bottlenecks: Vec<BottleneckParams>,
        exit: ConvBlockParams,
        shortcut: bool,
    ) -> Result<Self> {
        let split = entry.out_channels();
        if !split.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "C2f entry emits {split} channels, which cannot be split in two"
            )));
        }
        let hidden = split / 2;
        for b in &bottlenecks {
            if b.first.in_channels() != hidden || b.second.out_channels() != hidden {
                return Err(Error::Shape(format!(
                    "C2f bottleneck must map {hidden} -> {hidden} channels"
                )));
            }
        }
        let concat_width = (2 + bottlenecks.len()) * hidden;
        if exit.in_channels() != concat_width {
            return Err(Error::Shape(format!(
                "C2f exit expects {} channels, concat yields {concat_width}",
                exit.in_channels()
            )));
        }
        Ok(Self {
            entry,
            bottlenecks,
            exit,
            shortcut,
        })
    }

    pub fn hidden(&self) -> usize {
        self.entry.out_channels() / 2
    }

    pub fn cost(&self, h: usize, w: usize) -> Cost {
        let (entry, ho, wo) = self.entry.cost(h, w);
        let inner: Cost = self.bottlenecks.iter().map(|b| b.cost(ho, wo)).sum();
        let (exit, _, _) = self.exit.cost(ho, wo);
        entry + inner + exit
    }
}

pub fn c2f_forward(x: &Tensor, p: &C2fParams) -> Result<Tensor> {
    let y = conv_block_forward(x, &p.entry)?;
    let (_, c, _, _) = y.nchw()?;
    if c % 2 != 0 {
        return Err(Error::Shape(format!("cannot split {c} channels in half")));
    }
    let hidden = c / 2;
    let mut parts = vec![ops::narrow(&y, 1, 0, hidden)?, ops::narrow(&y, 1, hidden, hidden)?];
    for b in &p.bottlenecks {
        let next = bottleneck_forward(parts.last().expect("non-empty"), b, p.shortcut)?;
        parts.push(next);
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    conv_block_forward(&ops::concat(&refs, 1)?, &p.exit)
}

#[derive(Clone, Debug)]
pub struct SppfParams {
    pub entry: ConvBlockParams,
    pub exit: ConvBlockParams,
    pub pool_kernel: usize,
}

impl SppfParams {
    pub fn new(entry: ConvBlockParams, exit: ConvBlockParams, pool_kernel: usize) -> Result<Self> {
        if pool_kernel.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "SPPF pool kernel must be odd, got {pool_kernel}"
            )));
        }
        if exit.in_channels() != 4 * entry.out_channels() {
            return Err(Error::Shape(format!(
                "SPPF exit expects {} channels, concat yields {}",
                exit.in_channels(),
                4 * entry.out_channels()
            )));
        }
        Ok(Self {
            entry,
            exit,
            pool_kernel,
        })
    }

    pub fn cost(&self, h: usize, w: usize) -> Cost {
        let (a, ho, wo) = self.entry.cost(h, w);
        let (b, _, _) = self.exit.cost(ho, wo);
        a + b
    }
}

pub fn sppf_forward(x: &Tensor, p: &SppfParams) -> Result<Tensor> {
    let k = p.pool_kernel;
    let h = conv_block_forward(x, &p.entry)?;
    let p1 = ops::maxpool2d(&h, k, 1, k / 2)?;
    let p2 = ops::maxpool2d(&p1, k, 1, k / 2)?;
    let p3 = ops::maxpool2d(&p2, k, 1, k / 2)?;
    conv_block_forward(&ops::concat(&[&h, &p1, &p2, &p3], 1)?, &p.exit)
}
