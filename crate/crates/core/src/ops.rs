//! Numeric kernels over [`Tensor`].
//!
//! Every kernel is a pure function of its inputs. Results are checked for
//! NaN/Inf before being returned.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 2D cross-correlation, NCHW input and OIHW weight.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    conv2d_grouped(input, weight, bias, stride, padding, 1)
}

/// Grouped 2D cross-correlation. The weight is `O x (C / groups) x kH x kW`;
/// `groups == C` gives a depthwise convolution.
pub fn conv2d_grouped(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
    groups: usize,
) -> Result<Tensor> {
    let (n, c, h, w) = input.nchw()?;
    let (o, ci, kh, kw) = weight.nchw()?;
    if stride == 0 || groups == 0 {
        return Err(Error::InvalidArgument(
            "stride and groups must be at least 1".into(),
        ));
    }
    if c % groups != 0 || o % groups != 0 {
        return Err(Error::Shape(format!(
            "channels in={c} out={o} not divisible by groups={groups}"
        )));
    }
    if ci * groups != c {
        return Err(Error::Shape(format!(
            "weight expects {} input channels, input has {c}",
            ci * groups
        )));
    }
    if let Some(b) = bias {
        if b.len() != o {
            return Err(Error::Shape(format!(
                "bias has {} entries for {o} output channels",
                b.len()
            )));
        }
    }
    let padded_h = h + 2 * padding;
    let padded_w = w + 2 * padding;
    if kh > padded_h || kw > padded_w {
        return Err(Error::Shape(format!(
            "kernel {kh}x{kw} does not fit padded input {padded_h}x{padded_w}"
        )));
    }
    let ho = (padded_h - kh) / stride + 1;
    let wo = (padded_w - kw) / stride + 1;

    let out_per_group = o / groups;
    let mut out = vec![0.0f32; n * o * ho * wo];
    let wdata = weight.data();
    let idata = input.data();

    // Valid output-column range for each kernel column: ox such that
    // 0 <= ox*stride + kx - padding < w.
    let col_ranges: Vec<(usize, usize)> = (0..kw)
        .map(|kx| {
            let lo = padding.saturating_sub(kx).div_ceil(stride);
            let hi = if w + padding > kx {
                ((w + padding - kx - 1) / stride + 1).min(wo)
            } else {
                0
            };
            (lo, hi.max(lo))
        })
        .collect();

    for b in 0..n {
        let in_batch = &idata[b * c * h * w..(b + 1) * c * h * w];
        let out_batch = &mut out[b * o * ho * wo..(b + 1) * o * ho * wo];
        for oc in 0..o {
            let g = oc / out_per_group;
            let bias_v = bias.map_or(0.0, |t| t.data()[oc]);
            let out_plane = &mut out_batch[oc * ho * wo..(oc + 1) * ho * wo];
            for oy in 0..ho {
                let row = &mut out_plane[oy * wo..(oy + 1) * wo];
                row.fill(bias_v);
                for icg in 0..ci {
                    let ic = g * ci + icg;
                    let in_plane = &in_batch[ic * h * w..(ic + 1) * h * w];
                    let wbase = (oc * ci + icg) * kh * kw;
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let in_row = &in_plane[iy as usize * w..(iy as usize + 1) * w];
                        for (kx, &(lo, hi)) in col_ranges.iter().enumerate() {
                            let wv = wdata[wbase + ky * kw + kx];
                            if wv == 0.0 || lo >= hi {
                                continue;
                            }
                            let start = lo * stride + kx - padding;
                            if stride == 1 {
                                let src = &in_row[start..start + (hi - lo)];
                                for (dst, &s) in row[lo..hi].iter_mut().zip(src) {
                                    *dst += wv * s;
                                }
                            } else {
                                for (j, dst) in row[lo..hi].iter_mut().enumerate() {
                                    *dst += wv * in_row[start + j * stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, o, ho, wo], out)?.ensure_finite("conv2d")
}

/// Inference-mode batch normalization with fixed statistics.
pub fn batchnorm_inference(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    mean: &Tensor,
    var: &Tensor,
    eps: f32,
) -> Result<Tensor> {
    let (n, c, h, w) = x.nchw()?;
    for (name, t) in [("gamma", gamma), ("beta", beta), ("mean", mean), ("var", var)] {
        if t.len() != c {
            return Err(Error::Shape(format!(
                "batchnorm {name} has {} entries for {c} channels",
                t.len()
            )));
        }
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }
    if let Some(v) = var.data().iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "batchnorm variance must be non-negative, got {v}"
        )));
    }
    let plane = h * w;
    let mut out = x.data().to_vec();
    for ch in 0..c {
        let scale = gamma.data()[ch] / (var.data()[ch] + eps).sqrt();
        let shift = beta.data()[ch] - mean.data()[ch] * scale;
        for b in 0..n {
            let start = (b * c + ch) * plane;
            for v in &mut out[start..start + plane] {
                *v = *v * scale + shift;
            }
        }
    }
    Tensor::new(vec![n, c, h, w], out)?.ensure_finite("batchnorm")
}

#[inline]
pub(crate) fn sigmoid_scalar(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn silu_scalar(x: f32) -> f32 {
    x * sigmoid_scalar(x)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn silu(x: &Tensor) -> Tensor {
    x.map(silu_scalar)
}

/// Splits `dims` around `axis` into (outer, axis length, inner) extents.
fn axis_extents(dims: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= dims.len() {
        return Err(Error::InvalidArgument(format!(
            "axis {axis} out of range for rank {}",
            dims.len()
        )));
    }
    let outer = dims[..axis].iter().product();
    let inner = dims[axis + 1..].iter().product();
    Ok((outer, dims[axis], inner))
}

/// Softmax along `axis`, max-subtracted for stability.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, len, inner) = axis_extents(x.dims(), axis)?;
    let mut out = x.data().to_vec();
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let max = (0..len).map(|k| out[at(k)]).fold(f32::NEG_INFINITY, f32::max);
            let mut sum = 0.0f32;
            for k in 0..len {
                let e = (out[at(k)] - max).exp();
                out[at(k)] = e;
                sum += e;
            }
            for k in 0..len {
                out[at(k)] /= sum;
            }
        }
    }
    Tensor::new(x.dims().to_vec(), out)?.ensure_finite("softmax")
}

/// Row-wise softmax over the last axis of a matrix, in place.
pub(crate) fn softmax_rows_inplace(data: &mut [f32], cols: usize) {
    for row in data.chunks_mut(cols) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.matrix_dims()?;
    let (k2, n) = b.matrix_dims()?;
    if k != k2 {
        return Err(Error::Shape(format!(
            "matmul inner dims differ: {m}x{k} * {k2}x{n}"
        )));
    }
    let mut out = vec![0.0f32; m * n];
    matmul_into(a.data(), b.data(), &mut out, m, k, n);
    Tensor::new(vec![m, n], out)?.ensure_finite("matmul")
}

/// `out += a (m x k) * b (k x n)`, all row-major.
pub(crate) fn matmul_into(a: &[f32], b: &[f32], out: &mut [f32], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in out_row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (r, c) = a.matrix_dims()?;
    let src = a.data();
    Tensor::from_fn(&[c, r], |i| src[(i % r) * c + i / r])
}

/// `x * weight + bias` with `x: n x d_in`, `weight: d_in x d_out`.
pub fn linear(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (m, k) = x.matrix_dims()?;
    let (k2, n) = weight.matrix_dims()?;
    if k != k2 {
        return Err(Error::Shape(format!(
            "linear input width {k} does not match weight {k2}x{n}"
        )));
    }
    let mut out = vec![0.0f32; m * n];
    if let Some(b) = bias {
        if b.len() != n {
            return Err(Error::Shape(format!(
                "linear bias has {} entries for width {n}",
                b.len()
            )));
        }
        for row in out.chunks_mut(n) {
            row.copy_from_slice(b.data());
        }
    }
    matmul_into(x.data(), weight.data(), &mut out, m, k, n);
    Tensor::new(vec![m, n], out)?.ensure_finite("linear")
}

/// Windowed max; padding cells behave as negative infinity.
pub fn maxpool2d(x: &Tensor, k: usize, stride: usize, padding: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.nchw()?;
    if k == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "pool kernel and stride must be at least 1".into(),
        ));
    }
    if 2 * padding > k {
        return Err(Error::InvalidArgument(format!(
            "pool padding {padding} exceeds half the kernel {k}"
        )));
    }
    if k > h + 2 * padding || k > w + 2 * padding {
        return Err(Error::Shape(format!(
            "pool window {k} does not fit padded input {}x{}",
            h + 2 * padding,
            w + 2 * padding
        )));
    }
    let ho = (h + 2 * padding - k) / stride + 1;
    let wo = (w + 2 * padding - k) / stride + 1;
    let src = x.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in src.chunks(h * w) {
        for oy in 0..ho {
            let y0 = (oy * stride) as isize - padding as isize;
            let ys = y0.max(0) as usize..((y0 + k as isize).min(h as isize)) as usize;
            for ox in 0..wo {
                let x0 = (ox * stride) as isize - padding as isize;
                let xs = x0.max(0) as usize..((x0 + k as isize).min(w as isize)) as usize;
                let mut m = f32::NEG_INFINITY;
                for yy in ys.clone() {
                    for &v in &plane[yy * w + xs.start..yy * w + xs.end] {
                        m = m.max(v);
                    }
                }
                out.push(m);
            }
        }
    }
    Tensor::new(vec![n, c, ho, wo], out)?.ensure_finite("maxpool2d")
}

pub fn upsample_nearest(x: &Tensor, scale: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.nchw()?;
    if scale < 1 {
        return Err(Error::InvalidArgument("upsample scale must be >= 1".into()));
    }
    let (ho, wo) = (h * scale, w * scale);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in x.data().chunks(h * w) {
        for oy in 0..ho {
            let row = &plane[(oy / scale) * w..(oy / scale + 1) * w];
            for ox in 0..wo {
                out.push(row[ox / scale]);
            }
        }
    }
    Tensor::new(vec![n, c, ho, wo], out)
}

pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
    let rank = first.rank();
    let (outer, _, inner) = axis_extents(first.dims(), axis)?;
    let mut total = 0;
    for p in parts {
        let same_elsewhere = p.rank() == rank
            && p.dims()
                .iter()
                .zip(first.dims())
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !same_elsewhere {
            return Err(Error::Shape(format!(
                "concat axis {axis}: dims {:?} incompatible with {:?}",
                p.dims(),
                first.dims()
            )));
        }
        total += p.dims()[axis];
    }
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let chunk = p.dims()[axis] * inner;
            out.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    let mut dims = first.dims().to_vec();
    dims[axis] = total;
    Tensor::new(dims, out)
}

/// Contiguous slice `[start, start + len)` along `axis`.
pub fn narrow(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let (outer, size, inner) = axis_extents(x.dims(), axis)?;
    if len == 0 || start + len > size {
        return Err(Error::InvalidArgument(format!(
            "narrow [{start}, {}) out of range for axis size {size}",
            start + len
        )));
    }
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * size + start) * inner;
        out.extend_from_slice(&x.data()[base..base + len * inner]);
    }
    let mut dims = x.dims().to_vec();
    dims[axis] = len;
    Tensor::new(dims, out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "add dims differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.dims().to_vec(), data)?.ensure_finite("add")
}
