//! Naive reference implementations shared by the integration tests. All
//! arithmetic is plain nested loops in f64.

#![allow(dead_code)]

use iyolo::evalkit::BBox;
use iyolo::postproc::Detection;
use iyolo::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rand_tensor(rng: &mut ChaCha8Rng, dims: &[usize], lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(dims, |_| rng.gen_range(lo..hi)).unwrap()
}

pub fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| f64::from(v)).collect()
}

/// Dense f64 array with NCHW-style indexing helpers.
#[derive(Clone, Debug)]
pub struct Arr {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Arr {
    pub fn from_tensor(t: &Tensor) -> Self {
        Self { dims: t.dims().to_vec(), data: to_f64(t) }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self { dims: dims.to_vec(), data: vec![0.0; dims.iter().product()] }
    }

    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }
}

pub fn naive_conv(x: &Arr, w: &Arr, bias: Option<&[f64]>, stride: usize, pad: usize, groups: usize) -> Arr {
    let (n, c, h, wd) = (x.dims[0], x.dims[1], x.dims[2], x.dims[3]);
    let (o, ci, k, _) = (w.dims[0], w.dims[1], w.dims[2], w.dims[3]);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let opg = o / groups;
    assert_eq!(ci * groups, c);
    let mut out = Arr::zeros(&[n, o, ho, wo]);
    for b in 0..n {
        for oc in 0..o {
            let g = oc / opg;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias.map_or(0.0, |bb| bb[oc]);
                    for i in 0..ci {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.at(&[b, g * ci + i, iy as usize, ix as usize]) * w.at(&[oc, i, ky, kx]);
                            }
                        }
                    }
                    out.set(&[b, oc, oy, ox], acc);
                }
            }
        }
    }
    out
}

pub fn naive_matmul(a: &Arr, b: &Arr) -> Arr {
    let (m, k, n) = (a.dims[0], a.dims[1], b.dims[1]);
    let mut out = Arr::zeros(&[m, n]);
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for t in 0..k {
                s += a.at(&[i, t]) * b.at(&[t, j]);
            }
            out.set(&[i, j], s);
        }
    }
    out
}

pub fn naive_maxpool(x: &Arr, k: usize, stride: usize, pad: usize) -> Arr {
    let (n, c, h, w) = (x.dims[0], x.dims[1], x.dims[2], x.dims[3]);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let mut out = Arr::zeros(&[n, c, ho, wo]);
    for b in 0..n {
        for ch in 0..c {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f64::NEG_INFINITY;
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && iy < h as isize && ix < w as isize {
                                best = best.max(x.at(&[b, ch, iy as usize, ix as usize]));
                            }
                        }
                    }
                    out.set(&[b, ch, oy, ox], best);
                }
            }
        }
    }
    out
}

/// Softmax along `axis` of an arbitrary-rank array.
pub fn naive_softmax(x: &Arr, axis: usize) -> Arr {
    let outer: usize = x.dims[..axis].iter().product();
    let len = x.dims[axis];
    let inner: usize = x.dims[axis + 1..].iter().product();
    let mut out = x.clone();
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * len + j) * inner + i;
            let m = (0..len).map(|j| x.data[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..len).map(|j| (x.data[idx(j)] - m).exp()).sum();
            for j in 0..len {
                out.data[idx(j)] = (x.data[idx(j)] - m).exp() / z;
            }
        }
    }
    out
}

pub fn silu(v: f64) -> f64 {
    v / (1.0 + (-v).exp())
}

/// conv -> inference BN (eps 1e-5) -> SiLU
pub fn naive_conv_block(x: &Arr, p: &iyolo::blocks::ConvBlockParams) -> Arr {
    let mut y = naive_conv(x, &Arr::from_tensor(&p.weight), None, p.stride, p.padding, p.groups);
    let (g, b, m, v) = (to_f64(&p.gamma), to_f64(&p.beta), to_f64(&p.mean), to_f64(&p.var));
    let (n, c, h, w) = (y.dims[0], y.dims[1], y.dims[2], y.dims[3]);
    for bi in 0..n {
        for ch in 0..c {
            for yy in 0..h {
                for xx in 0..w {
                    let t = y.at(&[bi, ch, yy, xx]);
                    let bn = g[ch] * (t - m[ch]) / (v[ch] + 1e-5).sqrt() + b[ch];
                    y.set(&[bi, ch, yy, xx], silu(bn));
                }
            }
        }
    }
    y
}

/// Concatenation along channels of NCHW arrays.
pub fn cat_channels(parts: &[&Arr]) -> Arr {
    let (n, h, w) = (parts[0].dims[0], parts[0].dims[2], parts[0].dims[3]);
    let c: usize = parts.iter().map(|p| p.dims[1]).sum();
    let mut out = Arr::zeros(&[n, c, h, w]);
    for b in 0..n {
        let mut base = 0;
        for p in parts {
            for ch in 0..p.dims[1] {
                for y in 0..h {
                    for x in 0..w {
                        out.set(&[b, base + ch, y, x], p.at(&[b, ch, y, x]));
                    }
                }
            }
            base += p.dims[1];
        }
    }
    out
}

pub fn max_abs_diff(t: &Tensor, a: &Arr) -> f64 {
    assert_eq!(t.dims(), a.dims.as_slice(), "shape mismatch");
    t.data()
        .iter()
        .zip(&a.data)
        .map(|(&x, &y)| (f64::from(x) - y).abs())
        .fold(0.0, f64::max)
}

/// Conv block with random weights and non-trivial BN statistics.
pub fn rand_conv_block(
    rng: &mut ChaCha8Rng,
    c_out: usize,
    c_in: usize,
    k: usize,
    stride: usize,
    groups: usize,
) -> iyolo::blocks::ConvBlockParams {
    iyolo::blocks::ConvBlockParams::new(
        rand_tensor(rng, &[c_out, c_in / groups, k, k], -0.5, 0.5),
        rand_tensor(rng, &[c_out], 0.5, 1.5),
        rand_tensor(rng, &[c_out], -0.2, 0.2),
        rand_tensor(rng, &[c_out], -0.2, 0.2),
        rand_tensor(rng, &[c_out], 0.5, 1.5),
        stride,
        groups,
    )
    .unwrap()
}

pub fn naive_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    if union > 0.0 { inter / union } else { 0.0 }
}

/// Greedy suppression by repeated selection of the best remaining box.
pub fn brute_force_nms(dets: &[Detection], thresh: f64) -> Vec<Detection> {
    let mut alive: Vec<usize> = (0..dets.len()).collect();
    let mut kept = Vec::new();
    while !alive.is_empty() {
        let mut best = 0;
        for (pos, &i) in alive.iter().enumerate() {
            let (a, b) = (&dets[i], &dets[alive[best]]);
            let better = a.score > b.score
                || (a.score == b.score && (a.class_id < b.class_id || (a.class_id == b.class_id && i < alive[best])));
            if better {
                best = pos;
            }
        }
        let top = dets[alive.remove(best)];
        alive.retain(|&i| !(dets[i].class_id == top.class_id && naive_iou(&dets[i].bbox, &top.bbox) > thresh));
        kept.push(top);
    }
    kept
}

pub fn random_detections(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<Detection> {
    (0..n)
        .map(|_| {
            let x1 = rng.gen_range(0.0..90.0);
            let y1 = rng.gen_range(0.0..90.0);
            Detection {
                class_id: rng.gen_range(0..classes),
                // coarse scores so ties occur
                score: f64::from(rng.gen_range(1..=20u8)) / 20.0,
                bbox: BBox::new(x1, y1, x1 + rng.gen_range(1.0..30.0), y1 + rng.gen_range(1.0..30.0)),
            }
        })
        .collect()
}

/// Lexicographically smallest optimal assignment by exhaustive search,
/// using the same tolerance as the library.
pub fn brute_force_assignment(cost: &[f64], n: usize, m: usize) -> Vec<(usize, usize)> {
    fn rec(
        cost: &[f64],
        n: usize,
        m: usize,
        r: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        out: &mut Vec<(f64, Vec<(usize, usize)>)>,
    ) {
        let k = n.min(m);
        if cur.len() == k {
            let c = cur.iter().map(|&(i, j)| cost[i * m + j]).sum();
            out.push((c, cur.clone()));
            return;
        }
        if r == n || n - r < k - cur.len() {
            return;
        }
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                cur.push((r, j));
                rec(cost, n, m, r + 1, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
        // row r left unmatched
        rec(cost, n, m, r + 1, used, cur, out);
    }
    let mut all = Vec::new();
    rec(cost, n, m, 0, &mut vec![false; m], &mut Vec::new(), &mut all);
    let best = all.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * cost.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    all.into_iter()
        .filter(|a| a.0 <= best + tol)
        .map(|a| a.1)
        .min()
        .unwrap()
}
