//! Per-layer forward and backward kernels.
//!
//! `forward` consumes the incoming activation and returns the outgoing one
//! plus whatever the backward pass needs. `backward` maps the gradient at
//! the layer output to the gradient at its input, accumulating parameter
//! gradients on the way.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::gru::{self, GruCache};
use super::{logistic, Layer, LayerKind};
use crate::rng::SplitMix64;
use crate::tensor::numel;
use crate::Tensor;

pub(crate) enum Cache {
    Input(Vec<f64>),
    Output { input: Vec<f64>, prediction: f64 },
    Relu(Vec<f64>),
    Dropout(Option<Vec<f64>>),
    Pool(Vec<usize>),
    Gru(GruCache),
}

struct Geometry2d {
    steps: usize,
    channels: usize,
    h: usize,
    w: usize,
    filters: usize,
    oh: usize,
    ow: usize,
}

fn geometry2d(layer: &Layer) -> Geometry2d {
    let i = &layer.in_dims;
    let o = &layer.out_dims;
    let r = i.len();
    Geometry2d {
        steps: if r == 4 { i[0] } else { 1 },
        channels: i[r - 3],
        h: i[r - 2],
        w: i[r - 1],
        filters: o[o.len() - 3],
        oh: o[o.len() - 2],
        ow: o[o.len() - 1],
    }
}

/// `(channels, length)` view of a 1-D signal layer input.
fn signal1d(dims: &[usize]) -> (usize, usize) {
    if dims.len() == 1 {
        (1, dims[0])
    } else {
        (dims[0], dims[1])
    }
}

pub(crate) fn forward(layer: &Layer, x: Vec<f64>, rng: Option<&mut SplitMix64>) -> (Vec<f64>, Cache) {
    match layer.kind {
        LayerKind::Dense { units } => {
            let w = layer.params[0].data();
            let b = layer.params[1].data();
            let d = x.len();
            let y = (0..units)
                .map(|u| b[u] + dot(&w[u * d..(u + 1) * d], &x))
                .collect();
            (y, Cache::Input(x))
        }
        LayerKind::Output => {
            let w = layer.params[0].data();
            let z = layer.params[1].data()[0] + dot(w, &x);
            let p = logistic(z);
            (
                vec![p],
                Cache::Output {
                    input: x,
                    prediction: p,
                },
            )
        }
        LayerKind::Relu => {
            let y: Vec<f64> = x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            (y.clone(), Cache::Relu(y))
        }
        LayerKind::Dropout { p } => match rng {
            Some(rng) if p > 0.0 => {
                let keep = 1.0 / (1.0 - p);
                let mask: Vec<f64> = x
                    .iter()
                    .map(|_| if rng.random::<f64>() >= p { keep } else { 0.0 })
                    .collect();
                let y = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
                (y, Cache::Dropout(Some(mask)))
            }
            _ => (x, Cache::Dropout(None)),
        },
        LayerKind::Conv2d { kernel, stride, .. } => {
            let g = geometry2d(layer);
            let w = layer.params[0].data();
            let b = layer.params[1].data();
            let [kh, kw] = kernel;
            let in_step = g.channels * g.h * g.w;
            let out_step = g.filters * g.oh * g.ow;
            let mut y = vec![0.0; g.steps * out_step];
            for t in 0..g.steps {
                let xs = &x[t * in_step..(t + 1) * in_step];
                let ys = &mut y[t * out_step..(t + 1) * out_step];
                for f in 0..g.filters {
                    for i in 0..g.oh {
                        for j in 0..g.ow {
                            let mut acc = b[f];
                            for c in 0..g.channels {
                                for u in 0..kh {
                                    let row = c * g.h * g.w + (i * stride + u) * g.w + j * stride;
                                    let wrow = ((f * g.channels + c) * kh + u) * kw;
                                    acc += dot(&w[wrow..wrow + kw], &xs[row..row + kw]);
                                }
                            }
                            ys[(f * g.oh + i) * g.ow + j] = acc;
                        }
                    }
                }
            }
            (y, Cache::Input(x))
        }
        LayerKind::Conv1d {
            filters,
            kernel,
            stride,
        } => {
            let (c_in, len) = signal1d(&layer.in_dims);
            let out_len = layer.out_dims[1];
            let w = layer.params[0].data();
            let b = layer.params[1].data();
            let mut y = vec![0.0; filters * out_len];
            // loop over positions innermost so each tap is one strided axpy
            for f in 0..filters {
                let yf = &mut y[f * out_len..(f + 1) * out_len];
                yf.fill(b[f]);
                for c in 0..c_in {
                    for k in 0..kernel {
                        let wk = w[(f * c_in + c) * kernel + k];
                        let start = c * len + k;
                        if stride == 1 {
                            axpy(yf, wk, &x[start..start + out_len]);
                        } else {
                            for (yi, xi) in yf.iter_mut().zip(x[start..].iter().step_by(stride)) {
                                *yi += wk * xi;
                            }
                        }
                    }
                }
            }
            (y, Cache::Input(x))
        }
        LayerKind::MaxPool { size, stride } => {
            let (y, idx) = maxpool(&layer.in_dims, &layer.out_dims, size, stride, &x);
            (y, Cache::Pool(idx))
        }
        LayerKind::Gru { units, sequences } => {
            let steps = layer.in_dims[0];
            let (y, cache) = gru::forward(&layer.params, units, steps, sequences, x);
            (y, Cache::Gru(cache))
        }
    }
}

fn maxpool(
    in_dims: &[usize],
    out_dims: &[usize],
    size: usize,
    stride: usize,
    x: &[f64],
) -> (Vec<f64>, Vec<usize>) {
    let n_out = numel(out_dims);
    let mut y = Vec::with_capacity(n_out);
    let mut idx = Vec::with_capacity(n_out);
    if in_dims.len() == 2 {
        let (c_n, len) = (in_dims[0], in_dims[1]);
        let out_len = out_dims[1];
        for c in 0..c_n {
            for i in 0..out_len {
                let start = c * len + i * stride;
                let (best, v) = argmax(&x[start..start + size]);
                y.push(v);
                idx.push(start + best);
            }
        }
    } else {
        let r = in_dims.len();
        let (h, w) = (in_dims[r - 2], in_dims[r - 1]);
        let (oh, ow) = (out_dims[r - 2], out_dims[r - 1]);
        let planes = numel(&in_dims[..r - 2]);
        for p in 0..planes {
            let base = p * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = base + i * stride * w + j * stride;
                    let mut v = x[best];
                    for u in 0..size {
                        for q in 0..size {
                            let k = base + (i * stride + u) * w + j * stride + q;
                            // strict comparison keeps the first maximum on ties
                            if x[k] > v {
                                v = x[k];
                                best = k;
                            }
                        }
                    }
                    y.push(v);
                    idx.push(best);
                }
            }
        }
    }
    (y, idx)
}

fn argmax(xs: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    (best, xs[best])
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four partial sums let the compiler vectorise without reassociating
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (p, q) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += p[k] * q[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += a * x`
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Returns the gradient with respect to the layer input. `grads` holds the
/// layer's parameter gradient accumulators in parameter order.
pub(crate) fn backward(layer: &Layer, cache: &Cache, up: &[f64], grads: &mut [Tensor]) -> Vec<f64> {
    let n_in = numel(&layer.in_dims);
    match (&layer.kind, cache) {
        (LayerKind::Dense { units }, Cache::Input(x)) => {
            let w = layer.params[0].data();
            let d = x.len();
            let (gw, gb) = split2(grads);
            let mut dx = vec![0.0; d];
            for u in 0..*units {
                let g = up[u];
                gb[u] += g;
                if g == 0.0 {
                    continue;
                }
                let row = &w[u * d..(u + 1) * d];
                let grow = &mut gw[u * d..(u + 1) * d];
                axpy(grow, g, x);
                axpy(&mut dx, g, row);
            }
            dx
        }
        (LayerKind::Output, Cache::Output { input, prediction }) => {
            let w = layer.params[0].data();
            let dz = up[0] * prediction * (1.0 - prediction);
            let (gw, gb) = split2(grads);
            gb[0] += dz;
            for (g, x) in gw.iter_mut().zip(input) {
                *g += dz * x;
            }
            w.iter().map(|wk| dz * wk).collect()
        }
        (LayerKind::Relu, Cache::Relu(y)) => y
            .iter()
            .zip(up)
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
        (LayerKind::Dropout { .. }, Cache::Dropout(mask)) => match mask {
            Some(m) => up.iter().zip(m).map(|(g, m)| g * m).collect(),
            None => up.to_vec(),
        },
        (LayerKind::MaxPool { .. }, Cache::Pool(idx)) => {
            let mut dx = vec![0.0; n_in];
            for (&k, &g) in idx.iter().zip(up) {
                dx[k] += g;
            }
            dx
        }
        (LayerKind::Conv2d { kernel, stride, .. }, Cache::Input(x)) => {
            let g = geometry2d(layer);
            let w = layer.params[0].data();
            let [kh, kw] = *kernel;
            let stride = *stride;
            let in_step = g.channels * g.h * g.w;
            let out_step = g.filters * g.oh * g.ow;
            let (gw, gb) = split2(grads);
            let mut dx = vec![0.0; n_in];
            for t in 0..g.steps {
                let xs = &x[t * in_step..(t + 1) * in_step];
                let dxs = &mut dx[t * in_step..(t + 1) * in_step];
                let ups = &up[t * out_step..(t + 1) * out_step];
                for f in 0..g.filters {
                    for i in 0..g.oh {
                        for j in 0..g.ow {
                            let d = ups[(f * g.oh + i) * g.ow + j];
                            gb[f] += d;
                            if d == 0.0 {
                                continue;
                            }
                            for c in 0..g.channels {
                                for u in 0..kh {
                                    let row = c * g.h * g.w + (i * stride + u) * g.w + j * stride;
                                    let wrow = ((f * g.channels + c) * kh + u) * kw;
                                    for v in 0..kw {
                                        gw[wrow + v] += d * xs[row + v];
                                        dxs[row + v] += d * w[wrow + v];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            dx
        }
        (
            LayerKind::Conv1d {
                filters,
                kernel,
                stride,
            },
            Cache::Input(x),
        ) => {
            let (c_in, len) = signal1d(&layer.in_dims);
            let out_len = layer.out_dims[1];
            let w = layer.params[0].data();
            let (gw, gb) = split2(grads);
            let mut dx = vec![0.0; n_in];
            for f in 0..*filters {
                let uf = &up[f * out_len..(f + 1) * out_len];
                gb[f] += uf.iter().sum::<f64>();
                for c in 0..c_in {
                    for k in 0..*kernel {
                        let wi = (f * c_in + c) * kernel + k;
                        let start = c * len + k;
                        let wk = w[wi];
                        if *stride == 1 {
                            gw[wi] += dot(uf, &x[start..start + out_len]);
                            axpy(&mut dx[start..start + out_len], wk, uf);
                        } else {
                            let mut acc = 0.0;
                            for (d, xi) in uf.iter().zip(x[start..].iter().step_by(*stride)) {
                                acc += d * xi;
                            }
                            gw[wi] += acc;
                            for (d, dxi) in uf.iter().zip(dx[start..].iter_mut().step_by(*stride)) {
                                *dxi += d * wk;
                            }
                        }
                    }
                }
            }
            dx
        }
        (LayerKind::Gru { units, .. }, Cache::Gru(cache)) => {
            gru::backward(&layer.params, *units, cache, up, grads)
        }
        _ => unreachable!("cache does not match layer kind"),
    }
}

fn split2(grads: &mut [Tensor]) -> (&mut [f64], &mut [f64]) {
    let (a, b) = grads.split_at_mut(1);
    (a[0].data_mut(), b[0].data_mut())
}
