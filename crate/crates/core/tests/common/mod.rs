//! Scalar-loop reference implementations shared by the integration tests.
#![allow(dead_code)]

use gazemtl::nn::ConvGeometry;
use gazemtl::{RngStream, Tensor};

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest difference relative to the oracle's scale (at least 1).
pub fn scaled_diff(got: &[f64], oracle: &[f64]) -> f64 {
    let scale = oracle.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    max_abs_diff(got, oracle) / scale
}

pub fn normal(rng: &mut RngStream, dims: &[usize]) -> Tensor<f64> {
    rng.normal_tensor(dims, 1.0)
}

fn at3(t: &Tensor<f64>, c: usize, i: usize, j: usize) -> f64 {
    let d = t.dims();
    t.data()[(c * d[1] + i) * d[2] + j]
}

fn at4(t: &Tensor<f64>, a: usize, b: usize, i: usize, j: usize) -> f64 {
    let d = t.dims();
    t.data()[((a * d[1] + b) * d[2] + i) * d[3] + j]
}

fn tap(o: usize, k: usize, s: usize, p: usize, n: usize) -> Option<usize> {
    let pos = (o * s + k) as isize - p as isize;
    (0..n as isize).contains(&pos).then_some(pos as usize)
}

/// `x: [Cin, H, W]`, `w: [Cout, Cin, kh, kw]`, `b: [Cout]`.
pub fn conv2d(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, g: &ConvGeometry) -> Tensor<f64> {
    let (cin, h, wd) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    let cout = w.dims()[0];
    let ho = (h + 2 * g.padding.0 - g.kernel.0) / g.stride.0 + 1;
    let wo = (wd + 2 * g.padding.1 - g.kernel.1) / g.stride.1 + 1;
    let mut out = Vec::with_capacity(cout * ho * wo);
    for co in 0..cout {
        for oi in 0..ho {
            for oj in 0..wo {
                let mut acc = b.data()[co];
                for ci in 0..cin {
                    for ki in 0..g.kernel.0 {
                        for kj in 0..g.kernel.1 {
                            if let (Some(i), Some(j)) = (
                                tap(oi, ki, g.stride.0, g.padding.0, h),
                                tap(oj, kj, g.stride.1, g.padding.1, wd),
                            ) {
                                acc += at3(x, ci, i, j) * at4(w, co, ci, ki, kj);
                            }
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    Tensor::from_vec(&[cout, ho, wo], out).unwrap()
}

/// `x: [C, H, W]`, `w: [C·m, 1, kh, kw]`, `b: [C·m]`.
pub fn depthwise(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, m: usize, g: &ConvGeometry) -> Tensor<f64> {
    let (c, h, wd) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    let ho = (h + 2 * g.padding.0 - g.kernel.0) / g.stride.0 + 1;
    let wo = (wd + 2 * g.padding.1 - g.kernel.1) / g.stride.1 + 1;
    let mut out = Vec::with_capacity(c * m * ho * wo);
    for oc in 0..c * m {
        for oi in 0..ho {
            for oj in 0..wo {
                let mut acc = b.data()[oc];
                for ki in 0..g.kernel.0 {
                    for kj in 0..g.kernel.1 {
                        if let (Some(i), Some(j)) = (
                            tap(oi, ki, g.stride.0, g.padding.0, h),
                            tap(oj, kj, g.stride.1, g.padding.1, wd),
                        ) {
                            acc += at3(x, oc / m, i, j) * at4(w, oc, 0, ki, kj);
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    Tensor::from_vec(&[c * m, ho, wo], out).unwrap()
}

/// Scatter form: `x: [Cin, H, W]`, `w: [Cin, Cout, kh, kw]`, `b: [Cout]`.
pub fn transposed(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, g: &ConvGeometry) -> Tensor<f64> {
    let (cin, h, wd) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    let cout = w.dims()[1];
    let ho = (h - 1) * g.stride.0 + g.kernel.0 - 2 * g.padding.0;
    let wo = (wd - 1) * g.stride.1 + g.kernel.1 - 2 * g.padding.1;
    let mut out = vec![0.0; cout * ho * wo];
    for co in 0..cout {
        out[co * ho * wo..(co + 1) * ho * wo].iter_mut().for_each(|v| *v = b.data()[co]);
    }
    for ci in 0..cin {
        for i in 0..h {
            for j in 0..wd {
                for co in 0..cout {
                    for ki in 0..g.kernel.0 {
                        for kj in 0..g.kernel.1 {
                            if let (Some(oi), Some(oj)) = (
                                tap(i, ki, g.stride.0, g.padding.0, ho),
                                tap(j, kj, g.stride.1, g.padding.1, wo),
                            ) {
                                out[(co * ho + oi) * wo + oj] += at3(x, ci, i, j) * at4(w, ci, co, ki, kj);
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[cout, ho, wo], out).unwrap()
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += (a[i] - b[i]) * (a[i] - b[i]);
    }
    acc / a.len() as f64
}

pub fn rmse(preds: &[[f64; 2]], targets: &[[f64; 2]]) -> f64 {
    let mut acc = 0.0;
    for i in 0..preds.len() {
        let dx = preds[i][0] - targets[i][0];
        let dy = preds[i][1] - targets[i][1];
        acc += dx * dx + dy * dy;
    }
    (acc / preds.len() as f64).sqrt()
}

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Row-vector affine map `x·W + b` for `x: [L, i]`, `W: [i, o]`.
pub fn affine(x: &[f64], w: &[f64], b: &[f64], l: usize, i: usize, o: usize) -> Vec<f64> {
    let mut y = matmul(x, w, l, i, o);
    for r in 0..l {
        for c in 0..o {
            y[r * o + c] += b[c];
        }
    }
    y
}

/// Projection weights and biases for query, key, value and output.
pub struct AttentionWeights<'a> {
    pub q: (&'a [f64], &'a [f64]),
    pub k: (&'a [f64], &'a [f64]),
    pub v: (&'a [f64], &'a [f64]),
    pub o: (&'a [f64], &'a [f64]),
}

/// Single-head self-attention over `x: [L, D]`.
pub fn attention(x: &[f64], w: &AttentionWeights<'_>, l: usize, d: usize) -> Vec<f64> {
    let q = affine(x, w.q.0, w.q.1, l, d, d);
    let k = affine(x, w.k.0, w.k.1, l, d, d);
    let v = affine(x, w.v.0, w.v.1, l, d, d);
    let scale = 1.0 / (d as f64).sqrt();
    let mut mixed = vec![0.0; l * d];
    for i in 0..l {
        let mut scores = vec![0.0; l];
        for j in 0..l {
            let mut s = 0.0;
            for c in 0..d {
                s += q[i * d + c] * k[j * d + c];
            }
            scores[j] = s * scale;
        }
        let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
        let z: f64 = e.iter().sum();
        for j in 0..l {
            for c in 0..d {
                mixed[i * d + c] += e[j] / z * v[j * d + c];
            }
        }
    }
    affine(&mixed, w.o.0, w.o.1, l, d, d)
}

/// A random admissible convolution geometry and input extent.
pub fn conv_geometry(rng: &mut RngStream) -> (ConvGeometry, usize, usize) {
    loop {
        let kernel = (1 + rng.below(4), 1 + rng.below(4));
        let stride = (1 + rng.below(3), 1 + rng.below(3));
        let padding = (rng.below(kernel.0), rng.below(kernel.1));
        let (h, w) = (1 + rng.below(7), 1 + rng.below(7));
        if h + 2 * padding.0 >= kernel.0 && w + 2 * padding.1 >= kernel.1 {
            return (ConvGeometry::new(kernel, stride, padding), h, w);
        }
    }
}

/// A random geometry whose transposed output is positive.
pub fn transposed_geometry(rng: &mut RngStream) -> (ConvGeometry, usize, usize) {
    loop {
        let kernel = (1 + rng.below(4), 1 + rng.below(4));
        let stride = (1 + rng.below(3), 1 + rng.below(3));
        let padding = (rng.below(kernel.0), rng.below(kernel.1));
        let (h, w) = (1 + rng.below(5), 1 + rng.below(5));
        let ho = (h - 1) * stride.0 + kernel.0;
        let wo = (w - 1) * stride.1 + kernel.1;
        if ho > 2 * padding.0 && wo > 2 * padding.1 {
            return (ConvGeometry::new(kernel, stride, padding), h, w);
        }
    }
}

/// Worst scaled deviation of each primitive from its loop oracle over `trials`
/// random instances.
pub mod trials {
    use super::*;
    use gazemtl::model::mse as lib_mse;
    use gazemtl::nn::MultiHeadAttention;
    use gazemtl::train::rmse_points;
    use gazemtl::{ParamStore, StreamKey, Tape};

    fn rng(name: &str, seed: u64) -> RngStream {
        StreamKey::new(seed).named("oracle").named(name).rng()
    }

    pub fn conv2d(trials: usize, seed: u64) -> f64 {
        let mut r = rng("conv2d", seed);
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let (g, h, w) = conv_geometry(&mut r);
            let (cin, cout) = (1 + r.below(3), 1 + r.below(3));
            let x = normal(&mut r, &[cin, h, w]);
            let k = normal(&mut r, &[cout, cin, g.kernel.0, g.kernel.1]);
            let b = normal(&mut r, &[cout]);
            let mut tape = Tape::new();
            let (xv, kv, bv) = (tape.constant(x.clone()), tape.constant(k.clone()), tape.constant(b.clone()));
            let y = tape.conv2d(xv, kv, bv, g).unwrap();
            worst = worst.max(scaled_diff(tape.value(y).data(), super::conv2d(&x, &k, &b, &g).data()));
        }
        worst
    }

    pub fn depthwise(trials: usize, seed: u64) -> f64 {
        let mut r = rng("depthwise", seed);
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let (g, h, w) = conv_geometry(&mut r);
            let (c, m) = (1 + r.below(3), 1 + r.below(3));
            let x = normal(&mut r, &[c, h, w]);
            let k = normal(&mut r, &[c * m, 1, g.kernel.0, g.kernel.1]);
            let b = normal(&mut r, &[c * m]);
            let mut tape = Tape::new();
            let (xv, kv, bv) = (tape.constant(x.clone()), tape.constant(k.clone()), tape.constant(b.clone()));
            let y = tape.depthwise_conv2d(xv, kv, bv, m, g).unwrap();
            worst = worst.max(scaled_diff(tape.value(y).data(), super::depthwise(&x, &k, &b, m, &g).data()));
        }
        worst
    }

    pub fn transposed(trials: usize, seed: u64) -> f64 {
        let mut r = rng("transposed", seed);
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let (g, h, w) = transposed_geometry(&mut r);
            let (cin, cout) = (1 + r.below(3), 1 + r.below(3));
            let x = normal(&mut r, &[cin, h, w]);
            let k = normal(&mut r, &[cin, cout, g.kernel.0, g.kernel.1]);
            let b = normal(&mut r, &[cout]);
            let mut tape = Tape::new();
            let (xv, kv, bv) = (tape.constant(x.clone()), tape.constant(k.clone()), tape.constant(b.clone()));
            let y = tape.transposed_conv(xv, kv, bv, g).unwrap();
            worst = worst.max(scaled_diff(tape.value(y).data(), super::transposed(&x, &k, &b, &g).data()));
        }
        worst
    }

    pub fn mse(trials: usize, seed: u64) -> f64 {
        let mut r = rng("mse", seed);
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let dims = [1 + r.below(6), 1 + r.below(6), 1 + r.below(6)];
            let a = normal(&mut r, &dims);
            let b = normal(&mut r, &dims);
            let oracle = super::mse(a.data(), b.data());
            let direct = lib_mse(&a, &b).unwrap();
            let mut tape = Tape::new();
            let (av, bv) = (tape.constant(a), tape.constant(b));
            let l = tape.mse_loss(av, bv).unwrap();
            let taped = tape.value(l).item();
            worst = worst.max(scaled_diff(&[direct, taped], &[oracle, oracle]));
        }
        worst
    }

    pub fn rmse(trials: usize, seed: u64) -> f64 {
        let mut r = rng("rmse", seed);
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let n = 1 + r.below(60);
            let mut point = || [r.uniform_range(-200.0, 200.0), r.uniform_range(-200.0, 200.0)];
            let preds: Vec<[f64; 2]> = (0..n).map(|_| point()).collect();
            let targets: Vec<[f64; 2]> = (0..n).map(|_| point()).collect();
            let got = rmse_points(&preds, &targets).unwrap();
            worst = worst.max(scaled_diff(&[got], &[super::rmse(&preds, &targets)]));
        }
        worst
    }

    pub fn attention(trials: usize, seed: u64) -> f64 {
        let mut r = rng("attention", seed);
        let mut worst = 0.0f64;
        for t in 0..trials {
            let (l, d) = (1 + r.below(6), 1 + r.below(6));
            let mut store = ParamStore::<f64>::new();
            let layer = MultiHeadAttention::new(&mut store, "attn", d, 1, StreamKey::new(seed).split(t as u64)).unwrap();
            for lin in [&layer.query, &layer.key, &layer.value, &layer.output] {
                *store.value_mut(lin.bias) = normal(&mut r, &[d]);
            }
            let x = normal(&mut r, &[l, d]);
            let mut tape = Tape::inference();
            let xv = tape.constant(x.clone());
            let y = layer.forward(&mut tape, &store, xv).unwrap();
            let pair = |lin: &gazemtl::nn::Linear| (store.value(lin.weight).data(), store.value(lin.bias).data());
            let w = AttentionWeights {
                q: pair(&layer.query),
                k: pair(&layer.key),
                v: pair(&layer.value),
                o: pair(&layer.output),
            };
            worst = worst.max(scaled_diff(tape.value(y).data(), &super::attention(x.data(), &w, l, d)));
        }
        worst
    }
}
