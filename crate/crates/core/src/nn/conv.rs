//! Convolution, depthwise convolution and transposed convolution.
//!
//! Dense convolutions lower to im2col + matmul; the transposed convolution is
//! the exact adjoint, lowered to matmul + col2im.

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::nn::spec::{ConvGeometry, LayerSpec};
use crate::nn::init;
use crate::rng::StreamKey;
use crate::tensor::{matmul_into, Tensor};

fn dims3<T: Element>(t: &Tensor<T>, layer: &'static str) -> Result<(usize, usize, usize)> {
    match t.dims() {
        &[c, h, w] => Ok((c, h, w)),
        d => Err(Error::geometry(layer, format!("expected [C, H, W] input, got {d:?}"))),
    }
}

/// `[C, H, W] → [C·kh·kw, Ho·Wo]` patch matrix for geometry `g`.
pub(crate) fn im2col<T: Element>(
    x: &[T],
    (c, h, w): (usize, usize, usize),
    g: &ConvGeometry,
    (ho, wo): (usize, usize),
) -> Vec<T> {
    let (kh, kw) = g.kernel;
    let (sh, sw) = g.stride;
    let (ph, pw) = g.padding;
    let cols = ho * wo;
    let mut out = vec![T::zero(); c * kh * kw * cols];
    for ci in 0..c {
        for i in 0..kh {
            for j in 0..kw {
                let row = ((ci * kh + i) * kw + j) * cols;
                for oh in 0..ho {
                    let ih = (oh * sh + i) as isize - ph as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let src = (ci * h + ih as usize) * w;
                    for ow in 0..wo {
                        let iw = (ow * sw + j) as isize - pw as isize;
                        if iw >= 0 && iw < w as isize {
                            out[row + oh * wo + ow] = x[src + iw as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatter-add a patch matrix back onto `[C, H, W]`.
pub(crate) fn col2im<T: Element>(
    cols_data: &[T],
    (c, h, w): (usize, usize, usize),
    g: &ConvGeometry,
    (ho, wo): (usize, usize),
) -> Vec<T> {
    let (kh, kw) = g.kernel;
    let (sh, sw) = g.stride;
    let (ph, pw) = g.padding;
    let cols = ho * wo;
    let mut out = vec![T::zero(); c * h * w];
    for ci in 0..c {
        for i in 0..kh {
            for j in 0..kw {
                let row = ((ci * kh + i) * kw + j) * cols;
                for oh in 0..ho {
                    let ih = (oh * sh + i) as isize - ph as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let dst = (ci * h + ih as usize) * w;
                    for ow in 0..wo {
                        let iw = (ow * sw + j) as isize - pw as isize;
                        if iw >= 0 && iw < w as isize {
                            out[dst + iw as usize] += cols_data[row + oh * wo + ow];
                        }
                    }
                }
            }
        }
    }
    out
}

fn matmul<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    matmul_into(a, b, &mut out, m, k, n);
    out
}

fn transpose<T: Element>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * cols);
    for j in 0..cols {
        for i in 0..rows {
            out.push(a[i * cols + j]);
        }
    }
    out
}

fn add_channel_bias<T: Element>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn channel_sums<T: Element>(g: &[T], channels: usize, plane: usize) -> Vec<T> {
    (0..channels)
        .map(|c| g[c * plane..(c + 1) * plane].iter().copied().sum())
        .collect()
}

fn check_weight<T: Element>(layer: &'static str, w: &Tensor<T>, expected: [usize; 4]) -> Result<()> {
    if w.dims() != expected {
        return Err(Error::geometry(
            layer,
            format!("weight dims {:?} do not match expected {:?}", w.dims(), expected),
        ));
    }
    Ok(())
}

fn check_bias<T: Element>(layer: &'static str, b: &Tensor<T>, channels: usize) -> Result<()> {
    if b.dims() != [channels] {
        return Err(Error::geometry(layer, format!("bias dims {:?}, expected [{channels}]", b.dims())));
    }
    Ok(())
}

/// Cross-correlation of `x: [Cin, H, W]` with `w: [Cout, Cin, kh, kw]` plus `b: [Cout]`.
pub fn conv2d_forward<T: Element>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, g: &ConvGeometry) -> Result<Tensor<T>> {
    let (cin, h, wd) = dims3(x, "conv2d")?;
    let cout = w.dims().first().copied().unwrap_or(0);
    check_weight("conv2d", w, [cout, cin, g.kernel.0, g.kernel.1])?;
    check_bias("conv2d", b, cout)?;
    let (ho, wo) = g.conv_output("conv2d", h, wd)?;
    let cols = im2col(x.data(), (cin, h, wd), g, (ho, wo));
    let k = cin * g.kernel.0 * g.kernel.1;
    let mut out = matmul(w.data(), &cols, cout, k, ho * wo);
    add_channel_bias(&mut out, b.data(), ho * wo);
    Tensor::from_vec(&[cout, ho, wo], out)
}

/// Transposed convolution of `x: [Cin, H, W]` with `w: [Cin, Cout, kh, kw]` plus `b: [Cout]`.
///
/// Without bias this is the adjoint of [`conv2d_forward`] with the same
/// weights viewed as `[Cout=Cin', Cin=Cout', kh, kw]`.
pub fn transposed_conv_forward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    g: &ConvGeometry,
) -> Result<Tensor<T>> {
    let (cin, h, wd) = dims3(x, "transposed_conv")?;
    let cout = w.dims().get(1).copied().unwrap_or(0);
    check_weight("transposed_conv", w, [cin, cout, g.kernel.0, g.kernel.1])?;
    check_bias("transposed_conv", b, cout)?;
    let (ho, wo) = g.transposed_output("transposed_conv", h, wd)?;
    let k = cout * g.kernel.0 * g.kernel.1;
    // cols = Wᵀ · X, with W viewed as [Cin, Cout·kh·kw]
    let wt = transpose(w.data(), cin, k);
    let cols = matmul(&wt, x.data(), k, cin, h * wd);
    let mut out = col2im(&cols, (cout, ho, wo), g, (h, wd));
    add_channel_bias(&mut out, b.data(), ho * wo);
    Tensor::from_vec(&[cout, ho, wo], out)
}

/// Depthwise convolution: output channel `c·m + k` filters input channel `c` only.
pub fn depthwise_conv2d_forward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    multiplier: usize,
    g: &ConvGeometry,
) -> Result<Tensor<T>> {
    let (c, h, wd) = dims3(x, "depthwise_conv2d")?;
    check_weight("depthwise_conv2d", w, [c * multiplier, 1, g.kernel.0, g.kernel.1])?;
    check_bias("depthwise_conv2d", b, c * multiplier)?;
    let (ho, wo) = g.conv_output("depthwise_conv2d", h, wd)?;
    let (kh, kw) = g.kernel;
    let mut out = vec![T::zero(); c * multiplier * ho * wo];
    for oc in 0..c * multiplier {
        let ic = oc / multiplier;
        let cols = im2col(&x.data()[ic * h * wd..(ic + 1) * h * wd], (1, h, wd), g, (ho, wo));
        let filt = &w.data()[oc * kh * kw..(oc + 1) * kh * kw];
        let dst = &mut out[oc * ho * wo..(oc + 1) * ho * wo];
        matmul_into(filt, &cols, dst, 1, kh * kw, ho * wo);
        dst.iter_mut().for_each(|v| *v += b.data()[oc]);
    }
    Tensor::from_vec(&[c * multiplier, ho, wo], out)
}

impl<T: Element> Tape<T> {
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, g: ConvGeometry) -> Result<Var> {
        let out = conv2d_forward(self.value(x), self.value(w), self.value(b), &g)?;
        Ok(self.custom(
            &[x, w, b],
            out,
            Box::new(move |ctx| {
                let (x, w, go) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
                let (cin, h, wd) = dims3(x, "conv2d")?;
                let (cout, ho, wo) = dims3(go, "conv2d")?;
                let k = cin * g.kernel.0 * g.kernel.1;
                let plane = ho * wo;
                let dx = if ctx.needs[0] {
                    let wt = transpose(w.data(), cout, k);
                    let dcols = matmul(&wt, go.data(), k, cout, plane);
                    Some(Tensor::from_vec(x.dims(), col2im(&dcols, (cin, h, wd), &g, (ho, wo)))?)
                } else {
                    None
                };
                let dw = if ctx.needs[1] {
                    let cols = im2col(x.data(), (cin, h, wd), &g, (ho, wo));
                    let colst = transpose(&cols, k, plane);
                    Some(Tensor::from_vec(w.dims(), matmul(go.data(), &colst, cout, plane, k))?)
                } else {
                    None
                };
                let db = Tensor::from_vec(&[cout], channel_sums(go.data(), cout, plane))?;
                Ok(vec![dx, dw, Some(db)])
            }),
        ))
    }

    pub fn transposed_conv(&mut self, x: Var, w: Var, b: Var, g: ConvGeometry) -> Result<Var> {
        let out = transposed_conv_forward(self.value(x), self.value(w), self.value(b), &g)?;
        Ok(self.custom(
            &[x, w, b],
            out,
            Box::new(move |ctx| {
                let (x, w, go) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
                let (cin, h, wd) = dims3(x, "transposed_conv")?;
                let (cout, ho, wo) = dims3(go, "transposed_conv")?;
                let k = cout * g.kernel.0 * g.kernel.1;
                // the forward's patch layout, applied to the upstream gradient
                let gcols = im2col(go.data(), (cout, ho, wo), &g, (h, wd));
                let dx = if ctx.needs[0] {
                    Some(Tensor::from_vec(x.dims(), matmul(w.data(), &gcols, cin, k, h * wd))?)
                } else {
                    None
                };
                let dw = if ctx.needs[1] {
                    let gt = transpose(&gcols, k, h * wd);
                    Some(Tensor::from_vec(w.dims(), matmul(x.data(), &gt, cin, h * wd, k))?)
                } else {
                    None
                };
                let db = Tensor::from_vec(&[cout], channel_sums(go.data(), cout, ho * wo))?;
                Ok(vec![dx, dw, Some(db)])
            }),
        ))
    }

    pub fn depthwise_conv2d(&mut self, x: Var, w: Var, b: Var, multiplier: usize, g: ConvGeometry) -> Result<Var> {
        let out = depthwise_conv2d_forward(self.value(x), self.value(w), self.value(b), multiplier, &g)?;
        Ok(self.custom(
            &[x, w, b],
            out,
            Box::new(move |ctx| {
                let (x, w, go) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
                let (c, h, wd) = dims3(x, "depthwise_conv2d")?;
                let (oc_total, ho, wo) = dims3(go, "depthwise_conv2d")?;
                let (kh, kw) = g.kernel;
                let plane = ho * wo;
                let mut dx = vec![T::zero(); c * h * wd];
                let mut dw = vec![T::zero(); oc_total * kh * kw];
                for oc in 0..oc_total {
                    let ic = oc / multiplier;
                    let gplane = &go.data()[oc * plane..(oc + 1) * plane];
                    let xin = &x.data()[ic * h * wd..(ic + 1) * h * wd];
                    if ctx.needs[1] {
                        let cols = im2col(xin, (1, h, wd), &g, (ho, wo));
                        for (t, dwv) in dw[oc * kh * kw..(oc + 1) * kh * kw].iter_mut().enumerate() {
                            *dwv = cols[t * plane..(t + 1) * plane]
                                .iter()
                                .zip(gplane)
                                .map(|(&a, &b)| a * b)
                                .sum();
                        }
                    }
                    if ctx.needs[0] {
                        let filt = &w.data()[oc * kh * kw..(oc + 1) * kh * kw];
                        let dcols = matmul(filt, gplane, kh * kw, 1, plane);
                        let back = col2im(&dcols, (1, h, wd), &g, (ho, wo));
                        for (d, v) in dx[ic * h * wd..(ic + 1) * h * wd].iter_mut().zip(back) {
                            *d += v;
                        }
                    }
                }
                let db = Tensor::from_vec(&[oc_total], channel_sums(go.data(), oc_total, plane))?;
                Ok(vec![
                    ctx.needs[0].then(|| Tensor::from_vec(x.dims(), dx)).transpose()?,
                    ctx.needs[1].then(|| Tensor::from_vec(w.dims(), dw)).transpose()?,
                    Some(db),
                ])
            }),
        ))
    }
}

/// Dense 2D convolution layer.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub geometry: ConvGeometry,
}

impl Conv2d {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
        key: StreamKey,
    ) -> Result<Self> {
        let (kh, kw) = geometry.kernel;
        let fan_in = in_channels * kh * kw;
        let weight = store.insert(
            format!("{name}.weight"),
            init::scaled_normal(key.named(name), &[out_channels, in_channels, kh, kw], fan_in),
        )?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(&[out_channels]))?;
        Ok(Conv2d { weight, bias, in_channels, out_channels, geometry })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Conv2d {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            geometry: self.geometry,
        }
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        self.spec().output_dims(tape.value(x).dims())?;
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.conv2d(x, w, b, self.geometry)
    }
}

#[derive(Debug, Clone)]
pub struct DepthwiseConv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub channels: usize,
    pub multiplier: usize,
    pub geometry: ConvGeometry,
}

impl DepthwiseConv2d {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        multiplier: usize,
        geometry: ConvGeometry,
        key: StreamKey,
    ) -> Result<Self> {
        let (kh, kw) = geometry.kernel;
        let weight = store.insert(
            format!("{name}.weight"),
            init::scaled_normal(key.named(name), &[channels * multiplier, 1, kh, kw], kh * kw),
        )?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(&[channels * multiplier]))?;
        Ok(DepthwiseConv2d { weight, bias, channels, multiplier, geometry })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::DepthwiseConv2d {
            channels: self.channels,
            multiplier: self.multiplier,
            geometry: self.geometry,
        }
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        self.spec().output_dims(tape.value(x).dims())?;
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.depthwise_conv2d(x, w, b, self.multiplier, self.geometry)
    }
}

/// Transposed convolution; weight layout `[Cin, Cout, kh, kw]`.
#[derive(Debug, Clone)]
pub struct TransposedConv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub geometry: ConvGeometry,
}

impl TransposedConv2d {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
        key: StreamKey,
    ) -> Result<Self> {
        let (kh, kw) = geometry.kernel;
        let weight = store.insert(
            format!("{name}.weight"),
            init::scaled_normal(key.named(name), &[in_channels, out_channels, kh, kw], in_channels * kh * kw),
        )?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(&[out_channels]))?;
        Ok(TransposedConv2d { weight, bias, in_channels, out_channels, geometry })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::TransposedConv {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            geometry: self.geometry,
        }
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        self.spec().output_dims(tape.value(x).dims())?;
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.transposed_conv(x, w, b, self.geometry)
    }
}
