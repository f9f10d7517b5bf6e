use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::nn::spec::LayerSpec;
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Normalize contiguous groups of `size` elements to zero mean and unit
/// variance (biased), returning the normalized values and `1/√(σ²+ε)` per group.
fn normalize_groups<T: Element>(x: &[T], size: usize, eps: T) -> (Vec<T>, Vec<T>) {
    let n = T::of_usize(size);
    let mut y = Vec::with_capacity(x.len());
    let mut inv_std = Vec::with_capacity(x.len() / size);
    for group in x.chunks(size) {
        let mean = group.iter().copied().sum::<T>() / n;
        let var = group.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        y.extend(group.iter().map(|&v| (v - mean) * inv));
        inv_std.push(inv);
    }
    (y, inv_std)
}

/// `dx = inv_std · (g − mean(g) − y · mean(g ⊙ y))` per group.
fn normalize_groups_backward<T: Element>(g: &[T], y: &[T], inv_std: &[T], size: usize) -> Vec<T> {
    let n = T::of_usize(size);
    let mut dx = Vec::with_capacity(g.len());
    for ((gs, ys), &inv) in g.chunks(size).zip(y.chunks(size)).zip(inv_std) {
        let mean_g = gs.iter().copied().sum::<T>() / n;
        let mean_gy = gs.iter().zip(ys).map(|(&a, &b)| a * b).sum::<T>() / n;
        dx.extend(gs.iter().zip(ys).map(|(&gv, &yv)| inv * (gv - mean_g - yv * mean_gy)));
    }
    dx
}

impl<T: Element> Tape<T> {
    fn normalize_last(&mut self, x: Var, size: usize, eps: f64) -> Result<Var> {
        let (y, inv_std) = normalize_groups(self.value(x).data(), size, T::of_f64(eps));
        let out = Tensor::from_vec(self.value(x).dims(), y)?;
        Ok(self.custom(
            &[x],
            out,
            Box::new(move |ctx| {
                let dx = normalize_groups_backward(ctx.grad.data(), ctx.output.data(), &inv_std, size);
                Ok(vec![Some(Tensor::from_vec(ctx.inputs[0].dims(), dx)?)])
            }),
        ))
    }

    /// Per-channel normalization of `[C, ...spatial]` (no affine).
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let dims = self.value(x).dims().to_vec();
        if dims.len() < 2 {
            return Err(Error::geometry("instance_norm", format!("expected [C, ...spatial], got {dims:?}")));
        }
        let spatial: usize = dims[1..].iter().product();
        if spatial < 2 {
            return Err(Error::geometry("instance_norm", "per-channel spatial size must be at least 2"));
        }
        self.normalize_last(x, spatial, eps)
    }

    /// Normalization over the last axis (no affine).
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let last = *self.value(x).dims().last().expect("tensors have rank >= 1");
        if last < 2 {
            return Err(Error::geometry("layer_norm", "normalized axis needs at least 2 elements"));
        }
        self.normalize_last(x, last, eps)
    }

    /// `x[c, ...] · scale[c] + shift[c]` for `x: [C, ...]`.
    pub fn channel_affine(&mut self, x: Var, scale: Var, shift: Var) -> Result<Var> {
        let dims = self.value(x).dims().to_vec();
        let c = dims[0];
        for v in [scale, shift] {
            if self.value(v).dims() != [c] {
                return Err(Error::ShapeMismatch {
                    op: "channel_affine",
                    left: dims.clone(),
                    right: self.value(v).dims().to_vec(),
                });
            }
        }
        let plane = self.value(x).numel() / c;
        let mut out = self.value(x).clone();
        let (s, b) = (self.value(scale).data().to_vec(), self.value(shift).data().to_vec());
        for (ch, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            chunk.iter_mut().for_each(|v| *v = *v * s[ch] + b[ch]);
        }
        Ok(self.custom(
            &[x, scale, shift],
            out,
            Box::new(move |ctx| {
                let (x, s, g) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
                let mut dx = g.clone();
                let mut ds = vec![T::zero(); c];
                let mut db = vec![T::zero(); c];
                for ch in 0..c {
                    let gs = &g.data()[ch * plane..(ch + 1) * plane];
                    let xs = &x.data()[ch * plane..(ch + 1) * plane];
                    ds[ch] = gs.iter().zip(xs).map(|(&a, &b)| a * b).sum();
                    db[ch] = gs.iter().copied().sum();
                    let sv = s.data()[ch];
                    dx.data_mut()[ch * plane..(ch + 1) * plane].iter_mut().for_each(|v| *v *= sv);
                }
                Ok(vec![
                    Some(dx),
                    Some(Tensor::from_vec(&[c], ds)?),
                    Some(Tensor::from_vec(&[c], db)?),
                ])
            }),
        ))
    }
}

/// Instance normalization over `[C, ...spatial]` with optional per-channel affine.
#[derive(Debug, Clone)]
pub struct InstanceNorm {
    pub channels: usize,
    pub eps: f64,
    pub affine: Option<(ParamId, ParamId)>,
}

impl InstanceNorm {
    pub fn new<T: Element>(store: &mut ParamStore<T>, name: &str, channels: usize, eps: f64, affine: bool) -> Result<Self> {
        let affine = if affine {
            Some((
                store.insert(format!("{name}.weight"), Tensor::ones(&[channels]))?,
                store.insert(format!("{name}.bias"), Tensor::zeros(&[channels]))?,
            ))
        } else {
            None
        };
        Ok(InstanceNorm { channels, eps, affine })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::InstanceNorm { channels: self.channels }
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        self.spec().output_dims(tape.value(x).dims())?;
        let y = tape.instance_norm(x, self.eps)?;
        match self.affine {
            Some((s, b)) => {
                let s = tape.param(store, s);
                let b = tape.param(store, b);
                tape.channel_affine(y, s, b)
            }
            None => Ok(y),
        }
    }
}

/// Layer normalization over the last (feature) axis with learned affine.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub features: usize,
    pub eps: f64,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<T: Element>(store: &mut ParamStore<T>, name: &str, features: usize, eps: f64) -> Result<Self> {
        Ok(LayerNorm {
            features,
            eps,
            weight: store.insert(format!("{name}.weight"), Tensor::ones(&[features]))?,
            bias: store.insert(format!("{name}.bias"), Tensor::zeros(&[features]))?,
        })
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::LayerNorm { features: self.features }
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let dims = self.spec().output_dims(tape.value(x).dims())?;
        let rows = dims.iter().product::<usize>() / self.features;
        let flat = dims.len() != 2;
        let mut y = tape.layer_norm(x, self.eps)?;
        if flat {
            y = tape.reshape(y, &[rows, self.features])?;
        }
        let s = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let y = tape.mul_row_vector(y, s)?;
        let y = tape.add_row_vector(y, b)?;
        if flat {
            tape.reshape(y, &dims)
        } else {
            Ok(y)
        }
    }
}
