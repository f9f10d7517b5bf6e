use crate::autodiff::{Tape, Var};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::{BinaryOp, Reduction, Tensor};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu<T: Element>(x: T) -> T {
    let half = T::of_f64(0.5);
    let inner = T::of_f64(GELU_C) * (x + T::of_f64(GELU_A) * x * x * x);
    half * x * (T::one() + inner.tanh())
}

fn gelu_grad<T: Element>(x: T) -> T {
    let half = T::of_f64(0.5);
    let c = T::of_f64(GELU_C);
    let a = T::of_f64(GELU_A);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of_f64(3.0) * a * x * x)
}

fn matrix_dims<T: Element>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    match t.dims() {
        &[r, c] => Ok((r, c)),
        d => Err(Error::InvalidArgument(format!("{op}: expected rank-2 tensor, got {d:?}"))),
    }
}

impl<T: Element> Tape<T> {
    pub fn elementwise(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).elementwise(op, self.value(b))?;
        Ok(self.custom(
            &[a, b],
            out,
            Box::new(move |ctx| {
                let g = ctx.grad;
                Ok(match op {
                    BinaryOp::Add => vec![Some(g.clone()), Some(g.clone())],
                    BinaryOp::Sub => vec![Some(g.clone()), Some(g.scale(-T::one()))],
                    BinaryOp::Mul => vec![
                        ctx.needs[0].then(|| g.mul(ctx.inputs[1])).transpose()?,
                        ctx.needs[1].then(|| g.mul(ctx.inputs[0])).transpose()?,
                    ],
                })
            }),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Mul, a, b)
    }

    /// `a * s` for a fixed scalar `s`.
    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).scale(s);
        self.custom(&[a], out, Box::new(move |ctx| Ok(vec![Some(ctx.grad.scale(s))])))
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|v| v + s);
        self.custom(&[a], out, Box::new(|ctx| Ok(vec![Some(ctx.grad.clone())])))
    }

    /// `a · b` for a scalar-valued (one element) node `b`.
    pub fn mul_by_scalar_node(&mut self, a: Var, b: Var) -> Result<Var> {
        if !self.value(b).is_scalar() {
            return Err(Error::ShapeMismatch {
                op: "mul_by_scalar_node",
                left: self.value(a).dims().to_vec(),
                right: self.value(b).dims().to_vec(),
            });
        }
        let s = self.value(b).item();
        let out = self.value(a).scale(s);
        Ok(self.custom(
            &[a, b],
            out,
            Box::new(|ctx| {
                let s = ctx.inputs[1].item();
                let ds = ctx.grad.dot(ctx.inputs[0])?;
                Ok(vec![Some(ctx.grad.scale(s)), Some(Tensor::from_vec(ctx.inputs[1].dims(), vec![ds])?)])
            }),
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.custom(
            &[a, b],
            out,
            Box::new(|ctx| {
                let (a, b, g) = (ctx.inputs[0], ctx.inputs[1], ctx.grad);
                let da = if ctx.needs[0] { Some(g.matmul(&b.transpose()?)?) } else { None };
                let db = if ctx.needs[1] { Some(a.transpose()?.matmul(g)?) } else { None };
                Ok(vec![da, db])
            }),
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        Ok(self.custom(&[a], out, Box::new(|ctx| Ok(vec![Some(ctx.grad.transpose()?)]))))
    }

    pub fn reshape(&mut self, a: Var, dims: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(dims)?;
        Ok(self.custom(
            &[a],
            out,
            Box::new(|ctx| Ok(vec![Some(ctx.grad.reshape(ctx.inputs[0].dims())?)])),
        ))
    }

    pub fn reduce(&mut self, kind: Reduction, a: Var, axes: &[usize]) -> Result<Var> {
        let out = self.value(a).reduce(kind, axes)?;
        let axes = axes.to_vec();
        Ok(self.custom(
            &[a],
            out,
            Box::new(move |ctx| {
                let dims = ctx.inputs[0].dims();
                let mut g = ctx.grad.expand_axes(dims, &axes)?;
                if kind == Reduction::Mean {
                    let count: usize = axes.iter().map(|&ax| dims[ax]).product();
                    g = g.scale(T::one() / T::of_usize(count));
                }
                Ok(vec![Some(g)])
            }),
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let axes: Vec<usize> = (0..self.value(a).rank()).collect();
        self.reduce(Reduction::Sum, a, &axes).expect("all axes are valid")
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let axes: Vec<usize> = (0..self.value(a).rank()).collect();
        self.reduce(Reduction::Mean, a, &axes).expect("all axes are valid")
    }

    /// Explicit axis expansion: repeat `a` along `axes` to reach `dims`.
    pub fn expand(&mut self, a: Var, dims: &[usize], axes: &[usize]) -> Result<Var> {
        let out = self.value(a).expand_axes(dims, axes)?;
        let axes = axes.to_vec();
        Ok(self.custom(
            &[a],
            out,
            Box::new(move |ctx| {
                let g = ctx.grad.sum(&axes)?.reshape(ctx.inputs[0].dims())?;
                Ok(vec![Some(g)])
            }),
        ))
    }

    /// Repeat a vector `[n]` into `[rows×n]`.
    pub fn broadcast_rows(&mut self, v: Var, rows: usize) -> Result<Var> {
        let n = match self.value(v).dims() {
            &[n] => n,
            d => return Err(Error::InvalidArgument(format!("broadcast_rows: expected a vector, got {d:?}"))),
        };
        self.expand(v, &[rows, n], &[0])
    }

    /// `x [rows×n] + bias [n]` with the bias expanded over rows.
    pub fn add_row_vector(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (rows, _) = matrix_dims(self.value(x), "add_row_vector")?;
        let b = self.broadcast_rows(bias, rows)?;
        self.add(x, b)
    }

    pub fn mul_row_vector(&mut self, x: Var, scale: Var) -> Result<Var> {
        let (rows, _) = matrix_dims(self.value(x), "mul_row_vector")?;
        let s = self.broadcast_rows(scale, rows)?;
        self.mul(x, s)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| if v > T::zero() { v } else { T::zero() });
        self.custom(
            &[a],
            out,
            Box::new(|ctx| {
                let g = ctx
                    .grad
                    .zip_map(ctx.inputs[0], "relu", |g, x| if x > T::zero() { g } else { T::zero() })?;
                Ok(vec![Some(g)])
            }),
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        self.custom(
            &[a],
            out,
            Box::new(|ctx| Ok(vec![Some(ctx.grad.zip_map(ctx.inputs[0], "gelu", |g, x| g * gelu_grad(x))?)])),
        )
    }

    /// Softmax over the last axis of a rank-2 tensor.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = matrix_dims(x, "softmax_rows")?;
        let mut out = x.clone();
        for r in 0..rows {
            let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        Ok(self.custom(
            &[a],
            out,
            Box::new(move |ctx| {
                let (y, g) = (ctx.output, ctx.grad);
                let mut dx = g.clone();
                for r in 0..rows {
                    let ys = &y.data()[r * cols..(r + 1) * cols];
                    let gs = &g.data()[r * cols..(r + 1) * cols];
                    let dot: T = ys.iter().zip(gs).map(|(&y, &g)| y * g).sum();
                    for (c, d) in dx.data_mut()[r * cols..(r + 1) * cols].iter_mut().enumerate() {
                        *d = ys[c] * (gs[c] - dot);
                    }
                }
                Ok(vec![Some(dx)])
            }),
        ))
    }

    /// Columns `start..start+len` of a rank-2 tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = matrix_dims(self.value(a), "slice_cols")?;
        if len == 0 || start + len > cols {
            return Err(Error::InvalidArgument(format!(
                "slice_cols: {start}..{} out of range for {cols} columns",
                start + len
            )));
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let out = Tensor::from_vec(&[rows, len], out)?;
        Ok(self.custom(
            &[a],
            out,
            Box::new(move |ctx| {
                let mut g = Tensor::zeros(&[rows, cols]);
                for r in 0..rows {
                    g.data_mut()[r * cols + start..r * cols + start + len]
                        .copy_from_slice(&ctx.grad.data()[r * len..(r + 1) * len]);
                }
                Ok(vec![Some(g)])
            }),
        ))
    }

    /// Concatenate rank-2 tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat_cols: no inputs".into()));
        }
        let (rows, _) = matrix_dims(self.value(parts[0]), "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = matrix_dims(self.value(p), "concat_cols")?;
            if r != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left: self.value(parts[0]).dims().to_vec(),
                    right: self.value(p).dims().to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let out = Tensor::from_vec(&[rows, total], out)?;
        Ok(self.custom(
            parts,
            out,
            Box::new(move |ctx| {
                let mut grads: Vec<Vec<T>> = widths.iter().map(|&w| Vec::with_capacity(rows * w)).collect();
                for r in 0..rows {
                    let mut off = r * total;
                    for (dst, &w) in grads.iter_mut().zip(&widths) {
                        dst.extend_from_slice(&ctx.grad.data()[off..off + w]);
                        off += w;
                    }
                }
                grads
                    .into_iter()
                    .zip(&widths)
                    .map(|(g, &w)| Tensor::from_vec(&[rows, w], g).map(Some))
                    .collect()
            }),
        ))
    }

    /// Rows `start..start+len` of a rank-2 tensor.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = matrix_dims(self.value(a), "slice_rows")?;
        if len == 0 || start + len > rows {
            return Err(Error::InvalidArgument(format!(
                "slice_rows: {start}..{} out of range for {rows} rows",
                start + len
            )));
        }
        let out = Tensor::from_vec(&[len, cols], self.value(a).data()[start * cols..(start + len) * cols].to_vec())?;
        Ok(self.custom(
            &[a],
            out,
            Box::new(move |ctx| {
                let mut g = Tensor::zeros(&[rows, cols]);
                g.data_mut()[start * cols..(start + len) * cols].copy_from_slice(ctx.grad.data());
                Ok(vec![Some(g)])
            }),
        ))
    }

    /// Stack rank-2 tensors with equal column counts along rows.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat_rows: no inputs".into()));
        }
        let (_, cols) = matrix_dims(self.value(parts[0]), "concat_rows")?;
        let mut heights = Vec::with_capacity(parts.len());
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = matrix_dims(self.value(p), "concat_rows")?;
            if c != cols {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    left: self.value(parts[0]).dims().to_vec(),
                    right: self.value(p).dims().to_vec(),
                });
            }
            heights.push(r);
            out.extend_from_slice(self.value(p).data());
        }
        let total: usize = heights.iter().sum();
        let out = Tensor::from_vec(&[total, cols], out)?;
        Ok(self.custom(
            parts,
            out,
            Box::new(move |ctx| {
                let mut off = 0;
                heights
                    .iter()
                    .map(|&h| {
                        let g = Tensor::from_vec(&[h, cols], ctx.grad.data()[off * cols..(off + h) * cols].to_vec());
                        off += h;
                        g.map(Some)
                    })
                    .collect()
            }),
        ))
    }

    /// Sum of squared elements.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum_squares());
        self.custom(
            &[a],
            out,
            Box::new(|ctx| {
                let g = ctx.grad.item() * T::of_f64(2.0);
                Ok(vec![Some(ctx.inputs[0].scale(g))])
            }),
        )
    }
}
