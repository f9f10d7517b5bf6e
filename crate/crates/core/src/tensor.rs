//! Dense row-major tensors and their forward kernels.
//!
//! Nothing here records gradients; see [`crate::autodiff`] for the tape that
//! wraps these kernels with backward rules.

use std::fmt;

use crate::element::Element;
use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

/// Binary elementwise operation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

impl BinaryOp {
    #[inline]
    pub fn apply<T: Element>(self, a: T, b: T) -> T {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
        }
    }

    fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

fn check_dims(op: &'static str, dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "{op}: dims must be a non-empty list of positive extents, got {dims:?}"
        )));
    }
    Ok(())
}

impl<T: Element> Tensor<T> {
    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        check_dims("from_vec", dims)?;
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::InvalidArgument(format!(
                "from_vec: dims {dims:?} hold {n} elements but {} were given",
                data.len()
            )));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn full(dims: &[usize], value: T) -> Self {
        check_dims("full", dims).expect("invalid dims");
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn ones(dims: &[usize]) -> Self {
        Self::full(dims, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            dims: vec![1],
            data: vec![value],
        }
    }

    pub fn from_f64_slice(dims: &[usize], values: &[f64]) -> Result<Self> {
        Self::from_vec(dims, values.iter().map(|&v| T::of_f64(v)).collect())
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    #[inline]
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        assert!(self.is_scalar(), "item() on tensor with dims {:?}", self.dims);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::of_f64(v.as_f64())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }

    pub fn reshape(&self, dims: &[usize]) -> Result<Self> {
        check_dims("reshape", dims)?;
        if dims.iter().product::<usize>() != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.dims.clone(),
                right: dims.to_vec(),
            });
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other, op)?;
        Ok(Tensor {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch {
                op,
                left: self.dims.clone(),
                right: other.dims.clone(),
            });
        }
        Ok(())
    }

    pub fn elementwise(&self, op: BinaryOp, other: &Self) -> Result<Self> {
        self.zip_map(other, op.name(), |a, b| op.apply(a, b))
    }

    pub fn elementwise_scalar(&self, op: BinaryOp, s: T) -> Self {
        self.map(|a| op.apply(a, s))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.elementwise(BinaryOp::Add, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.elementwise(BinaryOp::Sub, other)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.elementwise(BinaryOp::Mul, other)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|a| a * s)
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum_all(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| if v.abs() > acc { v.abs() } else { acc })
    }

    fn as_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.dims[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::InvalidArgument(format!(
                "{op}: expected a rank-2 tensor, got dims {:?}",
                self.dims
            ))),
        }
    }

    /// `[m×k] · [k×n] → [m×n]`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.as_matrix("matmul")?;
        let (k2, n) = other.as_matrix("matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.dims.clone(),
                right: other.dims.clone(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        matmul_into(&self.data, &other.data, &mut out, m, k, n);
        Ok(Tensor {
            dims: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.as_matrix("transpose")?;
        let mut out = Vec::with_capacity(r * c);
        for j in 0..c {
            for i in 0..r {
                out.push(self.data[i * c + j]);
            }
        }
        Ok(Tensor {
            dims: vec![c, r],
            data: out,
        })
    }

    /// Reduce over `axes`. Reduced axes are removed; reducing every axis gives dims `[1]`.
    pub fn reduce(&self, kind: Reduction, axes: &[usize]) -> Result<Self> {
        let rank = self.rank();
        let mut reduced = vec![false; rank];
        for &a in axes {
            if a >= rank {
                return Err(Error::InvalidAxis {
                    op: "reduce",
                    axis: a,
                    rank,
                });
            }
            reduced[a] = true;
        }
        let out_dims: Vec<usize> = self
            .dims
            .iter()
            .zip(&reduced)
            .filter(|(_, &r)| !r)
            .map(|(&d, _)| d)
            .collect();
        let count: usize = self
            .dims
            .iter()
            .zip(&reduced)
            .filter(|(_, &r)| r)
            .map(|(&d, _)| d)
            .product();
        let out_dims = if out_dims.is_empty() { vec![1] } else { out_dims };
        let mut out = vec![T::zero(); out_dims.iter().product()];
        let strides = strides(&self.dims);
        let keep_strides = kept_strides(&self.dims, &reduced);
        for (flat, &v) in self.data.iter().enumerate() {
            let mut rem = flat;
            let mut o = 0;
            for ax in 0..rank {
                let idx = rem / strides[ax];
                rem %= strides[ax];
                o += idx * keep_strides[ax];
            }
            out[o] += v;
        }
        if kind == Reduction::Mean {
            let c = T::of_usize(count);
            for v in &mut out {
                *v /= c;
            }
        }
        Ok(Tensor {
            dims: out_dims,
            data: out,
        })
    }

    pub fn sum(&self, axes: &[usize]) -> Result<Self> {
        self.reduce(Reduction::Sum, axes)
    }

    pub fn mean(&self, axes: &[usize]) -> Result<Self> {
        self.reduce(Reduction::Mean, axes)
    }

    /// Expand a reduced tensor back to `dims` by repeating along `axes`.
    pub fn expand_axes(&self, dims: &[usize], axes: &[usize]) -> Result<Self> {
        let rank = dims.len();
        let mut reduced = vec![false; rank];
        for &a in axes {
            if a >= rank {
                return Err(Error::InvalidAxis {
                    op: "expand",
                    axis: a,
                    rank,
                });
            }
            reduced[a] = true;
        }
        let expected: usize = dims
            .iter()
            .zip(&reduced)
            .filter(|(_, &r)| !r)
            .map(|(&d, _)| d)
            .product();
        if expected != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "expand",
                left: self.dims.clone(),
                right: dims.to_vec(),
            });
        }
        let n: usize = dims.iter().product();
        let st = strides(dims);
        let keep = kept_strides(dims, &reduced);
        let mut out = Vec::with_capacity(n);
        for flat in 0..n {
            let mut rem = flat;
            let mut o = 0;
            for ax in 0..rank {
                let idx = rem / st[ax];
                rem %= st[ax];
                o += idx * keep[ax];
            }
            out.push(self.data[o]);
        }
        Tensor::from_vec(dims, out)
    }
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Strides into the reduced tensor, zero on reduced axes.
fn kept_strides(dims: &[usize], reduced: &[bool]) -> Vec<usize> {
    let mut s = vec![0; dims.len()];
    let mut acc = 1;
    for i in (0..dims.len()).rev() {
        if !reduced[i] {
            s[i] = acc;
            acc *= dims[i];
        }
    }
    s
}

/// `out += a · b` for row-major `a: m×k`, `b: k×n`.
///
/// The blocked kernel uses a fixed loop order for a given shape, so results
/// are bitwise reproducible run to run.
pub(crate) fn matmul_into<T: Element>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    T::gemm_acc(a, b, out, m, k, n);
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor<{}>{:?} [", std::any::type_name::<T>(), self.dims)?;
        for (i, v) in self.data.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:?}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", ... ({} total)", self.data.len())?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_by_hand() {
        let a = Tensor::<f64>::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn scale_by_one_is_identity() {
        let t = Tensor::<f32>::from_vec(&[3], vec![0.5, -1.25, 7.0]).unwrap();
        assert_eq!(t.scale(1.0), t);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[3, 2]);
        let msg = a.sub(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
    }

    #[test]
    fn identity_matmul() {
        let b = Tensor::<f64>::from_vec(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(Tensor::eye(3).matmul(&b).unwrap(), b);
    }

    #[test]
    fn matmul_inner_mismatch() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        assert!(matches!(a.matmul(&a), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn reductions() {
        let t = Tensor::<f64>::from_vec(&[3], vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!(t.mean(&[0]).unwrap().item(), 4.0);
        assert_eq!(Tensor::<f64>::zeros(&[4, 2]).mean(&[0, 1]).unwrap().item(), 0.0);
        let m = Tensor::<f64>::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.sum(&[1]).unwrap().data(), &[6.0, 15.0]);
        assert_eq!(m.sum(&[0]).unwrap().data(), &[5.0, 7.0, 9.0]);
        assert!(matches!(m.sum(&[2]), Err(Error::InvalidAxis { .. })));
    }

    #[test]
    fn expand_inverts_reduce_shape() {
        let m = Tensor::<f64>::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let s = m.sum(&[1]).unwrap();
        let e = s.expand_axes(&[2, 3], &[1]).unwrap();
        assert_eq!(e.data(), &[6.0, 6.0, 6.0, 15.0, 15.0, 15.0]);
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(Tensor::<f64>::from_vec(&[2, 0], vec![]).is_err());
        assert!(Tensor::<f64>::from_vec(&[2, 2], vec![1.0]).is_err());
    }
}
