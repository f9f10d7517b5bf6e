use crate::autodiff::{Tape, Var};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Inverted dropout: survivors are scaled by `1/(1−p)` in training, eval is the identity.
#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout rate {p} outside [0, 1)")));
        }
        Ok(Dropout { p })
    }

    pub fn rate(&self) -> f64 {
        self.p
    }

    /// The keep mask (`0` or `1/(1−p)`) for a tensor of `dims`.
    pub fn mask<T: Element>(&self, dims: &[usize], rng: &mut RngStream) -> Tensor<T> {
        let keep = T::of_f64(1.0 / (1.0 - self.p));
        let n = dims.iter().product();
        let data = (0..n)
            .map(|_| if rng.uniform() < self.p { T::zero() } else { keep })
            .collect();
        Tensor::from_vec(dims, data).expect("mask dims match")
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, x: Var, mode: Mode, rng: &mut RngStream) -> Result<Var> {
        if mode == Mode::Eval || self.p == 0.0 {
            return Ok(x);
        }
        let mask = self.mask(tape.value(x).dims(), rng);
        let m = tape.constant(mask);
        tape.mul(x, m)
    }
}
