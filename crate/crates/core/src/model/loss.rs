use crate::autodiff::{Tape, Var};
use crate::element::Element;
use crate::error::Result;
use crate::tensor::Tensor;

/// Mean of squared elementwise differences over all elements.
pub fn mse<T: Element>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    let diff = pred.sub(target)?;
    Ok(diff.sum_squares() / T::of_usize(diff.numel()))
}

impl<T: Element> Tape<T> {
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let diff = self.sub(pred, target)?;
        let sq = self.mul(diff, diff)?;
        Ok(self.mean(sq))
    }
}
