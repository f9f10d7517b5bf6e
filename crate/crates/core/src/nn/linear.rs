use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::nn::init;
use crate::rng::StreamKey;
use crate::tensor::Tensor;

/// Fully connected layer, `y = x·W + b` with `W: [in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        in_features: usize,
        out_features: usize,
        key: StreamKey,
    ) -> Result<Self> {
        let weight = store.insert(
            format!("{name}.weight"),
            init::scaled_normal(key.named(name), &[in_features, out_features], in_features),
        )?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(&[out_features]))?;
        Ok(Linear { weight, bias, in_features, out_features })
    }

    /// Maps `[L, in] → [L, out]`; a vector `[in]` is treated as one row.
    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let x = match *tape.value(x).dims() {
            [n] if n == self.in_features => tape.reshape(x, &[1, n])?,
            [_, n] if n == self.in_features => x,
            ref d => {
                return Err(Error::ShapeMismatch {
                    op: "linear",
                    left: d.to_vec(),
                    right: vec![self.in_features, self.out_features],
                })
            }
        };
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let y = tape.matmul(x, w)?;
        tape.add_row_vector(y, b)
    }
}
