use crate::autodiff::ParamStore;
use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::train::OptimizerKind;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Optimizer state for one parameter store.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    steps: u64,
}

impl<T: Element> Optimizer<T> {
    pub fn new(kind: OptimizerKind, store: &ParamStore<T>) -> Self {
        let zeros = || store.iter().map(|(_, p)| Tensor::zeros(p.value.dims())).collect::<Vec<_>>();
        let (first, second) = match kind {
            OptimizerKind::Adam => (zeros(), zeros()),
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
        };
        Optimizer { kind, first, second, steps: 0 }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the gradients held in `store`. Nothing is
    /// modified if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore<T>, lr: f64) -> Result<()> {
        if let Some((_, p)) = store.iter().find(|(_, p)| !p.grad.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient".into(),
                location: p.name.clone(),
            });
        }
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = T::of_f64(lr);
                for (_, p) in store.iter_mut() {
                    for (w, &g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                        *w -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                let (b1, b2) = (T::of_f64(ADAM_BETA1), T::of_f64(ADAM_BETA2));
                let (one_b1, one_b2) = (T::of_f64(1.0 - ADAM_BETA1), T::of_f64(1.0 - ADAM_BETA2));
                let (c1, c2) = (T::of_f64(c1), T::of_f64(c2));
                let (lr, eps) = (T::of_f64(lr), T::of_f64(ADAM_EPS));
                for (id, p) in store.iter_mut() {
                    let m = self.first[id.index()].data_mut();
                    let v = self.second[id.index()].data_mut();
                    for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(p.grad.data()).zip(m).zip(v) {
                        *m = b1 * *m + one_b1 * g;
                        *v = b2 * *v + one_b2 * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Global L2 norm of all gradients in `store`.
pub fn grad_norm<T: Element>(store: &ParamStore<T>) -> f64 {
    store
        .iter()
        .map(|(_, p)| p.grad.data().iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Rescales gradients so their global norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm<T: Element>(store: &mut ParamStore<T>, max_norm: f64) -> f64 {
    let norm = grad_norm(store);
    if norm > max_norm {
        let s = T::of_f64(max_norm / norm);
        for (_, p) in store.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}
