//! Neural network layers built on the autodiff tape.

mod attention;
mod conv;
mod dropout;
mod embed;
mod linear;
mod norm;
mod spec;
mod upsample;

pub use attention::{MlpBlock, MultiHeadAttention, TransformerBlock};
pub use conv::{conv2d_forward, depthwise_conv2d_forward, transposed_conv_forward, Conv2d, DepthwiseConv2d, TransposedConv2d};
pub use dropout::Dropout;
pub use embed::{PatchEmbedding, EMBED_INIT_STD};
pub use linear::Linear;
pub use norm::{InstanceNorm, LayerNorm, DEFAULT_EPS};
pub use spec::{ConvGeometry, LayerSpec};

use serde::{Deserialize, Serialize};

/// Whether stochastic layers are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

pub mod init {
    use crate::element::Element;
    use crate::rng::StreamKey;
    use crate::tensor::Tensor;

    /// Normal with std `1/√fan_in`.
    pub fn scaled_normal<T: Element>(key: StreamKey, dims: &[usize], fan_in: usize) -> Tensor<T> {
        normal(key, dims, 1.0 / (fan_in.max(1) as f64).sqrt())
    }

    pub fn normal<T: Element>(key: StreamKey, dims: &[usize], std: f64) -> Tensor<T> {
        key.rng().normal_tensor(dims, std)
    }
}
