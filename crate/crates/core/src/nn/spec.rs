use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel, stride and zero padding along (height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvGeometry {
    pub fn new(kernel: (usize, usize), stride: (usize, usize), padding: (usize, usize)) -> Self {
        ConvGeometry { kernel, stride, padding }
    }

    /// Stride 1, no padding.
    pub fn unit(kernel: (usize, usize)) -> Self {
        Self::new(kernel, (1, 1), (0, 0))
    }

    fn validate(&self, layer: &'static str) -> Result<()> {
        if self.kernel.0 == 0 || self.kernel.1 == 0 || self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(Error::geometry(layer, format!("zero kernel or stride in {self:?}")));
        }
        Ok(())
    }

    /// `⌊(n + 2p − k)/s⌋ + 1` along each axis.
    pub fn conv_output(&self, layer: &'static str, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate(layer)?;
        let axis = |n: usize, k: usize, s: usize, p: usize, name: &str| {
            let padded = n + 2 * p;
            if padded < k {
                return Err(Error::geometry(
                    layer,
                    format!("{name}: padded extent {padded} (= {n} + 2·{p}) is smaller than kernel {k}"),
                ));
            }
            Ok((padded - k) / s + 1)
        };
        Ok((
            axis(h, self.kernel.0, self.stride.0, self.padding.0, "height")?,
            axis(w, self.kernel.1, self.stride.1, self.padding.1, "width")?,
        ))
    }

    /// `(n − 1)·s + k − 2p` along each axis.
    pub fn transposed_output(&self, layer: &'static str, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate(layer)?;
        let axis = |n: usize, k: usize, s: usize, p: usize, name: &str| {
            let full = (n - 1) * s + k;
            if full <= 2 * p {
                return Err(Error::geometry(
                    layer,
                    format!("{name}: computed extent {full} − 2·{p} is not positive"),
                ));
            }
            Ok(full - 2 * p)
        };
        Ok((
            axis(h, self.kernel.0, self.stride.0, self.padding.0, "height")?,
            axis(w, self.kernel.1, self.stride.1, self.padding.1, "width")?,
        ))
    }
}

/// Declarative description of a layer, with a total shape function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2d { in_channels: usize, out_channels: usize, geometry: ConvGeometry },
    DepthwiseConv2d { channels: usize, multiplier: usize, geometry: ConvGeometry },
    TransposedConv { in_channels: usize, out_channels: usize, geometry: ConvGeometry },
    LayerNorm { features: usize },
    InstanceNorm { channels: usize },
    Relu,
    Gelu,
    MultiHeadAttention { dim: usize, heads: usize },
    MlpBlock { dim: usize, hidden: usize },
    Dropout { p: f64 },
    Upsample { target: (usize, usize) },
    /// Patch tokens plus a CLS row, with one positional row per token.
    EmbeddingTable { dim: usize, grid: (usize, usize) },
}

fn expect_rank<'a>(layer: &'static str, input: &'a [usize], rank: usize) -> Result<&'a [usize]> {
    if input.len() != rank {
        return Err(Error::geometry(layer, format!("expected rank {rank} input, got {input:?}")));
    }
    Ok(input)
}

fn expect_eq(layer: &'static str, what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::geometry(layer, format!("{what}: expected {expected}, got {got}")));
    }
    Ok(())
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::DepthwiseConv2d { .. } => "depthwise_conv2d",
            LayerSpec::TransposedConv { .. } => "transposed_conv",
            LayerSpec::LayerNorm { .. } => "layer_norm",
            LayerSpec::InstanceNorm { .. } => "instance_norm",
            LayerSpec::Relu => "relu",
            LayerSpec::Gelu => "gelu",
            LayerSpec::MultiHeadAttention { .. } => "multi_head_attention",
            LayerSpec::MlpBlock { .. } => "mlp_block",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Upsample { .. } => "upsample",
            LayerSpec::EmbeddingTable { .. } => "embedding_table",
        }
    }

    /// Output dims for `input`, or the reason the input is not admissible.
    pub fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>> {
        let layer = self.name();
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, geometry } => {
                let d = expect_rank(layer, input, 3)?;
                expect_eq(layer, "input channels", in_channels, d[0])?;
                let (h, w) = geometry.conv_output(layer, d[1], d[2])?;
                Ok(vec![out_channels, h, w])
            }
            LayerSpec::DepthwiseConv2d { channels, multiplier, geometry } => {
                let d = expect_rank(layer, input, 3)?;
                expect_eq(layer, "input channels", channels, d[0])?;
                if multiplier == 0 {
                    return Err(Error::geometry(layer, "multiplier must be at least 1"));
                }
                let (h, w) = geometry.conv_output(layer, d[1], d[2])?;
                Ok(vec![channels * multiplier, h, w])
            }
            LayerSpec::TransposedConv { in_channels, out_channels, geometry } => {
                let d = expect_rank(layer, input, 3)?;
                expect_eq(layer, "input channels", in_channels, d[0])?;
                let (h, w) = geometry.transposed_output(layer, d[1], d[2])?;
                Ok(vec![out_channels, h, w])
            }
            LayerSpec::LayerNorm { features } => {
                let last = *input.last().ok_or_else(|| Error::geometry(layer, "empty input dims"))?;
                expect_eq(layer, "feature axis", features, last)?;
                if features < 2 {
                    return Err(Error::geometry(layer, "normalized axis needs at least 2 elements"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::InstanceNorm { channels } => {
                if input.len() < 2 {
                    return Err(Error::geometry(layer, format!("expected [C, ...spatial], got {input:?}")));
                }
                expect_eq(layer, "channels", channels, input[0])?;
                if input[1..].iter().product::<usize>() < 2 {
                    return Err(Error::geometry(layer, "per-channel spatial size must be at least 2"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Relu | LayerSpec::Gelu => Ok(input.to_vec()),
            LayerSpec::MultiHeadAttention { dim, heads } => {
                let d = expect_rank(layer, input, 2)?;
                expect_eq(layer, "model width", dim, d[1])?;
                if heads == 0 || dim % heads != 0 {
                    return Err(Error::geometry(layer, format!("width {dim} not divisible by {heads} heads")));
                }
                Ok(input.to_vec())
            }
            LayerSpec::MlpBlock { dim, .. } => {
                let d = expect_rank(layer, input, 2)?;
                expect_eq(layer, "model width", dim, d[1])?;
                Ok(input.to_vec())
            }
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return Err(Error::geometry(layer, format!("rate {p} outside [0, 1)")));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Upsample { target } => {
                let d = expect_rank(layer, input, 3)?;
                if target.0 == 0 || target.1 == 0 {
                    return Err(Error::geometry(layer, format!("target {target:?} must be positive")));
                }
                Ok(vec![d[0], target.0, target.1])
            }
            LayerSpec::EmbeddingTable { dim, grid } => {
                let d = expect_rank(layer, input, 3)?;
                expect_eq(layer, "feature channels", dim, d[0])?;
                expect_eq(layer, "grid height", grid.0, d[1])?;
                expect_eq(layer, "grid width", grid.1, d[2])?;
                Ok(vec![grid.0 * grid.1 + 1, dim])
            }
        }
    }
}
