//! The multi-task transformer and its objective.

mod config;
mod loss;
mod mtl;
pub mod weights;

pub use config::{ModelConfig, ScalePreset, Variant};
pub use loss::mse;
pub use mtl::{Decoder, DeconvBlock, Example, Losses, ModelOutput, MtlModel, ParamGroup, RegressionHead, TargetScaler};
