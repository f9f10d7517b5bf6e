//! Multi-task transformer for EEG gaze regression.
//!
//! The crate is layered bottom-up: [`tensor`] and [`autodiff`] provide dense
//! arithmetic with reverse-mode gradients, [`nn`] builds layers on top,
//! [`model`] assembles the representation module with its prediction,
//! reconstruction and pupil heads, and [`train`] runs the optimization loop,
//! metrics and sweeps over datasets from [`data`].

pub mod autodiff;
pub mod checks;
pub mod data;
mod codec;
pub mod element;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod nn;
pub mod plot;
pub mod rng;
pub mod tensor;
pub mod train;

pub use autodiff::{ParamId, ParamStore, Tape, Var};
pub use element::Element;
pub use error::{ContainerError, Error, Result};
pub use rng::{RngStream, StreamKey};
pub use tensor::Tensor;
