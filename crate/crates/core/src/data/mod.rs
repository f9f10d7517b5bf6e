//! EEG windows with gaze targets: container format, synthetic generation,
//! splits and batching.

mod batch;
mod container;
mod split;
mod synth;

pub use batch::{batch_iter, epoch_permutation};
pub use container::{read_container, write_container, DATASET_MAGIC, DATASET_VERSION};
pub use split::{split, Split, SplitFractions};
pub use synth::{generate_synthetic, SynthConfig};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default pixel-to-millimetre factor for externally ingested pixel labels.
pub const DEFAULT_PX_PER_MM: f64 = 0.5;

/// One EEG window.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[1, C, T]`, z-normalized.
    pub eeg: Tensor<f32>,
    /// Gaze position on the screen plane, mm.
    pub gaze: [f32; 2],
    /// Z-scored pupil size.
    pub pupil: Option<f32>,
}

impl Sample {
    pub fn gaze_f64(&self) -> [f64; 2] {
        [self.gaze[0] as f64, self.gaze[1] as f64]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub channels: usize,
    pub timesteps: usize,
    pub has_pupil: bool,
    /// Generator seed or other provenance tag.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(header: DatasetHeader, samples: Vec<Sample>) -> Result<Self> {
        let ds = Dataset { header, samples };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        for (i, s) in self.samples.iter().enumerate() {
            if s.eeg.dims() != [1, h.channels, h.timesteps] {
                return Err(Error::InvalidArgument(format!(
                    "sample {i}: eeg dims {:?}, header says [1, {}, {}]",
                    s.eeg.dims(),
                    h.channels,
                    h.timesteps
                )));
            }
            if s.pupil.is_some() != h.has_pupil {
                return Err(Error::InvalidArgument(format!("sample {i}: pupil presence disagrees with header")));
            }
            let finite = s.eeg.is_finite() && s.gaze.iter().all(|v| v.is_finite()) && s.pupil.is_none_or(f32::is_finite);
            if !finite {
                return Err(Error::NonFinite {
                    what: "sample values".into(),
                    location: format!("sample {i}"),
                });
            }
        }
        Ok(())
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            header: self.header.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn gaze_targets(&self) -> Vec<[f64; 2]> {
        self.samples.iter().map(Sample::gaze_f64).collect()
    }
}

/// Convert a pixel-space gaze label to millimetres.
pub fn px_to_mm(px: [f64; 2], px_per_mm: f64) -> [f64; 2] {
    [px[0] / px_per_mm, px[1] / px_per_mm]
}
