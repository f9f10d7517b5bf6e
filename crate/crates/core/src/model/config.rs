use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ConvGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalePreset {
    /// Full published geometry: 1×128×500 input, 768-wide encoder.
    Paper,
    /// Small geometry for training on a desktop CPU.
    Desk,
}

impl std::str::FromStr for ScalePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(ScalePreset::Paper),
            "desk" => Ok(ScalePreset::Desk),
            other => Err(Error::InvalidArgument(format!("unknown preset `{other}` (expected paper|desk)"))),
        }
    }
}

/// Which auxiliary heads a model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Encoder and gaze head only.
    Base,
    /// Gaze head plus reconstruction decoder.
    Mtl1,
    /// Gaze head plus pupil-size head.
    Mtl2,
    /// Every head; used by gradient checks.
    Full,
}

impl Variant {
    pub fn has_reconstruction(self) -> bool {
        matches!(self, Variant::Mtl1 | Variant::Full)
    }

    pub fn has_pupil(self) -> bool {
        matches!(self, Variant::Mtl2 | Variant::Full)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::Mtl1 => "mtl1",
            Variant::Mtl2 => "mtl2",
            Variant::Full => "full",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "mtl1" => Ok(Variant::Mtl1),
            "mtl2" => Ok(Variant::Mtl2),
            "full" => Ok(Variant::Full),
            other => Err(Error::InvalidArgument(format!("unknown variant `{other}` (expected base|mtl1|mtl2)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub scale_preset: ScalePreset,
    pub variant: Variant,
    /// EEG channels (input height).
    pub channels: usize,
    /// Samples per window (input width).
    pub timesteps: usize,
    pub stem_filters: usize,
    pub stem_geometry: ConvGeometry,
    pub depthwise_multiplier: usize,
    pub depthwise_geometry: ConvGeometry,
    pub embed_dim: usize,
    pub patch_grid: (usize, usize),
    pub encoder_layers: usize,
    pub encoder_heads: usize,
    pub mlp_ratio: usize,
    pub dropout_p: f64,
    pub pred_hidden: usize,
    /// Weight of the reconstruction loss.
    pub alpha_recon: f64,
    /// Weight of the pupil-size loss.
    pub alpha_pupil: f64,
    /// Coefficient of the squared-L2 parameter penalty.
    pub l2_coeff: f64,
    pub norm_eps: f64,
    pub instance_norm_affine: bool,
}

impl ModelConfig {
    pub fn paper() -> Self {
        ModelConfig {
            scale_preset: ScalePreset::Paper,
            variant: Variant::Mtl1,
            channels: 128,
            timesteps: 500,
            stem_filters: 256,
            stem_geometry: ConvGeometry::new((1, 36), (1, 36), (0, 2)),
            depthwise_multiplier: 3,
            depthwise_geometry: ConvGeometry::new((8, 1), (8, 1), (0, 0)),
            embed_dim: 768,
            patch_grid: (16, 14),
            encoder_layers: 12,
            encoder_heads: 12,
            mlp_ratio: 4,
            dropout_p: 0.3,
            pred_hidden: 768,
            alpha_recon: 140.0,
            alpha_pupil: 1.0,
            l2_coeff: 1e-4,
            norm_eps: 1e-5,
            instance_norm_affine: true,
        }
    }

    pub fn desk() -> Self {
        ModelConfig {
            scale_preset: ScalePreset::Desk,
            channels: 8,
            timesteps: 64,
            stem_filters: 16,
            stem_geometry: ConvGeometry::new((1, 16), (1, 16), (0, 0)),
            depthwise_multiplier: 2,
            depthwise_geometry: ConvGeometry::new((4, 1), (4, 1), (0, 0)),
            embed_dim: 32,
            patch_grid: (2, 4),
            encoder_layers: 2,
            encoder_heads: 2,
            pred_hidden: 32,
            ..Self::paper()
        }
    }

    pub fn preset(p: ScalePreset) -> Self {
        match p {
            ScalePreset::Paper => Self::paper(),
            ScalePreset::Desk => Self::desk(),
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn input_dims(&self) -> [usize; 3] {
        [1, self.channels, self.timesteps]
    }

    pub fn num_tokens(&self) -> usize {
        self.patch_grid.0 * self.patch_grid.1 + 1
    }

    /// Stem output `[stem_filters, C, W']`.
    pub fn stem_dims(&self) -> Result<[usize; 3]> {
        let (h, w) = self.stem_geometry.conv_output("stem", self.channels, self.timesteps)?;
        Ok([self.stem_filters, h, w])
    }

    /// Depthwise output `[D, H'', W']`.
    pub fn depthwise_dims(&self) -> Result<[usize; 3]> {
        let [f, h, w] = self.stem_dims()?;
        let (h2, w2) = self.depthwise_geometry.conv_output("depthwise", h, w)?;
        Ok([f * self.depthwise_multiplier, h2, w2])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let [d, hp, wp] = self.depthwise_dims()?;
        if d != self.embed_dim {
            return bad(format!(
                "stem_filters·multiplier = {d} but embed_dim = {}",
                self.embed_dim
            ));
        }
        if (hp, wp) != self.patch_grid {
            return bad(format!(
                "patch_grid {:?} disagrees with the {hp}×{wp} grid produced by the stem and depthwise layers",
                self.patch_grid
            ));
        }
        if self.embed_dim < 2 {
            return bad(format!("embed_dim {} leaves layer norm fewer than 2 features", self.embed_dim));
        }
        if self.encoder_heads == 0 || !self.embed_dim.is_multiple_of(self.encoder_heads) {
            return bad(format!(
                "embed_dim {} not divisible by {} heads",
                self.embed_dim, self.encoder_heads
            ));
        }
        if self.mlp_ratio == 0 || self.pred_hidden == 0 {
            return bad("mlp_ratio and pred_hidden must be positive".into());
        }
        if !(self.alpha_recon >= 0.0 && self.alpha_pupil >= 0.0 && self.l2_coeff >= 0.0) {
            return bad(format!(
                "alpha and lambda must be non-negative (alpha_recon={}, alpha_pupil={}, l2_coeff={})",
                self.alpha_recon, self.alpha_pupil, self.l2_coeff
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p {} outside [0, 1)", self.dropout_p));
        }
        if !(self.norm_eps > 0.0 && self.norm_eps.is_finite()) {
            return bad("norm_eps must be positive".into());
        }
        if self.variant.has_reconstruction() {
            let (h1, w1) = self.stem_geometry.transposed_output("decoder.spatial", hp, wp)?;
            let (h2, w2) = self.depthwise_geometry.transposed_output("decoder.temporal", h1, w1)?;
            if h1 * w1 < 2 || h2 * w2 < 2 {
                return bad(format!(
                    "decoder stages of {h1}×{w1} and {h2}×{w2} leave instance norm fewer than 2 positions"
                ));
            }
        }
        Ok(())
    }
}
