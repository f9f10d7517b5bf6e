//! Synthetic EEG windows with planted gaze structure.
//!
//! Each window is the sum of
//! - a gaze-dependent field: linear horizontal and vertical spatial patterns
//!   plus a weaker eccentricity pattern, switched on by a smooth step at a
//!   random fixation onset;
//! - a background rhythm with a random phase and fixed spatial mixing;
//! - AR(1) sensor noise;
//! - an occasional blink-like burst over frontal channels.
//!
//! The montage (spatial patterns) is a fixed function of `C`, so windows
//! generated with different seeds share one head model.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetHeader, Sample};
use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamKey};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub channels: usize,
    pub timesteps: usize,
    /// Screen extent in mm; gaze lies in `[0, w] × [0, h]`.
    pub screen_mm: [f64; 2],
    /// Dots per row and per column.
    pub grid: [usize; 2],
    /// Probability of the centre dot being drawn instead of a grid dot.
    pub center_bias: f64,
    /// Std of fixation scatter around the dot, mm.
    pub jitter_mm: f64,
    pub signal_amp: f64,
    pub eccentricity_amp: f64,
    pub rhythm_amp: f64,
    pub noise_std: f64,
    pub noise_ar: f64,
    /// Blink-like bursts per sample.
    pub artifact_rate: f64,
    pub artifact_amp: f64,
    pub with_pupil: bool,
    pub pupil_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            channels: 8,
            timesteps: 64,
            screen_mm: [400.0, 300.0],
            grid: [5, 5],
            center_bias: 0.2,
            jitter_mm: 6.0,
            signal_amp: 1.0,
            eccentricity_amp: 0.4,
            rhythm_amp: 0.8,
            noise_std: 1.0,
            noise_ar: 0.9,
            artifact_rate: 0.1,
            artifact_amp: 6.0,
            with_pupil: true,
            pupil_noise: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn for_shape(channels: usize, timesteps: usize) -> Self {
        SynthConfig { channels, timesteps, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.channels == 0 || self.timesteps == 0 {
            return bad(format!("C={}, T={} must be positive", self.channels, self.timesteps));
        }
        if self.grid[0] == 0 || self.grid[1] == 0 {
            return bad("grid must have at least one dot per axis".into());
        }
        if !(self.screen_mm[0] > 0.0 && self.screen_mm[1] > 0.0) {
            return bad("screen extent must be positive".into());
        }
        for (name, p) in [("center_bias", self.center_bias), ("artifact_rate", self.artifact_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if !(0.0..1.0).contains(&self.noise_ar) {
            return bad(format!("noise_ar = {} must be in [0, 1)", self.noise_ar));
        }
        let amps = [
            self.jitter_mm,
            self.signal_amp,
            self.eccentricity_amp,
            self.rhythm_amp,
            self.noise_std,
            self.artifact_amp,
            self.pupil_noise,
        ];
        if amps.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return bad("amplitudes must be finite and non-negative".into());
        }
        Ok(())
    }

    fn dot(&self, rng: &mut RngStream) -> [f64; 2] {
        if rng.uniform() < self.center_bias {
            return [self.screen_mm[0] / 2.0, self.screen_mm[1] / 2.0];
        }
        let pick = |n: usize, extent: f64, rng: &mut RngStream| {
            let i = rng.below(n);
            extent * (0.1 + 0.8 * (i as f64 + 0.5) / n as f64)
        };
        let x = pick(self.grid[0], self.screen_mm[0], rng);
        let y = pick(self.grid[1], self.screen_mm[1], rng);
        [x, y]
    }
}

struct Montage {
    horizontal: Vec<f64>,
    vertical: Vec<f64>,
    eccentric: Vec<f64>,
    rhythm: Vec<f64>,
    frontal: Vec<f64>,
}

impl Montage {
    fn new(channels: usize) -> Self {
        let mut rng = StreamKey::new(channels as u64).named("montage").rng();
        let mut horizontal = Vec::with_capacity(channels);
        let mut vertical = Vec::with_capacity(channels);
        let mut frontal = Vec::with_capacity(channels);
        for c in 0..channels {
            let phi = std::f64::consts::TAU * (c as f64 + 0.25) / channels as f64;
            horizontal.push(phi.cos() + 0.2 * rng.normal());
            vertical.push(phi.sin() + 0.2 * rng.normal());
            frontal.push(phi.sin().max(0.0) + 0.1);
        }
        let eccentric = (0..channels).map(|_| rng.normal()).collect();
        let rhythm = (0..channels).map(|_| rng.normal()).collect();
        Montage { horizontal, vertical, eccentric, rhythm, frontal }
    }
}

/// `n` windows drawn from `cfg`; a pure function of `(n, cfg, seed)`.
pub fn generate_synthetic(n: usize, cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    cfg.validate()?;
    let (c_n, t_n) = (cfg.channels, cfg.timesteps);
    let montage = Montage::new(c_n);
    let key = StreamKey::new(seed).named("synthetic");
    let innovation = cfg.noise_std * (1.0 - cfg.noise_ar * cfg.noise_ar).sqrt();
    let half = [cfg.screen_mm[0] / 2.0, cfg.screen_mm[1] / 2.0];

    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut gazes = Vec::with_capacity(n);
    let mut pupils = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = key.split(i as u64).rng();
        let dot = cfg.dot(&mut rng);
        let gaze = [0, 1].map(|a| (dot[a] + cfg.jitter_mm * rng.normal()).clamp(0.0, cfg.screen_mm[a]));
        let u = (gaze[0] - half[0]) / half[0];
        let v = (gaze[1] - half[1]) / half[1];
        let ecc = (u * u + v * v).sqrt();

        let onset = rng.uniform_range(0.0, t_n as f64 / 4.0);
        let period = rng.uniform_range(6.0, 12.0);
        let phase = rng.uniform_range(0.0, std::f64::consts::TAU);
        let blink = (rng.uniform() < cfg.artifact_rate).then(|| rng.uniform_range(0.0, t_n as f64));

        let mut x = vec![0.0; c_n * t_n];
        for c in 0..c_n {
            let field = cfg.signal_amp * (u * montage.horizontal[c] + v * montage.vertical[c])
                + cfg.eccentricity_amp * ecc * ecc * montage.eccentric[c];
            let mut ar = cfg.noise_std * rng.normal();
            for t in 0..t_n {
                let tf = t as f64;
                let step = 1.0 / (1.0 + (-(tf - onset) / 2.0).exp());
                let rhythm = cfg.rhythm_amp * montage.rhythm[c] * (std::f64::consts::TAU * tf / period + phase).sin();
                let mut value = field * step + rhythm + ar;
                if let Some(centre) = blink {
                    let z = (tf - centre) / 3.0;
                    value += cfg.artifact_amp * montage.frontal[c] * (-0.5 * z * z).exp();
                }
                x[c * t_n + t] = value;
                ar = cfg.noise_ar * ar + innovation * rng.normal();
            }
        }
        pupils.push(ecc + cfg.pupil_noise * rng.normal());
        gazes.push(gaze);
        raw.push(x);
    }

    let count = (n * c_n * t_n) as f64;
    let mean = raw.iter().flatten().sum::<f64>() / count;
    let var = raw.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / count;
    let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
    let (p_mean, p_scale) = zscore_params(&pupils);

    let samples = raw
        .into_iter()
        .zip(gazes)
        .zip(pupils)
        .map(|((x, gaze), p)| -> Result<Sample> {
            let eeg = x.into_iter().map(|v| ((v - mean) * scale) as f32).collect();
            Ok(Sample {
                eeg: Tensor::from_vec(&[1, c_n, t_n], eeg)?,
                gaze: gaze.map(|g| g as f32),
                pupil: cfg.with_pupil.then_some(((p - p_mean) * p_scale) as f32),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        DatasetHeader { channels: c_n, timesteps: t_n, has_pupil: cfg.with_pupil, seed },
        samples,
    )
}

fn zscore_params(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 })
}
