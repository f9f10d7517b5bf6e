use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Losses, ModelConfig};
use crate::train::TrainConfig;

/// Training losses averaged over the samples of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossSummary {
    pub main: f64,
    pub recon: Option<f64>,
    pub pupil: Option<f64>,
    pub l2: f64,
    pub total: f64,
}

impl LossSummary {
    pub(crate) fn accumulate(&mut self, l: &Losses, weight: f64) {
        self.main += weight * l.main;
        self.l2 += weight * l.l2;
        self.total += weight * l.total;
        if let Some(r) = l.recon {
            *self.recon.get_or_insert(0.0) += weight * r;
        }
        if let Some(p) = l.pupil {
            *self.pupil.get_or_insert(0.0) += weight * p;
        }
    }
}

impl From<&Losses> for LossSummary {
    fn from(l: &Losses) -> Self {
        LossSummary { main: l.main, recon: l.recon, pupil: l.pupil, l2: l.l2, total: l.total }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub steps: usize,
    pub train: LossSummary,
    pub val_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: String,
    pub seed: u64,
    pub config_hash: String,
    pub schedule: String,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    pub test_rmse: Option<f64>,
    pub naive_test_rmse: Option<f64>,
    pub wall_time_s: f64,
}

impl RunReport {
    /// The report with its wall-clock field zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> RunReport {
        RunReport { wall_time_s: 0.0, ..self.clone() }
    }

    pub fn lr_sequence(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.lr).collect()
    }

    pub fn val_rmse_sequence(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_rmse).collect()
    }

    /// One line per epoch followed by the summary lines.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
        let mut out = String::new();
        let _ = writeln!(out, "# variant={} seed={} config={}", self.variant, self.seed, self.config_hash);
        let _ = writeln!(out, "# {}", self.schedule);
        let _ = writeln!(
            out,
            "{:>5} {:>12} {:>6} {:>13} {:>13} {:>13} {:>13} {:>13} {:>12}",
            "epoch", "lr", "steps", "main", "recon", "pupil", "l2", "total", "val_rmse_mm"
        );
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{:>5} {:>12.6e} {:>6} {:>13.6e} {:>13} {:>13} {:>13.6e} {:>13.6e} {:>12.4}",
                e.epoch,
                e.lr,
                e.steps,
                e.train.main,
                opt(e.train.recon),
                opt(e.train.pupil),
                e.train.l2,
                e.train.total,
                e.val_rmse
            );
        }
        let mm = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(out, "best_epoch {} best_val_rmse_mm {:.4}", self.best_epoch, self.best_val_rmse);
        let _ = writeln!(out, "test_rmse_mm {} naive_test_rmse_mm {}", mm(self.test_rmse), mm(self.naive_test_rmse));
        let _ = writeln!(out, "wall_time_s {:.3}", self.wall_time_s);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("run report: {e}")))
    }
}

/// Hex SHA-256 prefix of the serialized model and training configuration.
pub fn config_hash(model: &ModelConfig, train: &TrainConfig) -> String {
    let doc = serde_json::json!({ "model": model, "train": train });
    let digest = Sha256::digest(doc.to_string().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
