use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, MtlModel, Variant};
use crate::train::{mean_std, train, Splits, TrainConfig};

pub const DEFAULT_SWEEP_WEIGHTS: [f64; 7] = [0.0, 17.5, 35.0, 70.0, 140.0, 280.0, 560.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Reconstruction weights, strictly increasing.
    pub weights: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec { weights: DEFAULT_SWEEP_WEIGHTS.to_vec(), seeds: vec![0, 1, 2] }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("sweep needs at least one weight and one seed".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("sweep weights must be finite and non-negative".into()));
        }
        if self.weights.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sweep weights must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub seed: u64,
    pub test_rmse: Option<f64>,
    /// `ok` or the failure message.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub alpha: f64,
    pub mean: f64,
    pub std: f64,
    pub runs_ok: usize,
    pub runs_failed: usize,
}

/// One reconstruction-variant run per `(α, seed)`. Every seed keys the
/// split, initialization, shuffling and dropout, so runs sharing a seed are
/// paired across weights. A failing run becomes a failed row.
pub fn run_sweep(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    spec: &SweepSpec,
    mut on_row: impl FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.weights.len() * spec.seeds.len());
    let mut seeds = spec.seeds.clone();
    seeds.sort_unstable();
    for &alpha in &spec.weights {
        for &seed in &seeds {
            let outcome = (|| -> Result<f64> {
                let splits = Splits::from_dataset(dataset, seed)?;
                let cfg = TrainConfig { seed, alpha_recon: Some(alpha), ..train_cfg.clone() };
                let model = MtlModel::<f32>::new(model_cfg.clone().with_variant(Variant::Mtl1), seed)?;
                let (_, report) = train(model, &splits, &cfg)?;
                Ok(report.test_rmse.expect("sweep splits carry a test set"))
            })();
            let row = match outcome {
                Ok(rmse) => SweepRow { alpha, seed, test_rmse: Some(rmse), status: "ok".into() },
                Err(e) => SweepRow { alpha, seed, test_rmse: None, status: format!("failed: {e}") },
            };
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Mean ± sample std of successful runs per weight.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut alphas: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    alphas
        .into_iter()
        .map(|alpha| {
            let of_alpha: Vec<&SweepRow> = rows.iter().filter(|r| r.alpha == alpha).collect();
            let ok: Vec<f64> = of_alpha.iter().filter_map(|r| r.test_rmse).collect();
            let (mean, std) = mean_std(&ok);
            SweepSummary { alpha, mean, std, runs_ok: ok.len(), runs_failed: of_alpha.len() - ok.len() }
        })
        .collect()
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "alpha,seed,test_rmse,status";

    pub fn csv_line(&self) -> String {
        let rmse = self.test_rmse.map_or_else(String::new, |v| format!("{v:.17e}"));
        let status = self.status.replace(['"', ',', '\n'], " ");
        format!("{},{},{},{}", self.alpha, self.seed, rmse, status)
    }
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(a.seed.cmp(&b.seed)));
    let mut out = format!("{}\n", SweepRow::CSV_HEADER);
    for r in &sorted {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

pub fn summary_table(summary: &[SweepSummary]) -> String {
    let mut out = String::from("alpha,mean_test_rmse,std_test_rmse,runs_ok,runs_failed\n");
    for s in summary {
        let _ = writeln!(out, "{},{:.6},{:.6},{},{}", s.alpha, s.mean, s.std, s.runs_ok, s.runs_failed);
    }
    out
}
