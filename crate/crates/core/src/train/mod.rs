//! The optimization loop, its schedule and metrics, run reports and the
//! reconstruction-weight sweep.

mod config;
mod metrics;
mod optim;
mod report;
mod sweep;

pub use config::{lr_schedule, OptimizerKind, TrainConfig, SCHEDULE_FORMULA};
pub use metrics::{mean_point, mean_std, naive_baseline, rmse_mm, rmse_points};
pub use optim::{clip_grad_norm, grad_norm, Optimizer, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use report::{config_hash, EpochRecord, LossSummary, RunReport};
pub use sweep::{rows_to_csv, run_sweep, summarize, summary_table, SweepRow, SweepSpec, SweepSummary, DEFAULT_SWEEP_WEIGHTS};

use std::time::Instant;

use crate::autodiff::Tape;
use crate::data::{split, Dataset, SplitFractions};
use crate::element::Element;
use crate::error::{Error, Result};
use crate::model::{Example, Losses, MtlModel, TargetScaler};
use crate::nn::Mode;
use crate::rng::StreamKey;
use crate::tensor::Tensor;

/// Train, validation and optional test partitions.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Option<Dataset>,
}

impl Splits {
    /// 70/15/15 split keyed by `seed`.
    pub fn from_dataset(ds: &Dataset, seed: u64) -> Result<Self> {
        let s = split(ds.len(), SplitFractions::default(), seed)?;
        Ok(Splits {
            train: ds.subset(&s.train),
            val: ds.subset(&s.val),
            test: Some(ds.subset(&s.test)),
        })
    }
}

/// Samples converted to the model's element type.
pub struct Prepared<T> {
    pub eeg: Vec<Tensor<T>>,
    pub gaze: Vec<[f64; 2]>,
    pub pupil: Vec<Option<f64>>,
}

impl<T: Element> Prepared<T> {
    pub fn new(ds: &Dataset) -> Self {
        Prepared {
            eeg: ds.samples.iter().map(|s| s.eeg.cast()).collect(),
            gaze: ds.gaze_targets(),
            pupil: ds.samples.iter().map(|s| s.pupil.map(f64::from)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.eeg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eeg.is_empty()
    }

    pub fn examples(&self, indices: &[usize]) -> Vec<Example<'_, T>> {
        indices
            .iter()
            .map(|&i| Example { eeg: &self.eeg[i], gaze: self.gaze[i], pupil: self.pupil[i] })
            .collect()
    }
}

/// Eval-mode gaze predictions and their RMSE.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub preds: Vec<[f64; 2]>,
    pub rmse: f64,
}

pub fn evaluate<T: Element>(model: &MtlModel<T>, data: &Prepared<T>) -> Result<Evaluation> {
    let preds = data.eeg.iter().map(|x| model.predict(x)).collect::<Result<Vec<_>>>()?;
    let rmse = rmse_points(&preds, &data.gaze)?;
    Ok(Evaluation { preds, rmse })
}

/// Objective components over the whole set in eval mode (no dropout).
pub fn eval_losses<T: Element>(model: &MtlModel<T>, data: &Prepared<T>) -> Result<Losses> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut tape = Tape::inference();
    Ok(model.total_loss(&mut tape, &data.examples(&idx), Mode::Eval, StreamKey::new(0))?.losses)
}

fn check_compatible<T: Element>(model: &MtlModel<T>, ds: &Dataset, role: &str) -> Result<()> {
    let c = &model.config;
    if (ds.header.channels, ds.header.timesteps) != (c.channels, c.timesteps) {
        return Err(Error::Dataset(format!(
            "{role} data is {}x{} but the model expects {}x{}",
            ds.header.channels, ds.header.timesteps, c.channels, c.timesteps
        )));
    }
    if model.pupil_head.is_some() && !ds.header.has_pupil {
        return Err(Error::Dataset(format!(
            "variant {} needs pupil targets but the {role} container's has-pupil flag is not set",
            c.variant
        )));
    }
    if ds.is_empty() {
        return Err(Error::Dataset(format!("{role} split is empty")));
    }
    Ok(())
}

/// Holds a model with its optimizer state across steps.
pub struct Trainer<T: Element> {
    pub model: MtlModel<T>,
    pub cfg: TrainConfig,
    optimizer: Optimizer<T>,
    steps: usize,
}

impl<T: Element> Trainer<T> {
    /// Applies the weight overrides of `cfg` to the model configuration.
    pub fn new(mut model: MtlModel<T>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if let Some(a) = cfg.alpha_recon {
            model.config.alpha_recon = a;
        }
        if let Some(a) = cfg.alpha_pupil {
            model.config.alpha_pupil = a;
        }
        if let Some(l) = cfg.l2_coeff {
            model.config.l2_coeff = l;
        }
        model.config.validate()?;
        let optimizer = Optimizer::new(cfg.optimizer, &model.store);
        Ok(Trainer { model, cfg, optimizer, steps: 0 })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Forward, backward, optional clipping and one optimizer update.
    pub fn step(&mut self, batch: &[Example<'_, T>], lr: f64, dropout: StreamKey) -> Result<Losses> {
        let mut tape = Tape::new();
        let out = self.model.total_loss(&mut tape, batch, Mode::Train, dropout)?;
        if !out.losses.total.is_finite() {
            return Err(Error::NonFinite {
                what: "loss".into(),
                location: format!("step {}", self.steps),
            });
        }
        tape.backward(out.total)?;
        let store = &mut self.model.store;
        store.zero_grads();
        store.accumulate_grads(&tape)?;
        if let Some(max) = self.cfg.clip_norm {
            clip_grad_norm(store, max);
        }
        self.optimizer.step(store, lr)?;
        self.steps += 1;
        Ok(out.losses)
    }

    /// Full schedule over `splits`; returns the best-validation model.
    pub fn run(mut self, splits: &Splits) -> Result<(MtlModel<T>, RunReport)> {
        let start = Instant::now();
        check_compatible(&self.model, &splits.train, "train")?;
        check_compatible(&self.model, &splits.val, "validation")?;
        if let Some(test) = &splits.test {
            check_compatible(&self.model, test, "test")?;
        }
        let train = Prepared::<T>::new(&splits.train);
        let val = Prepared::<T>::new(&splits.val);
        if self.cfg.fit_scaler {
            self.model.scaler = TargetScaler::fit(&train.gaze);
        }
        let cfg = self.cfg.clone();
        let dropout_root = StreamKey::new(cfg.seed).named("dropout");

        let mut epochs = Vec::with_capacity(cfg.epochs);
        let mut best: Option<(usize, f64, Vec<Tensor<T>>)> = None;
        'epochs: for epoch in 0..cfg.epochs {
            let lr = lr_schedule(epoch, &cfg)?;
            let mut summary = LossSummary::default();
            let mut seen = 0usize;
            let first_step = self.steps;
            for (b, idx) in crate::data::batch_iter(train.len(), cfg.batch_size, cfg.seed, epoch)?.iter().enumerate() {
                let batch = train.examples(idx);
                let losses = self
                    .step(&batch, lr, dropout_root.split(epoch as u64).split(b as u64))
                    .map_err(|e| match e {
                        Error::NonFinite { what, location } => Error::NonFinite {
                            what,
                            location: format!("epoch {epoch}, batch {b} ({location})"),
                        },
                        other => other,
                    })?;
                summary.accumulate(&losses, idx.len() as f64);
                seen += idx.len();
                if cfg.max_steps.is_some_and(|m| self.steps >= m) {
                    break;
                }
            }
            let w = 1.0 / seen as f64;
            summary.main *= w;
            summary.l2 *= w;
            summary.total *= w;
            summary.recon = summary.recon.map(|r| r * w);
            summary.pupil = summary.pupil.map(|p| p * w);

            let val_rmse = evaluate(&self.model, &val)?.rmse;
            if !val_rmse.is_finite() {
                return Err(Error::NonFinite {
                    what: "validation RMSE".into(),
                    location: format!("epoch {epoch}"),
                });
            }
            if best.as_ref().is_none_or(|(_, v, _)| val_rmse < *v) {
                let snapshot = self.model.store.iter().map(|(_, p)| p.value.clone()).collect();
                best = Some((epoch, val_rmse, snapshot));
            }
            epochs.push(EpochRecord { epoch, lr, steps: self.steps - first_step, train: summary, val_rmse });
            if cfg.max_steps.is_some_and(|m| self.steps >= m) {
                break 'epochs;
            }
        }

        let (best_epoch, best_val_rmse, snapshot) = best.expect("at least one epoch runs");
        let mut model = self.model;
        for ((_, p), v) in model.store.iter_mut().zip(snapshot) {
            p.value = v;
        }
        let (test_rmse, naive_test_rmse) = match &splits.test {
            Some(test) => {
                let test = Prepared::<T>::new(test);
                (Some(evaluate(&model, &test)?.rmse), Some(naive_baseline(&train.gaze, &test.gaze)?))
            }
            None => (None, None),
        };
        let report = RunReport {
            variant: model.config.variant.to_string(),
            seed: cfg.seed,
            config_hash: config_hash(&model.config, &cfg),
            schedule: SCHEDULE_FORMULA.to_string(),
            epochs,
            best_epoch,
            best_val_rmse,
            test_rmse,
            naive_test_rmse,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        Ok((model, report))
    }
}

/// Trains `model` on `splits` under `cfg`.
pub fn train<T: Element>(model: MtlModel<T>, splits: &Splits, cfg: &TrainConfig) -> Result<(MtlModel<T>, RunReport)> {
    Trainer::new(model, cfg.clone())?.run(splits)
}
