use std::fs;
use std::path::{Path, PathBuf};

use gazemtl::checks::run_suite;
use gazemtl::data::{generate_synthetic, Dataset};
use gazemtl::gradcheck::GradCheckConfig;
use gazemtl::model::{weights, MtlModel, ScalePreset, Variant};
use gazemtl::plot::{scatter_csv, scatter_rows, scatter_svg};
use gazemtl::train::{
    evaluate, naive_baseline, rows_to_csv, run_sweep, summarize, summary_table, train as run_training, OptimizerKind,
    Prepared, Splits, SweepRow, TrainConfig,
};
use gazemtl::Error;

use crate::config::FileConfig;
use crate::error::CliError;
use crate::{Common, TrainOverrides};

fn preset(common: &Common) -> Result<ScalePreset, CliError> {
    Ok(common.preset.parse()?)
}

fn out_dir(common: &Common) -> Result<PathBuf, CliError> {
    let dir = common.out.clone().unwrap_or_else(|| common.out_dir.clone());
    fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    Ok(dir)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(())
}

fn apply(cfg: &mut TrainConfig, o: &TrainOverrides, seed: u64) -> Result<(), CliError> {
    cfg.seed = seed;
    if let Some(v) = o.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = o.lr {
        cfg.base_lr = v;
    }
    if let Some(v) = o.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = &o.optimizer {
        cfg.optimizer = v.parse::<OptimizerKind>()?;
    }
    if o.alpha_recon.is_some() {
        cfg.alpha_recon = o.alpha_recon;
    }
    if o.alpha_pupil.is_some() {
        cfg.alpha_pupil = o.alpha_pupil;
    }
    if o.lambda.is_some() {
        cfg.l2_coeff = o.lambda;
    }
    if let Some(c) = o.clip_norm {
        cfg.clip_norm = (c > 0.0).then_some(c);
    }
    cfg.validate()?;
    Ok(())
}

pub fn gen(common: &Common, n: usize, with_pupil: bool) -> Result<(), CliError> {
    let file = FileConfig::load(common.config.as_deref())?;
    let model = file.model(preset(common)?)?;
    let mut synth = file.synth(&model)?;
    synth.with_pupil &= with_pupil;
    let path = match &common.out {
        Some(p) => p.clone(),
        None => out_dir(common)?.join("dataset.eegc"),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io { path: parent.into(), source: e })?;
    }
    let ds = generate_synthetic(n, &synth, common.seed)?;
    ds.save(&path)?;
    let h = &ds.header;
    println!(
        "wrote {} samples, C={} T={} pupil={} seed={} -> {}",
        ds.len(),
        h.channels,
        h.timesteps,
        if h.has_pupil { "yes" } else { "no" },
        h.seed,
        path.display()
    );
    Ok(())
}

pub fn train(common: &Common, data: &Path, variant: &str, overrides: &TrainOverrides) -> Result<(), CliError> {
    let file = FileConfig::load(common.config.as_deref())?;
    let preset = preset(common)?;
    let variant: Variant = variant.parse()?;
    let model_cfg = file.model(preset)?.with_variant(variant);
    let mut cfg = file.train(preset)?;
    apply(&mut cfg, overrides, common.seed)?;
    let ds = Dataset::load(data)?;
    let splits = Splits::from_dataset(&ds, cfg.seed)?;
    let model = MtlModel::<f32>::new(model_cfg, cfg.seed)?;
    let (best, report) = run_training(model, &splits, &cfg)?;
    let dir = out_dir(common)?;
    write(&dir.join("report.txt"), report.to_table())?;
    write(&dir.join("report.json"), report.to_json())?;
    weights::save(&best, &dir.join("checkpoint.eegw"))?;
    print!("{}", report.to_table());
    Ok(())
}

pub fn sweep(
    common: &Common,
    data: &Path,
    weights: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    overrides: &TrainOverrides,
) -> Result<(), CliError> {
    let file = FileConfig::load(common.config.as_deref())?;
    let preset = preset(common)?;
    let model_cfg = file.model(preset)?;
    let mut cfg = file.train(preset)?;
    apply(&mut cfg, overrides, common.seed)?;
    let mut spec = file.sweep()?;
    if let Some(w) = weights {
        spec.weights = w;
    }
    if let Some(s) = seeds {
        spec.seeds = s;
    }
    let ds = Dataset::load(data)?;
    let dir = out_dir(common)?;
    let rows = run_sweep(&ds, &model_cfg, &cfg, &spec, |row: &SweepRow| eprintln!("{}", row.csv_line()))?;
    write(&dir.join("sweep.csv"), rows_to_csv(&rows))?;
    let summary = summary_table(&summarize(&rows));
    write(&dir.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn gradcheck(
    common: &Common,
    tolerance: f64,
    eps: f64,
    max_entries: Option<usize>,
    inject_fault: bool,
) -> Result<(), CliError> {
    if preset(common)? != ScalePreset::Desk {
        return Err(CliError::Usage("gradcheck runs the end-to-end model at desk scale; use --preset desk".into()));
    }
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(CliError::Usage(format!("tolerance {tolerance} must be positive")));
    }
    let cfg = GradCheckConfig { eps, tol: tolerance, max_entries, seed: common.seed, ..GradCheckConfig::default() };
    let results = run_suite(&cfg, inject_fault)?;
    let mut failing = Vec::new();
    for r in &results {
        let checked: usize = r.report.params.iter().map(|p| p.checked).sum();
        let status = if r.report.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status} {:<20} entries={checked:<6} max_rel={:.3e} floor={:.2e}",
            r.name,
            r.report.max_rel_error(),
            r.report.floor
        );
        for p in r.report.failing() {
            let worst = p.failures.iter().map(|f| f.rel_error).fold(0.0, f64::max);
            println!(
                "     {}/{}: {} of {} entries above {tolerance:e} (worst {worst:.3e}), {} non-finite",
                r.name,
                p.name,
                p.failures.len(),
                p.checked,
                p.non_finite.len()
            );
            failing.push(format!("{}/{}", r.name, p.name));
        }
    }
    if failing.is_empty() {
        println!("all {} checks passed at tolerance {tolerance:e}", results.len());
        Ok(())
    } else {
        Err(CliError::GradCheck(failing.join(", ")))
    }
}

fn load_for_eval(checkpoint: &Path, data: &Path) -> Result<(MtlModel<f32>, Dataset), CliError> {
    let file = weights::read(checkpoint)?;
    let model = weights::model_from_file::<f32>(&file)?;
    let ds = Dataset::load(data)?;
    let c = &model.config;
    if (ds.header.channels, ds.header.timesteps) != (c.channels, c.timesteps) {
        return Err(Error::Dataset(format!(
            "checkpoint expects {}x{} windows but {} holds {}x{}",
            c.channels,
            c.timesteps,
            data.display(),
            ds.header.channels,
            ds.header.timesteps
        ))
        .into());
    }
    Ok((model, ds))
}

fn select(ds: &Dataset, split: &str, seed: u64) -> Result<(Dataset, Dataset), CliError> {
    if split == "all" {
        return Ok((ds.clone(), ds.clone()));
    }
    let s = Splits::from_dataset(ds, seed)?;
    let chosen = match split {
        "train" => s.train.clone(),
        "val" => s.val,
        "test" => s.test.expect("from_dataset builds a test split"),
        other => return Err(CliError::Usage(format!("unknown split `{other}`"))),
    };
    Ok((chosen, s.train))
}

pub fn plot(common: &Common, checkpoint: &Path, data: &Path, split: &str, svg: bool) -> Result<(), CliError> {
    let (model, ds) = load_for_eval(checkpoint, data)?;
    let (chosen, _) = select(&ds, split, common.seed)?;
    let rows = scatter_rows(&model, &chosen)?;
    let dir = out_dir(common)?;
    write(&dir.join("scatter.csv"), scatter_csv(&rows))?;
    if svg {
        let title = format!("Predicted vs true gaze ({split} split, {} samples)", rows.len());
        write(&dir.join("scatter.svg"), scatter_svg(&rows, &title)?)?;
    }
    println!("wrote {} rows to {}", rows.len(), dir.display());
    Ok(())
}

pub fn eval(common: &Common, checkpoint: &Path, data: &Path, split: &str) -> Result<(), CliError> {
    let (model, ds) = load_for_eval(checkpoint, data)?;
    let (chosen, train) = select(&ds, split, common.seed)?;
    let rmse = evaluate(&model, &Prepared::<f32>::new(&chosen))?.rmse;
    let naive = naive_baseline(&train.gaze_targets(), &chosen.gaze_targets())?;
    println!("split {split} n {} rmse_mm {rmse:.4} naive_baseline_mm {naive:.4}", chosen.len());
    Ok(())
}
