//! End-to-end acceptance checks. Runs every criterion, prints one line each
//! and exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use gazemtl::checks::run_suite;
use gazemtl::data::{batch_iter, generate_synthetic, Dataset, SynthConfig};
use gazemtl::gradcheck::GradCheckConfig;
use gazemtl::model::{weights, Example, ModelConfig, MtlModel, TargetScaler, Variant};
use gazemtl::nn::Mode;
use gazemtl::train::{
    eval_losses, evaluate, lr_schedule, run_sweep, summarize, train, Prepared, Splits, SweepSpec, TrainConfig, Trainer,
};
use gazemtl::{Result, StreamKey, Tape};

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Result<Outcome> + 'a>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { passed, detail: detail.into() })
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Shape chain at paper geometry with random weights.
fn shape_chain() -> Result<Outcome> {
    let model = MtlModel::<f32>::new(ModelConfig::paper().with_variant(Variant::Mtl1), 0)?;
    let x = StreamKey::new(1).rng().normal_tensor::<f32>(&[1, 128, 500], 1.0);
    let start = Instant::now();
    let mut tape = Tape::inference();
    let xv = tape.constant(x);
    let s = &model.store;
    let stem = model.stem.forward(&mut tape, s, xv)?;
    let depthwise = model.depthwise.forward(&mut tape, s, stem)?;
    let mut seq = model.embedding.forward(&mut tape, s, depthwise)?;
    for block in &model.blocks {
        seq = block.forward(&mut tape, s, seq)?;
    }
    let seq = model.final_norm.forward(&mut tape, s, seq)?;
    let gaze = model.predict_gaze(&mut tape, seq, Mode::Eval, StreamKey::new(0))?;
    let recon = model.reconstruct(&mut tape, seq)?;
    let elapsed = start.elapsed();
    let dims = |v| tape.value(v).dims().to_vec();
    let got = [dims(stem), dims(depthwise), dims(seq), dims(gaze), dims(recon)];
    let want: [Vec<usize>; 5] = [vec![256, 128, 14], vec![768, 16, 14], vec![225, 768], vec![2], vec![1, 128, 500]];
    let passed = got == want && elapsed < Duration::from_secs(10);
    verdict(passed, format!("{got:?}, forward {:.2} s", secs(elapsed)))
}

/// Every layer case and the end-to-end desk model at the default tolerance.
fn gradient_suite() -> Result<Outcome> {
    let cfg = GradCheckConfig::default();
    let start = Instant::now();
    let results = run_suite(&cfg, false)?;
    let elapsed = start.elapsed();
    let failing: Vec<&str> = results.iter().filter(|r| !r.report.passed()).map(|r| r.name).collect();
    let worst = results.iter().map(|r| r.report.max_rel_error()).fold(0.0, f64::max);
    let passed = failing.is_empty() && elapsed < Duration::from_secs(300);
    verdict(
        passed,
        format!(
            "{} cases, eps {:e}, tol {:e}, worst rel {worst:.2e}, failing {failing:?}, {:.1} s",
            results.len(),
            cfg.eps,
            cfg.tol,
            secs(elapsed)
        ),
    )
}

/// 50 desk steps of base and of mtl1 at α₁ = 0 under one seed.
fn zero_weight_equivalence() -> Result<Outcome> {
    let ds = generate_synthetic(200, &SynthConfig::default(), 30)?;
    let seed = 3;
    let splits = Splits::from_dataset(&ds, seed)?;
    let cfg = TrainConfig { epochs: 5, batch_size: 14, seed, alpha_recon: Some(0.0), ..TrainConfig::desk() };
    let train_set = Prepared::<f32>::new(&splits.train);

    let stepped = |variant: Variant| -> Result<Trainer<f32>> {
        let mut model = MtlModel::<f32>::new(ModelConfig::desk().with_variant(variant), seed)?;
        model.scaler = TargetScaler::fit(&train_set.gaze);
        let mut t = Trainer::new(model, cfg.clone())?;
        let dropout = StreamKey::new(seed).named("dropout");
        for epoch in 0..cfg.epochs {
            let lr = lr_schedule(epoch, &cfg)?;
            for (b, idx) in batch_iter(train_set.len(), cfg.batch_size, seed, epoch)?.iter().enumerate() {
                t.step(&train_set.examples(idx), lr, dropout.split(epoch as u64).split(b as u64))?;
            }
        }
        Ok(t)
    };
    let (base, mtl) = (stepped(Variant::Base)?, stepped(Variant::Mtl1)?);
    let mut worst = 0.0f64;
    let mut compared = 0;
    for (_, p) in base.model.store.iter() {
        let q = mtl.model.store.by_name(&p.name).expect("mtl1 holds every base parameter");
        for (a, b) in p.value.data().iter().zip(q.value.data()) {
            worst = worst.max((f64::from(*a) - f64::from(*b)).abs());
        }
        compared += 1;
    }

    let (_, base_report) = train(MtlModel::<f32>::new(ModelConfig::desk().with_variant(Variant::Base), seed)?, &splits, &cfg)?;
    let (_, mtl_report) = train(MtlModel::<f32>::new(ModelConfig::desk().with_variant(Variant::Mtl1), seed)?, &splits, &cfg)?;
    let total_steps: usize = base_report.epochs.iter().map(|e| e.steps).sum();
    let same_val = base_report.val_rmse_sequence() == mtl_report.val_rmse_sequence();
    let passed = base.steps() == 50 && total_steps == 50 && worst < 1e-12 && same_val;
    verdict(
        passed,
        format!(
            "{} steps, {compared} shared tensors, max |Δθ| {worst:e}, val-RMSE sequences identical: {same_val}",
            base.steps()
        ),
    )
}

/// The reported total against its components, recomputed from the outputs.
fn objective_decomposition() -> Result<Outcome> {
    let ds = generate_synthetic(64, &SynthConfig::default(), 40)?;
    let data = Prepared::<f32>::new(&ds);
    let mut rng = StreamKey::new(41).rng();
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let mut cfg = ModelConfig::desk().with_variant(Variant::Full);
        cfg.alpha_recon = if trial % 5 == 0 { 0.0 } else { rng.uniform_range(0.0, 300.0) };
        cfg.alpha_pupil = if trial % 7 == 0 { 0.0 } else { rng.uniform_range(0.0, 5.0) };
        cfg.l2_coeff = rng.uniform_range(0.0, 1e-2);
        let mut model = MtlModel::<f32>::new(cfg, trial)?;
        model.scaler = TargetScaler::fit(&data.gaze);
        let size = 1 + rng.below(8);
        let idx: Vec<usize> = (0..size).map(|_| rng.below(data.len())).collect();
        let batch: Vec<Example<'_, f32>> = data.examples(&idx);
        let mut tape = Tape::new();
        let out = model.total_loss(&mut tape, &batch, Mode::Train, StreamKey::new(trial).named("dropout"))?;

        let n = batch.len() as f64;
        let as64 = |v| tape.value(v).data().iter().map(|&x: &f32| f64::from(x)).collect::<Vec<f64>>();
        let main = batch.iter().zip(&out.gaze_pred).map(|(e, &g)| common::mse(&as64(g), &e.gaze)).sum::<f64>() / n;
        let recon = batch
            .iter()
            .zip(&out.recon)
            .map(|(e, &r)| common::mse(&as64(r), &e.eeg.data().iter().map(|&x| f64::from(x)).collect::<Vec<_>>()))
            .sum::<f64>()
            / n;
        let pupil = batch
            .iter()
            .zip(&out.pupil_pred)
            .map(|(e, &p)| common::mse(&as64(p), &[e.pupil.expect("synthetic data carries pupil")]))
            .sum::<f64>()
            / n;
        let c = &model.config;
        let l2: f64 = model
            .store
            .iter()
            .filter(|(id, _)| model.group_active(model.group_of(*id)))
            .map(|(_, p)| p.value.data().iter().map(|&v| f64::from(v).powi(2)).sum::<f64>())
            .sum();
        let expected = main + c.alpha_recon * recon + c.alpha_pupil * pupil + c.l2_coeff * l2;
        worst = worst.max((out.losses.total - expected).abs() / expected.abs());
    }
    verdict(worst < 1e-6, format!("100 batches, worst relative error {worst:.2e}"))
}

/// Fifteen epochs under the default schedule.
fn schedule() -> Result<Outcome> {
    let ds = generate_synthetic(10, &SynthConfig { with_pupil: false, ..SynthConfig::default() }, 50)?;
    let splits = Splits::from_dataset(&ds, 0)?;
    let cfg = TrainConfig::default();
    let (_, report) = train(MtlModel::<f32>::new(ModelConfig::desk().with_variant(Variant::Base), 0)?, &splits, &cfg)?;
    let lr = report.lr_sequence();
    let changes: Vec<usize> = (1..lr.len()).filter(|&e| lr[e] != lr[e - 1]).collect();
    let mut plateaus: Vec<f64> = lr.clone();
    plateaus.dedup();
    let expected = [1e-4, 9e-5, 8.1e-5];
    let close = plateaus.len() == 3 && plateaus.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-15 * b);
    let passed = lr.len() == 15 && close && changes == [6, 12];
    verdict(passed, format!("plateaus {plateaus:?}, changes at epochs {changes:?}"))
}

/// 500 steps on eight samples.
fn overfit() -> Result<Outcome> {
    let ds = generate_synthetic(8, &SynthConfig::default(), 60)?;
    let data = Prepared::<f32>::new(&ds);
    let seed = 2;
    let mut model = MtlModel::<f32>::new(ModelConfig::desk().with_variant(Variant::Base), seed)?;
    model.scaler = TargetScaler::fit(&data.gaze);
    let steps = 500;
    let cfg = TrainConfig { epochs: steps, decay_every: 25, batch_size: 8, seed, ..TrainConfig::desk() };
    let start = Instant::now();
    let mut trainer = Trainer::new(model, cfg.clone())?;
    let initial = eval_losses(&trainer.model, &data)?.main;
    let all: Vec<usize> = (0..data.len()).collect();
    let dropout = StreamKey::new(seed).named("dropout");
    for step in 0..steps {
        trainer.step(&data.examples(&all), lr_schedule(step, &cfg)?, dropout.split(step as u64))?;
    }
    let last = eval_losses(&trainer.model, &data)?.main;
    let elapsed = start.elapsed();
    let ratio = last / initial;
    let passed = ratio < 0.01 && elapsed < Duration::from_secs(120);
    verdict(
        passed,
        format!("main loss {initial:.1} -> {last:.3} ({:.3}% of initial), {:.1} s", 100.0 * ratio, secs(elapsed)),
    )
}

fn planted(n: usize) -> Result<Dataset> {
    generate_synthetic(n, &SynthConfig::default(), 2024)
}

/// Three seeds against the training-mean predictor.
fn beats_baseline(ds: &Dataset) -> Result<Outcome> {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut all = true;
    for seed in 0..3u64 {
        let splits = Splits::from_dataset(ds, seed)?;
        let cfg = TrainConfig { seed, ..TrainConfig::desk() };
        let model = MtlModel::<f32>::new(ModelConfig::desk().with_variant(Variant::Mtl1), seed)?;
        let (_, report) = train(model, &splits, &cfg)?;
        let (rmse, naive) = (report.test_rmse.expect("test split"), report.naive_test_rmse.expect("test split"));
        all &= rmse <= 0.8 * naive;
        lines.push(format!("seed {seed}: {rmse:.1} vs {naive:.1} mm ({:.0}% below)", 100.0 * (1.0 - rmse / naive)));
    }
    let elapsed = start.elapsed();
    verdict(all && elapsed < Duration::from_secs(900), format!("{}; {:.0} s", lines.join(", "), secs(elapsed)))
}

/// Paired-seed reconstruction-weight sweep.
fn sweep_shape(ds: &Dataset) -> Result<Outcome> {
    let spec = SweepSpec { weights: vec![0.0, 35.0, 70.0, 140.0, 280.0], seeds: vec![0, 1, 2] };
    let rows = run_sweep(ds, &ModelConfig::desk(), &TrainConfig::desk(), &spec, |_| {})?;
    let summary = summarize(&rows);
    let failed: usize = summary.iter().map(|s| s.runs_failed).sum();
    let zero = summary.iter().find(|s| s.alpha == 0.0).expect("weight 0 in the grid");
    let best = summary
        .iter()
        .filter(|s| s.alpha > 0.0)
        .min_by(|a, b| a.mean.total_cmp(&b.mean))
        .expect("nonzero weights in the grid");
    let table: Vec<String> = summary.iter().map(|s| format!("{}: {:.2}±{:.2}", s.alpha, s.mean, s.std)).collect();
    let passed = failed == 0 && zero.runs_ok == 3 && best.runs_ok == 3 && best.mean <= zero.mean;
    verdict(passed, format!("best nonzero α {} ({:.2}) vs α 0 ({:.2}); {}", best.alpha, best.mean, zero.mean, table.join(", ")))
}

/// Container bytes, checkpoint round trip and repeated runs.
fn determinism() -> Result<Outcome> {
    let cfg = SynthConfig::default();
    let same_bytes = generate_synthetic(120, &cfg, 90)?.to_bytes()? == generate_synthetic(120, &cfg, 90)?.to_bytes()?;

    let ds = generate_synthetic(120, &cfg, 90)?;
    let splits = Splits::from_dataset(&ds, 1)?;
    let tcfg = TrainConfig { epochs: 2, seed: 1, ..TrainConfig::desk() };
    let run = || -> Result<_> { train(MtlModel::<f32>::new(ModelConfig::desk(), 1)?, &splits, &tcfg) };
    let (model, first) = run()?;
    let (_, second) = run()?;
    let same_report = first.without_timing() == second.without_timing();

    let dir = tempfile::tempdir().expect("temporary directory");
    let path = dir.path().join("checkpoint.bin");
    weights::save(&model, &path)?;
    let restored = weights::model_from_file::<f32>(&weights::read(&path)?)?;
    let val = Prepared::<f32>::new(&splits.val);
    let (a, b) = (evaluate(&model, &val)?.rmse, evaluate(&restored, &val)?.rmse);
    let same_rmse = a.to_bits() == b.to_bits();
    verdict(
        same_bytes && same_report && same_rmse,
        format!("container bytes equal: {same_bytes}, reports equal: {same_report}, val RMSE {a} vs {b}"),
    )
}

/// Layer primitives against loop oracles.
fn oracle_equivalence() -> Result<Outcome> {
    let results = [
        ("conv2d", common::trials::conv2d(100, 101)),
        ("depthwise_conv2d", common::trials::depthwise(100, 102)),
        ("transposed_conv", common::trials::transposed(100, 103)),
        ("mse", common::trials::mse(100, 104)),
        ("rmse", common::trials::rmse(100, 105)),
        ("attention", common::trials::attention(100, 106)),
    ];
    let passed = results.iter().all(|(_, d)| *d < 1e-12);
    let detail: Vec<String> = results.iter().map(|(n, d)| format!("{n} {d:.1e}")).collect();
    verdict(passed, format!("100 trials each, worst scaled deviation: {}", detail.join(", ")))
}

fn main() {
    let ds = planted(2000).expect("planted dataset");
    let criteria: Vec<Criterion<'_>> = vec![
        ("shape chain at paper geometry", Box::new(shape_chain)),
        ("gradient suite", Box::new(gradient_suite)),
        ("zero reconstruction weight matches base", Box::new(zero_weight_equivalence)),
        ("objective decomposition", Box::new(objective_decomposition)),
        ("learning-rate schedule", Box::new(schedule)),
        ("overfit sanity", Box::new(overfit)),
        ("learning beats baseline", Box::new(|| beats_baseline(&ds))),
        ("reconstruction-weight sweep shape", Box::new(|| sweep_shape(&ds))),
        ("determinism and persistence", Box::new(determinism)),
        ("oracle equivalence", Box::new(oracle_equivalence)),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = check().unwrap_or_else(|e| Outcome { passed: false, detail: format!("error: {e}") });
        failures += usize::from(!outcome.passed);
        let status = if outcome.passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {name}: {status} ({})", i + 1, outcome.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
