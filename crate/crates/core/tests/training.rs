use gazemtl::data::{generate_synthetic, SynthConfig};
use gazemtl::model::{weights, ModelConfig, MtlModel, Variant};
use gazemtl::train::{evaluate, lr_schedule, train, Optimizer, OptimizerKind, Prepared, RunReport, Splits, TrainConfig};
use gazemtl::{Error, ParamStore, Tape, Tensor};

fn small_splits(n: usize, seed: u64, pupil: bool) -> Splits {
    let cfg = SynthConfig { with_pupil: pupil, ..SynthConfig::default() };
    Splits::from_dataset(&generate_synthetic(n, &cfg, seed).unwrap(), seed).unwrap()
}

fn quick(seed: u64) -> TrainConfig {
    TrainConfig { epochs: 2, batch_size: 16, seed, ..TrainConfig::desk() }
}

fn desk_model(variant: Variant, seed: u64) -> MtlModel<f32> {
    MtlModel::new(ModelConfig::desk().with_variant(variant), seed).unwrap()
}

/// Gradient descent on `λ‖θ‖²` alone scales θ by `1 − 2λη` per step.
#[test]
fn l2_only_sgd_follows_closed_form() {
    let mut store = ParamStore::<f64>::new();
    store.insert("a", Tensor::from_f64_slice(&[2, 2], &[1.0, -2.0, 0.5, 3.0]).unwrap()).unwrap();
    store.insert("b", Tensor::from_f64_slice(&[3], &[-0.25, 4.0, 1.5]).unwrap()).unwrap();
    let start: Vec<Vec<f64>> = store.iter().map(|(_, p)| p.value.data().to_vec()).collect();
    let (lambda, lr) = (0.3, 0.05);
    let mut opt = Optimizer::new(OptimizerKind::Sgd, &store);
    let mut norms = vec![store.iter().map(|(_, p)| p.value.sum_squares()).sum::<f64>()];
    for _ in 0..20 {
        let mut tape = Tape::new();
        let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
        let sq: Vec<_> = ids.iter().map(|&id| {
            let v = tape.param(&store, id);
            tape.sum_squares(v)
        }).collect();
        let sum = tape.add(sq[0], sq[1]).unwrap();
        let total = tape.scale(sum, lambda);
        tape.backward(total).unwrap();
        store.zero_grads();
        store.accumulate_grads(&tape).unwrap();
        opt.step(&mut store, lr).unwrap();
        norms.push(store.iter().map(|(_, p)| p.value.sum_squares()).sum::<f64>());
    }
    assert!(norms.windows(2).all(|w| w[1] < w[0]));
    let factor = (1.0 - 2.0 * lambda * lr).powi(20);
    for ((_, p), s) in store.iter().zip(&start) {
        for (&w, &w0) in p.value.data().iter().zip(s) {
            assert!((w - w0 * factor).abs() < 1e-12, "{w} vs {}", w0 * factor);
        }
    }
}

#[test]
fn identically_seeded_runs_give_identical_reports() {
    let splits = small_splits(60, 1, true);
    let run = || train(desk_model(Variant::Full, 3), &splits, &quick(3)).unwrap().1;
    let (a, b) = (run(), run());
    assert_eq!(a.without_timing(), b.without_timing());
    let other = train(desk_model(Variant::Full, 4), &splits, &quick(4)).unwrap().1;
    assert_ne!(a.val_rmse_sequence(), other.val_rmse_sequence());
}

#[test]
fn checkpoint_reproduces_validation_rmse_bitwise() {
    let splits = small_splits(60, 2, true);
    let (model, report) = train(desk_model(Variant::Mtl1, 5), &splits, &quick(5)).unwrap();
    let val = Prepared::<f32>::new(&splits.val);
    let before = evaluate(&model, &val).unwrap().rmse;
    assert_eq!(before.to_bits(), report.best_val_rmse.to_bits());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    weights::save(&model, &path).unwrap();
    let restored = weights::model_from_file::<f32>(&weights::read(&path).unwrap()).unwrap();
    assert_eq!(restored.scaler, model.scaler);
    assert_eq!(evaluate(&restored, &val).unwrap().rmse.to_bits(), before.to_bits());
}

#[test]
fn run_report_survives_json() {
    let splits = small_splits(40, 3, false);
    let (_, report) = train(desk_model(Variant::Base, 6), &splits, &quick(6)).unwrap();
    assert_eq!(RunReport::from_json(&report.to_json()).unwrap(), report);
    assert_eq!(report.epochs.len(), 2);
    assert!(report.test_rmse.is_some() && report.naive_test_rmse.is_some());
}

#[test]
fn logged_learning_rates_follow_the_schedule() {
    let splits = small_splits(10, 4, false);
    let cfg = TrainConfig { epochs: 15, batch_size: 8, ..TrainConfig::default() };
    let (_, report) = train(desk_model(Variant::Base, 7), &splits, &cfg).unwrap();
    let expected: Vec<f64> = (0..15).map(|e| lr_schedule(e, &cfg).unwrap()).collect();
    assert_eq!(report.lr_sequence(), expected);
    assert!(report.epochs.iter().all(|e| e.steps == 1));
}

#[test]
fn max_steps_ends_the_run_after_recording_the_epoch() {
    let splits = small_splits(60, 5, false);
    let cfg = TrainConfig { max_steps: Some(3), ..quick(8) };
    let (_, report) = train(desk_model(Variant::Base, 8), &splits, &cfg).unwrap();
    assert_eq!(report.epochs.len(), 1);
    assert_eq!(report.epochs[0].steps, 3);
}

#[test]
fn pupil_variant_rejects_data_without_pupil() {
    let splits = small_splits(40, 6, false);
    let err = train(desk_model(Variant::Mtl2, 9), &splits, &quick(9)).unwrap_err();
    assert!(matches!(err, Error::Dataset(ref m) if m.contains("pupil")), "{err}");
}

#[test]
fn mismatched_window_shape_is_rejected() {
    let cfg = SynthConfig::for_shape(4, 64);
    let splits = Splits::from_dataset(&generate_synthetic(40, &cfg, 7).unwrap(), 7).unwrap();
    assert!(matches!(train(desk_model(Variant::Base, 10), &splits, &quick(10)), Err(Error::Dataset(_))));
}
