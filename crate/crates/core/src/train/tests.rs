use std::sync::OnceLock;

use proptest::prelude::*;

use super::*;
use crate::dataset::synthetic::{generate_synthetic_dataset, Coupling, SyntheticSpec};
use crate::dataset::PreparedCorpus;
use crate::model::{init_from_vanilla, ModelConfig};

fn corpus() -> &'static PreparedCorpus {
    static C: OnceLock<PreparedCorpus> = OnceLock::new();
    C.get_or_init(|| {
        let spec = SyntheticSpec {
            n_fires: 4,
            coupling: Coupling::Discriminative,
            seed: 3,
            ..SyntheticSpec::default()
        };
        generate_synthetic_dataset(&spec).unwrap().prepare().unwrap()
    })
}

/// A short slice of training samples spanning ignition.
fn subset(n: usize) -> Vec<AlignedSample> {
    corpus().train.iter().skip(30).take(n).cloned().collect()
}

fn quick(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        optimizer: OptimizerConfig {
            max_epochs: epochs,
            seed,
            ..OptimizerConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn run_epochs(model: &mut Model, data: &[AlignedSample], cfg: &TrainConfig, epochs: usize) -> Vec<f64> {
    let mut opt = AdamW::new(cfg.optimizer.adamw(), model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.optimizer.seed);
    (1..=epochs)
        .map(|e| {
            train_epoch(model, &mut opt, data, &corpus().prep, cfg, WeatherSource::Off, e, &mut rng)
                .unwrap()
                .mean_loss
        })
        .collect()
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let mut model = Model::new(ModelConfig::toy(), 1).unwrap();
    let before = model.params().clone();
    let mut cfg = quick(2, 1);
    cfg.optimizer.learning_rate = 0.0;
    run_epochs(&mut model, &subset(6), &cfg, 1);
    assert_eq!(model.params(), &before);
}

#[test]
fn same_seed_same_parameters() {
    let data = subset(6);
    let cfg = quick(4, 2);
    let mut a = Model::new(ModelConfig::toy(), 1).unwrap();
    let mut b = Model::new(ModelConfig::toy(), 1).unwrap();
    assert_eq!(run_epochs(&mut a, &data, &cfg, 2), run_epochs(&mut b, &data, &cfg, 2));
    assert!(a == b);
    let mut c = Model::new(ModelConfig::toy(), 1).unwrap();
    run_epochs(&mut c, &data, &quick(5, 2), 2);
    assert!(a != c);
}

#[test]
fn training_reduces_loss_on_a_small_set() {
    let data = subset(8);
    let mut model = Model::new(ModelConfig::toy(), 7).unwrap();
    let mut cfg = quick(8, 12);
    cfg.augmentation = false;
    let losses = run_epochs(&mut model, &data, &cfg, 12);
    assert!(losses[11] < 0.5 * losses[0], "{losses:?}");
}

#[test]
fn empty_inputs_are_errors() {
    let mut model = Model::new(ModelConfig::toy(), 1).unwrap();
    let cfg = quick(1, 1);
    let mut opt = AdamW::new(cfg.optimizer.adamw(), model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(train_epoch(&mut model, &mut opt, &[], &corpus().prep, &cfg, WeatherSource::Off, 1, &mut rng).is_err());
    assert!(validate(&model, &[], WeatherSource::Off, &cfg.loss, 0.5).is_err());
}

#[test]
fn diverging_parameters_report_the_epoch() {
    let mut model = Model::new(ModelConfig::toy(), 1).unwrap();
    let id = model.params().id("head.image.fc2.bias").unwrap();
    model.params_mut().get_mut(id).fill(f64::NAN);
    let cfg = quick(1, 1);
    let mut opt = AdamW::new(cfg.optimizer.adamw(), model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = train_epoch(&mut model, &mut opt, &subset(2), &corpus().prep, &cfg, WeatherSource::Off, 3, &mut rng)
        .unwrap_err()
        .to_string();
    assert!(err.contains("epoch 3"), "{err}");
}

#[test]
fn weather_source_must_match_the_model() {
    let vanilla = Model::new(ModelConfig::toy(), 1).unwrap();
    let fused = Model::new(ModelConfig::toy().with_fusion(true), 1).unwrap();
    let data = subset(2);
    let loss = LossConfig::default();
    assert!(validate(&vanilla, &data, WeatherSource::Real, &loss, 0.5).is_err());
    assert!(validate(&fused, &data, WeatherSource::Off, &loss, 0.5).is_err());
    assert!(validate(&fused, &data, WeatherSource::Real, &loss, 0.5).is_ok());
}

#[test]
fn validation_is_repeatable_and_agrees_with_eval() {
    let model = Model::new(ModelConfig::toy(), 9).unwrap();
    let data = subset(10);
    let loss = LossConfig::default();
    let a = validate(&model, &data, WeatherSource::Off, &loss, 0.5).unwrap();
    let b = validate(&model, &data, WeatherSource::Off, &loss, 0.5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.metrics, prf_metrics(&confusion_counts(&a.log, 0.5).unwrap()));
    let direct: f64 = data
        .iter()
        .map(|s| {
            let out = model.forward_sample(s).unwrap();
            compute_losses(&out, &s.tile_labels, s.image_label, &loss).unwrap().total
        })
        .sum::<f64>()
        / data.len() as f64;
    assert!((a.loss - direct).abs() < 1e-12);
}

#[test]
fn random_weather_is_fixed_per_sample_and_epoch() {
    let s = &subset(1)[0];
    let src = WeatherSource::Random { seed: 5 };
    let a = src.weather_for(s, 1).unwrap().unwrap();
    assert_eq!(a, src.weather_for(s, 1).unwrap().unwrap());
    assert_ne!(a.values, src.weather_for(s, 2).unwrap().unwrap().values);
    assert_ne!(a.values, WeatherSource::Random { seed: 6 }.weather_for(s, 1).unwrap().unwrap().values);
    assert!(a.normalized);
}

#[test]
fn augmentation_keeps_labels_consistent_with_the_mask() {
    let s = corpus().train.iter().find(|s| s.tile_labels.iter().any(|&l| l)).unwrap();
    let flip = AugmentParams {
        flip: true,
        ..AugmentParams::identity()
    };
    let (input, labels) = sample_input(s, &corpus().prep, Some(&flip), None).unwrap();
    let cols = corpus().prep.tiling.cols;
    for (i, &l) in labels.iter().enumerate() {
        let (r, c) = (i / cols, i % cols);
        assert_eq!(l, s.tile_labels[r * cols + cols - 1 - c]);
    }
    assert_eq!(input.current.shape()[0], labels.len());
}

#[test]
fn early_stopping_respects_patience() {
    let mut st = TrainState::default();
    let policy = EarlyStopPolicy::default();
    let rec = |epoch, val_loss| EpochRecord {
        epoch,
        train_loss: None,
        val_loss,
        val_accuracy: 0.0,
        val_precision: 0.0,
        val_recall: 0.0,
        val_f1: 0.0,
    };
    assert!(st.record(rec(0, 1.0), 0.0));
    assert!(st.record(rec(1, 0.8), 0.0));
    for e in 2..5 {
        assert!(!st.record(rec(e, 0.9), 0.0));
        assert!(!st.should_stop(Some(&policy)));
    }
    st.record(rec(5, 0.8), 0.0);
    assert!(st.should_stop(Some(&policy)));
    assert!(!st.should_stop(None));
    assert_eq!(st.best_epoch, 1);
}

#[test]
fn fit_stops_early_and_keeps_the_best_epoch() {
    let data = subset(4);
    let mut cfg = quick(3, 25);
    cfg.optimizer.learning_rate = 0.0;
    let out = fit(
        Model::new(ModelConfig::toy(), 1).unwrap(),
        TrainingStage::Vanilla,
        &data,
        &data,
        &corpus().prep,
        &cfg,
        WeatherSource::Off,
        None,
    )
    .unwrap();
    // Nothing improves on epoch 0, so training halts after `patience` epochs.
    assert_eq!(out.state.history.len(), 5);
    assert_eq!(out.state.best_epoch, 0);
    assert_eq!(out.best.epoch, Some(0));
}

#[test]
fn stage_two_starts_where_stage_one_ended() {
    let c = corpus();
    let small = PreparedCorpus {
        train: subset(6),
        val: c.val.iter().step_by(8).cloned().collect(),
        ..c.clone()
    };
    let model = ModelConfig {
        fusion_test_mode: true,
        ..ModelConfig::toy()
    };
    let dir = tempfile::tempdir().unwrap();
    let pair = two_stage_train(&small, &model, &quick(1, 2), &quick(2, 1), Some(dir.path())).unwrap();
    let v0 = pair.multimodal.state.history[0].val_loss;
    assert!((v0 - pair.vanilla.state.best_val_loss).abs() < 1e-6);
    assert!(dir.path().join("vanilla/best.ckpt").exists());
    assert!(dir.path().join("multimodal/metrics.csv").exists());
    let epochs = RunDir::create(&dir.path().join("scratch")).unwrap();
    assert!(epochs.read_epochs().is_err());
    let stored = Checkpoint::load(&dir.path().join("multimodal/best.ckpt")).unwrap();
    assert_eq!(stored.val_loss, Some(pair.multimodal.state.best_val_loss));

    let real = run_control_arm(&small, &pair.vanilla.best, &model, WeatherArm::Real, &quick(2, 1), None).unwrap();
    assert_eq!(real.best, pair.multimodal.best);
    let r1 = run_control_arm(&small, &pair.vanilla.best, &model, WeatherArm::Random, &quick(2, 1), None).unwrap();
    let r2 = run_control_arm(&small, &pair.vanilla.best, &model, WeatherArm::Random, &quick(2, 1), None).unwrap();
    assert_eq!(r1.best, r2.best);
}

#[test]
fn zero_stage_two_epochs_reproduce_vanilla_metrics() {
    let c = corpus();
    let vanilla = Model::new(ModelConfig::toy(), 2).unwrap();
    let ckpt = Checkpoint::from_model(&vanilla, TrainingStage::Vanilla, None);
    let cfg = ModelConfig {
        fusion_test_mode: true,
        ..ModelConfig::toy().with_fusion(true)
    };
    let fused = init_from_vanilla(&ckpt, &cfg, 0).unwrap().to_model().unwrap();
    let loss = LossConfig::default();
    let a = validate(&vanilla, &c.test, WeatherSource::Off, &loss, 0.5).unwrap();
    let b = validate(&fused, &c.test, WeatherSource::Real, &loss, 0.5).unwrap();
    assert_eq!(a.metrics, b.metrics);
}

proptest! {
    #[test]
    fn best_loss_is_the_history_minimum(losses in proptest::collection::vec(0.0f64..10.0, 1..40)) {
        let mut st = TrainState::default();
        let mut prev = f64::INFINITY;
        for (e, &l) in losses.iter().enumerate() {
            st.record(EpochRecord { epoch: e, train_loss: None, val_loss: l, val_accuracy: 0.0, val_precision: 0.0, val_recall: 0.0, val_f1: 0.0 }, 0.0);
            prop_assert!(st.best_val_loss <= prev);
            prev = st.best_val_loss;
        }
        let min = st.history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(st.best_val_loss, min);
    }
}
