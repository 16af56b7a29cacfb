mod common;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sarslide_core::nn::{
    build_reference_model, checkpoint_bytes, checkpoint_from_bytes, AdamConfig, AdamState,
    Architecture, Mode, Model, Shape,
};
use sarslide_core::sampling::{AugmentationConfig, PatchSet};
use sarslide_core::training::{
    batch_tensor, evaluate, predict_probabilities, train_with_state, TrainConfig,
};

fn small_set() -> PatchSet {
    let all = common::separable_set(24, 9);
    PatchSet {
        train: all[..16].to_vec(),
        test: all[16..].to_vec(),
        seed: 0,
        train_polygons: (0..16).collect(),
        test_polygons: (16..24).collect(),
        normalization: None,
    }
}

#[test]
fn resumed_optimizer_takes_the_same_next_step() {
    let set = small_set();
    let refs: Vec<_> = set.train.iter().collect();
    let x = batch_tensor(&refs).unwrap();
    let labels: Vec<usize> = set.train.iter().map(|p| p.label.index()).collect();
    let mut model: Model<f32> = build_reference_model(2);
    let mut adam = AdamState::for_params(AdamConfig::default(), model.params());
    let step = |m: &mut Model<f32>, st: &mut AdamState<f32>| {
        let g = m.loss_and_grads(&x, &labels, Mode::Infer).unwrap().grads;
        st.step(m.params_mut(), &g).unwrap();
    };
    for _ in 0..3 {
        step(&mut model, &mut adam);
    }
    let bytes = checkpoint_bytes(&model, Some(&adam)).unwrap();
    let (mut resumed, st) = checkpoint_from_bytes::<f32>(&bytes).unwrap();
    let mut resumed_adam = st.expect("optimizer state saved");
    assert_eq!(resumed_adam.t, 3);

    step(&mut model, &mut adam);
    step(&mut resumed, &mut resumed_adam);
    assert_eq!(resumed_adam.t, 4);
    assert_eq!(resumed_adam, adam);
    for (a, b) in resumed
        .params()
        .iter()
        .flatten()
        .zip(model.params().iter().flatten())
    {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn resumed_training_continues_the_step_count() {
    let set = small_set();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let first = train_with_state(build_reference_model(1), None, &set, &cfg).unwrap();
    assert_eq!(first.adam.t, 2);
    let second = train_with_state(first.model, Some(first.adam), &set, &cfg).unwrap();
    assert_eq!(second.adam.t, 4);
}

#[test]
fn same_seed_same_checkpoint() {
    let set = small_set();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 5,
        seed: 13,
        ..TrainConfig::default()
    };
    let run = || {
        let out = train_with_state(build_reference_model(cfg.seed), None, &set, &cfg).unwrap();
        (
            checkpoint_bytes(&out.model, Some(&out.adam)).unwrap(),
            out.report,
        )
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert!(a == b);
    assert_eq!(
        ra.loss_curve
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>(),
        rb.loss_curve
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    );
}

#[test]
fn zero_learning_rate_without_randomness_is_a_no_op() {
    let set = small_set();
    let arch = Architecture::conv_stack(Shape::new(32, 32, 3), &[16, 32, 64], 0.0, 128);
    let model: Model<f32> = Model::new(arch, 3).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 4,
        learning_rate: 0.0,
        augmentation: AugmentationConfig::disabled(),
        ..TrainConfig::default()
    };
    let before = predict_probabilities(&model, &set.test).unwrap();
    let out = train_with_state(model.clone(), None, &set, &cfg).unwrap();
    assert_eq!(out.model, model);
    let after = predict_probabilities(&out.model, &set.test).unwrap();
    assert_eq!(
        before.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        after.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(out.adam.t, 8);
}

#[test]
fn evaluation_ignores_sample_order() {
    let set = small_set();
    let model: Model<f32> = build_reference_model(8);
    let all: Vec<_> = set.train.iter().chain(&set.test).cloned().collect();
    let base = evaluate(&model, &all).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..3 {
        let mut shuffled = all.clone();
        shuffled.shuffle(&mut rng);
        assert_eq!(evaluate(&model, &shuffled).unwrap(), base);
    }
    assert!(evaluate(&model, &[]).is_err());
}
