mod common;

use devscreen_core::data::SequenceRecord;
use devscreen_core::model::{load_checkpoint, save_checkpoint, CheckpointMeta, ModelConfig, Parameters};
use devscreen_core::synth::PlannedSequence;
use devscreen_core::train::{
    evaluate_frames, predict_frames, supervised_frames, train, FrameBank, LabeledSet, TrainConfig,
    TrainOutcome,
};
use devscreen_core::{Error, TaskKind, TaskSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Fixture {
    spec: TaskSpec,
    cfg: ModelConfig,
    train: Vec<SequenceRecord>,
    val: Vec<SequenceRecord>,
    train_bank: FrameBank,
    val_bank: FrameBank,
}

fn fixture(task: TaskKind, n_train: usize, n_val: usize) -> Fixture {
    let spec = TaskSpec::for_kind(task);
    let mut cfg = common::tiny_config(spec.n_output_classes);
    cfg.channels = 3;
    cfg.n_timesteps = spec.frames_per_sequence;
    let planned: Vec<PlannedSequence> = common::synthetic_plate(task, 1, 8, 1.0, 4)
        .into_iter()
        .filter(|p| p.record.sequence_label.is_some())
        .collect();
    let train: Vec<SequenceRecord> = planned[..n_train].iter().map(|p| p.record.clone()).collect();
    let val: Vec<SequenceRecord> = planned[n_train..n_train + n_val]
        .iter()
        .map(|p| p.record.clone())
        .collect();
    let train_bank = common::render_bank(&planned, &train, 8);
    let val_bank = common::render_bank(&planned, &val, 8);
    Fixture {
        spec,
        cfg,
        train,
        val,
        train_bank,
        val_bank,
    }
}

fn quick_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        dropout: 0.1,
        batch_size: 16,
        max_epochs: 2,
        max_steps: Some(30),
        seed,
        ..TrainConfig::default()
    }
}

fn run(f: &Fixture, train_bank: &FrameBank, config: &TrainConfig) -> TrainOutcome {
    train(
        LabeledSet {
            sequences: &f.train,
            frames: train_bank,
        },
        LabeledSet {
            sequences: &f.val,
            frames: &f.val_bank,
        },
        &f.spec,
        &f.cfg,
        config,
        |_| Ok(()),
    )
    .unwrap()
}

fn bits(params: &Parameters<f32>) -> Vec<u32> {
    params
        .tensors()
        .iter()
        .flat_map(|(_, v)| v.iter().map(|x| x.to_bits()))
        .collect()
}

#[test]
fn loss_decreases() {
    let f = fixture(TaskKind::Fertility, 6, 2);
    let mut config = quick_config(3);
    config.max_steps = Some(60);
    config.max_epochs = 10;
    let out = run(&f, &f.train_bank, &config);
    let losses = &out.step_losses;
    let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = losses[losses.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(tail < head, "loss went from {head} to {tail}");
}

#[test]
fn training_is_deterministic() {
    let f = fixture(TaskKind::Toxicity, 4, 2);
    let a = run(&f, &f.train_bank, &quick_config(5));
    let b = run(&f, &f.train_bank, &quick_config(5));
    assert_eq!(a.step_losses, b.step_losses);
    assert_eq!(a.log, b.log);
    assert_eq!(bits(&a.params), bits(&b.params));
    let c = run(&f, &f.train_bank, &quick_config(6));
    assert_ne!(a.step_losses, c.step_losses);
}

#[test]
fn unsure_frames_do_not_influence_training() {
    let f = fixture(TaskKind::Fertility, 4, 2);
    let reference = run(&f, &f.train_bank, &quick_config(2));

    let mut scrambled = f.train_bank.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut touched = 0;
    for (s, seq) in f.train.iter().enumerate() {
        for frame in &seq.frames {
            if frame.frame_label == "unsure" {
                scrambled
                    .frame_mut(s, frame.frame_index)
                    .mapv_inplace(|_| rng.random_range(-3.0..3.0));
                touched += 1;
            }
        }
    }
    assert!(touched > 0);
    let other = run(&f, &scrambled, &quick_config(2));
    assert_eq!(reference.step_losses, other.step_losses);
    assert_eq!(reference.log, other.log);
    assert_eq!(bits(&reference.params), bits(&other.params));
}

#[test]
fn best_epoch_params_are_returned() {
    let f = fixture(TaskKind::Fertility, 4, 2);
    let mut config = quick_config(8);
    config.max_steps = None;
    config.max_epochs = 3;
    let out = run(&f, &f.train_bank, &config);
    assert_eq!(out.log.len(), 3);
    let best = out
        .log
        .iter()
        .filter_map(|r| r.val_metric.map(|m| (m, r.epoch)))
        .fold(None::<(f64, usize)>, |acc, (m, e)| match acc {
            Some((bm, _)) if bm >= m => acc,
            _ => Some((m, e)),
        })
        .unwrap();
    assert_eq!((out.best_metric, out.best_epoch), best);
    assert_eq!(out.model_config.dropout, config.dropout);
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let f = fixture(TaskKind::Toxicity, 4, 2);
    let out = run(&f, &f.train_bank, &quick_config(1));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let meta = CheckpointMeta {
        config: out.model_config.clone(),
        task: TaskKind::Toxicity,
        seed: 1,
    };
    save_checkpoint(&path, &out.params, &meta).unwrap();
    let (loaded, _) = load_checkpoint(&path, Some((&out.model_config, TaskKind::Toxicity))).unwrap();
    let frames = supervised_frames(&f.val, &f.spec).unwrap();
    let index: Vec<(usize, usize)> = frames.iter().map(|&(s, t, _)| (s, t)).collect();
    let before = predict_frames(&out.params, &out.model_config, &f.val_bank, &index).unwrap();
    let after = predict_frames(&loaded, &out.model_config, &f.val_bank, &index).unwrap();
    assert_eq!(before.mapv(f64::to_bits), after.mapv(f64::to_bits));
    let a = evaluate_frames(&out.params, &out.model_config, &f.spec, &f.val, &f.val_bank).unwrap();
    let b = evaluate_frames(&loaded, &out.model_config, &f.spec, &f.val, &f.val_bank).unwrap();
    assert_eq!((a.correct, a.total), (b.correct, b.total));
}

#[test]
fn zero_head_predicts_the_tie_class() {
    for task in [TaskKind::Fertility, TaskKind::Toxicity] {
        let f = fixture(task, 0, 6);
        let mut params = Parameters::<f32>::init(&f.cfg, &mut ChaCha8Rng::seed_from_u64(0));
        params.head_weight.fill(0.0);
        params.head_bias.fill(0.0);
        let frames = supervised_frames(&f.val, &f.spec).unwrap();
        let positives = frames.iter().filter(|&&(_, _, c)| c == 1).count();
        let acc = evaluate_frames(&params, &f.cfg, &f.spec, &f.val, &f.val_bank).unwrap();
        assert_eq!((acc.correct, acc.total), (positives, frames.len()), "{task}");
    }
}

#[test]
fn rejects_unusable_inputs() {
    let f = fixture(TaskKind::Fertility, 2, 2);
    let config = quick_config(0);
    let empty: Vec<SequenceRecord> = Vec::new();
    let empty_bank = FrameBank::from_fn(&empty, 8, |_, _| unreachable!()).unwrap();
    let attempt = |train_set: LabeledSet, val_set: LabeledSet, cfg: &ModelConfig, config: &TrainConfig| {
        train(train_set, val_set, &f.spec, cfg, config, |_| Ok(())).map(|_| ())
    };
    let full_train = LabeledSet {
        sequences: &f.train,
        frames: &f.train_bank,
    };
    let full_val = LabeledSet {
        sequences: &f.val,
        frames: &f.val_bank,
    };
    let none = LabeledSet {
        sequences: &empty,
        frames: &empty_bank,
    };
    assert!(matches!(attempt(none, full_val, &f.cfg, &config), Err(Error::Training(_))));
    assert!(matches!(attempt(full_train, none, &f.cfg, &config), Err(Error::Training(_))));

    let mut wide = f.cfg.clone();
    wide.image_size = 16;
    assert!(matches!(attempt(full_train, full_val, &wide, &config), Err(Error::Shape(_))));

    let mut short = f.cfg.clone();
    short.n_timesteps = 10;
    assert!(matches!(attempt(full_train, full_val, &short, &config), Err(Error::Config(_))));

    let two = common::tiny_config(2);
    assert!(matches!(attempt(full_train, full_val, &two, &config), Err(Error::Config(_))));

    let mut zero_batch = config.clone();
    zero_batch.batch_size = 0;
    assert!(attempt(full_train, full_val, &f.cfg, &zero_batch).is_err());

    // the validation bank must belong to the validation sequences
    let swapped = LabeledSet {
        sequences: &f.val,
        frames: &empty_bank,
    };
    assert!(attempt(full_train, swapped, &f.cfg, &config).is_err());
}

#[test]
fn diverging_training_is_reported() {
    let f = fixture(TaskKind::Fertility, 2, 2);
    let mut config = quick_config(0);
    config.learning_rate = 1e30;
    let result = train(
        LabeledSet {
            sequences: &f.train,
            frames: &f.train_bank,
        },
        LabeledSet {
            sequences: &f.val,
            frames: &f.val_bank,
        },
        &f.spec,
        &f.cfg,
        &config,
        |_| Ok(()),
    );
    assert!(matches!(result, Err(Error::Training(_))), "{result:?}");
}
