#![allow(dead_code)]

pub mod oracles;

use devscreen_core::model::{backward, forward_batch, HeadActivation, ModelConfig, Parameters};
use devscreen_core::task::TaskSpec;
use devscreen_core::train::loss_and_grad;
use ndarray::{Array3, ArrayView3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// 8x8x1 input, 4x4 patches, width 8, one block, two heads.
pub fn tiny_config(n_classes: usize) -> ModelConfig {
    let spec = if n_classes == 1 {
        TaskSpec::fertility()
    } else {
        TaskSpec::toxicity()
    };
    let mut cfg = ModelConfig::for_task(&spec);
    cfg.image_size = 8;
    cfg.channels = 1;
    cfg.patch_size = 4;
    cfg.hidden_dim = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.n_timesteps = 6;
    cfg.dropout = 0.0;
    cfg
}

/// Parameters with every entry perturbed so no path is degenerate.
pub fn random_params(cfg: &ModelConfig, seed: u64, std: f64) -> Parameters<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Parameters::<f64>::init(cfg, &mut rng);
    let noise = Normal::new(0.0, std).unwrap();
    for (_, values) in params.tensors_mut() {
        for v in values.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    params
}

pub fn random_image(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Array3<f64> {
    Array3::from_shape_fn((cfg.image_size, cfg.image_size, cfg.channels), |_| {
        rng.random_range(-1.0..1.0)
    })
}

/// Mean cross-entropy written out directly from probabilities.
fn reference_loss(probs: &ndarray::Array2<f64>, targets: &[u8], activation: HeadActivation) -> f64 {
    let mut total = 0.0;
    for (b, &c) in targets.iter().enumerate() {
        total -= match activation {
            HeadActivation::Sigmoid => {
                let y = probs[[b, 0]];
                if c == 1 {
                    y.ln()
                } else {
                    (1.0 - y).ln()
                }
            }
            HeadActivation::Softmax => probs[[b, c as usize]].ln(),
        };
    }
    total / targets.len() as f64
}

/// Largest per-group relative error `|g_a - g_n| / max(|g_a|, |g_n|)` between
/// the analytic gradient and central differences, with the group name.
pub fn gradient_check(
    cfg: &ModelConfig,
    params: &Parameters<f64>,
    images: &[Array3<f64>],
    times: &[usize],
    targets: &[u8],
    dropout_seed: Option<u64>,
    step: f64,
) -> Vec<(String, f64)> {
    let views: Vec<ArrayView3<f64>> = images.iter().map(|i| i.view()).collect();
    let rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let loss_at = |p: &Parameters<f64>| {
        let mut r = rng.clone();
        let pass = forward_batch(p, cfg, &views, times, r.as_mut()).unwrap();
        reference_loss(&pass.probs, targets, cfg.head_activation)
    };
    let mut r = rng.clone();
    let pass = forward_batch(params, cfg, &views, times, r.as_mut()).unwrap();
    let (_, dlogits) = loss_and_grad(pass.probs.view(), targets, cfg.head_activation);
    let analytic = backward(params, cfg, &pass, dlogits.view());

    let mut out = Vec::new();
    let mut probe = params.clone();
    let n_groups = params.tensors().len();
    for g in 0..n_groups {
        let (name, len) = {
            let t = params.tensors();
            (t[g].0.clone(), t[g].1.len())
        };
        let mut numeric = vec![0.0; len];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = probe.tensors()[g].1[i];
            probe.tensors_mut()[g].1[i] = orig + step;
            let up = loss_at(&probe);
            probe.tensors_mut()[g].1[i] = orig - step;
            let down = loss_at(&probe);
            probe.tensors_mut()[g].1[i] = orig;
            *slot = (up - down) / (2.0 * step);
        }
        let a = analytic.tensors()[g].1;
        let diff: f64 = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = na.max(nn);
        out.push((name, if scale == 0.0 { 0.0 } else { diff / scale }));
    }
    out
}

/// Batch of random images, times, and targets for the tiny config.
pub fn random_batch(
    cfg: &ModelConfig,
    batch: usize,
    seed: u64,
) -> (Vec<Array3<f64>>, Vec<usize>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = (0..batch).map(|_| random_image(cfg, &mut rng)).collect();
    let times = (0..batch).map(|_| rng.random_range(0..cfg.n_timesteps)).collect();
    let classes = cfg.n_classes.max(2) as u8;
    let targets = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    (images, times, targets)
}

use devscreen_core::data::SequenceRecord;
use devscreen_core::synth::{plan_dataset, render_frame, PlannedSequence, SynthConfig};
use devscreen_core::train::FrameBank;
use devscreen_core::TaskKind;

/// Synthetic plate rendered straight into memory at `size x size`.
pub fn synthetic_plate(
    task: TaskKind,
    n_runs: usize,
    size: u32,
    separability: f64,
    seed: u64,
) -> Vec<PlannedSequence> {
    let mut config = SynthConfig::new(task);
    config.n_runs = n_runs;
    config.image_size = (size, size);
    config.separability = separability;
    config.seed = seed;
    plan_dataset(&config).unwrap()
}

pub fn render_bank(planned: &[PlannedSequence], records: &[SequenceRecord], size: u32) -> FrameBank {
    let by_id: std::collections::HashMap<String, &PlannedSequence> =
        planned.iter().map(|p| (p.record.id(), p)).collect();
    FrameBank::from_fn(records, size as usize, |s, t| {
        let p = by_id[&records[s].id()];
        Ok(image::DynamicImage::ImageRgb8(render_frame(&p.params, t, size, size)))
    })
    .unwrap()
}

use devscreen_core::data::{split_dataset, DEFAULT_RATIOS};
use devscreen_core::decision::{
    decision_report, fit_policy, threshold_grid, DecisionReport, DEFAULT_WINDOWS,
};
use devscreen_core::train::{
    evaluate_frames, frame_probabilities, prediction_traces, train, EpochRecord, LabeledSet,
    TrainConfig, TrainOutcome,
};

/// Input 64x64, 8x8 patches, width 128, four blocks, four heads.
pub fn reduced_config(spec: &TaskSpec) -> ModelConfig {
    let mut cfg = ModelConfig::for_task(spec);
    cfg.image_size = 64;
    cfg.patch_size = 8;
    cfg.hidden_dim = 128;
    cfg.n_layers = 4;
    cfg.n_heads = 4;
    cfg
}

pub struct EndToEnd {
    pub outcome: TrainOutcome,
    pub test_frame_accuracy: f64,
    pub report: DecisionReport,
    pub n_test: usize,
}

/// Synthetic plate, stratified split, training, then decisions on the test
/// sequences with a policy fitted on validation.
pub fn end_to_end(
    task: TaskKind,
    n_runs: usize,
    train_config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> EndToEnd {
    let spec = TaskSpec::for_kind(task);
    let cfg = reduced_config(&spec);
    let size = cfg.image_size as u32;
    let planned = synthetic_plate(task, n_runs, size, 1.0, train_config.seed);
    let labeled: Vec<SequenceRecord> = planned
        .iter()
        .map(|p| p.record.clone())
        .filter(|r| r.sequence_label.is_some())
        .collect();
    let split = split_dataset(&labeled, DEFAULT_RATIOS, train_config.seed).unwrap();
    let train_bank = render_bank(&planned, &split.train, size);
    let val_bank = render_bank(&planned, &split.validation, size);
    let test_bank = render_bank(&planned, &split.test, size);
    let outcome = train(
        LabeledSet { sequences: &split.train, frames: &train_bank },
        LabeledSet { sequences: &split.validation, frames: &val_bank },
        &spec,
        &cfg,
        train_config,
        |r| {
            on_epoch(r);
            Ok(())
        },
    )
    .unwrap();
    let model = &outcome.model_config;
    let val_traces =
        prediction_traces(&outcome.params, model, &spec, &split.validation, &val_bank).unwrap();
    let policy = fit_policy(&val_traces, &threshold_grid(20), &DEFAULT_WINDOWS).unwrap();
    let test_traces =
        prediction_traces(&outcome.params, model, &spec, &split.test, &test_bank).unwrap();
    let frames = frame_probabilities(&test_traces, &spec, &split.test).unwrap();
    let report =
        decision_report(&test_traces, policy.window, &policy.thresholds, &frames, 10).unwrap();
    let test_frame_accuracy = evaluate_frames(&outcome.params, model, &spec, &split.test, &test_bank)
        .unwrap()
        .accuracy();
    EndToEnd {
        outcome,
        test_frame_accuracy,
        report,
        n_test: split.test.len(),
    }
}
