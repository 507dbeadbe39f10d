use ndarray::{Array2, ArrayView3};

use super::FrameBank;
use crate::data::{frame_target, FrameTarget, SequenceRecord};
use crate::decision::{positive_probability, verdict, PredictionTrace, SmoothingMode};
use crate::error::{Error, Result};
use crate::model::{forward_batch, ModelConfig, Parameters};
use crate::task::TaskSpec;

const INFER_BATCH: usize = 64;

/// Probabilities for `(sequence, time)` pairs, one row each, dropout off.
pub fn predict_frames(
    params: &Parameters<f32>,
    cfg: &ModelConfig,
    bank: &FrameBank,
    items: &[(usize, usize)],
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((items.len(), cfg.n_classes));
    for (c, chunk) in items.chunks(INFER_BATCH).enumerate() {
        let images: Vec<ArrayView3<f32>> = chunk.iter().map(|&(s, t)| bank.frame(s, t)).collect();
        let times: Vec<usize> = chunk.iter().map(|&(_, t)| t).collect();
        let pass = forward_batch(params, cfg, &images, &times, None)?;
        for (i, row) in pass.probs.rows().into_iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                out[[c * INFER_BATCH + i, j]] = p as f64;
            }
        }
    }
    Ok(out)
}

/// Full `N x o` probability trace of one sequence.
pub fn predict_sequence(
    params: &Parameters<f32>,
    cfg: &ModelConfig,
    bank: &FrameBank,
    seq: usize,
) -> Result<Array2<f64>> {
    let items: Vec<(usize, usize)> = (0..bank.n_frames(seq)).map(|t| (seq, t)).collect();
    predict_frames(params, cfg, bank, &items)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct FrameAccuracy {
    pub correct: usize,
    pub total: usize,
}

impl FrameAccuracy {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Accuracy over frames with a definite target.
pub fn evaluate_frames(
    params: &Parameters<f32>,
    cfg: &ModelConfig,
    spec: &TaskSpec,
    sequences: &[SequenceRecord],
    bank: &FrameBank,
) -> Result<FrameAccuracy> {
    bank.check_matches(sequences)?;
    if cfg.n_classes != spec.n_output_classes {
        return Err(Error::Config(format!(
            "model has {} outputs, task {} needs {}",
            cfg.n_classes, spec.kind, spec.n_output_classes
        )));
    }
    let mut items = Vec::new();
    let mut targets = Vec::new();
    for (s, seq) in sequences.iter().enumerate() {
        for (t, frame) in seq.frames.iter().enumerate() {
            if let FrameTarget::Target(c) = frame_target(&frame.frame_label, spec)? {
                items.push((s, t));
                targets.push(c);
            }
        }
    }
    let probs = predict_frames(params, cfg, bank, &items)?;
    let correct = targets
        .iter()
        .enumerate()
        .filter(|&(i, &c)| verdict(probs.row(i)) == c)
        .count();
    Ok(FrameAccuracy {
        correct,
        total: targets.len(),
    })
}

/// Unsmoothed traces (window 1) of every sequence, labeled with the sequence
/// class where one exists.
pub fn prediction_traces(
    params: &Parameters<f32>,
    cfg: &ModelConfig,
    spec: &TaskSpec,
    sequences: &[SequenceRecord],
    bank: &FrameBank,
) -> Result<Vec<PredictionTrace>> {
    bank.check_matches(sequences)?;
    sequences
        .iter()
        .enumerate()
        .map(|(s, seq)| {
            let raw = predict_sequence(params, cfg, bank, s)?;
            PredictionTrace::new(seq.id(), seq.target(spec), raw, 1, SmoothingMode::Causal)
        })
        .collect()
}

/// `(probability of class 1, target)` for every frame with a definite
/// target, read from already computed traces.
pub fn frame_probabilities(
    traces: &[PredictionTrace],
    spec: &TaskSpec,
    sequences: &[SequenceRecord],
) -> Result<Vec<(f64, u8)>> {
    let mut out = Vec::new();
    for (trace, seq) in traces.iter().zip(sequences) {
        for (t, frame) in seq.frames.iter().enumerate() {
            if let FrameTarget::Target(c) = frame_target(&frame.frame_label, spec)? {
                out.push((positive_probability(trace.raw.row(t)), c));
            }
        }
    }
    Ok(out)
}
