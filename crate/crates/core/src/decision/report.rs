use serde::{Deserialize, Serialize};

use super::{
    calibration, earliest_decision, PredictionTrace, ReliabilityBin, SmoothingMode, Thresholds,
};
use crate::error::{Error, Result};

/// Share of labeled traces whose verdict at `t` matches their label, using
/// each trace's own smoothing.
pub fn accuracy_vs_time(traces: &[PredictionTrace]) -> Result<Vec<f64>> {
    let labeled: Vec<&PredictionTrace> = traces.iter().filter(|t| t.label.is_some()).collect();
    let Some(first) = labeled.first() else {
        return Err(Error::Decision("no labeled traces".into()));
    };
    let n = first.len();
    if labeled.iter().any(|t| t.len() != n) {
        return Err(Error::Decision("traces differ in length".into()));
    }
    Ok((0..n)
        .map(|t| {
            let correct = labeled
                .iter()
                .filter(|tr| Some(tr.verdict_at(t)) == tr.label)
                .count();
            correct as f64 / labeled.len() as f64
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceDecision {
    pub id: String,
    pub decision_time: usize,
    pub verdict: u8,
    pub label: Option<u8>,
    pub correct: Option<bool>,
    pub decided: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionReport {
    pub window: usize,
    pub thresholds: Vec<f64>,
    pub decisions: Vec<SequenceDecision>,
    /// Accuracy of the earliest decisions over labeled sequences, undecided
    /// ones scored with their final verdict.
    pub decided_accuracy: f64,
    /// Mean decision time over labeled sequences, undecided ones at `N - 1`.
    pub mean_decision_time: f64,
    /// Causal accuracy at the last frame.
    pub final_accuracy: f64,
    /// Per-time accuracy under centered smoothing.
    pub accuracy_vs_time: Vec<f64>,
    pub reliability: Vec<ReliabilityBin>,
    pub ece: f64,
}

/// Decisions for every trace plus the dataset-level curves. Calibration is
/// computed from frame-level `(probability of class 1, target)` pairs.
pub fn decision_report(
    traces: &[PredictionTrace],
    window: usize,
    thresholds: &Thresholds,
    frame_predictions: &[(f64, u8)],
    n_bins: usize,
) -> Result<DecisionReport> {
    let mut decisions = Vec::with_capacity(traces.len());
    let mut centered = Vec::with_capacity(traces.len());
    let (mut correct, mut final_correct, mut time_sum, mut n_labeled) = (0usize, 0usize, 0usize, 0usize);
    let mut n = 0;
    for trace in traces {
        let causal = trace.resmoothed(window, SmoothingMode::Causal)?;
        n = causal.len();
        let d = earliest_decision(&causal, thresholds)?;
        let is_correct = trace.label.map(|l| l == d.verdict);
        if let Some(label) = trace.label {
            n_labeled += 1;
            time_sum += d.time;
            correct += usize::from(d.verdict == label);
            final_correct += usize::from(causal.verdict_at(n - 1) == label);
        }
        decisions.push(SequenceDecision {
            id: trace.id.clone(),
            decision_time: d.time,
            verdict: d.verdict,
            label: trace.label,
            correct: is_correct,
            decided: d.decided,
        });
        centered.push(trace.resmoothed(window, SmoothingMode::Centered)?);
    }
    if n_labeled == 0 {
        return Err(Error::Decision("no labeled traces".into()));
    }
    let (probs, labels): (Vec<f64>, Vec<u8>) = frame_predictions.iter().copied().unzip();
    let calib = calibration(&probs, &labels, n_bins)?;
    Ok(DecisionReport {
        window,
        thresholds: thresholds.expand(n),
        decisions,
        decided_accuracy: correct as f64 / n_labeled as f64,
        mean_decision_time: time_sum as f64 / n_labeled as f64,
        final_accuracy: final_correct as f64 / n_labeled as f64,
        accuracy_vs_time: accuracy_vs_time(&centered)?,
        reliability: calib.bins,
        ece: calib.ece,
    })
}
