//! Sequence-level decisions from per-frame probability traces.
//!
//! A trace is an `N x o` matrix of head outputs. Class 1 is the "positive"
//! class throughout: `alive` for fertility, `anomalous` for toxicity.

mod calibration;
mod report;
mod smoothing;
mod thresholds;

use ndarray::{Array2, ArrayView1};
use crate::error::{Error, Result};

pub use calibration::{calibration, Calibration, ReliabilityBin};
pub use report::{accuracy_vs_time, decision_report, DecisionReport, SequenceDecision};
pub use smoothing::{smooth, SmoothingMode};
pub use thresholds::{
    earliest_decision, fit_policy, optimize_thresholds, select_window, threshold_grid, Decision, DecisionPolicy, Thresholds,
    DEFAULT_WINDOWS,
};

/// `2|y - 0.5|` for one output, `2(max - 0.5)` for two.
pub fn confidence(y: ArrayView1<f64>) -> f64 {
    match y.len() {
        1 => 2.0 * (y[0] - 0.5).abs(),
        _ => 2.0 * (y.fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - 0.5),
    }
}

/// Class id of a probability vector: `y >= 0.5` for one output, argmax for
/// two with ties going to class 1.
pub fn verdict(y: ArrayView1<f64>) -> u8 {
    match y.len() {
        1 => u8::from(y[0] >= 0.5),
        _ => u8::from(y[1] >= y[0]),
    }
}

/// Probability assigned to class 1.
pub fn positive_probability(y: ArrayView1<f64>) -> f64 {
    y[y.len() - 1]
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTrace {
    pub id: String,
    /// Sequence class, `None` for sequences without a definite label.
    pub label: Option<u8>,
    pub raw: Array2<f64>,
    pub smoothed: Array2<f64>,
    pub confidence: Vec<f64>,
    pub window: usize,
    pub mode: SmoothingMode,
}

impl PredictionTrace {
    pub fn new(
        id: impl Into<String>,
        label: Option<u8>,
        raw: Array2<f64>,
        window: usize,
        mode: SmoothingMode,
    ) -> Result<Self> {
        if raw.nrows() == 0 || !(1..=2).contains(&raw.ncols()) {
            return Err(Error::Decision(format!("trace of shape {:?}", raw.dim())));
        }
        let smoothed = smooth(raw.view(), window, mode)?;
        let confidence = smoothed.rows().into_iter().map(confidence).collect();
        Ok(Self {
            id: id.into(),
            label,
            raw,
            smoothed,
            confidence,
            window,
            mode,
        })
    }

    pub fn len(&self) -> usize {
        self.raw.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.nrows() == 0
    }

    pub fn verdict_at(&self, t: usize) -> u8 {
        verdict(self.smoothed.row(t))
    }

    /// Same raw values under a different smoothing.
    pub fn resmoothed(&self, window: usize, mode: SmoothingMode) -> Result<Self> {
        Self::new(self.id.clone(), self.label, self.raw.clone(), window, mode)
    }
}
