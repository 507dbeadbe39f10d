use serde::{Deserialize, Serialize};

use super::{PredictionTrace, SmoothingMode};
use crate::error::{Error, Result};

/// Candidate smoothing windows for [`select_window`].
pub const DEFAULT_WINDOWS: [usize; 11] = [1, 3, 5, 7, 9, 11, 13, 15, 17, 19, 21];

/// `steps + 1` evenly spaced thresholds from 0 to 1.
pub fn threshold_grid(steps: usize) -> Vec<f64> {
    if steps == 0 {
        return vec![0.0];
    }
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Thresholds {
    Fixed(f64),
    PerStep(Vec<f64>),
}

impl Thresholds {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            Self::Fixed(tau) => *tau,
            Self::PerStep(taus) => taus[t],
        }
    }

    /// Threshold for every time index of an `n`-frame trace.
    pub fn expand(&self, n: usize) -> Vec<f64> {
        (0..n).map(|t| self.at(t)).collect()
    }

    pub fn check(&self, n: usize) -> Result<()> {
        let values: &[f64] = match self {
            Self::Fixed(tau) => std::slice::from_ref(tau),
            Self::PerStep(taus) => {
                if taus.len() != n {
                    return Err(Error::Decision(format!(
                        "{} thresholds for a trace of length {n}",
                        taus.len()
                    )));
                }
                taus
            }
        };
        if values.iter().all(|v| (0.0..=1.0).contains(v)) {
            Ok(())
        } else {
            Err(Error::Decision("thresholds must lie in [0, 1]".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub time: usize,
    pub verdict: u8,
    /// `false` when no threshold was reached; the final verdict is used.
    pub decided: bool,
}

/// First time the causally smoothed confidence reaches its threshold.
pub fn earliest_decision(trace: &PredictionTrace, thresholds: &Thresholds) -> Result<Decision> {
    if trace.mode != SmoothingMode::Causal {
        return Err(Error::Decision(
            "streaming decisions need a causally smoothed trace".into(),
        ));
    }
    let n = trace.len();
    thresholds.check(n)?;
    let hit = (0..n).find(|&t| trace.confidence[t] >= thresholds.at(t));
    Ok(match hit {
        Some(t) => Decision {
            time: t,
            verdict: trace.verdict_at(t),
            decided: true,
        },
        None => Decision {
            time: n - 1,
            verdict: trace.verdict_at(n - 1),
            decided: false,
        },
    })
}

fn labeled(traces: &[PredictionTrace]) -> Result<(Vec<&PredictionTrace>, usize)> {
    let labeled: Vec<&PredictionTrace> = traces.iter().filter(|t| t.label.is_some()).collect();
    let Some(first) = labeled.first() else {
        return Err(Error::Decision("no labeled validation traces".into()));
    };
    let n = first.len();
    if labeled.iter().any(|t| t.len() != n) {
        return Err(Error::Decision("validation traces differ in length".into()));
    }
    Ok((labeled, n))
}

/// Window with the best causal accuracy at the last frame; ties go to the
/// smaller window. Windows longer than the traces are skipped.
pub fn select_window(traces: &[PredictionTrace], windows: &[usize]) -> Result<usize> {
    let (labeled, n) = labeled(traces)?;
    let mut sorted: Vec<usize> = windows.iter().copied().filter(|&w| w <= n).collect();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<(usize, usize)> = None;
    for w in sorted {
        let mut correct = 0;
        for trace in &labeled {
            let causal = trace.resmoothed(w, SmoothingMode::Causal)?;
            if Some(causal.verdict_at(n - 1)) == trace.label {
                correct += 1;
            }
        }
        if best.is_none_or(|(_, c)| correct > c) {
            best = Some((w, correct));
        }
    }
    best.map(|(w, _)| w)
        .ok_or_else(|| Error::Decision("no candidate window fits the traces".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionPolicy {
    pub window: usize,
    pub thresholds: Thresholds,
}

/// Smoothing window and per-time thresholds tuned on validation traces.
pub fn fit_policy(
    validation: &[PredictionTrace],
    grid: &[f64],
    windows: &[usize],
) -> Result<DecisionPolicy> {
    let window = select_window(validation, windows)?;
    let causal = validation
        .iter()
        .map(|t| t.resmoothed(window, SmoothingMode::Causal))
        .collect::<Result<Vec<_>>>()?;
    Ok(DecisionPolicy {
        window,
        thresholds: Thresholds::PerStep(optimize_thresholds(&causal, grid)?),
    })
}

/// Per-time thresholds from the grid.
///
/// At each `t`, a threshold is scored by the accuracy of deciding every
/// sequence whose confidence at `t` reaches it with its verdict at `t`, and
/// all others with their final verdict. Ties prefer deciding more sequences,
/// then the higher threshold. Traces must already be causally smoothed.
pub fn optimize_thresholds(traces: &[PredictionTrace], grid: &[f64]) -> Result<Vec<f64>> {
    let (labeled, n) = labeled(traces)?;
    if grid.is_empty() || grid.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Decision("threshold grid must be non-empty within [0, 1]".into()));
    }
    if labeled.iter().any(|t| t.mode != SmoothingMode::Causal) {
        return Err(Error::Decision("thresholds are tuned on causal traces".into()));
    }
    let final_correct: Vec<bool> = labeled
        .iter()
        .map(|tr| Some(tr.verdict_at(n - 1)) == tr.label)
        .collect();
    let base = final_correct.iter().filter(|&&c| c).count() as i64;

    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let mut order: Vec<usize> = (0..labeled.len()).collect();
        order.sort_by(|&a, &b| labeled[b].confidence[t].total_cmp(&labeled[a].confidence[t]));
        // gain[k]: change in correct count when the k most confident decide at t
        let mut gain = vec![0i64; order.len() + 1];
        for (k, &i) in order.iter().enumerate() {
            let at_t = Some(labeled[i].verdict_at(t)) == labeled[i].label;
            gain[k + 1] = gain[k] + at_t as i64 - final_correct[i] as i64;
        }
        let mut best: Option<(i64, usize, f64)> = None;
        for &tau in grid {
            let decided = order.partition_point(|&i| labeled[i].confidence[t] >= tau);
            let key = (base + gain[decided], decided, tau);
            if best.is_none_or(|b| key > b) {
                best = Some(key);
            }
        }
        out.push(best.expect("grid is non-empty").2);
    }
    Ok(out)
}
