use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothingMode {
    /// Symmetric window, shrunk at both ends so it stays centered.
    Centered,
    /// The most recent `min(window, t + 1)` values.
    Causal,
}

impl std::str::FromStr for SmoothingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centered" => Ok(Self::Centered),
            "causal" => Ok(Self::Causal),
            other => Err(Error::Config(format!("unknown smoothing mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for SmoothingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Centered => "centered",
            Self::Causal => "causal",
        })
    }
}

/// Moving average of every column of `raw` over time (rows).
pub fn smooth(raw: ArrayView2<f64>, window: usize, mode: SmoothingMode) -> Result<Array2<f64>> {
    let n = raw.nrows();
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Decision(format!(
            "smoothing window must be a positive odd number, got {window}"
        )));
    }
    if window > n {
        return Err(Error::Decision(format!(
            "smoothing window {window} exceeds trace length {n}"
        )));
    }
    let half = window / 2;
    let mut out = Array2::zeros(raw.dim());
    for (c, col) in raw.columns().into_iter().enumerate() {
        for t in 0..n {
            let (lo, hi) = match mode {
                SmoothingMode::Centered => {
                    let k = half.min(t).min(n - 1 - t);
                    (t - k, t + k)
                }
                SmoothingMode::Causal => ((t + 1).saturating_sub(window), t),
            };
            let span = col.slice(ndarray::s![lo..=hi]);
            let (min, max) = span
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            // rounding in the sum must not leave the range of the averaged values
            out[[t, c]] = (span.sum() / span.len() as f64).clamp(min, max);
        }
    }
    Ok(out)
}
