use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    /// Mean predicted probability of class 1; 0 for an empty bin.
    pub mean_predicted: f64,
    /// Observed share of class 1; 0 for an empty bin.
    pub positive_rate: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub bins: Vec<ReliabilityBin>,
    pub ece: f64,
    pub total: usize,
}

/// Reliability bins over the predicted probability of class 1 and the
/// expected calibration error.
pub fn calibration(predictions: &[f64], labels: &[u8], n_bins: usize) -> Result<Calibration> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::Decision(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if n_bins == 0 {
        return Err(Error::Decision("at least one bin is needed".into()));
    }
    if let Some(p) = predictions.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Decision(format!("probability {p} outside [0, 1]")));
    }
    let mut sums = vec![(0.0f64, 0usize, 0usize); n_bins];
    for (&p, &label) in predictions.iter().zip(labels) {
        let b = ((p * n_bins as f64) as usize).min(n_bins - 1);
        sums[b].0 += p;
        sums[b].1 += usize::from(label == 1);
        sums[b].2 += 1;
    }
    let total = predictions.len();
    let mut ece = 0.0;
    let bins = sums
        .into_iter()
        .enumerate()
        .map(|(b, (sum, positives, count))| {
            let (mean_predicted, positive_rate) = if count == 0 {
                (0.0, 0.0)
            } else {
                (sum / count as f64, positives as f64 / count as f64)
            };
            ece += count as f64 / total as f64 * (positive_rate - mean_predicted).abs();
            ReliabilityBin {
                lower: b as f64 / n_bins as f64,
                upper: (b + 1) as f64 / n_bins as f64,
                mean_predicted,
                positive_rate,
                count,
            }
        })
        .collect();
    Ok(Calibration { bins, ece, total })
}
