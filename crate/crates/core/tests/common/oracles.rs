#![allow(clippy::needless_range_loop)]
//! Brute-force reference implementations for the decision engine.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Moving average by explicit index arithmetic.
pub fn smooth(values: &[f64], window: usize, centered: bool) -> Vec<f64> {
    let n = values.len();
    let half = window / 2;
    (0..n)
        .map(|t| {
            let mut picked = Vec::new();
            for u in 0..n {
                let inside = if centered {
                    let k = half.min(t).min(n - 1 - t);
                    u + k >= t && u <= t + k
                } else {
                    u <= t && t - u < window
                };
                if inside {
                    picked.push(values[u]);
                }
            }
            picked.iter().sum::<f64>() / picked.len() as f64
        })
        .collect()
}

pub fn confidence(y: &[f64]) -> f64 {
    if y.len() == 1 {
        2.0 * (y[0] - 0.5).abs()
    } else {
        2.0 * (y[0].max(y[1]) - 0.5)
    }
}

pub fn verdict(y: &[f64]) -> u8 {
    if y.len() == 1 {
        if y[0] >= 0.5 {
            1
        } else {
            0
        }
    } else if y[1] >= y[0] {
        1
    } else {
        0
    }
}

/// `(t*, decided)` by scanning forward.
pub fn earliest(confidence: &[f64], thresholds: &[f64]) -> (usize, bool) {
    for t in 0..confidence.len() {
        if confidence[t] >= thresholds[t] {
            return (t, true);
        }
    }
    (confidence.len() - 1, false)
}

/// Exhaustive grid search of the fallback-policy objective at every `t`.
/// `conf[i][t]`, `verdicts[i][t]`, `labels[i]`.
pub fn best_thresholds(conf: &[Vec<f64>], verdicts: &[Vec<u8>], labels: &[u8], grid: &[f64]) -> Vec<f64> {
    let n = conf[0].len();
    let mut out = Vec::new();
    for t in 0..n {
        let mut best: Option<(usize, usize, f64)> = None;
        for &tau in grid {
            let mut correct = 0;
            let mut decided = 0;
            for i in 0..labels.len() {
                let v = if conf[i][t] >= tau {
                    decided += 1;
                    verdicts[i][t]
                } else {
                    verdicts[i][n - 1]
                };
                if v == labels[i] {
                    correct += 1;
                }
            }
            let better = match best {
                None => true,
                Some((c, d, b)) => {
                    correct > c || (correct == c && decided > d) || (correct == c && decided == d && tau > b)
                }
            };
            if better {
                best = Some((correct, decided, tau));
            }
        }
        out.push(best.unwrap().2);
    }
    out
}

/// Number of traces whose verdict at `t` equals the label, per `t`.
pub fn correct_counts(verdicts: &[Vec<u8>], labels: &[u8]) -> Vec<usize> {
    (0..verdicts[0].len())
        .map(|t| (0..labels.len()).filter(|&i| verdicts[i][t] == labels[i]).count())
        .collect()
}

/// Random probability trace: a clipped random walk, one or two columns.
pub fn random_trace(rng: &mut ChaCha8Rng, n: usize, outputs: usize) -> Array2<f64> {
    let mut p: f64 = rng.random_range(0.0..1.0);
    let step = rng.random_range(0.01..0.3);
    let mut raw = Array2::zeros((n, outputs));
    for t in 0..n {
        p = (p + rng.random_range(-step..step)).clamp(0.0, 1.0);
        if rng.random_bool(0.05) {
            p = rng.random_range(0.0..1.0);
        }
        if outputs == 1 {
            raw[[t, 0]] = p;
        } else {
            raw[[t, 0]] = 1.0 - p;
            raw[[t, 1]] = p;
        }
    }
    raw
}
