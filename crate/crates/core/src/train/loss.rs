use ndarray::{Array2, ArrayView2};

use crate::data::FrameTarget;
use crate::error::{Error, Result};
use crate::model::{HeadActivation, Real};
use crate::task::TaskSpec;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Binary cross-entropy (one output) or categorical cross-entropy (two).
pub fn compute_loss(y: &[f64], target: FrameTarget, spec: &TaskSpec) -> Result<f64> {
    let FrameTarget::Target(class) = target else {
        return Err(Error::Training("excluded frames carry no loss".into()));
    };
    if y.len() != spec.n_output_classes {
        return Err(Error::Shape(format!(
            "{} probabilities for a {}-output head",
            y.len(),
            spec.n_output_classes
        )));
    }
    Ok(match y.len() {
        1 => {
            let p = clamp_prob(y[0]);
            let t = class as f64;
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        }
        _ => -clamp_prob(y[class as usize]).ln(),
    })
}

/// Like `clamp`, but NaN passes through so divergence stays visible.
fn clamp_nan<T: Real>(y: T, lo: T, hi: T) -> T {
    if y < lo {
        lo
    } else if y > hi {
        hi
    } else {
        y
    }
}

/// Mean loss over a batch and its gradient with respect to the logits.
/// Where the clamp is active the gradient is zero.
pub fn loss_and_grad<T: Real>(
    probs: ArrayView2<T>,
    targets: &[u8],
    activation: HeadActivation,
) -> (T, Array2<T>) {
    let batch = targets.len();
    let scale = T::one() / T::of(batch as f64);
    let lo = T::of(PROB_CLAMP);
    let hi = T::one() - lo;
    let mut total = T::zero();
    let mut grad = Array2::zeros(probs.dim());
    for (b, &target) in targets.iter().enumerate() {
        match activation {
            HeadActivation::Sigmoid => {
                let y = probs[[b, 0]];
                let t = T::of(target as f64);
                let p = clamp_nan(y, lo, hi);
                total -= t * p.ln() + (T::one() - t) * (T::one() - p).ln();
                if y > lo && y < hi {
                    grad[[b, 0]] = (y - t) * scale;
                }
            }
            HeadActivation::Softmax => {
                let k = target as usize;
                let y = probs[[b, k]];
                total -= clamp_nan(y, lo, hi).ln();
                if y > lo && y < hi {
                    for j in 0..probs.ncols() {
                        let indicator = if j == k { T::one() } else { T::zero() };
                        grad[[b, j]] = (probs[[b, j]] - indicator) * scale;
                    }
                }
            }
        }
    }
    (total * scale, grad)
}
