//! Frame-level training: cross-entropy over supervised frames, Adam with
//! decoupled weight decay, validation-based model selection.

mod adam;
mod frames;
mod infer;
mod loss;
mod trainer;

pub use adam::AdamW;
pub use frames::FrameBank;
pub use infer::{
    evaluate_frames, frame_probabilities, predict_frames, predict_sequence, prediction_traces,
    FrameAccuracy,
};
pub use loss::{compute_loss, loss_and_grad, PROB_CLAMP};
pub use trainer::{
    sequence_accuracy, supervised_frames, train, EpochRecord, LabeledSet, SelectionMetric,
    TrainConfig, TrainOutcome,
};
