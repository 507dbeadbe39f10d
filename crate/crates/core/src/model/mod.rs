//! Spatiotemporal vision transformer.
//!
//! Each frame is cut into `P x P` patches, linearly projected and offset by a
//! learned spatial embedding. A class token carrying the learned temporal
//! embedding of the frame's index is prepended, the tokens run through a
//! pre-norm encoder, and a linear head on the class token yields the class
//! probabilities (sigmoid for one output, softmax for two).

mod checkpoint;
mod config;
mod params;
mod preprocess;
mod real;
mod vit;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use config::{HeadActivation, ModelConfig};
pub use params::{BlockParams, Parameters};
pub use preprocess::{load_image, normalize, patchify, preprocess, resize_bilinear, unpatchify};
pub use real::Real;
pub use vit::{
    backward, classify, embed_frame, encode, forward, forward_batch, head_probabilities,
    ForwardPass, LN_EPS,
};
