use std::path::Path;

use image::DynamicImage;
use ndarray::{Array3, ArrayView3};

use crate::data::SequenceRecord;
use crate::error::{Error, Result};
use crate::model::{load_image, preprocess};

/// Preprocessed frames of a list of sequences, held in memory and addressed
/// by `(sequence index, time index)`.
#[derive(Clone, Debug)]
pub struct FrameBank {
    size: usize,
    offsets: Vec<usize>,
    frames: Vec<Array3<f32>>,
}

impl FrameBank {
    /// Loads every frame from `image_ref` paths relative to `base_dir`.
    pub fn load(sequences: &[SequenceRecord], base_dir: &Path, size: usize) -> Result<Self> {
        Self::from_fn(sequences, size, |s, t| {
            load_image(&base_dir.join(&sequences[s].frames[t].image_ref))
        })
    }

    /// Builds the bank from an image source, e.g. an in-memory renderer.
    pub fn from_fn<F>(sequences: &[SequenceRecord], size: usize, mut source: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Result<DynamicImage>,
    {
        let mut offsets = Vec::with_capacity(sequences.len() + 1);
        let mut frames = Vec::new();
        for (s, seq) in sequences.iter().enumerate() {
            offsets.push(frames.len());
            for t in 0..seq.frames.len() {
                frames.push(preprocess(&source(s, t)?, size)?);
            }
        }
        offsets.push(frames.len());
        Ok(Self {
            size,
            offsets,
            frames,
        })
    }

    pub fn image_size(&self) -> usize {
        self.size
    }

    pub fn n_sequences(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_frames(&self, seq: usize) -> usize {
        self.offsets[seq + 1] - self.offsets[seq]
    }

    pub fn frame(&self, seq: usize, t: usize) -> ArrayView3<'_, f32> {
        assert!(t < self.n_frames(seq), "frame {t} of sequence {seq} out of range");
        self.frames[self.offsets[seq] + t].view()
    }

    pub fn frame_mut(&mut self, seq: usize, t: usize) -> &mut Array3<f32> {
        assert!(t < self.n_frames(seq), "frame {t} of sequence {seq} out of range");
        &mut self.frames[self.offsets[seq] + t]
    }

    pub(crate) fn check_matches(&self, sequences: &[SequenceRecord]) -> Result<()> {
        let consistent = self.n_sequences() == sequences.len()
            && sequences
                .iter()
                .enumerate()
                .all(|(s, seq)| self.n_frames(s) == seq.frames.len());
        if consistent {
            Ok(())
        } else {
            Err(Error::Shape("frame bank does not match the sequence list".into()))
        }
    }
}
