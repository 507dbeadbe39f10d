//! Dataset schema: annotated frames, per-well sequences, manifests and splits.

mod manifest;
mod split;
mod targets;
mod validate;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use manifest::{parse_manifest, read_manifest, write_manifest, MANIFEST_HEADER};
pub use split::{split_dataset, DatasetSplit, DEFAULT_RATIOS};
pub use targets::{frame_target, FrameTarget};
pub use validate::{validate_dataset, ValidationReport};

use crate::task::{TaskKind, TaskSpec, NOT_FERTILIZED, UNSURE, WELLS_PER_PLATE};

/// One annotated frame of one well.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub run_id: String,
    pub well_id: u32,
    pub frame_index: usize,
    pub capture_offset_minutes: u32,
    pub frame_label: String,
    pub image_ref: PathBuf,
}

/// One well's ordered frames plus its sequence-level annotation.
///
/// `sequence_label` is `None` for sequences that carry no definitive outcome
/// (a fertility sequence ending `unsure`, a toxicity egg that was never
/// fertilized). Such sequences are kept in the schema but dropped from
/// training and sequence-level metrics.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub run_id: String,
    pub well_id: u32,
    pub frames: Vec<FrameRecord>,
    pub sequence_label: Option<String>,
    pub flipping_point: Option<usize>,
}

impl SequenceRecord {
    /// `run_id/well_id`, the identity used in reports.
    pub fn id(&self) -> String {
        format!("{}/{}", self.run_id, self.well_id)
    }

    /// Sequence-level class id, or `None` if the sequence is excluded.
    pub fn target(&self, spec: &TaskSpec) -> Option<u8> {
        self.sequence_label
            .as_deref()
            .and_then(|label| spec.sequence_class(label))
    }

    /// All invariant violations of this record, empty when valid.
    pub fn violations(&self, spec: &TaskSpec) -> Vec<String> {
        let mut out = Vec::new();
        let n = spec.frames_per_sequence;
        if self.well_id as usize >= WELLS_PER_PLATE {
            out.push(format!("well_id {} outside [0, {WELLS_PER_PLATE})", self.well_id));
        }
        if self.frames.len() != n {
            out.push(format!("has {} frames, expected {n}", self.frames.len()));
        }
        for (i, frame) in self.frames.iter().enumerate() {
            if frame.frame_index != i {
                out.push(format!("frame at position {i} has index {}", frame.frame_index));
                break;
            }
        }
        for frame in &self.frames {
            if frame.run_id != self.run_id || frame.well_id != self.well_id {
                out.push(format!("frame {} belongs to another sequence", frame.frame_index));
            }
            if !spec.is_frame_label(&frame.frame_label) {
                out.push(format!(
                    "frame {} has unknown label `{}`",
                    frame.frame_index, frame.frame_label
                ));
            }
            let expected = frame.frame_index as u32 * spec.interval_minutes;
            if frame.capture_offset_minutes != expected {
                out.push(format!(
                    "frame {} captured at {} min, expected {expected}",
                    frame.frame_index, frame.capture_offset_minutes
                ));
            }
        }
        if let Some(label) = &self.sequence_label {
            if !spec.is_sequence_label(label) {
                out.push(format!("unknown sequence label `{label}`"));
            }
        }
        if let Some(fp) = self.flipping_point {
            if fp >= n {
                out.push(format!("flipping point {fp} outside [0, {n})"));
            }
        }
        let last = self.frames.last().map(|f| f.frame_label.as_str());
        match spec.kind {
            TaskKind::Fertility => {
                match (&self.sequence_label, last) {
                    (Some(label), Some(last)) if label != last => out.push(format!(
                        "sequence label `{label}` differs from final frame label `{last}`"
                    )),
                    (None, Some(last)) if last != UNSURE => out.push(format!(
                        "unlabeled sequence ends with definitive frame label `{last}`"
                    )),
                    _ => {}
                }
                if let Some(fp) = self.flipping_point.filter(|&fp| fp < n) {
                    for frame in &self.frames {
                        let unsure = frame.frame_label == UNSURE;
                        if frame.frame_index < fp && !unsure {
                            out.push(format!(
                                "frame {} precedes flipping point {fp} but is labeled `{}`",
                                frame.frame_index, frame.frame_label
                            ));
                            break;
                        }
                        if frame.frame_index >= fp && unsure {
                            out.push(format!(
                                "frame {} is at/after flipping point {fp} but is labeled `unsure`",
                                frame.frame_index
                            ));
                            break;
                        }
                    }
                }
            }
            TaskKind::Toxicity => {
                let never_fertilized = last == Some(NOT_FERTILIZED);
                if never_fertilized != self.sequence_label.is_none() {
                    out.push(
                        "sequence label must be blank exactly when the final frame is `not fertilized`"
                            .to_string(),
                    );
                }
            }
        }
        out
    }
}
