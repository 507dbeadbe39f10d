//! Task geometries and label vocabularies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Wells on a standard plate; one sequence per well.
pub const WELLS_PER_PLATE: usize = 96;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Fertility,
    Toxicity,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Fertility => "fertility",
            TaskKind::Toxicity => "toxicity",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fertility" => Ok(TaskKind::Fertility),
            "toxicity" => Ok(TaskKind::Toxicity),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

/// Geometry and label vocabulary of one task.
///
/// Class ids used throughout the crate follow the frame target mapping:
/// fertility `1 = alive`, `0 = unfertilized`; toxicity `0 = alive`,
/// `1 = anomalous`. Probability of class id 1 is the "positive" probability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub frames_per_sequence: usize,
    pub interval_minutes: u32,
    /// (width, height) of the microscope frames.
    pub native_resolution: (u32, u32),
    /// (height, width, channels) fed to the model.
    pub model_input_size: (usize, usize, usize),
    pub frame_label_vocab: &'static [&'static str],
    pub sequence_label_vocab: &'static [&'static str],
    pub n_output_classes: usize,
}

pub const ALIVE: &str = "alive";
pub const UNSURE: &str = "unsure";
pub const UNFERTILIZED: &str = "unfertilized";
pub const SUBLETHAL: &str = "sublethal effect";
pub const LETHAL: &str = "lethal effect";
pub const NOT_FERTILIZED: &str = "not fertilized";
pub const ANOMALOUS: &str = "anomalous";

impl TaskSpec {
    pub fn fertility() -> Self {
        Self {
            kind: TaskKind::Fertility,
            frames_per_sequence: 97,
            interval_minutes: 5,
            native_resolution: (1344, 820),
            model_input_size: (224, 224, 3),
            frame_label_vocab: &[ALIVE, UNSURE, UNFERTILIZED],
            sequence_label_vocab: &[ALIVE, UNFERTILIZED],
            n_output_classes: 1,
        }
    }

    pub fn toxicity() -> Self {
        Self {
            kind: TaskKind::Toxicity,
            frames_per_sequence: 192,
            interval_minutes: 15,
            native_resolution: (1344, 820),
            model_input_size: (224, 224, 3),
            frame_label_vocab: &[ALIVE, SUBLETHAL, LETHAL, NOT_FERTILIZED],
            sequence_label_vocab: &[ALIVE, ANOMALOUS],
            n_output_classes: 2,
        }
    }

    pub fn for_kind(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Fertility => Self::fertility(),
            TaskKind::Toxicity => Self::toxicity(),
        }
    }

    pub fn is_frame_label(&self, label: &str) -> bool {
        self.frame_label_vocab.contains(&label)
    }

    pub fn is_sequence_label(&self, label: &str) -> bool {
        self.sequence_label_vocab.contains(&label)
    }

    /// Observation span of one sequence in minutes (first to last frame).
    pub fn span_minutes(&self) -> u32 {
        (self.frames_per_sequence as u32 - 1) * self.interval_minutes
    }

    /// Class id of a sequence label, using the same mapping as frame targets.
    pub fn sequence_class(&self, label: &str) -> Option<u8> {
        match (self.kind, label) {
            (TaskKind::Fertility, ALIVE) => Some(1),
            (TaskKind::Fertility, UNFERTILIZED) => Some(0),
            (TaskKind::Toxicity, ALIVE) => Some(0),
            (TaskKind::Toxicity, ANOMALOUS) => Some(1),
            _ => None,
        }
    }

    /// Sequence label for a class id.
    pub fn class_label(&self, class: u8) -> &'static str {
        match (self.kind, class) {
            (TaskKind::Fertility, 1) => ALIVE,
            (TaskKind::Fertility, _) => UNFERTILIZED,
            (TaskKind::Toxicity, 0) => ALIVE,
            (TaskKind::Toxicity, _) => ANOMALOUS,
        }
    }
}
