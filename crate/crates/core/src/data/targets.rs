use crate::error::{Error, Result};
use crate::task::{TaskKind, TaskSpec, ALIVE, LETHAL, NOT_FERTILIZED, SUBLETHAL, UNFERTILIZED, UNSURE};

/// Training target of one frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameTarget {
    Target(u8),
    /// No supervision: the frame never enters a loss or a frame metric.
    Excluded,
}

impl FrameTarget {
    pub fn class(self) -> Option<u8> {
        match self {
            FrameTarget::Target(c) => Some(c),
            FrameTarget::Excluded => None,
        }
    }
}

pub fn frame_target(label: &str, spec: &TaskSpec) -> Result<FrameTarget> {
    let target = match (spec.kind, label) {
        (TaskKind::Fertility, ALIVE) => FrameTarget::Target(1),
        (TaskKind::Fertility, UNFERTILIZED) => FrameTarget::Target(0),
        (TaskKind::Fertility, UNSURE) => FrameTarget::Excluded,
        (TaskKind::Toxicity, ALIVE) => FrameTarget::Target(0),
        (TaskKind::Toxicity, SUBLETHAL | LETHAL) => FrameTarget::Target(1),
        (TaskKind::Toxicity, NOT_FERTILIZED) => FrameTarget::Excluded,
        _ => {
            return Err(Error::UnknownLabel {
                label: label.to_string(),
                task: spec.kind.to_string(),
            })
        }
    };
    Ok(target)
}
