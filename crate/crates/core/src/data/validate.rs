use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use super::SequenceRecord;
use crate::task::{TaskKind, TaskSpec};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub task: Option<TaskKind>,
    pub n_sequences: usize,
    pub total_frames: usize,
    /// Sequence counts per sequence label.
    pub class_counts: BTreeMap<String, usize>,
    /// Sequences without a definitive sequence label.
    pub excluded: usize,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, label: &str) -> usize {
        self.class_counts.get(label).copied().unwrap_or(0)
    }
}

pub fn validate_dataset(sequences: &[SequenceRecord], spec: &TaskSpec) -> ValidationReport {
    let mut report = ValidationReport {
        task: Some(spec.kind),
        n_sequences: sequences.len(),
        ..Default::default()
    };
    for label in spec.sequence_label_vocab {
        report.class_counts.insert(label.to_string(), 0);
    }
    let mut seen = HashSet::new();
    for seq in sequences {
        report.total_frames += seq.frames.len();
        match &seq.sequence_label {
            Some(label) => *report.class_counts.entry(label.clone()).or_default() += 1,
            None => report.excluded += 1,
        }
        if !seen.insert((seq.run_id.as_str(), seq.well_id)) {
            report.violations.push(format!("{}: duplicated sequence", seq.id()));
        }
        for v in seq.violations(spec) {
            report.violations.push(format!("{}: {v}", seq.id()));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset() {
        let report = validate_dataset(&[], &TaskSpec::toxicity());
        assert_eq!(report.n_sequences, 0);
        assert_eq!(report.total_frames, 0);
        assert_eq!(report.count("alive"), 0);
        assert_eq!(report.count("anomalous"), 0);
        assert!(report.is_valid());
    }
}
