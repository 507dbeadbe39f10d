//! Manifest CSV: one row per frame.
//!
//! ```text
//! run_id,well_id,frame_index,frame_label,sequence_label,flipping_point,image_ref
//! run00,0,0,unsure,alive,17,run00/w00/t000.png
//! ```
//!
//! `sequence_label` and `flipping_point` repeat on every row of a sequence and
//! are blank when absent. `image_ref` is relative to the manifest's directory
//! unless absolute.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use super::{FrameRecord, SequenceRecord};
use crate::error::{Error, IoContext, Result};
use crate::task::{TaskSpec, WELLS_PER_PLATE};

pub const MANIFEST_HEADER: [&str; 7] = [
    "run_id",
    "well_id",
    "frame_index",
    "frame_label",
    "sequence_label",
    "flipping_point",
    "image_ref",
];

pub fn parse_manifest(path: &Path, spec: &TaskSpec) -> Result<Vec<SequenceRecord>> {
    let file = File::open(path).at(path)?;
    read_manifest(BufReader::new(file), spec)
}

/// Parses manifest CSV from any reader. Row numbers in errors are 1-based
/// line numbers with the header on line 1.
pub fn read_manifest<R: Read>(reader: R, spec: &TaskSpec) -> Result<Vec<SequenceRecord>> {
    let n = spec.frames_per_sequence;
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = csv.headers()?.clone();
    if header.iter().ne(MANIFEST_HEADER.iter().copied()) {
        return Err(Error::ManifestRow {
            row: 1,
            message: format!("header must be `{}`", MANIFEST_HEADER.join(",")),
        });
    }

    let mut sequences: Vec<SequenceRecord> = Vec::new();
    let mut index: HashMap<(String, u32), usize> = HashMap::new();

    for record in csv.records() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |message: String| Error::ManifestRow { row, message };
        if record.len() != MANIFEST_HEADER.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                MANIFEST_HEADER.len(),
                record.len()
            )));
        }

        let run_id = record[0].to_string();
        if run_id.is_empty() {
            return Err(bad("empty run_id".into()));
        }
        let well_id: u32 = record[1]
            .parse()
            .map_err(|_| bad(format!("malformed well_id `{}`", &record[1])))?;
        if well_id as usize >= WELLS_PER_PLATE {
            return Err(bad(format!("well_id {well_id} outside [0, {WELLS_PER_PLATE})")));
        }
        let frame_index: usize = record[2]
            .parse()
            .map_err(|_| bad(format!("malformed frame_index `{}`", &record[2])))?;
        if frame_index >= n {
            return Err(bad(format!("frame_index {frame_index} outside [0, {n})")));
        }
        let frame_label = record[3].to_string();
        if !spec.is_frame_label(&frame_label) {
            return Err(bad(format!(
                "unknown frame label `{frame_label}` for task {}",
                spec.kind
            )));
        }
        let sequence_label = match &record[4] {
            "" => None,
            s if spec.is_sequence_label(s) => Some(s.to_string()),
            s => {
                return Err(bad(format!(
                    "unknown sequence label `{s}` for task {}",
                    spec.kind
                )))
            }
        };
        let flipping_point = match &record[5] {
            "" => None,
            s => {
                let fp: usize = s
                    .parse()
                    .map_err(|_| bad(format!("malformed flipping_point `{s}`")))?;
                if fp >= n {
                    return Err(bad(format!("flipping point {fp} outside [0, {n})")));
                }
                Some(fp)
            }
        };
        let image_ref = PathBuf::from(&record[6]);
        if record[6].is_empty() {
            return Err(bad("empty image_ref".into()));
        }

        let key = (run_id.clone(), well_id);
        let slot = *index.entry(key).or_insert_with(|| {
            sequences.push(SequenceRecord {
                run_id: run_id.clone(),
                well_id,
                frames: Vec::with_capacity(n),
                sequence_label: sequence_label.clone(),
                flipping_point,
            });
            sequences.len() - 1
        });
        let seq = &mut sequences[slot];
        if seq.sequence_label != sequence_label || seq.flipping_point != flipping_point {
            return Err(bad(format!(
                "sequence {} has inconsistent sequence_label/flipping_point across rows",
                seq.id()
            )));
        }
        seq.frames.push(FrameRecord {
            capture_offset_minutes: frame_index as u32 * spec.interval_minutes,
            run_id,
            well_id,
            frame_index,
            frame_label,
            image_ref,
        });
    }

    for seq in &mut sequences {
        seq.frames.sort_by_key(|f| f.frame_index);
        let seq_err = |message: String| Error::Sequence {
            run_id: seq.run_id.clone(),
            well_id: seq.well_id,
            message,
        };
        if let Some(dup) = seq
            .frames
            .windows(2)
            .find(|w| w[0].frame_index == w[1].frame_index)
        {
            return Err(seq_err(format!("duplicated frame_index {}", dup[0].frame_index)));
        }
        if seq.frames.len() != n {
            let missing = (0..n)
                .find(|&t| seq.frames.get(t).map(|f| f.frame_index) != Some(t))
                .unwrap_or(n);
            return Err(seq_err(format!(
                "missing frame_index {missing} ({} of {n} frames present)",
                seq.frames.len()
            )));
        }
        if let Some(problem) = seq.violations(spec).into_iter().next() {
            return Err(seq_err(problem));
        }
    }
    Ok(sequences)
}

pub fn write_manifest(path: &Path, sequences: &[SequenceRecord]) -> Result<()> {
    let file = File::create(path).at(path)?;
    let mut out = csv::Writer::from_writer(std::io::BufWriter::new(file));
    out.write_record(MANIFEST_HEADER)?;
    for seq in sequences {
        let label = seq.sequence_label.as_deref().unwrap_or("");
        let fp = seq.flipping_point.map(|v| v.to_string()).unwrap_or_default();
        for frame in &seq.frames {
            out.write_record([
                frame.run_id.as_str(),
                &frame.well_id.to_string(),
                &frame.frame_index.to_string(),
                &frame.frame_label,
                label,
                &fp,
                &frame.image_ref.to_string_lossy(),
            ])?;
        }
    }
    out.into_inner()
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e.into_error(),
        })?
        .flush()
        .at(path)
}
