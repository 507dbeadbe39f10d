//! Weights blob plus a `key=value` sidecar.
//!
//! Blob layout (little endian): magic `DSVTW001`, `u32` tensor count, then per
//! tensor a `u16` name length, the UTF-8 name, a `u8` rank, `u32` dims and the
//! `f32` values. The sidecar (`<weights>.meta`) records the model config, the
//! task and the training seed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{ModelConfig, Parameters};
use crate::error::{Error, IoContext, Result};
use crate::kv::{read_kv, write_kv, Pairs};
use crate::task::TaskKind;

const MAGIC: &[u8; 8] = b"DSVTW001";

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub task: TaskKind,
    pub seed: u64,
}

fn sidecar(weights: &Path) -> PathBuf {
    let mut name = weights.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

pub fn save_checkpoint(weights: &Path, params: &Parameters<f32>, meta: &CheckpointMeta) -> Result<()> {
    let mut out = BufWriter::new(File::create(weights).at(weights)?);
    let mut write = |bytes: &[u8]| out.write_all(bytes).at(weights);
    write(MAGIC)?;
    let shapes = params.shapes();
    write(&(shapes.len() as u32).to_le_bytes())?;
    for ((name, shape), (_, values)) in shapes.iter().zip(params.tensors()) {
        write(&(name.len() as u16).to_le_bytes())?;
        write(name.as_bytes())?;
        write(&[shape.len() as u8])?;
        for &dim in shape {
            write(&(dim as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(values.len() * 4);
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        write(&buf)?;
    }
    out.flush().at(weights)?;

    let mut pairs: Pairs = meta.config.to_pairs();
    pairs.insert("format".into(), "devscreen-vit-1".into());
    pairs.insert("task".into(), meta.task.to_string());
    pairs.insert("seed".into(), meta.seed.to_string());
    write_kv(&sidecar(weights), &pairs)
}

fn read_meta(weights: &Path) -> Result<CheckpointMeta> {
    let path = sidecar(weights);
    let pairs = read_kv(&path)?;
    let get = |k: &str| {
        pairs
            .get(k)
            .ok_or_else(|| Error::Checkpoint(format!("{}: missing `{k}`", path.display())))
    };
    if get("format")? != "devscreen-vit-1" {
        return Err(Error::Checkpoint(format!("{}: unknown format", path.display())));
    }
    let task: TaskKind = get("task")?.parse()?;
    let seed = get("seed")?
        .parse()
        .map_err(|_| Error::Checkpoint("malformed seed".into()))?;
    let mut config = ModelConfig::for_task(&crate::TaskSpec::for_kind(task));
    let model_keys: Pairs = pairs
        .iter()
        .filter(|(k, _)| k.starts_with("model."))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    config.apply_pairs(&model_keys)?;
    config.validate()?;
    Ok(CheckpointMeta { config, task, seed })
}

/// Loads weights and metadata. When `expected` is given, a checkpoint whose
/// config or task differs is rejected.
pub fn load_checkpoint(
    weights: &Path,
    expected: Option<(&ModelConfig, TaskKind)>,
) -> Result<(Parameters<f32>, CheckpointMeta)> {
    let meta = read_meta(weights)?;
    if let Some((config, task)) = expected {
        if *config != meta.config {
            return Err(Error::Checkpoint(format!(
                "config mismatch: checkpoint has {:?}, expected {config:?}",
                meta.config
            )));
        }
        if task != meta.task {
            return Err(Error::Checkpoint(format!(
                "task mismatch: checkpoint is {}, expected {task}",
                meta.task
            )));
        }
    }

    let mut input = BufReader::new(File::open(weights).at(weights)?);
    let mut read = |n: usize| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        input.read_exact(&mut buf).at(weights)?;
        Ok(buf)
    };
    if read(8)? != MAGIC {
        return Err(Error::Checkpoint(format!("{}: bad magic", weights.display())));
    }
    let u32_of = |b: Vec<u8>| u32::from_le_bytes(b.try_into().expect("4 bytes"));
    let count = u32_of(read(4)?) as usize;

    let mut params = Parameters::<f32>::zeros(&meta.config);
    let expected_shapes = params.shapes();
    if count != expected_shapes.len() {
        return Err(Error::Checkpoint(format!(
            "{count} tensors stored, config implies {}",
            expected_shapes.len()
        )));
    }
    for ((name, shape), (_, dst)) in expected_shapes.iter().zip(params.tensors_mut()) {
        let len = u16::from_le_bytes(read(2)?.try_into().expect("2 bytes")) as usize;
        let stored_name = String::from_utf8(read(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = read(1)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u32_of(read(4)?) as usize);
        }
        if &stored_name != name || &dims != shape {
            return Err(Error::Checkpoint(format!(
                "tensor `{stored_name}` {dims:?} does not match `{name}` {shape:?}"
            )));
        }
        let raw = read(dst.len() * 4)?;
        for (v, chunk) in dst.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
    }
    Ok((params, meta))
}
