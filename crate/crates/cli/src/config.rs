use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use devscreen_core::data::DEFAULT_RATIOS;
use devscreen_core::kv::{read_kv, write_kv, Pairs};
use devscreen_core::model::ModelConfig;
use devscreen_core::train::TrainConfig;
use devscreen_core::{TaskKind, TaskSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub runs: usize,
    pub image_size: u32,
    pub separability: f64,
    pub noise_std: f64,
    pub manifest_only: bool,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            runs: 1,
            image_size: 224,
            separability: 1.0,
            noise_std: 0.02,
            manifest_only: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionParams {
    /// Causal smoothing window for fixed-threshold decisions.
    pub window: usize,
    /// Fixed threshold; `None` means thresholds are fitted on validation.
    pub threshold: Option<f64>,
    pub grid_steps: usize,
    pub n_bins: usize,
}

impl Default for DecisionParams {
    fn default() -> Self {
        Self {
            window: 13,
            threshold: None,
            grid_steps: 20,
            n_bins: 10,
        }
    }
}

/// Fully resolved settings of one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: TaskKind,
    pub seed: u64,
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub split: [f64; 3],
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decision: DecisionParams,
    pub synth: SynthParams,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| anyhow::anyhow!("invalid value `{value}` for {key}"))
}

impl RunConfig {
    pub fn defaults(task: TaskKind) -> Self {
        let spec = TaskSpec::for_kind(task);
        Self {
            task,
            seed: 0,
            manifest: None,
            out: PathBuf::from("."),
            split: DEFAULT_RATIOS,
            model: ModelConfig::for_task(&spec),
            train: TrainConfig::default(),
            decision: DecisionParams::default(),
            synth: SynthParams::default(),
        }
    }

    /// Defaults for the task named in `pairs` (or `fallback`), then every key.
    pub fn from_pairs(pairs: &Pairs, fallback: Option<TaskKind>) -> Result<Self> {
        let task = match pairs.get("task") {
            Some(t) => t.parse()?,
            None => match fallback {
                Some(t) => t,
                None => bail!("no task given; pass --task or set `task` in the config file"),
            },
        };
        let mut config = Self::defaults(task);
        config.apply(pairs)?;
        Ok(config)
    }

    pub fn apply(&mut self, pairs: &Pairs) -> Result<()> {
        if let Some(task) = pairs.get("task") {
            let task: TaskKind = task.parse()?;
            if task != self.task {
                *self = Self::defaults(task);
            }
        }
        self.model.apply_pairs(pairs)?;
        self.train.apply_pairs(pairs)?;
        for (key, value) in pairs {
            match key.as_str() {
                "task" => {}
                "seed" => self.seed = parse(key, value)?,
                "manifest" => self.manifest = Some(PathBuf::from(value)),
                "out" => self.out = PathBuf::from(value),
                "split.train" => self.split[0] = parse(key, value)?,
                "split.validation" => self.split[1] = parse(key, value)?,
                "split.test" => self.split[2] = parse(key, value)?,
                "decision.window" => self.decision.window = parse(key, value)?,
                "decision.threshold" => {
                    self.decision.threshold = match value.as_str() {
                        "optimized" => None,
                        v => Some(parse(key, v)?),
                    }
                }
                "decision.grid_steps" => self.decision.grid_steps = parse(key, value)?,
                "decision.n_bins" => self.decision.n_bins = parse(key, value)?,
                "synth.runs" => self.synth.runs = parse(key, value)?,
                "synth.image_size" => self.synth.image_size = parse(key, value)?,
                "synth.separability" => self.synth.separability = parse(key, value)?,
                "synth.noise_std" => self.synth.noise_std = parse(key, value)?,
                "synth.manifest_only" => self.synth.manifest_only = parse(key, value)?,
                k if k.starts_with("model.") || k.starts_with("train.") => {}
                _ => bail!("unknown config key `{key}`"),
            }
        }
        self.train.seed = self.seed;
        Ok(())
    }

    pub fn to_pairs(&self) -> Pairs {
        let mut p = Pairs::new();
        p.insert("task".into(), self.task.to_string());
        p.insert("seed".into(), self.seed.to_string());
        if let Some(m) = &self.manifest {
            p.insert("manifest".into(), m.display().to_string());
        }
        p.insert("out".into(), self.out.display().to_string());
        p.insert("split.train".into(), self.split[0].to_string());
        p.insert("split.validation".into(), self.split[1].to_string());
        p.insert("split.test".into(), self.split[2].to_string());
        p.extend(self.model.to_pairs());
        p.extend(self.train.to_pairs());
        p.insert("decision.window".into(), self.decision.window.to_string());
        p.insert(
            "decision.threshold".into(),
            self.decision
                .threshold
                .map_or_else(|| "optimized".to_string(), |t| t.to_string()),
        );
        p.insert("decision.grid_steps".into(), self.decision.grid_steps.to_string());
        p.insert("decision.n_bins".into(), self.decision.n_bins.to_string());
        p.insert("synth.runs".into(), self.synth.runs.to_string());
        p.insert("synth.image_size".into(), self.synth.image_size.to_string());
        p.insert("synth.separability".into(), self.synth.separability.to_string());
        p.insert("synth.noise_std".into(), self.synth.noise_std.to_string());
        p.insert("synth.manifest_only".into(), self.synth.manifest_only.to_string());
        p
    }

    /// Checks every section before any work starts.
    pub fn validate(&self) -> Result<()> {
        let spec = TaskSpec::for_kind(self.task);
        self.model.validate()?;
        self.train.validate()?;
        if self.model.n_classes != spec.n_output_classes
            || self.model.n_timesteps != spec.frames_per_sequence
        {
            bail!(
                "model has {} outputs over {} steps; task {} needs {} over {}",
                self.model.n_classes,
                self.model.n_timesteps,
                self.task,
                spec.n_output_classes,
                spec.frames_per_sequence
            );
        }
        let d = &self.decision;
        if d.window == 0 || d.window.is_multiple_of(2) {
            bail!("decision.window must be a positive odd number");
        }
        if let Some(t) = d.threshold {
            if !(0.0..=1.0).contains(&t) {
                bail!("decision.threshold must lie in [0, 1]");
            }
        }
        if d.grid_steps == 0 || d.n_bins == 0 {
            bail!("decision.grid_steps and decision.n_bins must be at least 1");
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_kv(path, &self.to_pairs())?;
        Ok(())
    }

    pub fn manifest(&self) -> Result<&Path> {
        self.manifest
            .as_deref()
            .context("no manifest given; pass --manifest or set `manifest` in the config file")
    }
}

/// Reads a config file if one is given.
pub fn load_pairs(path: Option<&Path>) -> Result<Pairs> {
    match path {
        Some(p) => Ok(read_kv(p)?),
        None => Ok(Pairs::new()),
    }
}

/// `key=value` overrides from the command line.
pub fn parse_overrides(items: &[String]) -> Result<Pairs> {
    let mut pairs = Pairs::new();
    for item in items {
        let Some((k, v)) = item.split_once('=') else {
            bail!("override `{item}` is not of the form key=value");
        };
        pairs.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(pairs)
}
