use ndarray::ArrayView3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_frames, loss_and_grad, predict_frames, AdamW, FrameBank};
use crate::data::{frame_target, FrameTarget, SequenceRecord};
use crate::decision::verdict;
use crate::error::{Error, Result};
use crate::kv::Pairs;
use crate::model::{backward, forward_batch, ModelConfig, Parameters};
use crate::task::TaskSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    SequenceAccuracy,
    FrameAccuracy,
}

impl std::str::FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequence_accuracy" => Ok(Self::SequenceAccuracy),
            "frame_accuracy" => Ok(Self::FrameAccuracy),
            other => Err(Error::Config(format!("unknown selection metric `{other}`"))),
        }
    }
}

impl std::fmt::Display for SelectionMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SequenceAccuracy => "sequence_accuracy",
            Self::FrameAccuracy => "frame_accuracy",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
    /// Causal window used by the sequence-accuracy selection metric.
    pub smoothing_window: usize,
    /// Optional hard cap on optimizer steps.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 4e-4,
            weight_decay: 5e-5,
            dropout: 0.2,
            batch_size: 64,
            max_epochs: 30,
            eval_every: 1,
            seed: 0,
            selection_metric: SelectionMetric::SequenceAccuracy,
            smoothing_window: 13,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs == 0 || self.eval_every == 0 {
            return bad("max_epochs and eval_every must be at least 1");
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be at least 1");
        }
        if self.smoothing_window == 0 {
            return bad("smoothing_window must be at least 1");
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Pairs {
        let mut p = Pairs::new();
        p.insert("train.learning_rate".into(), self.learning_rate.to_string());
        p.insert("train.weight_decay".into(), self.weight_decay.to_string());
        p.insert("train.dropout".into(), self.dropout.to_string());
        p.insert("train.batch_size".into(), self.batch_size.to_string());
        p.insert("train.max_epochs".into(), self.max_epochs.to_string());
        p.insert("train.eval_every".into(), self.eval_every.to_string());
        p.insert("train.selection_metric".into(), self.selection_metric.to_string());
        p.insert("train.smoothing_window".into(), self.smoothing_window.to_string());
        if let Some(n) = self.max_steps {
            p.insert("train.max_steps".into(), n.to_string());
        }
        p
    }

    /// Overrides fields from `train.*` keys; other keys are ignored.
    pub fn apply_pairs(&mut self, pairs: &Pairs) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value `{v}` for {key}")))
        }
        for (key, v) in pairs {
            let Some(field) = key.strip_prefix("train.") else {
                continue;
            };
            match field {
                "learning_rate" => self.learning_rate = parse(key, v)?,
                "weight_decay" => self.weight_decay = parse(key, v)?,
                "dropout" => self.dropout = parse(key, v)?,
                "batch_size" => self.batch_size = parse(key, v)?,
                "max_epochs" => self.max_epochs = parse(key, v)?,
                "eval_every" => self.eval_every = parse(key, v)?,
                "selection_metric" => self.selection_metric = v.parse()?,
                "smoothing_window" => self.smoothing_window = parse(key, v)?,
                "max_steps" => self.max_steps = Some(parse(key, v)?),
                _ => return Err(Error::Config(format!("unknown key {key}"))),
            }
        }
        Ok(())
    }
}

/// Sequences paired with their preprocessed frames.
#[derive(Clone, Copy)]
pub struct LabeledSet<'a> {
    pub sequences: &'a [SequenceRecord],
    pub frames: &'a FrameBank,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub val_metric: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the best validation metric.
    pub params: Parameters<f32>,
    /// Model configuration with the training dropout rate applied.
    pub model_config: ModelConfig,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub log: Vec<EpochRecord>,
    pub step_losses: Vec<f64>,
}

/// `(sequence, time, class)` for every frame with a definite target.
pub fn supervised_frames(
    sequences: &[SequenceRecord],
    spec: &TaskSpec,
) -> Result<Vec<(usize, usize, u8)>> {
    let mut out = Vec::new();
    for (s, seq) in sequences.iter().enumerate() {
        for (t, frame) in seq.frames.iter().enumerate() {
            if let FrameTarget::Target(c) = frame_target(&frame.frame_label, spec)? {
                out.push((s, t, c));
            }
        }
    }
    Ok(out)
}

/// Share of labeled sequences whose causally smoothed prediction at the last
/// frame matches the sequence label.
pub fn sequence_accuracy(
    params: &Parameters<f32>,
    cfg: &ModelConfig,
    spec: &TaskSpec,
    set: LabeledSet<'_>,
    window: usize,
) -> Result<f64> {
    set.frames.check_matches(set.sequences)?;
    let mut correct = 0usize;
    let mut total = 0usize;
    for (s, seq) in set.sequences.iter().enumerate() {
        let Some(class) = seq.target(spec) else {
            continue;
        };
        let n = seq.frames.len();
        let items: Vec<(usize, usize)> = (n.saturating_sub(window)..n).map(|t| (s, t)).collect();
        let probs = predict_frames(params, cfg, set.frames, &items)?;
        let mean = probs.mean_axis(ndarray::Axis(0)).expect("non-empty window");
        total += 1;
        if verdict(mean.view()) == class {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(Error::Training("no labeled validation sequences".into()));
    }
    Ok(correct as f64 / total as f64)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs the training loop. `on_epoch` sees every log record as it is produced.
pub fn train<F>(
    train_set: LabeledSet<'_>,
    val_set: LabeledSet<'_>,
    spec: &TaskSpec,
    model_config: &ModelConfig,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord) -> Result<()>,
{
    config.validate()?;
    let mut cfg = model_config.clone();
    cfg.dropout = config.dropout;
    cfg.validate()?;
    if cfg.n_classes != spec.n_output_classes {
        return Err(Error::Config(format!(
            "model has {} outputs, task {} needs {}",
            cfg.n_classes, spec.kind, spec.n_output_classes
        )));
    }
    if cfg.n_timesteps < spec.frames_per_sequence {
        return Err(Error::Config(format!(
            "model has {} temporal slots, task {} needs {}",
            cfg.n_timesteps, spec.kind, spec.frames_per_sequence
        )));
    }
    for set in [&train_set, &val_set] {
        set.frames.check_matches(set.sequences)?;
        if set.frames.image_size() != cfg.image_size {
            return Err(Error::Shape(format!(
                "frames preprocessed at {}, model expects {}",
                set.frames.image_size(),
                cfg.image_size
            )));
        }
    }
    let mut examples = supervised_frames(train_set.sequences, spec)?;
    if examples.is_empty() {
        return Err(Error::Training("training set has no supervised frames".into()));
    }
    if supervised_frames(val_set.sequences, spec)?.is_empty() {
        return Err(Error::Training("validation set has no supervised frames".into()));
    }

    let mut params = Parameters::<f32>::init(&cfg, &mut stream_rng(config.seed, 0));
    let mut shuffle_rng = stream_rng(config.seed, 1);
    let mut dropout_rng = stream_rng(config.seed, 2);
    let mut optimizer = AdamW::new(&params, config.learning_rate, config.weight_decay);

    let mut best: Option<(f64, usize, Parameters<f32>)> = None;
    let mut log = Vec::new();
    let mut step_losses = Vec::new();
    let mut steps = 0usize;
    let step_cap = config.max_steps.unwrap_or(usize::MAX);

    for epoch in 1..=config.max_epochs {
        examples.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0usize;
        for batch in examples.chunks(config.batch_size) {
            if steps >= step_cap {
                break;
            }
            let images: Vec<ArrayView3<f32>> = batch
                .iter()
                .map(|&(s, t, _)| train_set.frames.frame(s, t))
                .collect();
            let times: Vec<usize> = batch.iter().map(|&(_, t, _)| t).collect();
            let targets: Vec<u8> = batch.iter().map(|&(_, _, c)| c).collect();
            let pass = forward_batch(&params, &cfg, &images, &times, Some(&mut dropout_rng))?;
            let (loss, dlogits) = loss_and_grad(pass.probs.view(), &targets, cfg.head_activation);
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss {loss} at epoch {epoch}, step {}",
                    steps + 1
                )));
            }
            let grads = backward(&params, &cfg, &pass, dlogits.view());
            optimizer.step(&mut params, &grads);
            steps += 1;
            epoch_steps += 1;
            epoch_loss += loss as f64;
            step_losses.push(loss as f64);
        }
        let capped = steps >= step_cap;
        let last = epoch == config.max_epochs || capped;
        let val_metric = if epoch % config.eval_every == 0 || last {
            Some(match config.selection_metric {
                SelectionMetric::SequenceAccuracy => {
                    sequence_accuracy(&params, &cfg, spec, val_set, config.smoothing_window)?
                }
                SelectionMetric::FrameAccuracy => {
                    evaluate_frames(&params, &cfg, spec, val_set.sequences, val_set.frames)?
                        .accuracy()
                }
            })
        } else {
            None
        };
        if let Some(metric) = val_metric {
            if best.as_ref().is_none_or(|(b, _, _)| metric > *b) {
                best = Some((metric, epoch, params.clone()));
            }
        }
        let record = EpochRecord {
            epoch,
            steps,
            train_loss: if epoch_steps == 0 {
                f64::NAN
            } else {
                epoch_loss / epoch_steps as f64
            },
            val_metric,
        };
        on_epoch(&record)?;
        log.push(record);
        if capped {
            break;
        }
    }

    let (best_metric, best_epoch, params) = best.expect("the last epoch is always evaluated");
    Ok(TrainOutcome {
        params,
        model_config: cfg,
        best_epoch,
        best_metric,
        log,
        step_losses,
    })
}
