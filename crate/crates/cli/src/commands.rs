use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use devscreen_core::data::{parse_manifest, split_dataset, validate_dataset, SequenceRecord};
use devscreen_core::decision::{
    decision_report, fit_policy, ReliabilityBin, threshold_grid, DecisionPolicy, PredictionTrace, SmoothingMode,
    Thresholds, DEFAULT_WINDOWS,
};
use devscreen_core::kv::Pairs;
use devscreen_core::model::{load_checkpoint, save_checkpoint, CheckpointMeta, Parameters};
use devscreen_core::synth::{generate_dataset, SynthConfig};
use devscreen_core::train::{
    evaluate_frames, frame_probabilities, prediction_traces, train, FrameBank, LabeledSet,
};
use devscreen_core::{plot, TaskSpec};
use ndarray::Array2;
use serde_json::{json, Value};

use crate::config::{load_pairs, parse_overrides, RunConfig};
use crate::{Cli, Command, Common};

const TRAIN_CONFIG: &str = "train.config";
const CHECKPOINT: &str = "model.bin";
const SPLIT: &str = "split.json";
const METRICS: &str = "metrics.jsonl";
const TRACES: &str = "traces.jsonl";
const DECISIONS: &str = "decisions.jsonl";
const DECISION_METRICS: &str = "decision_metrics.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitPart {
    Train,
    Validation,
    Test,
}

impl SplitPart {
    fn key(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Validation => "validation",
            Self::Test => "test",
        }
    }
}

fn set(pairs: &mut Pairs, key: &str, value: Option<impl ToString>) {
    if let Some(v) = value {
        pairs.insert(key.to_string(), v.to_string());
    }
}

fn common_pairs(pairs: &mut Pairs, common: &Common) {
    set(pairs, "task", common.task);
    set(pairs, "manifest", common.manifest.as_ref().map(|p| p.display()));
}

/// Base pairs, then the config file, then flags.
fn resolve(base: Pairs, cli: &Cli, flags: Pairs) -> Result<RunConfig> {
    let mut pairs = base;
    pairs.extend(load_pairs(cli.config.as_deref())?);
    set(&mut pairs, "seed", cli.seed);
    set(&mut pairs, "out", cli.out.as_ref().map(|p| p.display()));
    pairs.extend(flags);
    pairs.extend(parse_overrides(&cli.overrides)?);
    let mut config = RunConfig::from_pairs(&pairs, None)?;
    // dropout is a training setting; the model config mirrors it
    config.model.dropout = config.train.dropout;
    config.validate()?;
    Ok(config)
}

/// Run directory of an already trained model, with its training config.
fn run_base(cli: &Cli, run: Option<&PathBuf>) -> Result<(PathBuf, Pairs)> {
    let Some(dir) = run.or(cli.out.as_ref()) else {
        bail!("no run directory given; pass --run DIR");
    };
    let pairs = load_pairs(Some(&dir.join(TRAIN_CONFIG)))
        .with_context(|| format!("{} is not a training run directory", dir.display()))?;
    Ok((dir.clone(), pairs))
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Generate {
            common,
            runs,
            image_size,
            separability,
            noise,
            manifest_only,
        } => {
            let mut flags = Pairs::new();
            common_pairs(&mut flags, common);
            set(&mut flags, "synth.runs", *runs);
            set(&mut flags, "synth.image_size", *image_size);
            set(&mut flags, "synth.separability", *separability);
            set(&mut flags, "synth.noise_std", *noise);
            if *manifest_only {
                flags.insert("synth.manifest_only".into(), "true".into());
            }
            generate(&resolve(Pairs::new(), &cli, flags)?)
        }
        Command::Validate { common } => {
            let mut flags = Pairs::new();
            common_pairs(&mut flags, common);
            validate(&resolve(Pairs::new(), &cli, flags)?, cli.out.is_some())
        }
        Command::Train {
            common,
            epochs,
            batch_size,
            max_steps,
        } => {
            let mut flags = Pairs::new();
            common_pairs(&mut flags, common);
            set(&mut flags, "train.max_epochs", *epochs);
            set(&mut flags, "train.batch_size", *batch_size);
            set(&mut flags, "train.max_steps", *max_steps);
            run_training(&resolve(Pairs::new(), &cli, flags)?)
        }
        Command::Evaluate { common, run, split } => {
            let (dir, base) = run_base(&cli, run.as_ref())?;
            let mut flags = Pairs::new();
            common_pairs(&mut flags, common);
            flags.insert("out".into(), dir.display().to_string());
            evaluate(&resolve(base, &cli, flags)?, *split)
        }
        Command::Decide {
            common,
            run,
            threshold,
            optimized,
            window,
        } => {
            let (dir, base) = run_base(&cli, run.as_ref())?;
            let mut flags = Pairs::new();
            common_pairs(&mut flags, common);
            flags.insert("out".into(), dir.display().to_string());
            set(&mut flags, "decision.threshold", *threshold);
            if *optimized {
                flags.insert("decision.threshold".into(), "optimized".into());
            }
            set(&mut flags, "decision.window", *window);
            decide(&resolve(base, &cli, flags)?)
        }
        Command::Plot { run } => {
            let (dir, base) = run_base(&cli, run.as_ref())?;
            let mut flags = Pairs::new();
            flags.insert("out".into(), dir.display().to_string());
            render_plots(&resolve(base, &cli, flags)?)
        }
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn generate(config: &RunConfig) -> Result<()> {
    let synth = SynthConfig {
        task: config.task,
        n_runs: config.synth.runs,
        image_size: (config.synth.image_size, config.synth.image_size),
        separability: config.synth.separability,
        noise_std: config.synth.noise_std,
        seed: config.seed,
        write_images: !config.synth.manifest_only,
    };
    let manifest = generate_dataset(&synth, &config.out)?;
    let mut saved = config.clone();
    saved.manifest = Some(manifest.clone());
    saved.save(&config.out.join("generate.config"))?;
    let spec = TaskSpec::for_kind(config.task);
    println!(
        "wrote {} ({} sequences of {} frames)",
        manifest.display(),
        config.synth.runs * devscreen_core::task::WELLS_PER_PLATE,
        spec.frames_per_sequence
    );
    Ok(())
}

fn validate(config: &RunConfig, persist: bool) -> Result<()> {
    let spec = TaskSpec::for_kind(config.task);
    let records = parse_manifest(config.manifest()?, &spec)?;
    let report = validate_dataset(&records, &spec);
    println!("task: {}", spec.kind);
    println!("sequences: {}", report.n_sequences);
    println!("frames: {}", report.total_frames);
    for (label, count) in &report.class_counts {
        println!("  {label}: {count}");
    }
    println!("excluded sequences: {}", report.excluded);
    if persist {
        create_dir(&config.out)?;
        config.save(&config.out.join("validate.config"))?;
        write_json(&config.out.join("validation.json"), &serde_json::to_value(&report)?)?;
    }
    if !report.is_valid() {
        for v in report.violations.iter().take(20) {
            println!("violation: {v}");
        }
        bail!("{} schema violations", report.violations.len());
    }
    println!("valid");
    Ok(())
}

fn labeled_sequences(config: &RunConfig, spec: &TaskSpec) -> Result<Vec<SequenceRecord>> {
    Ok(parse_manifest(config.manifest()?, spec)?
        .into_iter()
        .filter(|s| s.sequence_label.is_some())
        .collect())
}

fn manifest_dir(config: &RunConfig) -> Result<PathBuf> {
    Ok(config
        .manifest()?
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default())
}

fn run_training(config: &RunConfig) -> Result<()> {
    let spec = TaskSpec::for_kind(config.task);
    let records = labeled_sequences(config, &spec)?;
    let split = split_dataset(&records, config.split, config.seed)?;
    let base = manifest_dir(config)?;
    let size = config.model.image_size;
    let train_bank = FrameBank::load(&split.train, &base, size)?;
    let val_bank = FrameBank::load(&split.validation, &base, size)?;

    let dir = &config.out;
    create_dir(dir)?;
    config.save(&dir.join(TRAIN_CONFIG))?;
    let ids = |part: &[SequenceRecord]| part.iter().map(|s| s.id()).collect::<Vec<_>>();
    write_json(
        &dir.join(SPLIT),
        &json!({
            "seed": config.seed,
            "ratios": config.split,
            "train": ids(&split.train),
            "validation": ids(&split.validation),
            "test": ids(&split.test),
        }),
    )?;
    let metrics_path = dir.join(METRICS);
    let mut metrics = BufWriter::new(
        File::create(&metrics_path).with_context(|| format!("creating {}", metrics_path.display()))?,
    );
    let outcome = train(
        LabeledSet {
            sequences: &split.train,
            frames: &train_bank,
        },
        LabeledSet {
            sequences: &split.validation,
            frames: &val_bank,
        },
        &spec,
        &config.model,
        &config.train,
        |record| {
            let line = serde_json::to_string(record).expect("serializable record");
            writeln!(metrics, "{line}")
                .and_then(|_| metrics.flush())
                .map_err(|source| devscreen_core::Error::Io {
                    path: metrics_path.clone(),
                    source,
                })?;
            eprintln!(
                "epoch {} loss {:.5} val {}",
                record.epoch,
                record.train_loss,
                record.val_metric.map_or("-".into(), |v| format!("{v:.4}"))
            );
            Ok(())
        },
    )?;
    let meta = CheckpointMeta {
        config: outcome.model_config.clone(),
        task: config.task,
        seed: config.seed,
    };
    save_checkpoint(&dir.join(CHECKPOINT), &outcome.params, &meta)?;
    println!(
        "best epoch {} with validation {} {:.4}; checkpoint {}",
        outcome.best_epoch,
        config.train.selection_metric,
        outcome.best_metric,
        dir.join(CHECKPOINT).display()
    );
    Ok(())
}

struct TrainedRun {
    spec: TaskSpec,
    params: Parameters<f32>,
    meta: CheckpointMeta,
    split: Value,
    by_id: HashMap<String, SequenceRecord>,
}

impl TrainedRun {
    fn open(config: &RunConfig) -> Result<Self> {
        let spec = TaskSpec::for_kind(config.task);
        let dir = &config.out;
        let (params, meta) = load_checkpoint(&dir.join(CHECKPOINT), Some((&config.model, config.task)))?;
        let split_path = dir.join(SPLIT);
        let split: Value = serde_json::from_str(
            &fs::read_to_string(&split_path).with_context(|| format!("reading {}", split_path.display()))?,
        )?;
        let by_id = labeled_sequences(config, &spec)?
            .into_iter()
            .map(|s| (s.id(), s))
            .collect();
        Ok(Self {
            spec,
            params,
            meta,
            split,
            by_id,
        })
    }

    fn part(&self, part: SplitPart) -> Result<Vec<SequenceRecord>> {
        let ids = self.split[part.key()]
            .as_array()
            .with_context(|| format!("split file has no `{}` list", part.key()))?;
        ids.iter()
            .map(|id| {
                let id = id.as_str().context("sequence ids must be strings")?;
                self.by_id
                    .get(id)
                    .cloned()
                    .with_context(|| format!("sequence {id} from the split is not in the manifest"))
            })
            .collect()
    }

    fn traces(&self, config: &RunConfig, part: SplitPart) -> Result<(Vec<SequenceRecord>, Vec<PredictionTrace>)> {
        let records = self.part(part)?;
        let bank = FrameBank::load(&records, &manifest_dir(config)?, self.meta.config.image_size)?;
        let traces = prediction_traces(&self.params, &self.meta.config, &self.spec, &records, &bank)?;
        Ok((records, traces))
    }
}

fn evaluate(config: &RunConfig, part: SplitPart) -> Result<()> {
    let run = TrainedRun::open(config)?;
    let records = run.part(part)?;
    let bank = FrameBank::load(&records, &manifest_dir(config)?, run.meta.config.image_size)?;
    let acc = evaluate_frames(&run.params, &run.meta.config, &run.spec, &records, &bank)?;
    config.save(&config.out.join("evaluate.config"))?;
    write_json(
        &config.out.join(format!("evaluation_{}.json", part.key())),
        &json!({
            "split": part.key(),
            "correct": acc.correct,
            "total": acc.total,
            "frame_accuracy": acc.accuracy(),
        }),
    )?;
    println!(
        "{} frame accuracy {:.4} ({}/{})",
        part.key(),
        acc.accuracy(),
        acc.correct,
        acc.total
    );
    Ok(())
}

fn decide(config: &RunConfig) -> Result<()> {
    let run = TrainedRun::open(config)?;
    let policy = match config.decision.threshold {
        Some(tau) => DecisionPolicy {
            window: config.decision.window,
            thresholds: Thresholds::Fixed(tau),
        },
        None => {
            let (_, val) = run.traces(config, SplitPart::Validation)?;
            fit_policy(&val, &threshold_grid(config.decision.grid_steps), &DEFAULT_WINDOWS)?
        }
    };
    let (records, traces) = run.traces(config, SplitPart::Test)?;
    let frames = frame_probabilities(&traces, &run.spec, &records)?;
    let report = decision_report(
        &traces,
        policy.window,
        &policy.thresholds,
        &frames,
        config.decision.n_bins,
    )?;

    let dir = &config.out;
    config.save(&dir.join("decide.config"))?;
    let mut lines = String::new();
    for d in &report.decisions {
        let record = json!({
            "id": d.id,
            "decision_time": d.decision_time,
            "verdict": run.spec.class_label(d.verdict),
            "label": d.label.map(|l| run.spec.class_label(l)),
            "decided": d.decided,
            "correct": d.correct,
        });
        lines.push_str(&record.to_string());
        lines.push('\n');
    }
    fs::write(dir.join(DECISIONS), lines)?;
    let mut trace_lines = String::new();
    for t in &traces {
        let raw: Vec<Vec<f64>> = t.raw.rows().into_iter().map(|r| r.to_vec()).collect();
        trace_lines.push_str(&json!({"id": t.id, "label": t.label, "raw": raw}).to_string());
        trace_lines.push('\n');
    }
    fs::write(dir.join(TRACES), trace_lines)?;
    write_json(
        &dir.join(DECISION_METRICS),
        &json!({
            "task": config.task.to_string(),
            "n_sequences": report.decisions.len(),
            "window": report.window,
            "thresholds": report.thresholds,
            "decided_accuracy": report.decided_accuracy,
            "mean_decision_time": report.mean_decision_time,
            "final_accuracy": report.final_accuracy,
            "accuracy_vs_time": report.accuracy_vs_time,
            "ece": report.ece,
            "reliability": report.reliability,
        }),
    )?;
    println!(
        "window {}, decided accuracy {:.4}, mean decision time {:.1}, final accuracy {:.4}, ECE {:.4}",
        report.window,
        report.decided_accuracy,
        report.mean_decision_time,
        report.final_accuracy,
        report.ece
    );
    Ok(())
}

fn read_traces(path: &Path, window: usize) -> Result<Vec<PredictionTrace>> {
    let file = File::open(path).with_context(|| format!("{}: run `decide` first", path.display()))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let v: Value = serde_json::from_str(&line?)?;
        let rows: Vec<Vec<f64>> = serde_json::from_value(v["raw"].clone())?;
        let width = rows.first().map_or(0, Vec::len);
        let raw = Array2::from_shape_vec((rows.len(), width), rows.concat())?;
        let label = v["label"].as_u64().map(|l| l as u8);
        let id = v["id"].as_str().unwrap_or_default().to_string();
        out.push(PredictionTrace::new(id, label, raw, window, SmoothingMode::Causal)?);
    }
    Ok(out)
}

fn render_plots(config: &RunConfig) -> Result<()> {
    let dir = &config.out;
    let metrics_path = dir.join(DECISION_METRICS);
    let metrics: Value = serde_json::from_str(
        &fs::read_to_string(&metrics_path)
            .with_context(|| format!("{}: run `decide` first", metrics_path.display()))?,
    )?;
    let window = metrics["window"].as_u64().context("metrics lack a window")? as usize;
    let traces = read_traces(&dir.join(TRACES), window)?;
    let spec = TaskSpec::for_kind(config.task);
    let plots = dir.join("plots");
    create_dir(&plots)?;
    config.save(&dir.join("plot.config"))?;
    let accuracy: Vec<f64> = serde_json::from_value(metrics["accuracy_vs_time"].clone())?;
    let bins: Vec<ReliabilityBin> = serde_json::from_value(metrics["reliability"].clone())?;
    let ece = metrics["ece"].as_f64().unwrap_or(f64::NAN);
    plot::probability_traces(&traces, 8, false).write(&plots.join("traces_raw.svg"))?;
    plot::probability_traces(&traces, 8, true).write(&plots.join("traces_smoothed.svg"))?;
    plot::accuracy_curve(&accuracy).write(&plots.join("accuracy_vs_time.svg"))?;
    plot::reliability_diagram(&bins, ece).write(&plots.join("reliability.svg"))?;
    plot::confidence_by_class(&traces, &[spec.class_label(0), spec.class_label(1)])
        .write(&plots.join("confidence_by_class.svg"))?;
    println!("wrote figures to {}", plots.display());
    Ok(())
}
