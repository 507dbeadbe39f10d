use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use devscreen_core::data::{parse_manifest, split_dataset, validate_dataset, DEFAULT_RATIOS};
use devscreen_core::synth::{
    generate_dataset, generator_oracle_label, plan_dataset, render_frame, PlannedSequence,
    SynthConfig,
};
use devscreen_core::{TaskKind, TaskSpec};

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let key = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(key, fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn generation_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = SynthConfig::new(TaskKind::Fertility);
    config.image_size = (8, 8);
    config.seed = 21;
    generate_dataset(&config, &dir.path().join("a")).unwrap();
    generate_dataset(&config, &dir.path().join("b")).unwrap();
    let a = read_tree(&dir.path().join("a"));
    let b = read_tree(&dir.path().join("b"));
    assert_eq!(a.len(), 96 * 97 + 1);
    assert!(a == b);

    config.seed = 22;
    generate_dataset(&config, &dir.path().join("c")).unwrap();
    let c = read_tree(&dir.path().join("c"));
    assert!(a["manifest.csv"] != c["manifest.csv"]);
}

#[test]
fn generated_manifests_validate() {
    let dir = tempfile::tempdir().unwrap();
    for (task, runs) in [(TaskKind::Fertility, 2), (TaskKind::Toxicity, 3)] {
        let mut config = SynthConfig::new(task);
        config.n_runs = runs;
        config.write_images = false;
        let manifest = generate_dataset(&config, &dir.path().join(task.to_string())).unwrap();
        let spec = TaskSpec::for_kind(task);
        let records = parse_manifest(&manifest, &spec).unwrap();
        let report = validate_dataset(&records, &spec);
        assert!(report.is_valid(), "{task}: {:?}", report.violations);
        assert_eq!(report.n_sequences, runs * 96);
        assert_eq!(report.total_frames, runs * 96 * spec.frames_per_sequence);
    }
}

#[test]
fn manifest_labels_match_generation_parameters() {
    for task in [TaskKind::Fertility, TaskKind::Toxicity] {
        let config = SynthConfig::new(task);
        for p in plan_dataset(&config).unwrap() {
            assert_eq!(
                p.record.sequence_label.as_deref(),
                generator_oracle_label(&p.params),
                "{}",
                p.record.id()
            );
        }
    }
}

fn final_frame_intensity(p: &PlannedSequence) -> f64 {
    let image = render_frame(&p.params, p.params.n_frames - 1, 32, 32);
    image.as_raw().iter().map(|&v| v as f64).sum::<f64>() / image.as_raw().len() as f64
}

/// Best single threshold (either polarity) on `train`, scored on `test`.
fn threshold_classifier(train: &[(f64, bool)], test: &[(f64, bool)]) -> f64 {
    let mut values: Vec<f64> = train.iter().map(|s| s.0).collect();
    values.sort_by(f64::total_cmp);
    let mut cuts = vec![values[0] - 1.0];
    cuts.extend(values.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let score = |set: &[(f64, bool)], cut: f64, above: bool| {
        set.iter().filter(|&&(v, y)| (v > cut) == (y == above)).count() as f64 / set.len() as f64
    };
    let (cut, above, _) = cuts
        .iter()
        .flat_map(|&c| [(c, true), (c, false)])
        .fold((0.0, true, -1.0), |best, (c, a)| {
            let s = score(train, c, a);
            if s > best.2 {
                (c, a, s)
            } else {
                best
            }
        });
    score(test, cut, above)
}

fn pixel_statistic_accuracy(task: TaskKind, separability: f64, noise_std: f64, seed: u64) -> f64 {
    let mut config = SynthConfig::new(task);
    config.separability = separability;
    config.noise_std = noise_std;
    config.seed = seed;
    let planned: Vec<PlannedSequence> = plan_dataset(&config)
        .unwrap()
        .into_iter()
        .filter(|p| p.record.sequence_label.is_some())
        .collect();
    let records: Vec<_> = planned.iter().map(|p| p.record.clone()).collect();
    let split = split_dataset(&records, DEFAULT_RATIOS, seed).unwrap();
    let by_id: BTreeMap<String, &PlannedSequence> =
        planned.iter().map(|p| (p.record.id(), p)).collect();
    let positive = match task {
        TaskKind::Fertility => "alive",
        TaskKind::Toxicity => "anomalous",
    };
    let samples = |part: &[devscreen_core::data::SequenceRecord]| -> Vec<(f64, bool)> {
        part.iter()
            .map(|r| {
                (
                    final_frame_intensity(by_id[&r.id()]),
                    r.sequence_label.as_deref() == Some(positive),
                )
            })
            .collect()
    };
    let mut train = samples(&split.train);
    train.extend(samples(&split.validation));
    threshold_classifier(&train, &samples(&split.test))
}

#[test]
fn pixel_statistics_separate_classes_at_full_separability() {
    for task in [TaskKind::Fertility, TaskKind::Toxicity] {
        for seed in [0, 1, 2] {
            let acc = pixel_statistic_accuracy(task, 1.0, 0.0, seed);
            assert_eq!(acc, 1.0, "{task} seed {seed}");
        }
    }
}

#[test]
fn difficulty_is_monotone_in_separability() {
    for task in [TaskKind::Fertility, TaskKind::Toxicity] {
        let means: Vec<f64> = [0.25, 0.5, 1.0]
            .iter()
            .map(|&s| {
                [3, 4, 5]
                    .iter()
                    .map(|&seed| pixel_statistic_accuracy(task, s, 0.02, seed))
                    .sum::<f64>()
                    / 3.0
            })
            .collect();
        assert!(
            means.windows(2).all(|w| w[0] <= w[1]),
            "{task}: accuracy by separability {means:?}"
        );
    }
}
