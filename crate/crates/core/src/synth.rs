//! Synthetic plate generator.
//!
//! Every well gets a parametric scene: a bright chorion ring enclosing a blob.
//! `alive` blobs grow and gain banded structure over time, unfertilized eggs
//! stay a small, dark, granular disk, and toxicity `anomalous` blobs grow
//! until a per-sequence change point, then arrest and darken (optionally
//! turning lethal later). Class-specific rendering parameters are blended
//! toward a shared neutral value by `1 - separability`.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{write_manifest, FrameRecord, SequenceRecord};
use crate::error::{Error, IoContext, Result};
use crate::task::{
    TaskKind, TaskSpec, ALIVE, ANOMALOUS, LETHAL, NOT_FERTILIZED, SUBLETHAL, UNFERTILIZED, UNSURE,
    WELLS_PER_PLATE,
};

/// Inclusive range of the fertility flipping point.
pub const FLIP_RANGE: (usize, usize) = (10, 40);
/// Inclusive range of the toxicity change point (arrest onset).
pub const CHANGE_RANGE: (usize, usize) = (8, 56);
/// Frames over which post-arrest darkening ramps in.
const DARKEN_RAMP: f64 = 6.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub task: TaskKind,
    pub n_runs: usize,
    /// (width, height) in pixels.
    pub image_size: (u32, u32),
    pub separability: f64,
    pub noise_std: f64,
    pub seed: u64,
    /// When false only the manifest is written; image refs still name the
    /// files a full run would produce.
    pub write_images: bool,
}

impl SynthConfig {
    pub fn new(task: TaskKind) -> Self {
        Self {
            task,
            n_runs: 1,
            image_size: (224, 224),
            separability: 1.0,
            noise_std: 0.02,
            seed: 0,
            write_images: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.separability) {
            return Err(Error::Config(format!(
                "separability {} outside [0, 1]",
                self.separability
            )));
        }
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        if self.image_size.0 < 4 || self.image_size.1 < 4 {
            return Err(Error::Config(format!("image size {:?} too small", self.image_size)));
        }
        if self.noise_std.is_nan() || self.noise_std < 0.0 {
            return Err(Error::Config(format!("noise_std {} must be >= 0", self.noise_std)));
        }
        Ok(())
    }
}

/// Ground-truth developmental trajectory of one well.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trajectory {
    Growth,
    StaticDisk,
    ArrestedGrowth {
        change_point: usize,
        lethal_point: Option<usize>,
    },
}

/// Effective (separability-blended) rendering parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    /// Scene centre as a fraction of (width, height).
    pub center: (f64, f64),
    pub chorion_radius: f64,
    pub background: f64,
    pub chorion_brightness: f64,
    pub blob_radius_start: f64,
    pub blob_radius_end: f64,
    /// 0 = static blob, 1 = full growth to `blob_radius_end`.
    pub growth: f64,
    pub blob_brightness: f64,
    pub texture: f64,
    pub structure: f64,
    pub band_phase: f64,
    /// Frame from which growth arrests and the blob darkens.
    pub arrest_frame: usize,
    pub arrest: f64,
    pub lethal_frame: Option<usize>,
    pub texture_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceParams {
    pub task: TaskKind,
    pub trajectory: Trajectory,
    pub flipping_point: Option<usize>,
    pub n_frames: usize,
    pub noise_std: f64,
    /// Stream for per-frame pixel noise.
    pub noise_seed: u64,
    pub render: RenderParams,
}

/// Sequence label implied by the generation parameters alone.
pub fn generator_oracle_label(params: &SequenceParams) -> Option<&'static str> {
    match (params.task, params.trajectory) {
        (_, Trajectory::Growth) => Some(ALIVE),
        (_, Trajectory::ArrestedGrowth { .. }) => Some(ANOMALOUS),
        (TaskKind::Fertility, Trajectory::StaticDisk) => Some(UNFERTILIZED),
        (TaskKind::Toxicity, Trajectory::StaticDisk) => None,
    }
}

/// Class mix of generated plates, mirroring the reported dataset proportions.
fn class_weights(task: TaskKind) -> &'static [(Trajectory, usize)] {
    const PLACEHOLDER: Trajectory = Trajectory::ArrestedGrowth {
        change_point: 0,
        lethal_point: None,
    };
    match task {
        TaskKind::Fertility => &[(Trajectory::Growth, 5), (Trajectory::StaticDisk, 4)],
        TaskKind::Toxicity => &[
            (Trajectory::Growth, 143),
            (PLACEHOLDER, 112),
            (Trajectory::StaticDisk, 33),
        ],
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn lerp(neutral: f64, class_value: f64, s: f64) -> f64 {
    neutral + s * (class_value - neutral)
}

/// Samples generation parameters for one well. All random draws happen in
/// the same order for every class, so at `separability = 0` the effective
/// rendering parameters depend only on `seed`.
pub fn sample_sequence(
    spec: &TaskSpec,
    trajectory_kind: Trajectory,
    separability: f64,
    noise_std: f64,
    seed: u64,
) -> SequenceParams {
    let n = spec.frames_per_sequence;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = (0.5 + rng.random_range(-0.03..0.03), 0.5 + rng.random_range(-0.03..0.03));
    let chorion_radius = rng.random_range(0.80..0.86);
    let background = rng.random_range(0.22..0.28);
    let chorion_brightness = rng.random_range(0.68..0.76);
    let blob_radius_start = rng.random_range(0.28..0.32);
    let blob_radius_end = rng.random_range(0.62..0.68);
    let growth_jitter = rng.random_range(0.9..1.1);
    let brightness_jitter = rng.random_range(-0.03..0.03);
    let band_phase = rng.random_range(0.0..2.0 * PI);
    let change_point = rng.random_range(CHANGE_RANGE.0..=CHANGE_RANGE.1).min(n - 1);
    let lethal_delay = rng.random_range(12..=48usize);
    let goes_lethal = rng.random_bool(0.5);
    let flip = rng.random_range(FLIP_RANGE.0..=FLIP_RANGE.1).min(n - 1);
    let texture_seed = rng.random::<u64>();
    let noise_seed = rng.random::<u64>();

    let trajectory = match trajectory_kind {
        Trajectory::ArrestedGrowth { .. } => Trajectory::ArrestedGrowth {
            change_point,
            lethal_point: goes_lethal
                .then_some(change_point + lethal_delay)
                .filter(|&p| p < n),
        },
        other => other,
    };

    // (growth, brightness, texture, structure, arrest) per class
    let class_values = match trajectory {
        Trajectory::Growth => (1.0, 0.85, 0.0, 1.0, 0.0),
        Trajectory::StaticDisk => (0.0, 0.35, 1.0, 0.0, 0.0),
        Trajectory::ArrestedGrowth { .. } => (1.0, 0.85, 0.0, 1.0, 1.0),
    };
    let s = separability;
    let render = RenderParams {
        center,
        chorion_radius,
        background,
        chorion_brightness,
        blob_radius_start,
        blob_radius_end,
        growth: lerp(0.5, class_values.0, s) * growth_jitter,
        blob_brightness: lerp(0.6, class_values.1, s) + brightness_jitter,
        texture: lerp(0.5, class_values.2, s),
        structure: lerp(0.5, class_values.3, s),
        band_phase,
        arrest_frame: change_point,
        arrest: lerp(0.0, class_values.4, s),
        lethal_frame: match trajectory {
            Trajectory::ArrestedGrowth { lethal_point, .. } if s > 0.0 => lethal_point,
            _ => None,
        },
        texture_seed,
    };
    SequenceParams {
        task: spec.kind,
        trajectory,
        flipping_point: (spec.kind == TaskKind::Fertility).then_some(flip),
        n_frames: n,
        noise_std,
        noise_seed,
        render,
    }
}

/// Frame label of frame `t` implied by the trajectory.
pub fn frame_label(params: &SequenceParams, t: usize) -> &'static str {
    match params.task {
        TaskKind::Fertility => {
            if params.flipping_point.is_some_and(|fp| t < fp) {
                UNSURE
            } else if params.trajectory == Trajectory::StaticDisk {
                UNFERTILIZED
            } else {
                ALIVE
            }
        }
        TaskKind::Toxicity => match params.trajectory {
            Trajectory::Growth => ALIVE,
            Trajectory::StaticDisk => NOT_FERTILIZED,
            Trajectory::ArrestedGrowth {
                change_point,
                lethal_point,
            } => {
                if lethal_point.is_some_and(|lp| t >= lp) {
                    LETHAL
                } else if t >= change_point {
                    SUBLETHAL
                } else {
                    ALIVE
                }
            }
        },
    }
}

fn hash_unit(seed: u64, x: i64, y: i64) -> f64 {
    let h = splitmix64(seed ^ splitmix64((x as u64) << 32 ^ (y as u64 & 0xFFFF_FFFF)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(edge: f64, width: f64, x: f64) -> f64 {
    // 1 inside (x < edge), 0 outside, linear over `width`
    ((edge - x) / width + 0.5).clamp(0.0, 1.0)
}

/// Renders frame `t` at `width x height`.
pub fn render_frame(params: &SequenceParams, t: usize, width: u32, height: u32) -> RgbImage {
    let r = &params.render;
    let n = params.n_frames.max(2);
    let progress_free = t as f64 / (n - 1) as f64;
    let progress_arrested = t.min(r.arrest_frame) as f64 / (n - 1) as f64;
    let progress = (1.0 - r.arrest) * progress_free + r.arrest * progress_arrested;
    let blob_radius =
        r.blob_radius_start + r.growth * (r.blob_radius_end - r.blob_radius_start) * progress;
    let since_arrest = t.saturating_sub(r.arrest_frame) as f64;
    let darken = if t >= r.arrest_frame {
        r.arrest * (since_arrest / DARKEN_RAMP).min(1.0) * 0.55
    } else {
        0.0
    };
    let lethal = r.lethal_frame.is_some_and(|lp| t >= lp);
    let structure = r.structure * progress_free;

    let unit = width.min(height) as f64 / 2.0;
    let cx = r.center.0 * width as f64;
    let cy = r.center.1 * height as f64;
    let aa = 1.0 / unit;
    let ring_half = 0.035;
    let cell = (unit / 24.0).max(1.0);
    let band_freq = 9.0 * PI;

    let noise = (params.noise_std > 0.0)
        .then(|| Normal::new(0.0, params.noise_std).ok())
        .flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(params.noise_seed ^ t as u64));

    let mut img = RgbImage::new(width, height);
    for (px, py, pixel) in img.enumerate_pixels_mut() {
        let dx = (px as f64 + 0.5 - cx) / unit;
        let dy = (py as f64 + 0.5 - cy) / unit;
        let d = (dx * dx + dy * dy).sqrt();

        let mut v = r.background * (1.0 - 0.15 * d.min(1.5));
        let inside_chorion = smoothstep(r.chorion_radius, aa, d);
        v = v * (1.0 - inside_chorion) + (r.background + 0.08) * inside_chorion;
        let ring = smoothstep(ring_half, aa, (d - r.chorion_radius).abs());
        v = v * (1.0 - ring) + r.chorion_brightness * ring;

        let in_blob = smoothstep(blob_radius, aa, d);
        if in_blob > 0.0 {
            let speckle = hash_unit(
                r.texture_seed,
                (px as f64 / cell).floor() as i64,
                (py as f64 / cell).floor() as i64,
            ) - 0.5;
            let band = (band_freq * dy + r.band_phase).sin();
            let mut b = r.blob_brightness * (1.0 - 0.25 * (d / blob_radius.max(1e-6)).powi(2));
            b += 0.12 * structure * band;
            b += 0.5 * r.texture * speckle;
            b *= 1.0 - darken;
            if lethal {
                b = 0.5 * b + 0.25 * speckle + 0.05;
            }
            v = v * (1.0 - in_blob) + b * in_blob;
        }

        let tint = [1.0, 0.95, 0.85];
        let mut rgb = [0u8; 3];
        for (c, out) in rgb.iter_mut().enumerate() {
            let mut value = v * tint[c];
            if let Some(dist) = &noise {
                value += dist.sample(&mut rng);
            }
            *out = (value.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        *pixel = Rgb(rgb);
    }
    img
}

/// One planned well: its manifest record and generation parameters.
#[derive(Clone, Debug)]
pub struct PlannedSequence {
    pub record: SequenceRecord,
    pub params: SequenceParams,
}

pub fn run_id(run: usize) -> String {
    format!("run{run:02}")
}

pub fn image_ref(run: usize, well: usize, t: usize) -> PathBuf {
    PathBuf::from(format!("{}/w{well:02}/t{t:03}.png", run_id(run)))
}

/// Plans every well of every run without rendering pixels.
pub fn plan_dataset(config: &SynthConfig) -> Result<Vec<PlannedSequence>> {
    config.validate()?;
    let spec = TaskSpec::for_kind(config.task);
    let total = config.n_runs * WELLS_PER_PLATE;

    let weights = class_weights(config.task);
    let weight_sum: usize = weights.iter().map(|w| w.1).sum();
    let mut counts: Vec<usize> = weights.iter().map(|w| total * w.1 / weight_sum).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    let frac = |c: usize| (total * weights[c].1 % weight_sum) as f64 / weight_sum as f64;
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
    let mut left = total - counts.iter().sum::<usize>();
    for &c in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[c] += 1;
        left -= 1;
    }

    let mut layout: Vec<Trajectory> = weights
        .iter()
        .zip(&counts)
        .flat_map(|(w, &k)| std::iter::repeat_n(w.0, k))
        .collect();
    let mut layout_rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed));
    rand::seq::SliceRandom::shuffle(layout.as_mut_slice(), &mut layout_rng);

    let mut planned = Vec::with_capacity(total);
    for run in 0..config.n_runs {
        for well in 0..WELLS_PER_PLATE {
            let index = run * WELLS_PER_PLATE + well;
            let seq_seed = splitmix64(config.seed ^ splitmix64(index as u64 + 1));
            let params = sample_sequence(
                &spec,
                layout[index],
                config.separability,
                config.noise_std,
                seq_seed,
            );
            let rid = run_id(run);
            let frames = (0..spec.frames_per_sequence)
                .map(|t| FrameRecord {
                    run_id: rid.clone(),
                    well_id: well as u32,
                    frame_index: t,
                    capture_offset_minutes: t as u32 * spec.interval_minutes,
                    frame_label: frame_label(&params, t).to_string(),
                    image_ref: image_ref(run, well, t),
                })
                .collect();
            let record = SequenceRecord {
                run_id: rid,
                well_id: well as u32,
                frames,
                sequence_label: generator_oracle_label(&params).map(str::to_string),
                flipping_point: params.flipping_point,
            };
            planned.push(PlannedSequence { record, params });
        }
    }
    Ok(planned)
}

/// Writes `manifest.csv` (and, unless disabled, every frame as PNG) under
/// `out_dir`. Returns the manifest path.
pub fn generate_dataset(config: &SynthConfig, out_dir: &Path) -> Result<PathBuf> {
    let planned = plan_dataset(config)?;
    fs::create_dir_all(out_dir).at(out_dir)?;
    if config.write_images {
        let (w, h) = config.image_size;
        for seq in &planned {
            let dir = out_dir.join(&seq.record.frames[0].image_ref);
            let dir = dir.parent().expect("image refs have a parent directory");
            fs::create_dir_all(dir).at(dir)?;
            for frame in &seq.record.frames {
                let path = out_dir.join(&frame.image_ref);
                render_frame(&seq.params, frame.frame_index, w, h).save(&path)?;
            }
        }
    }
    let records: Vec<SequenceRecord> = planned.into_iter().map(|p| p.record).collect();
    let manifest = out_dir.join("manifest.csv");
    write_manifest(&manifest, &records)?;
    Ok(manifest)
}
