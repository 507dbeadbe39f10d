mod common;

use common::{gradient_check, random_batch, random_image, random_params, tiny_config};
use devscreen_core::model::{
    classify, embed_frame, encode, forward, forward_batch, ModelConfig, Parameters, LN_EPS,
};
use ndarray::{Array1, Array3, ArrayView3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Mat = Vec<Vec<f64>>;

fn matmul(a: &Mat, w: &ndarray::Array2<f64>, bias: &Array1<f64>) -> Mat {
    a.iter()
        .map(|row| {
            (0..w.ncols())
                .map(|j| bias[j] + (0..row.len()).map(|k| row[k] * w[[k, j]]).sum::<f64>())
                .collect()
        })
        .collect()
}

fn layer_norm(x: &Mat, gamma: &Array1<f64>, beta: &Array1<f64>) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) / (var + LN_EPS).sqrt() * gamma[j] + beta[j])
                .collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / 2f64.sqrt()))
}

/// Loop-by-loop forward pass of one frame, sharing no code with the library.
fn naive_forward(p: &Parameters<f64>, cfg: &ModelConfig, image: &Array3<f64>, t: usize) -> Vec<f64> {
    let (ps, d) = (cfg.patch_size, cfg.hidden_dim);
    let grid = cfg.image_size / ps;
    let mut x: Mat = vec![(0..d).map(|j| p.class_token[j] + p.temporal[[t, j]]).collect()];
    for gy in 0..grid {
        for gx in 0..grid {
            let mut flat = Vec::new();
            for py in 0..ps {
                for px in 0..ps {
                    for c in 0..cfg.channels {
                        flat.push(image[[gy * ps + py, gx * ps + px, c]]);
                    }
                }
            }
            let i = gy * grid + gx;
            let proj = &matmul(&vec![flat], &p.patch_weight, &p.patch_bias)[0];
            x.push((0..d).map(|j| proj[j] + p.spatial[[i, j]]).collect());
        }
    }
    let s = x.len();
    let dh = d / cfg.n_heads;
    for b in &p.blocks {
        let ln = layer_norm(&x, &b.ln1_gamma, &b.ln1_beta);
        let qkv = matmul(&ln, &b.qkv_weight, &b.qkv_bias);
        let mut attn = vec![vec![0.0; d]; s];
        for h in 0..cfg.n_heads {
            for i in 0..s {
                let scores: Vec<f64> = (0..s)
                    .map(|j| {
                        (0..dh).map(|k| qkv[i][h * dh + k] * qkv[j][d + h * dh + k]).sum::<f64>()
                            / (dh as f64).sqrt()
                    })
                    .collect();
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|v| (v - max).exp()).collect();
                let z: f64 = e.iter().sum();
                for k in 0..dh {
                    attn[i][h * dh + k] =
                        (0..s).map(|j| e[j] / z * qkv[j][2 * d + h * dh + k]).sum::<f64>();
                }
            }
        }
        let proj = matmul(&attn, &b.proj_weight, &b.proj_bias);
        for i in 0..s {
            for j in 0..d {
                x[i][j] += proj[i][j];
            }
        }
        let ln = layer_norm(&x, &b.ln2_gamma, &b.ln2_beta);
        let hidden: Mat = matmul(&ln, &b.fc1_weight, &b.fc1_bias)
            .into_iter()
            .map(|r| r.into_iter().map(gelu).collect())
            .collect();
        let out = matmul(&hidden, &b.fc2_weight, &b.fc2_bias);
        for i in 0..s {
            for j in 0..d {
                x[i][j] += out[i][j];
            }
        }
    }
    let h = layer_norm(&x, &p.norm_gamma, &p.norm_beta);
    let logits: Vec<f64> = (0..cfg.n_classes)
        .map(|c| p.head_bias[c] + (0..d).map(|j| p.head_weight[[c, j]] * h[0][j]).sum::<f64>())
        .collect();
    if cfg.n_classes == 1 {
        vec![1.0 / (1.0 + (-logits[0]).exp())]
    } else {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = e.iter().sum();
        e.iter().map(|v| v / z).collect()
    }
}

#[test]
fn forward_matches_loop_oracle() {
    for (seed, n_classes, layers) in [(1, 1, 1), (2, 2, 1), (3, 1, 2), (4, 2, 3)] {
        let mut cfg = tiny_config(n_classes);
        cfg.n_layers = layers;
        let params = random_params(&cfg, seed, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for t in 0..cfg.n_timesteps {
            let image = random_image(&cfg, &mut rng);
            let got = forward(image.view(), t, &params, &cfg, None).unwrap();
            let want = naive_forward(&params, &cfg, &image, t);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "seed {seed} t {t}: {g} vs {w}");
            }
        }
    }
}

#[test]
fn batched_rows_equal_single_frames() {
    let cfg = tiny_config(2);
    let params = random_params(&cfg, 9, 0.3);
    let (images, times, _) = random_batch(&cfg, 5, 10);
    let views: Vec<ArrayView3<f64>> = images.iter().map(|i| i.view()).collect();
    let pass = forward_batch(&params, &cfg, &views, &times, None).unwrap();
    for b in 0..5 {
        let single = forward(views[b], times[b], &params, &cfg, None).unwrap();
        for (x, y) in single.iter().zip(pass.probs.row(b)) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}

fn assert_gradients(cfg: &ModelConfig, seed: u64, dropout: Option<u64>) {
    let params = random_params(cfg, seed, 0.3);
    let (images, times, targets) = random_batch(cfg, 3, seed + 1);
    let errors = gradient_check(cfg, &params, &images, &times, &targets, dropout, 1e-5);
    assert_eq!(errors.len(), params.tensors().len());
    for (name, err) in errors {
        assert!(err <= 1e-4, "{name}: relative error {err:e}");
    }
}

#[test]
fn gradients_sigmoid_head() {
    assert_gradients(&tiny_config(1), 21, None);
}

#[test]
fn gradients_softmax_head() {
    assert_gradients(&tiny_config(2), 22, None);
}

#[test]
fn gradients_with_dropout_and_two_blocks() {
    let mut cfg = tiny_config(2);
    cfg.n_layers = 2;
    cfg.dropout = 0.3;
    assert_gradients(&cfg, 23, Some(5));
}

#[test]
fn zero_head_gives_chance() {
    for n_classes in [1, 2] {
        let cfg = tiny_config(n_classes);
        let mut params = random_params(&cfg, 4, 0.3);
        params.head_weight.fill(0.0);
        params.head_bias.fill(0.0);
        let image = random_image(&cfg, &mut ChaCha8Rng::seed_from_u64(0));
        let y = forward(image.view(), 2, &params, &cfg, None).unwrap();
        assert!(y.iter().all(|&v| v == 0.5), "{y}");
    }
}

#[test]
fn time_index_moves_only_the_class_token() {
    let cfg = tiny_config(1);
    let params = random_params(&cfg, 5, 0.3);
    let image = random_image(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
    let a = embed_frame(image.view(), 0, &params, &cfg).unwrap();
    let b = embed_frame(image.view(), 4, &params, &cfg).unwrap();
    assert_eq!(a.dim(), (cfg.n_tokens(), cfg.hidden_dim));
    assert_eq!(a.slice(ndarray::s![1.., ..]), b.slice(ndarray::s![1.., ..]));
    let diff = &a.row(0) - &b.row(0);
    let expect = &params.temporal.row(0) - &params.temporal.row(4);
    for (x, y) in diff.iter().zip(&expect) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!(forward(image.view(), cfg.n_timesteps, &params, &cfg, None).is_err());
}

#[test]
fn encode_is_deterministic_without_dropout() {
    let mut cfg = tiny_config(1);
    cfg.dropout = 0.5;
    let params = random_params(&cfg, 6, 0.3);
    let image = random_image(&cfg, &mut ChaCha8Rng::seed_from_u64(2));
    let z = embed_frame(image.view(), 1, &params, &cfg).unwrap();
    let h1 = encode(z.view(), &params, &cfg, None).unwrap();
    let h2 = encode(z.view(), &params, &cfg, None).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(h1.dim(), (cfg.n_tokens(), cfg.hidden_dim));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dropped = encode(z.view(), &params, &cfg, Some(&mut rng)).unwrap();
    assert_ne!(dropped, h1);
    let y = classify(h1.view(), &params, &cfg).unwrap();
    assert_eq!(y, forward(image.view(), 1, &params, &cfg, None).unwrap());
}

#[test]
fn single_and_double_precision_agree() {
    let cfg = tiny_config(2);
    let params = random_params(&cfg, 7, 0.3);
    let params32: Parameters<f32> = params.cast();
    let image = random_image(&cfg, &mut ChaCha8Rng::seed_from_u64(4));
    let y64 = forward(image.view(), 3, &params, &cfg, None).unwrap();
    let y32 = forward(image.mapv(|v| v as f32).view(), 3, &params32, &cfg, None).unwrap();
    for (a, b) in y64.iter().zip(&y32) {
        assert!((a - *b as f64).abs() < 1e-4);
    }
}
