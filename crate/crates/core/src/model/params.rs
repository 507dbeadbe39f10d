use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ModelConfig, Real};

const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<T> {
    pub ln1_gamma: Array1<T>,
    pub ln1_beta: Array1<T>,
    /// `d x 3d`, columns are `[Q | K | V]`, heads contiguous within each.
    pub qkv_weight: Array2<T>,
    pub qkv_bias: Array1<T>,
    pub proj_weight: Array2<T>,
    pub proj_bias: Array1<T>,
    pub ln2_gamma: Array1<T>,
    pub ln2_beta: Array1<T>,
    pub fc1_weight: Array2<T>,
    pub fc1_bias: Array1<T>,
    pub fc2_weight: Array2<T>,
    pub fc2_bias: Array1<T>,
}

/// Every learnable tensor of the model. Linear maps are stored `in x out`
/// (applied as `x · W`), except the head which is `o x d` (applied as `W · h`).
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<T> {
    /// `P²C x d`.
    pub patch_weight: Array2<T>,
    pub patch_bias: Array1<T>,
    /// `M x d`, one row per patch position.
    pub spatial: Array2<T>,
    /// `N x d`, one row per time step.
    pub temporal: Array2<T>,
    pub class_token: Array1<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub norm_gamma: Array1<T>,
    pub norm_beta: Array1<T>,
    pub head_weight: Array2<T>,
    pub head_bias: Array1<T>,
}

fn normal<T: Real, R: Rng>(rng: &mut R, truncated: bool) -> T {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if !truncated || z.abs() <= 2.0 {
            return T::of(z * INIT_STD);
        }
    }
}

fn matrix<T: Real, R: Rng>(rows: usize, cols: usize, rng: &mut R, truncated: bool) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || normal(rng, truncated))
}

fn vector<T: Real, R: Rng>(len: usize, rng: &mut R) -> Array1<T> {
    Array1::from_shape_simple_fn(len, || normal(rng, false))
}

impl<T: Real> BlockParams<T> {
    fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.hidden_dim;
        let h = cfg.mlp_dim();
        Self {
            ln1_gamma: Array1::ones(d),
            ln1_beta: Array1::zeros(d),
            qkv_weight: matrix(d, 3 * d, rng, true),
            qkv_bias: Array1::zeros(3 * d),
            proj_weight: matrix(d, d, rng, true),
            proj_bias: Array1::zeros(d),
            ln2_gamma: Array1::ones(d),
            ln2_beta: Array1::zeros(d),
            fc1_weight: matrix(d, h, rng, true),
            fc1_bias: Array1::zeros(h),
            fc2_weight: matrix(h, d, rng, true),
            fc2_bias: Array1::zeros(d),
        }
    }
}

macro_rules! for_each_field {
    ($self:ident, $iter:ident, [$($mut:tt)?], |$t:ident| $get:expr) => {{
        let mut out = Vec::new();
        {
            let $t = &$($mut)? $self.patch_weight;
            out.push(("patch_weight".to_string(), $get));
        }
        {
            let $t = &$($mut)? $self.patch_bias;
            out.push(("patch_bias".to_string(), $get));
        }
        {
            let $t = &$($mut)? $self.spatial;
            out.push(("spatial".to_string(), $get));
        }
        {
            let $t = &$($mut)? $self.temporal;
            out.push(("temporal".to_string(), $get));
        }
        {
            let $t = &$($mut)? $self.class_token;
            out.push(("class_token".to_string(), $get));
        }
        for (i, b) in $self.blocks.$iter().enumerate() {
            {
                let $t = &$($mut)? b.ln1_gamma;
                out.push((format!("blocks.{i}.ln1_gamma"), $get));
            }
            {
                let $t = &$($mut)? b.ln1_beta;
                out.push((format!("blocks.{i}.ln1_beta"), $get));
            }
            {
                let $t = &$($mut)? b.qkv_weight;
                out.push((format!("blocks.{i}.qkv_weight"), $get));
            }
            {
                let $t = &$($mut)? b.qkv_bias;
                out.push((format!("blocks.{i}.qkv_bias"), $get));
            }
            {
                let $t = &$($mut)? b.proj_weight;
                out.push((format!("blocks.{i}.proj_weight"), $get));
            }
            {
                let $t = &$($mut)? b.proj_bias;
                out.push((format!("blocks.{i}.proj_bias"), $get));
            }
            {
                let $t = &$($mut)? b.ln2_gamma;
                out.push((format!("blocks.{i}.ln2_gamma"), $get));
            }
            {
                let $t = &$($mut)? b.ln2_beta;
                out.push((format!("blocks.{i}.ln2_beta"), $get));
            }
            {
                let $t = &$($mut)? b.fc1_weight;
                out.push((format!("blocks.{i}.fc1_weight"), $get));
            }
            {
                let $t = &$($mut)? b.fc1_bias;
                out.push((format!("blocks.{i}.fc1_bias"), $get));
            }
            {
                let $t = &$($mut)? b.fc2_weight;
                out.push((format!("blocks.{i}.fc2_weight"), $get));
            }
            {
                let $t = &$($mut)? b.fc2_bias;
                out.push((format!("blocks.{i}.fc2_bias"), $get));
            }
        }
        {
            let $t = &$($mut)? $self.norm_gamma;
            out.push(("norm_gamma".to_string(), $get));
        }
        {
            let $t = &$($mut)? $self.norm_beta;
            out.push(("norm_beta".to_string(), $get));
        }
        {
            let $t = &$($mut)? $self.head_weight;
            out.push(("head_weight".to_string(), $get));
        }
        {
            let $t = &$($mut)? $self.head_bias;
            out.push(("head_bias".to_string(), $get));
        }
        out
    }};
}

impl<T: Real> Parameters<T> {
    /// Random initialization: truncated normal (std 0.02) for linear maps,
    /// normal (std 0.02) for embeddings and the class token, zero biases,
    /// unit layer-norm gains.
    pub fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.hidden_dim;
        let patch_weight = matrix(cfg.patch_dim(), d, rng, true);
        let spatial = Array2::from_shape_simple_fn((cfg.n_patches(), d), || normal(rng, false));
        let temporal = Array2::from_shape_simple_fn((cfg.n_timesteps, d), || normal(rng, false));
        let class_token = vector(d, rng);
        let blocks = (0..cfg.n_layers).map(|_| BlockParams::init(cfg, rng)).collect();
        let head_weight = matrix(cfg.n_classes, d, rng, true);
        Self {
            patch_weight,
            patch_bias: Array1::zeros(d),
            spatial,
            temporal,
            class_token,
            blocks,
            norm_gamma: Array1::ones(d),
            norm_beta: Array1::zeros(d),
            head_weight,
            head_bias: Array1::zeros(cfg.n_classes),
        }
    }

    /// All-zero tensors with the shapes `cfg` implies (gradient buffers).
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.hidden_dim;
        let h = cfg.mlp_dim();
        let block = BlockParams {
            ln1_gamma: Array1::zeros(d),
            ln1_beta: Array1::zeros(d),
            qkv_weight: Array2::zeros((d, 3 * d)),
            qkv_bias: Array1::zeros(3 * d),
            proj_weight: Array2::zeros((d, d)),
            proj_bias: Array1::zeros(d),
            ln2_gamma: Array1::zeros(d),
            ln2_beta: Array1::zeros(d),
            fc1_weight: Array2::zeros((d, h)),
            fc1_bias: Array1::zeros(h),
            fc2_weight: Array2::zeros((h, d)),
            fc2_bias: Array1::zeros(d),
        };
        Self {
            patch_weight: Array2::zeros((cfg.patch_dim(), d)),
            patch_bias: Array1::zeros(d),
            spatial: Array2::zeros((cfg.n_patches(), d)),
            temporal: Array2::zeros((cfg.n_timesteps, d)),
            class_token: Array1::zeros(d),
            blocks: vec![block; cfg.n_layers],
            norm_gamma: Array1::zeros(d),
            norm_beta: Array1::zeros(d),
            head_weight: Array2::zeros((cfg.n_classes, d)),
            head_bias: Array1::zeros(cfg.n_classes),
        }
    }

    /// Named flat views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[T])> {
        for_each_field!(self, iter, [], |t| t.as_slice().expect("contiguous"))
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [T])> {
        for_each_field!(self, iter_mut, [mut], |t| t.as_slice_mut().expect("contiguous"))
    }

    /// Shapes in the same order as [`Parameters::tensors`].
    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        for_each_field!(self, iter, [], |t| t.shape().to_vec())
    }

    pub fn n_values(&self) -> usize {
        self.tensors().iter().map(|(_, s)| s.len()).sum()
    }

    /// Element type conversion, e.g. to run an `f32` model in `f64`.
    pub fn cast<U: Real>(&self) -> Parameters<U> {
        let c1 = |a: &Array1<T>| a.mapv(|v| U::of(v.to_f64().unwrap_or(0.0)));
        let c2 = |a: &Array2<T>| a.mapv(|v| U::of(v.to_f64().unwrap_or(0.0)));
        Parameters {
            patch_weight: c2(&self.patch_weight),
            patch_bias: c1(&self.patch_bias),
            spatial: c2(&self.spatial),
            temporal: c2(&self.temporal),
            class_token: c1(&self.class_token),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    ln1_gamma: c1(&b.ln1_gamma),
                    ln1_beta: c1(&b.ln1_beta),
                    qkv_weight: c2(&b.qkv_weight),
                    qkv_bias: c1(&b.qkv_bias),
                    proj_weight: c2(&b.proj_weight),
                    proj_bias: c1(&b.proj_bias),
                    ln2_gamma: c1(&b.ln2_gamma),
                    ln2_beta: c1(&b.ln2_beta),
                    fc1_weight: c2(&b.fc1_weight),
                    fc1_bias: c1(&b.fc1_bias),
                    fc2_weight: c2(&b.fc2_weight),
                    fc2_bias: c1(&b.fc2_bias),
                })
                .collect(),
            norm_gamma: c1(&self.norm_gamma),
            norm_beta: c1(&self.norm_beta),
            head_weight: c2(&self.head_weight),
            head_bias: c1(&self.head_bias),
        }
    }
}
