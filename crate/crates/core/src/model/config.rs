use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::TaskSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadActivation {
    Sigmoid,
    Softmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input height and width (square frames).
    pub image_size: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub mlp_ratio: usize,
    pub dropout: f64,
    pub n_timesteps: usize,
    pub n_classes: usize,
    pub head_activation: HeadActivation,
}

impl ModelConfig {
    /// ViT-Base geometry on 224x224 RGB frames for the given task.
    pub fn for_task(spec: &TaskSpec) -> Self {
        let n_classes = spec.n_output_classes;
        Self {
            image_size: spec.model_input_size.0,
            channels: spec.model_input_size.2,
            patch_size: 16,
            hidden_dim: 768,
            n_layers: 12,
            n_heads: 12,
            mlp_ratio: 4,
            dropout: 0.2,
            n_timesteps: spec.frames_per_sequence,
            n_classes,
            head_activation: if n_classes == 1 {
                HeadActivation::Sigmoid
            } else {
                HeadActivation::Softmax
            },
        }
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    /// Patches per frame, `M`.
    pub fn n_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Tokens per frame including the class token.
    pub fn n_tokens(&self) -> usize {
        self.n_patches() + 1
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.n_heads
    }

    pub fn mlp_dim(&self) -> usize {
        self.hidden_dim * self.mlp_ratio
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || self.image_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return fail(format!(
                "image size {} not divisible by patch size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.n_heads == 0 || self.hidden_dim == 0 || !self.hidden_dim.is_multiple_of(self.n_heads) {
            return fail(format!(
                "hidden dim {} not divisible by {} heads",
                self.hidden_dim, self.n_heads
            ));
        }
        if self.channels == 0 || self.n_layers == 0 || self.mlp_ratio == 0 || self.n_timesteps == 0 {
            return fail("channels, layers, mlp ratio and timesteps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        match (self.n_classes, self.head_activation) {
            (1, HeadActivation::Sigmoid) | (2, HeadActivation::Softmax) => Ok(()),
            (o, a) => fail(format!("{o} output classes incompatible with {a:?} head")),
        }
    }

    /// Plain `key=value` representation used by checkpoint sidecars.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("model.image_size".into(), self.image_size.to_string());
        m.insert("model.channels".into(), self.channels.to_string());
        m.insert("model.patch_size".into(), self.patch_size.to_string());
        m.insert("model.hidden_dim".into(), self.hidden_dim.to_string());
        m.insert("model.n_layers".into(), self.n_layers.to_string());
        m.insert("model.n_heads".into(), self.n_heads.to_string());
        m.insert("model.mlp_ratio".into(), self.mlp_ratio.to_string());
        m.insert("model.dropout".into(), self.dropout.to_string());
        m.insert("model.n_timesteps".into(), self.n_timesteps.to_string());
        m.insert("model.n_classes".into(), self.n_classes.to_string());
        m.insert(
            "model.head_activation".into(),
            match self.head_activation {
                HeadActivation::Sigmoid => "sigmoid".into(),
                HeadActivation::Softmax => "softmax".into(),
            },
        );
        m
    }

    /// Applies any `model.*` keys in `pairs` on top of `self`.
    pub fn apply_pairs(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
        }
        for (key, value) in pairs {
            let Some(field) = key.strip_prefix("model.") else {
                continue;
            };
            match field {
                "image_size" => self.image_size = num(key, value)?,
                "channels" => self.channels = num(key, value)?,
                "patch_size" => self.patch_size = num(key, value)?,
                "hidden_dim" => self.hidden_dim = num(key, value)?,
                "n_layers" => self.n_layers = num(key, value)?,
                "n_heads" => self.n_heads = num(key, value)?,
                "mlp_ratio" => self.mlp_ratio = num(key, value)?,
                "dropout" => self.dropout = num(key, value)?,
                "n_timesteps" => self.n_timesteps = num(key, value)?,
                "n_classes" => self.n_classes = num(key, value)?,
                "head_activation" => {
                    self.head_activation = match value.as_str() {
                        "sigmoid" => HeadActivation::Sigmoid,
                        "softmax" => HeadActivation::Softmax,
                        other => {
                            return Err(Error::Config(format!("{key}: unknown activation `{other}`")))
                        }
                    }
                }
                _ => return Err(Error::Config(format!("unknown key `{key}`"))),
            }
        }
        Ok(())
    }
}
