use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Encoder and head hyperparameters. The default is the 12-layer,
/// 12-head, 768-wide base configuration with a 21128-entry vocabulary;
/// desk-scale runs use [`ModelConfig::tiny`] or [`ModelConfig::small`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub type_vocab: usize,
    pub dropout_rate: f64,
    pub attention_dropout_rate: f64,
    /// Dropout inside the pre-training head transform.
    pub head_dropout_rate: f64,
    pub layer_norm_eps: f64,
    pub initializer_range: f64,
    /// Multiplier on the position-head dot products. `None` means
    /// `1 / hidden`, which keeps untrained logits near zero.
    pub local_logit_scale: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 12,
            heads: 12,
            hidden: 768,
            ffn_dim: 3072,
            vocab_size: 21128,
            max_positions: 512,
            type_vocab: 2,
            dropout_rate: 0.1,
            attention_dropout_rate: 0.1,
            head_dropout_rate: 0.1,
            layer_norm_eps: 1e-12,
            initializer_range: 0.02,
            local_logit_scale: None,
        }
    }
}

impl ModelConfig {
    pub fn tiny(vocab_size: usize, max_positions: usize) -> Self {
        Self {
            layers: 2,
            heads: 4,
            hidden: 64,
            ffn_dim: 128,
            vocab_size,
            max_positions,
            dropout_rate: 0.0,
            attention_dropout_rate: 0.0,
            head_dropout_rate: 0.0,
            ..Default::default()
        }
    }

    pub fn small(vocab_size: usize, max_positions: usize) -> Self {
        Self {
            layers: 4,
            heads: 4,
            hidden: 128,
            ffn_dim: 256,
            vocab_size,
            max_positions,
            dropout_rate: 0.1,
            attention_dropout_rate: 0.1,
            head_dropout_rate: 0.1,
            ..Default::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn logit_scale(&self) -> f64 {
        self.local_logit_scale.unwrap_or(1.0 / self.hidden as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("heads", self.heads),
            ("hidden", self.hidden),
            ("ffn_dim", self.ffn_dim),
            ("vocab_size", self.vocab_size),
            ("max_positions", self.max_positions),
            ("type_vocab", self.type_vocab),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be positive")));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "model.hidden {} is not divisible by model.heads {}",
                self.hidden, self.heads
            )));
        }
        for (name, rate) in [
            ("dropout_rate", self.dropout_rate),
            ("attention_dropout_rate", self.attention_dropout_rate),
            ("head_dropout_rate", self.head_dropout_rate),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("model.{name} {rate} must lie in [0, 1)")));
            }
        }
        if !(self.layer_norm_eps > 0.0) || !(self.initializer_range > 0.0) {
            return Err(Error::Config("layer_norm_eps and initializer_range must be positive".into()));
        }
        Ok(())
    }

    /// Whether two configs describe the same parameter shapes.
    pub fn same_architecture(&self, other: &ModelConfig) -> bool {
        (self.layers, self.heads, self.hidden, self.ffn_dim, self.vocab_size, self.max_positions, self.type_vocab)
            == (other.layers, other.heads, other.hidden, other.ffn_dim, other.vocab_size, other.max_positions, other.type_vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny(64, 32).validate().unwrap();
        ModelConfig::small(64, 64).validate().unwrap();
    }

    #[test]
    fn heads_must_divide_hidden() {
        let cfg = ModelConfig {
            hidden: 30,
            heads: 4,
            ..ModelConfig::tiny(10, 8)
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("divisible"));
    }
}
