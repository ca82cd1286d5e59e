use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::perlm::MaskingConfig;
use crate::tensor::LrSchedule;
use crate::tokenizer::WordSplitterKind;

/// Where the training text comes from and how it is cut into instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Plain-text corpus; documents separated by blank lines.
    pub corpus: Option<PathBuf>,
    /// One token per line.
    pub vocab: Option<PathBuf>,
    pub word_splitter: WordSplitterKind,
    pub lowercase: bool,
    pub max_len: usize,
    /// Instances generated per chunk, each with fresh selection and
    /// permutation.
    pub dupe_factor: usize,
    /// Fraction of documents held out for evaluation.
    pub eval_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            vocab: None,
            word_splitter: WordSplitterKind::Cjk,
            lowercase: true,
            max_len: 512,
            dupe_factor: 10,
            eval_fraction: 0.05,
        }
    }
}

/// Everything that determines a run. Defaults are the full-scale recipe
/// (batch 416, peak learning rate 1e-4, 10K warmup steps, 2M steps);
/// [`Preset`] gives runs that fit on a desktop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub warmup_steps: u64,
    pub peak_lr: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Global-norm clipping threshold; off when `None`.
    pub grad_clip: Option<f64>,
    pub eval_every: u64,
    /// 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
    /// Adds elapsed seconds to metrics records, which makes them
    /// non-reproducible byte for byte.
    pub log_wall_time: bool,
    pub masking: MaskingConfig,
    pub model: ModelConfig,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            batch_size: 416,
            total_steps: 2_000_000,
            warmup_steps: 10_000,
            peak_lr: 1e-4,
            weight_decay: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-6,
            grad_clip: None,
            eval_every: 100_000,
            checkpoint_every: 100_000,
            log_wall_time: false,
            masking: MaskingConfig::default(),
            model: ModelConfig::default(),
            data: DataConfig::default(),
        }
    }
}

/// Desk-scale starting points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Tiny,
    Small,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "small" => Ok(Preset::Small),
            other => Err(Error::Config(format!("unknown preset {other:?}; expected tiny or small"))),
        }
    }
}

impl Preset {
    pub fn config(self) -> RunConfig {
        let base = RunConfig::default();
        match self {
            Preset::Tiny => RunConfig {
                batch_size: 16,
                total_steps: 2000,
                warmup_steps: 100,
                peak_lr: 1e-3,
                grad_clip: Some(1.0),
                eval_every: 200,
                checkpoint_every: 1000,
                model: ModelConfig::tiny(base.model.vocab_size, 32),
                data: DataConfig {
                    max_len: 32,
                    dupe_factor: 20,
                    eval_fraction: 0.1,
                    ..DataConfig::default()
                },
                ..base
            },
            Preset::Small => RunConfig {
                batch_size: 32,
                total_steps: 20_000,
                warmup_steps: 1000,
                peak_lr: 5e-4,
                grad_clip: Some(1.0),
                eval_every: 1000,
                checkpoint_every: 5000,
                model: ModelConfig::small(base.model.vocab_size, 128),
                data: DataConfig {
                    max_len: 128,
                    dupe_factor: 10,
                    ..DataConfig::default()
                },
                ..base
            },
        }
    }
}

impl RunConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            peak_lr: self.peak_lr,
            warmup_steps: self.warmup_steps,
            total_steps: self.total_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if !(self.peak_lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("peak_lr and weight_decay must be non-negative".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Config(format!("grad_clip {c} must be positive")));
            }
        }
        if self.data.max_len < 3 {
            return Err(Error::Config("data.max_len must leave room for [CLS] and two [SEP]".into()));
        }
        if self.data.max_len > self.model.max_positions {
            return Err(Error::Config(format!(
                "data.max_len {} exceeds model.max_positions {}",
                self.data.max_len, self.model.max_positions
            )));
        }
        if self.data.dupe_factor == 0 {
            return Err(Error::Config("data.dupe_factor must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.data.eval_fraction) {
            return Err(Error::Config("data.eval_fraction must lie in [0, 1)".into()));
        }
        self.masking.validate()?;
        self.model.validate()
    }

    /// [`layer`] followed by validation.
    pub fn layered(&self, toml_text: Option<&str>, overrides: &[String]) -> Result<RunConfig> {
        let cfg = layer(self, toml_text, overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Layers a TOML document and then `key=value` overrides on top of
/// `base`. Keys are dotted paths (`masking.granularity`); unknown keys are
/// errors, never ignored.
pub fn layer<T: Serialize + DeserializeOwned>(base: &T, toml_text: Option<&str>, overrides: &[String]) -> Result<T> {
    let mut tree = serde_json::to_value(base).expect("config serializes");
    if let Some(text) = toml_text {
        let file: toml::Table = toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))?;
        let file = serde_json::to_value(file).expect("toml converts to json");
        merge(&mut tree, file, "")?;
    }
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {item:?} is not KEY=VALUE")))?;
        set_dotted(&mut tree, key.trim(), raw.trim())?;
    }
    serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))
}

fn merge(base: &mut Value, update: Value, path: &str) -> Result<()> {
    match update {
        Value::Object(map) => {
            let Value::Object(target) = base else {
                return Err(Error::Config(format!("{path} is not a table")));
            };
            for (k, v) in map {
                let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                let slot = target.get_mut(&k).ok_or_else(|| Error::Config(format!("unknown key {key}")))?;
                if v.is_object() && slot.is_object() {
                    merge(slot, v, &key)?;
                } else {
                    *slot = v;
                }
            }
            Ok(())
        }
        _ => Err(Error::Config("config file must be a table".into())),
    }
}

fn set_dotted(tree: &mut Value, key: &str, raw: &str) -> Result<()> {
    let mut slot = tree;
    for part in key.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|m| m.get_mut(part))
            .ok_or_else(|| Error::Config(format!("unknown key {key}")))?;
    }
    if slot.is_object() {
        return Err(Error::Config(format!("{key} is a table; set one of its fields")));
    }
    *slot = match slot {
        Value::String(_) => Value::String(raw.to_string()),
        _ => serde_json::from_str(raw)
            .or_else(|_| toml::from_str::<toml::Table>(&format!("v = {raw}")).map(|t| serde_json::to_value(&t["v"]).expect("toml converts")))
            .unwrap_or_else(|_| Value::String(raw.to_string())),
    };
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perlm::Granularity;

    #[test]
    fn defaults_carry_the_full_recipe() {
        let c = RunConfig::default();
        assert_eq!((c.batch_size, c.peak_lr, c.warmup_steps, c.total_steps), (416, 1e-4, 10_000, 2_000_000));
        c.validate().unwrap();
        Preset::Tiny.config().validate().unwrap();
        Preset::Small.config().validate().unwrap();
    }

    #[test]
    fn precedence_is_file_then_flags() {
        let file = "seed = 7\nbatch_size = 3\n[masking]\ngranularity = \"word\"\n";
        let c = RunConfig::default()
            .layered(Some(file), &["batch_size=5".into(), "masking.ngram_weights=[0.5, 0.5]".into()])
            .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.batch_size, 5);
        assert_eq!(c.masking.granularity, Granularity::Word);
        assert_eq!(c.masking.ngram_weights, vec![0.5, 0.5]);
        let c = RunConfig::default()
            .layered(None, &["masking.granularity=sentence".into(), "data.corpus=/tmp/x.txt".into(), "grad_clip=1".into()])
            .unwrap();
        assert_eq!(c.masking.granularity, Granularity::Sentence);
        assert_eq!(c.data.corpus, Some(PathBuf::from("/tmp/x.txt")));
        assert_eq!(c.grad_clip, Some(1.0));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let d = RunConfig::default();
        for o in ["masking.granularty=word", "nope=1", "model=3"] {
            assert!(matches!(d.layered(None, &[o.into()]), Err(Error::Config(_))), "{o}");
        }
        assert!(d.layered(Some("[model]\nlayer = 2\n"), &[]).is_err());
        assert!(d.layered(None, &["masking.granularity=diagonal".into()]).is_err());
        assert!(d.layered(None, &["warmup_steps=3000000".into()]).is_err());
    }
}
