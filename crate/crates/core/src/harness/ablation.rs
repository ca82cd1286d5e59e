use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::data::{build_dataset, PreparedCorpus};
use super::train::{train, TrainOptions};
use crate::error::{Error, Result};
use crate::perlm::{Granularity, PredictionScope, PredictionSpace};

/// A family of variants compared against each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Granularity,
    Space,
    Scope,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Granularity, Suite::Space, Suite::Scope];

    pub fn title(self) -> &'static str {
        match self {
            Suite::Granularity => "Permutation granularity",
            Suite::Space => "Prediction space",
            Suite::Scope => "Prediction scope",
        }
    }

    /// The variants of this suite, each `base` with one masking field
    /// changed.
    pub fn variants(self, base: &RunConfig) -> Vec<(String, RunConfig)> {
        let with = |f: &dyn Fn(&mut RunConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        match self {
            Suite::Granularity => [Granularity::None, Granularity::Word, Granularity::Ngram, Granularity::Sentence]
                .into_iter()
                .map(|g| (label(&g), with(&|c| c.masking.granularity = g)))
                .collect(),
            Suite::Space => [PredictionSpace::Local, PredictionSpace::Global, PredictionSpace::LocalGlobal]
                .into_iter()
                .map(|s| (label(&s), with(&|c| c.masking.prediction_space = s)))
                .collect(),
            Suite::Scope => [PredictionScope::Partial, PredictionScope::Full]
                .into_iter()
                .map(|s| (label(&s), with(&|c| c.masking.prediction_scope = s)))
                .collect(),
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::Config(format!("unknown suite {s:?}; expected granularity, space or scope")))
    }
}

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub position_accuracy: Option<f64>,
    pub vocab_accuracy: Option<f64>,
}

impl AblationRow {
    pub fn improved(&self) -> bool {
        self.final_loss < self.initial_loss
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub suite: Suite,
    pub steps: u64,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    /// Plain-text comparison table, one row per variant.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} (toy scale, {} steps)", self.suite.title(), self.steps);
        let _ = writeln!(
            s,
            "{:<14} {:>12} {:>12} {:>10} {:>10}",
            "variant", "init loss", "final loss", "pos acc", "vocab acc"
        );
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |a| format!("{:.1}", 100.0 * a));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<14} {:>12.4} {:>12.4} {:>10} {:>10}",
                r.variant,
                r.initial_loss,
                r.final_loss,
                pct(r.position_accuracy),
                pct(r.vocab_accuracy)
            );
        }
        s
    }
}

/// Rejects a variant that is not comparable with `base`: anything other
/// than masking and prediction-head settings must match.
pub fn check_comparable(base: &RunConfig, variant: &RunConfig) -> Result<()> {
    if !base.model.same_architecture(&variant.model) {
        return Err(Error::Config("ablation variant changes model dimensions".into()));
    }
    let strip = |c: &RunConfig| RunConfig {
        masking: Default::default(),
        model: Default::default(),
        ..c.clone()
    };
    if strip(base) != strip(variant) {
        return Err(Error::Config("ablation variant changes settings outside masking".into()));
    }
    Ok(())
}

/// Trains every variant from the same seed for the same number of steps.
/// Each variant regenerates its instances, since masking settings shape
/// the data.
pub fn run_ablation_suite(
    corpus: &PreparedCorpus,
    base: &RunConfig,
    suite: Suite,
    variants: &[(String, RunConfig)],
    mut on_variant: impl FnMut(&str),
) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(variants.len());
    for (name, cfg) in variants {
        check_comparable(base, cfg)?;
        on_variant(name);
        let data = build_dataset(corpus, cfg)?;
        let out = train(cfg, &data, TrainOptions::default())?;
        let first = out.metrics.first().expect("step 0 record");
        let last = out.metrics.last().expect("final record");
        rows.push(AblationRow {
            variant: name.clone(),
            initial_loss: first.loss,
            final_loss: last.loss,
            position_accuracy: last.position_accuracy,
            vocab_accuracy: last.vocab_accuracy,
        });
    }
    Ok(AblationReport {
        suite,
        steps: base.total_steps,
        rows,
    })
}
