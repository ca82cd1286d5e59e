use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell structure inside which selected tokens may be shuffled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// One cell per segment holding every shuffled position.
    #[default]
    None,
    /// One cell per selected word.
    Word,
    /// One cell per selected span.
    Ngram,
    /// One cell per sentence.
    Sentence,
}

/// Output space of the pre-training head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredictionSpace {
    /// Logits over input positions.
    #[default]
    #[serde(rename = "local")]
    Local,
    /// Logits over the vocabulary.
    #[serde(rename = "global")]
    Global,
    /// Sum of both losses.
    #[serde(rename = "local+global")]
    LocalGlobal,
}

impl PredictionSpace {
    pub fn uses_local(self) -> bool {
        matches!(self, PredictionSpace::Local | PredictionSpace::LocalGlobal)
    }

    pub fn uses_global(self) -> bool {
        matches!(self, PredictionSpace::Global | PredictionSpace::LocalGlobal)
    }
}

/// Which positions contribute prediction rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionScope {
    /// Selected positions only.
    #[default]
    Partial,
    /// Every non-pad position.
    Full,
}

/// Meaning of a position target for prediction row `i` when `i` moved
/// under the permutation `sigma` (token originally at `i` now sits at
/// `sigma(i)`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSemantics {
    /// Target is `sigma(i)`: where the token that belongs at `i` now is.
    #[default]
    Sigma,
    /// Target is `sigma^-1(i)`: where the token now at `i` came from.
    SigmaInverse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskingConfig {
    /// Fraction of words selected per segment.
    pub select_ratio: f64,
    /// Weights of word-level n-gram lengths 1, 2, ...
    pub ngram_weights: Vec<f64>,
    /// Probability that a selected token joins the shuffle set.
    pub shuffle_ratio: f64,
    pub granularity: Granularity,
    pub prediction_space: PredictionSpace,
    pub prediction_scope: PredictionScope,
    pub target_semantics: TargetSemantics,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        Self {
            select_ratio: 0.15,
            ngram_weights: vec![0.4, 0.3, 0.2, 0.1],
            shuffle_ratio: 0.9,
            granularity: Granularity::None,
            prediction_space: PredictionSpace::Local,
            prediction_scope: PredictionScope::Partial,
            target_semantics: TargetSemantics::Sigma,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        let ratio_ok = |r: f64| (0.0..=1.0).contains(&r);
        if !ratio_ok(self.select_ratio) || !ratio_ok(self.shuffle_ratio) {
            return Err(Error::Config(format!(
                "select_ratio {} and shuffle_ratio {} must lie in [0, 1]",
                self.select_ratio, self.shuffle_ratio
            )));
        }
        if self.ngram_weights.is_empty() || self.ngram_weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("ngram_weights must be non-empty and non-negative".into()));
        }
        let total: f64 = self.ngram_weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("ngram_weights sum to {total}, expected 1")));
        }
        Ok(())
    }
}

const ROUNDING_SLACK: f64 = 1e-9;

/// `ceil(ratio * n)`, tolerant of products like `0.15 * 100 = 15.000000000000002`.
pub(crate) fn ceil_ratio(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 - ROUNDING_SLACK).ceil().max(0.0) as usize
}

/// `floor(ratio * n)` with the same tolerance.
pub(crate) fn floor_ratio(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + ROUNDING_SLACK).floor().max(0.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        MaskingConfig::default().validate().unwrap();
    }

    #[test]
    fn bad_weights_rejected() {
        let cfg = MaskingConfig {
            ngram_weights: vec![0.5, 0.4],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = MaskingConfig {
            shuffle_ratio: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rounding_is_exact_on_decimal_products() {
        assert_eq!(ceil_ratio(0.15, 100), 15);
        assert_eq!(ceil_ratio(0.15, 101), 16);
        assert_eq!(floor_ratio(0.15, 512), 76);
        assert_eq!(floor_ratio(0.15, 40), 6);
        assert_eq!(floor_ratio(0.15, 20), 3);
    }

    #[test]
    fn serde_names() {
        let s = serde_json::to_string(&PredictionSpace::LocalGlobal).unwrap();
        assert_eq!(s, "\"local+global\"");
        let g: Granularity = serde_json::from_str("\"ngram\"").unwrap();
        assert_eq!(g, Granularity::Ngram);
        let t: TargetSemantics = serde_json::from_str("\"sigma_inverse\"").unwrap();
        assert_eq!(t, TargetSemantics::SigmaInverse);
    }
}
