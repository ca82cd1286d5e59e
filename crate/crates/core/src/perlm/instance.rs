use serde::{Deserialize, Serialize};

use super::config::TargetSemantics;

/// Role of a prediction row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowKind {
    /// Selected and part of a shuffled cell (the token may still be a fixed
    /// point of the permutation).
    #[serde(rename = "S")]
    Shuffled,
    /// Selected but kept in place.
    #[serde(rename = "N")]
    Negative,
    /// Never selected; only present under full prediction scope.
    #[serde(rename = "C")]
    Context,
}

/// One pre-training example. Prediction rows are parallel vectors sorted
/// by position: `pred_positions`, `position_targets`, `vocab_targets`,
/// `row_kinds`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerLMInstance {
    pub input_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    /// `true` at padding positions.
    pub pad_mask: Vec<bool>,
    pub pred_positions: Vec<usize>,
    pub position_targets: Vec<usize>,
    pub vocab_targets: Vec<u32>,
    pub original_ids: Vec<u32>,
    pub row_kinds: Vec<RowKind>,
}

impl PerLMInstance {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    /// Number of non-pad positions.
    pub fn n_real(&self) -> usize {
        self.pad_mask.iter().filter(|p| !**p).count()
    }

    pub fn num_rows(&self) -> usize {
        self.pred_positions.len()
    }

    /// Rows that were selected for permutation (shuffled or negative).
    pub fn selected_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.row_kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k != RowKind::Context)
            .map(|(i, _)| i)
    }

    /// Rebuilds the unpermuted ids from `input_ids` and the targets alone.
    pub fn reconstruct_original(&self, semantics: TargetSemantics) -> Vec<u32> {
        let mut out = self.input_ids.clone();
        for (&p, &t) in self.pred_positions.iter().zip(&self.position_targets) {
            match semantics {
                TargetSemantics::Sigma => out[p] = self.input_ids[t],
                TargetSemantics::SigmaInverse => out[t] = self.input_ids[p],
            }
        }
        out
    }

    /// Checks every structural invariant; returns the first violation.
    pub fn validate(&self, semantics: TargetSemantics, is_special: impl Fn(u32) -> bool) -> Result<(), String> {
        let n = self.input_ids.len();
        if self.segment_ids.len() != n || self.pad_mask.len() != n || self.original_ids.len() != n {
            return Err("per-position vectors differ in length".into());
        }
        let rows = self.pred_positions.len();
        if self.position_targets.len() != rows || self.vocab_targets.len() != rows || self.row_kinds.len() != rows {
            return Err("per-row vectors differ in length".into());
        }
        if self.pred_positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err("pred_positions not strictly increasing".into());
        }
        let mut a: Vec<u32> = self.non_pad(&self.input_ids);
        let mut b: Vec<u32> = self.non_pad(&self.original_ids);
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            return Err("token multiset changed".into());
        }
        let mut shuffled = vec![false; n];
        for (r, (&p, &t)) in self.pred_positions.iter().zip(&self.position_targets).enumerate() {
            if p >= n || t >= n {
                return Err(format!("row {r} out of range"));
            }
            if self.pad_mask[p] || self.pad_mask[t] {
                return Err(format!("row {r} touches padding"));
            }
            if self.vocab_targets[r] != self.original_ids[p] {
                return Err(format!("row {r} vocab target differs from original id"));
            }
            match self.row_kinds[r] {
                RowKind::Shuffled => {
                    if is_special(self.original_ids[p]) || is_special(self.original_ids[t]) {
                        return Err(format!("row {r} moves a special token"));
                    }
                    shuffled[p] = true;
                }
                RowKind::Negative | RowKind::Context => {
                    if t != p {
                        return Err(format!("unmoved row {r} does not target itself"));
                    }
                }
            }
            if self.row_kinds[r] == RowKind::Negative && is_special(self.original_ids[p]) {
                return Err(format!("row {r} selects a special token"));
            }
        }
        for p in 0..n {
            if !shuffled[p] && self.input_ids[p] != self.original_ids[p] {
                return Err(format!("position {p} changed outside the shuffle set"));
            }
        }
        if self.reconstruct_original(semantics) != self.original_ids {
            return Err("targets do not reconstruct the original".into());
        }
        Ok(())
    }

    fn non_pad(&self, ids: &[u32]) -> Vec<u32> {
        ids.iter()
            .zip(&self.pad_mask)
            .filter(|(_, pad)| !**pad)
            .map(|(id, _)| *id)
            .collect()
    }
}
