use rand::RngCore;

use super::state::{BoundParams, EncoderState, LayerVars};
use crate::error::{Error, Result};
use crate::perlm::{PerLMInstance, PredictionSpace};
use crate::tensor::{Graph, Tensor, Var};

/// Forward-pass context: the graph, the bound parameters, and the dropout
/// stream. With `training == false` every dropout is the identity and the
/// rng is never drawn from.
pub struct Forward<'a> {
    pub state: &'a EncoderState,
    pub graph: &'a mut Graph,
    pub params: &'a BoundParams,
    pub rng: &'a mut dyn RngCore,
    pub training: bool,
}

/// Loss terms of a PerLM batch.
#[derive(Clone, Debug)]
pub struct PerlmOutput {
    pub loss: Var,
    pub local_loss: Option<Var>,
    pub global_loss: Option<Var>,
    /// Rows of all instances stacked, `sum(k) x N`.
    pub local_logits: Option<Var>,
    /// `sum(k) x V`.
    pub global_logits: Option<Var>,
    pub position_targets: Vec<usize>,
    pub vocab_targets: Vec<usize>,
}

impl Forward<'_> {
    fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        self.graph.dropout(x, rate, &mut *self.rng, self.training)
    }

    fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.graph.matmul(x, w)?;
        self.graph.add_row(y, b)
    }

    /// Sum of token, position and segment embeddings, then layer norm and
    /// dropout. Returns `N x d`.
    pub fn embed(&mut self, input_ids: &[u32], segment_ids: &[u8]) -> Result<Var> {
        let state = self.state;
        let cfg = &state.config;
        if input_ids.len() != segment_ids.len() {
            return Err(Error::shape("embed", &[input_ids.len()], &[segment_ids.len()]));
        }
        if input_ids.len() > cfg.max_positions {
            return Err(Error::Index {
                what: "position",
                row: 0,
                index: input_ids.len() - 1,
                limit: cfg.max_positions,
            });
        }
        let tokens: Vec<usize> = input_ids.iter().map(|&i| i as usize).collect();
        let segments: Vec<usize> = segment_ids.iter().map(|&s| s as usize).collect();
        let positions: Vec<usize> = (0..input_ids.len()).collect();
        let p = self.params;
        let tok = self.graph.gather_rows(p.token_emb, &tokens).map_err(|e| rename(e, "token id"))?;
        let pos = self.graph.gather_rows(p.position_emb, &positions)?;
        let seg = self.graph.gather_rows(p.segment_emb, &segments).map_err(|e| rename(e, "segment id"))?;
        let sum = self.graph.add(tok, pos)?;
        let sum = self.graph.add(sum, seg)?;
        let h = self.graph.layer_norm(sum, p.emb_ln_g, p.emb_ln_b, cfg.layer_norm_eps)?;
        self.dropout(h, cfg.dropout_rate)
    }

    /// The transformer stack. Padding columns are excluded from attention.
    pub fn encode(&mut self, h0: Var, pad_mask: &[bool]) -> Result<Var> {
        let n = self.graph.value(h0).rows();
        if pad_mask.len() != n {
            return Err(Error::shape("encode", self.graph.value(h0).shape(), &[pad_mask.len()]));
        }
        let mut mask = vec![0.0; n * n];
        for row in mask.chunks_mut(n) {
            for (m, &pad) in row.iter_mut().zip(pad_mask) {
                if pad {
                    *m = f64::NEG_INFINITY;
                }
            }
        }
        let mask = Tensor::new(vec![n, n], mask)?;
        let layers = self.params.layers.clone();
        layers.iter().try_fold(h0, |h, layer| self.layer(h, layer, &mask))
    }

    fn layer(&mut self, x: Var, lv: &LayerVars, mask: &Tensor) -> Result<Var> {
        let state = self.state;
        let cfg = &state.config;
        let (heads, dh, eps) = (cfg.heads, cfg.head_dim(), cfg.layer_norm_eps);
        let (drop, attn_drop) = (cfg.dropout_rate, cfg.attention_dropout_rate);
        let q = self.dense(x, lv.query_w, lv.query_b)?;
        let k = self.dense(x, lv.key_w, lv.key_b)?;
        let v = self.dense(x, lv.value_w, lv.value_b)?;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = self.graph.slice_cols(q, h * dh, dh)?;
            let kh = self.graph.slice_cols(k, h * dh, dh)?;
            let vh = self.graph.slice_cols(v, h * dh, dh)?;
            let scores = self.graph.matmul_nt(qh, kh)?;
            let scores = self.graph.scale(scores, scale);
            let scores = self.graph.add_const(scores, mask)?;
            let probs = self.graph.softmax(scores, 1)?;
            let probs = self.dropout(probs, attn_drop)?;
            outs.push(self.graph.matmul(probs, vh)?);
        }
        let attn = if heads == 1 { outs[0] } else { self.graph.concat_cols(&outs)? };
        let attn = self.dense(attn, lv.out_w, lv.out_b)?;
        let attn = self.dropout(attn, drop)?;
        let x = self.graph.add(x, attn)?;
        let x = self.graph.layer_norm(x, lv.attn_ln_g, lv.attn_ln_b, eps)?;

        let f = self.dense(x, lv.ffn_in_w, lv.ffn_in_b)?;
        let f = self.graph.gelu(f);
        let f = self.dense(f, lv.ffn_out_w, lv.ffn_out_b)?;
        let f = self.dropout(f, drop)?;
        let x = self.graph.add(x, f)?;
        self.graph.layer_norm(x, lv.ffn_ln_g, lv.ffn_ln_b, eps)
    }

    /// `embed` followed by `encode`.
    pub fn encoder(&mut self, input_ids: &[u32], segment_ids: &[u8], pad_mask: &[bool]) -> Result<Var> {
        let h0 = self.embed(input_ids, segment_ids)?;
        self.encode(h0, pad_mask)
    }

    /// Gathers the rows at `positions` and applies dense + GELU, dropout and
    /// layer norm. Returns `k x d`.
    pub fn head_transform(&mut self, h: Var, positions: &[usize]) -> Result<Var> {
        let cfg = &self.state.config;
        let (rate, eps) = (cfg.head_dropout_rate, cfg.layer_norm_eps);
        let p = self.params;
        let hm = self.graph.gather_rows(h, positions)?;
        let t = self.dense(hm, p.head_w, p.head_b)?;
        let t = self.graph.gelu(t);
        let t = self.dropout(t, rate)?;
        self.graph.layer_norm(t, p.head_ln_g, p.head_ln_b, eps)
    }

    /// Position logits `k x N`: scaled dot products of the transformed rows
    /// with every encoder row, plus the position bias; padding columns are
    /// `-inf`.
    pub fn local_logits(&mut self, transformed: Var, h: Var, pad_mask: &[bool]) -> Result<Var> {
        let n = pad_mask.len();
        let k = self.graph.value(transformed).rows();
        let scores = self.graph.matmul_nt(transformed, h)?;
        let scores = self.graph.scale(scores, self.state.config.logit_scale());
        let bias = self.graph.slice_cols(self.params.position_bias, 0, n)?;
        let scores = self.graph.add_row(scores, bias)?;
        let mask: Vec<f64> = (0..k)
            .flat_map(|_| pad_mask.iter().map(|&p| if p { f64::NEG_INFINITY } else { 0.0 }))
            .collect();
        self.graph.add_const(scores, &Tensor::with_shape(vec![k, n], mask))
    }

    /// Vocabulary logits `k x V` through the tied token embeddings.
    pub fn global_logits(&mut self, transformed: Var) -> Result<Var> {
        let scores = self.graph.matmul_nt(transformed, self.params.token_emb)?;
        self.graph.add_row(scores, self.params.output_bias)
    }

    pub fn perlm_local_head(&mut self, h: Var, pred_positions: &[usize], pad_mask: &[bool]) -> Result<Var> {
        let t = self.head_transform(h, pred_positions)?;
        self.local_logits(t, h, pad_mask)
    }

    pub fn perlm_global_head(&mut self, h: Var, pred_positions: &[usize]) -> Result<Var> {
        let t = self.head_transform(h, pred_positions)?;
        self.global_logits(t)
    }

    /// Per-token BIEO logits `N x 4`.
    pub fn tagger_logits(&mut self, h: Var) -> Result<Var> {
        let (w, b) = self
            .params
            .tagger
            .ok_or_else(|| Error::Config("encoder state has no tagging layer".into()))?;
        self.dense(h, w, b)
    }

    /// PerLM loss of a batch: mean cross-entropy over all prediction rows
    /// of the batch for each head in use; `local+global` adds the two.
    pub fn perlm_loss(&mut self, batch: &[&PerLMInstance], space: PredictionSpace) -> Result<PerlmOutput> {
        let mut local_parts = Vec::new();
        let mut global_parts = Vec::new();
        let mut position_targets = Vec::new();
        let mut vocab_targets = Vec::new();
        for inst in batch {
            check_rows(inst)?;
            let h = self.encoder(&inst.input_ids, &inst.segment_ids, &inst.pad_mask)?;
            let t = self.head_transform(h, &inst.pred_positions)?;
            if space.uses_local() {
                local_parts.push(self.local_logits(t, h, &inst.pad_mask)?);
            }
            if space.uses_global() {
                global_parts.push(self.global_logits(t)?);
            }
            position_targets.extend(&inst.position_targets);
            vocab_targets.extend(inst.vocab_targets.iter().map(|&v| v as usize));
        }
        let mut stack = |parts: &[Var], targets: &[usize]| -> Result<Option<(Var, Var)>> {
            if parts.is_empty() {
                return Ok(None);
            }
            let logits = if parts.len() == 1 { parts[0] } else { self.graph.concat_rows(parts)? };
            Ok(Some((logits, self.graph.cross_entropy(logits, targets)?)))
        };
        let local = stack(&local_parts, &position_targets)?;
        let global = stack(&global_parts, &vocab_targets)?;
        let loss = match (local, global) {
            (Some((_, l)), Some((_, g))) => self.graph.add(l, g)?,
            (Some((_, l)), None) => l,
            (None, Some((_, g))) => g,
            (None, None) => return Err(Error::Config("empty batch".into())),
        };
        Ok(PerlmOutput {
            loss,
            local_loss: local.map(|x| x.1),
            global_loss: global.map(|x| x.1),
            local_logits: local.map(|x| x.0),
            global_logits: global.map(|x| x.0),
            position_targets,
            vocab_targets,
        })
    }
}

fn check_rows(inst: &PerLMInstance) -> Result<()> {
    let n = inst.len();
    for (r, (&p, &t)) in inst.pred_positions.iter().zip(&inst.position_targets).enumerate() {
        if p >= n || t >= n || inst.pad_mask[p] || inst.pad_mask[t] {
            return Err(Error::Data(format!(
                "corrupt instance: prediction row {r} (position {p}, target {t}) points at padding"
            )));
        }
    }
    if inst.vocab_targets.len() != inst.pred_positions.len() || inst.position_targets.len() != inst.pred_positions.len() {
        return Err(Error::Data("corrupt instance: prediction rows differ in length".into()));
    }
    Ok(())
}

fn rename(e: Error, what: &'static str) -> Error {
    match e {
        Error::Index { row, index, limit, .. } => Error::Index { what, row, index, limit },
        other => other,
    }
}

/// Index of the largest entry of each row; the first wins ties.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let cols = t.cols();
    if cols == 0 {
        return Vec::new();
    }
    t.data()
        .chunks(cols)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}
