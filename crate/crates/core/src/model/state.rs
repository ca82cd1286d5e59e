use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::Result;
use crate::tensor::{Graph, ParamStore, Tensor, Var};

/// Number of WOR tag classes (B, I, E, O).
pub const TAG_CLASSES: usize = 4;

/// All learned arrays of the encoder and its heads.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderState {
    pub config: ModelConfig,
    pub params: ParamStore,
}

/// Graph handles for one layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub query_w: Var,
    pub query_b: Var,
    pub key_w: Var,
    pub key_b: Var,
    pub value_w: Var,
    pub value_b: Var,
    pub out_w: Var,
    pub out_b: Var,
    pub attn_ln_g: Var,
    pub attn_ln_b: Var,
    pub ffn_in_w: Var,
    pub ffn_in_b: Var,
    pub ffn_out_w: Var,
    pub ffn_out_b: Var,
    pub ffn_ln_g: Var,
    pub ffn_ln_b: Var,
}

/// Graph handles for every parameter, in store order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    pub all: Vec<Var>,
    pub token_emb: Var,
    pub position_emb: Var,
    pub segment_emb: Var,
    pub emb_ln_g: Var,
    pub emb_ln_b: Var,
    pub layers: Vec<LayerVars>,
    pub head_w: Var,
    pub head_b: Var,
    pub head_ln_g: Var,
    pub head_ln_b: Var,
    pub position_bias: Var,
    pub output_bias: Var,
    pub tagger: Option<(Var, Var)>,
}

fn truncated_normal<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
    let normal = Normal::new(0.0, std).expect("positive std");
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = normal.sample(rng);
            if v.abs() <= 2.0 * std {
                break v;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

impl EncoderState {
    /// Truncated-normal weights (cut at two standard deviations),
    /// layer-norm gains 1, biases 0.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let std = c.initializer_range;
        let d = c.hidden;
        let mut p = ParamStore::new();
        let weight = |p: &mut ParamStore, name: String, shape: &[usize], rng: &mut R| {
            p.insert(name, truncated_normal(shape, std, rng), true);
        };
        weight(&mut p, "embeddings.token".into(), &[c.vocab_size, d], rng);
        weight(&mut p, "embeddings.position".into(), &[c.max_positions, d], rng);
        weight(&mut p, "embeddings.segment".into(), &[c.type_vocab, d], rng);
        layer_norm(&mut p, "embeddings.ln", d);
        for l in 0..c.layers {
            for (name, rows, cols) in [
                ("attn.query", d, d),
                ("attn.key", d, d),
                ("attn.value", d, d),
                ("attn.out", d, d),
            ] {
                weight(&mut p, format!("layer{l}.{name}.weight"), &[rows, cols], rng);
                p.insert(format!("layer{l}.{name}.bias"), Tensor::zeros(&[cols]), false);
                if name == "attn.out" {
                    layer_norm(&mut p, &format!("layer{l}.attn.ln"), d);
                }
            }
            weight(&mut p, format!("layer{l}.ffn.in.weight"), &[d, c.ffn_dim], rng);
            p.insert(format!("layer{l}.ffn.in.bias"), Tensor::zeros(&[c.ffn_dim]), false);
            weight(&mut p, format!("layer{l}.ffn.out.weight"), &[c.ffn_dim, d], rng);
            p.insert(format!("layer{l}.ffn.out.bias"), Tensor::zeros(&[d]), false);
            layer_norm(&mut p, &format!("layer{l}.ffn.ln"), d);
        }
        weight(&mut p, "head.transform.weight".into(), &[d, d], rng);
        p.insert("head.transform.bias", Tensor::zeros(&[d]), false);
        layer_norm(&mut p, "head.ln", d);
        p.insert("head.position_bias", Tensor::zeros(&[c.max_positions]), false);
        p.insert("head.output_bias", Tensor::zeros(&[c.vocab_size]), false);
        Ok(Self { config, params: p })
    }

    /// Adds a freshly initialized BIEO tagging layer, replacing any existing
    /// one.
    pub fn with_tagger<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        let d = self.config.hidden;
        let w = truncated_normal(&[d, TAG_CLASSES], self.config.initializer_range, rng);
        match self.params.get_mut("tagger.weight") {
            Some(existing) => existing.value = w,
            None => {
                self.params.insert("tagger.weight", w, true);
            }
        }
        match self.params.get_mut("tagger.bias") {
            Some(existing) => existing.value = Tensor::zeros(&[TAG_CLASSES]),
            None => {
                self.params.insert("tagger.bias", Tensor::zeros(&[TAG_CLASSES]), false);
            }
        }
        self
    }

    pub fn has_tagger(&self) -> bool {
        self.params.get("tagger.weight").is_some()
    }

    /// Registers every parameter as a graph leaf.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundParams {
        let all: Vec<Var> = self
            .params
            .params()
            .iter()
            .map(|p| g.leaf(p.value.clone(), trainable))
            .collect();
        let v = |name: &str| all[self.params.id(name).unwrap_or_else(|| panic!("missing parameter {name}"))];
        let layers = (0..self.config.layers)
            .map(|l| {
                let n = |s: &str| v(&format!("layer{l}.{s}"));
                LayerVars {
                    query_w: n("attn.query.weight"),
                    query_b: n("attn.query.bias"),
                    key_w: n("attn.key.weight"),
                    key_b: n("attn.key.bias"),
                    value_w: n("attn.value.weight"),
                    value_b: n("attn.value.bias"),
                    out_w: n("attn.out.weight"),
                    out_b: n("attn.out.bias"),
                    attn_ln_g: n("attn.ln.gain"),
                    attn_ln_b: n("attn.ln.bias"),
                    ffn_in_w: n("ffn.in.weight"),
                    ffn_in_b: n("ffn.in.bias"),
                    ffn_out_w: n("ffn.out.weight"),
                    ffn_out_b: n("ffn.out.bias"),
                    ffn_ln_g: n("ffn.ln.gain"),
                    ffn_ln_b: n("ffn.ln.bias"),
                }
            })
            .collect();
        let tagger = self.has_tagger().then(|| (v("tagger.weight"), v("tagger.bias")));
        BoundParams {
            token_emb: v("embeddings.token"),
            position_emb: v("embeddings.position"),
            segment_emb: v("embeddings.segment"),
            emb_ln_g: v("embeddings.ln.gain"),
            emb_ln_b: v("embeddings.ln.bias"),
            layers,
            head_w: v("head.transform.weight"),
            head_b: v("head.transform.bias"),
            head_ln_g: v("head.ln.gain"),
            head_ln_b: v("head.ln.bias"),
            position_bias: v("head.position_bias"),
            output_bias: v("head.output_bias"),
            tagger,
            all,
        }
    }

    /// Gradients of every parameter after a backward pass, in store order.
    /// Parameters the loss did not reach get zeros.
    pub fn collect_grads(&self, g: &Graph, bound: &BoundParams) -> Vec<Vec<f64>> {
        bound
            .all
            .iter()
            .zip(self.params.params())
            .map(|(&v, p)| match g.grad_slice(v) {
                Some(s) => s.to_vec(),
                None => vec![0.0; p.value.numel()],
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params.params().iter().all(|p| p.value.is_finite())
    }
}

fn layer_norm(p: &mut ParamStore, prefix: &str, d: usize) {
    p.insert(format!("{prefix}.gain"), Tensor::full(&[d], 1.0), false);
    p.insert(format!("{prefix}.bias"), Tensor::zeros(&[d]), false);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_follows_conventions() {
        let cfg = ModelConfig::tiny(40, 16);
        let s = EncoderState::init(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let tok = s.params.get("embeddings.token").unwrap();
        assert_eq!(tok.value.shape(), &[40, 64]);
        assert!(tok.value.data().iter().all(|v| v.abs() <= 0.04));
        assert!(tok.decay);
        let ln = s.params.get("layer1.ffn.ln.gain").unwrap();
        assert!(ln.value.data().iter().all(|&v| v == 1.0));
        assert!(!ln.decay);
        assert!(!s.params.get("head.position_bias").unwrap().decay);
        assert_eq!(s.params.get("head.position_bias").unwrap().value.numel(), 16);
        assert!(!s.has_tagger());
        let t = s.with_tagger(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(t.params.get("tagger.weight").unwrap().value.shape(), &[64, TAG_CLASSES]);
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::tiny(20, 8);
        let a = EncoderState::init(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = EncoderState::init(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let c = EncoderState::init(cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
