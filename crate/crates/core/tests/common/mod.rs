#![allow(dead_code)]

use pert_core::harness::{build_dataset, prepare_corpus, Dataset, Preset, PreparedCorpus, RunConfig};
use pert_core::model::{EncoderState, Forward, ModelConfig};
use pert_core::perlm::{parse_corpus, PerLMInstance, PredictionSpace, RowKind};
use pert_core::toy::{toy_corpus, toy_vocab, ToySpec};
use pert_core::{seed, Graph, Tensor, Var};
use rand::Rng;

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// `||a - b|| / max(||a||, ||b||)`, or the absolute difference norm when both
/// are below 1e-6 (gradients that vanish identically, such as the attention
/// key bias, leave only rounding noise).
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-6 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of a scalar function of one flat input.
pub fn numeric_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Checks the gradient of `build` with respect to every input. The op
/// output is reduced to a scalar through a fixed random projection so every
/// output element contributes. Returns the worst relative error.
pub fn check_op(inputs: &[Tensor], build: impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    let mut rng = seed::rng(17, &[]);
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = build(&mut g, &vars);
    let proj = random_tensor(g.value(out).shape(), &mut rng);
    let scalar = |g: &mut Graph, out: Var| {
        let w = g.constant(proj.clone());
        let m = g.mul(out, w).unwrap();
        g.sum(m)
    };
    let loss = scalar(&mut g, out);
    g.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = g.grad(vars[k]).map_or_else(|| vec![0.0; input.numel()], |t| t.data().to_vec());
        let numeric = numeric_grad(
            |x| {
                let mut g = Graph::new();
                let vars: Vec<Var> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, t)| {
                        let t = if j == k { Tensor::new(t.shape().to_vec(), x.to_vec()).unwrap() } else { t.clone() };
                        g.leaf(t, true)
                    })
                    .collect();
                let out = build(&mut g, &vars);
                let loss = scalar(&mut g, out);
                g.value(loss).item()
            },
            input.data(),
            1e-5,
        );
        worst = worst.max(rel_error(&analytic, &numeric));
    }
    worst
}

pub fn toy_run(steps: u64) -> RunConfig {
    let mut run = Preset::Tiny.config();
    run.total_steps = steps;
    run.model.vocab_size = toy_vocab(ToySpec::default().max_words).len();
    run
}

pub fn toy_data(spec: &ToySpec, corpus_seed: u64, run: &RunConfig) -> (PreparedCorpus, Dataset) {
    let text = toy_corpus(spec, corpus_seed).unwrap();
    let corpus = prepare_corpus(&parse_corpus(&text), toy_vocab(spec.max_words), run).unwrap();
    let data = build_dataset(&corpus, run).unwrap();
    (corpus, data)
}

fn op_inputs(shapes: &[&[usize]]) -> Vec<Tensor> {
    let mut rng = seed::rng(3, &[]);
    shapes.iter().map(|s| random_tensor(s, &mut rng)).collect()
}

/// Worst finite-difference error of every differentiable op. Dropout is
/// checked separately since it is random.
pub fn op_errors() -> Vec<(&'static str, f64)> {
    let c = Tensor::full(&[3, 4], 0.3);
    vec![
        ("matmul", check_op(&op_inputs(&[&[3, 4], &[4, 5]]), |g, v| g.matmul(v[0], v[1]).unwrap())),
        ("matmul_nt", check_op(&op_inputs(&[&[3, 4], &[6, 4]]), |g, v| g.matmul_nt(v[0], v[1]).unwrap())),
        ("add", check_op(&op_inputs(&[&[3, 4], &[3, 4]]), |g, v| g.add(v[0], v[1]).unwrap())),
        ("mul", check_op(&op_inputs(&[&[3, 4], &[3, 4]]), |g, v| g.mul(v[0], v[1]).unwrap())),
        ("scale", check_op(&op_inputs(&[&[3, 4]]), |g, v| g.scale(v[0], -0.7))),
        ("add_row", check_op(&op_inputs(&[&[3, 4], &[4]]), |g, v| g.add_row(v[0], v[1]).unwrap())),
        ("add_const", check_op(&op_inputs(&[&[3, 4]]), |g, v| g.add_const(v[0], &c).unwrap())),
        ("gelu", check_op(&op_inputs(&[&[3, 4]]), |g, v| g.gelu(v[0]))),
        ("sum", check_op(&op_inputs(&[&[3, 4]]), |g, v| g.sum(v[0]))),
        ("softmax rows", check_op(&op_inputs(&[&[3, 5]]), |g, v| g.softmax(v[0], 1).unwrap())),
        ("softmax cols", check_op(&op_inputs(&[&[3, 5]]), |g, v| g.softmax(v[0], 0).unwrap())),
        (
            "layer_norm",
            check_op(&op_inputs(&[&[3, 6], &[6], &[6]]), |g, v| g.layer_norm(v[0], v[1], v[2], 1e-12).unwrap()),
        ),
        (
            "cross_entropy",
            check_op(&op_inputs(&[&[4, 5]]), |g, v| g.cross_entropy(v[0], &[0, 4, 2, 2]).unwrap()),
        ),
        ("gather_rows", check_op(&op_inputs(&[&[4, 3]]), |g, v| g.gather_rows(v[0], &[2, 0, 2]).unwrap())),
        ("slice_cols", check_op(&op_inputs(&[&[3, 6]]), |g, v| g.slice_cols(v[0], 2, 3).unwrap())),
        (
            "concat_cols",
            check_op(&op_inputs(&[&[3, 2], &[3, 4]]), |g, v| g.concat_cols(&[v[0], v[1]]).unwrap()),
        ),
        (
            "concat_rows",
            check_op(&op_inputs(&[&[2, 3], &[1, 3]]), |g, v| g.concat_rows(&[v[0], v[1]]).unwrap()),
        ),
    ]
}

/// L=2, d=16, N=8 encoder with both heads.
pub fn gradcheck_model() -> EncoderState {
    let cfg = ModelConfig {
        layers: 2,
        heads: 2,
        hidden: 16,
        ffn_dim: 32,
        max_positions: 8,
        // a larger spread keeps gradients well above rounding noise
        initializer_range: 0.2,
        ..ModelConfig::tiny(12, 8)
    };
    EncoderState::init(cfg, &mut seed::rng(11, &[])).unwrap()
}

/// Six real tokens and two pads; positions 2 and 4 swapped, 3 kept.
pub fn gradcheck_instance() -> PerLMInstance {
    let original: Vec<u32> = vec![2, 7, 8, 9, 10, 3, 0, 0];
    let mut input = original.clone();
    input.swap(2, 4);
    PerLMInstance {
        input_ids: input,
        segment_ids: vec![0, 0, 0, 0, 1, 1, 0, 0],
        pad_mask: vec![false, false, false, false, false, false, true, true],
        pred_positions: vec![2, 3, 4],
        position_targets: vec![4, 3, 2],
        vocab_targets: vec![8, 9, 10],
        original_ids: original,
        row_kinds: vec![RowKind::Shuffled, RowKind::Negative, RowKind::Shuffled],
    }
}

fn perlm_loss(state: &EncoderState, inst: &PerLMInstance, grads: bool) -> (f64, Vec<Vec<f64>>) {
    let mut g = Graph::new();
    let params = state.bind(&mut g, grads);
    let mut rng = seed::rng(0, &[]);
    let out = Forward {
        state,
        graph: &mut g,
        params: &params,
        rng: &mut rng,
        training: false,
    }
    .perlm_loss(&[inst], PredictionSpace::LocalGlobal)
    .unwrap();
    let value = g.value(out.loss).item();
    if !grads {
        return (value, Vec::new());
    }
    g.backward(out.loss).unwrap();
    (value, state.collect_grads(&g, &params))
}

/// Finite-difference error of every parameter of the whole model, then
/// of all parameters together under the name `"all"`.
pub fn model_errors(state: &EncoderState, inst: &PerLMInstance) -> Vec<(String, f64)> {
    let (_, grads) = perlm_loss(state, inst, true);
    let mut out = Vec::new();
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for (i, p) in state.params.params().iter().enumerate() {
        let num = numeric_grad(
            |x| {
                let mut s = state.clone();
                s.params.params_mut()[i].value = Tensor::new(p.value.shape().to_vec(), x.to_vec()).unwrap();
                perlm_loss(&s, inst, false).0
            },
            p.value.data(),
            1e-5,
        );
        out.push((p.name.clone(), rel_error(&grads[i], &num)));
        analytic.extend_from_slice(&grads[i]);
        numeric.extend(num);
    }
    out.push(("all".into(), rel_error(&analytic, &numeric)));
    out
}
