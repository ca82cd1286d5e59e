use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng;

use pert_core::harness::{build_dataset, prepare_corpus, Preset};
use pert_core::model::{EncoderState, Forward};
use pert_core::perlm::{parse_corpus, PredictionSpace};
use pert_core::seed;
use pert_core::toy::{toy_corpus, toy_vocab, ToySpec};
use pert_core::{Graph, Tensor};

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut rng = seed::rng(0, &[]);
    for n in [64, 256] {
        let a = random(&[n, n], &mut rng);
        let b = random(&[n, n], &mut rng);
        c.bench_function(&format!("matmul {n}x{n}"), |bench| {
            bench.iter(|| {
                let mut g = Graph::new();
                let (x, y) = (g.leaf(a.clone(), false), g.leaf(b.clone(), false));
                g.matmul(x, y).unwrap()
            })
        });
    }
}

fn tiny_setup() -> (pert_core::harness::RunConfig, pert_core::harness::Dataset) {
    let spec = ToySpec {
        documents: 40,
        ..Default::default()
    };
    let text = toy_corpus(&spec, 1).unwrap();
    let mut run = Preset::Tiny.config();
    run.model.vocab_size = toy_vocab(spec.max_words).len();
    let corpus = prepare_corpus(&parse_corpus(&text), toy_vocab(spec.max_words), &run).unwrap();
    let data = build_dataset(&corpus, &run).unwrap();
    (run, data)
}

fn forward_backward(c: &mut Criterion) {
    let (run, data) = tiny_setup();
    let state = EncoderState::init(run.model.clone(), &mut seed::rng(0, &[seed::stream::INIT])).unwrap();
    let batch: Vec<_> = data.train.iter().take(run.batch_size).collect();
    c.bench_function("tiny perlm step, batch 16", |bench| {
        bench.iter(|| {
            let mut g = Graph::new();
            let params = state.bind(&mut g, true);
            let mut rng = seed::rng(0, &[seed::stream::DROPOUT]);
            let out = Forward {
                state: &state,
                graph: &mut g,
                params: &params,
                rng: &mut rng,
                training: true,
            }
            .perlm_loss(&batch, PredictionSpace::Local)
            .unwrap();
            g.backward(out.loss).unwrap();
            state.collect_grads(&g, &params)
        })
    });
}

fn instance_generation(c: &mut Criterion) {
    let spec = ToySpec {
        documents: 40,
        ..Default::default()
    };
    let text = toy_corpus(&spec, 1).unwrap();
    let mut run = Preset::Tiny.config();
    run.data.dupe_factor = 1;
    run.model.vocab_size = toy_vocab(spec.max_words).len();
    let corpus = prepare_corpus(&parse_corpus(&text), toy_vocab(spec.max_words), &run).unwrap();
    c.bench_function("instances, 40 toy documents", |bench| {
        bench.iter(|| build_dataset(&corpus, &run).unwrap())
    });
}

criterion_group!(benches, matmul, forward_backward, instance_generation);
criterion_main!(benches);
