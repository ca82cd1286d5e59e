use std::path::PathBuf;
use std::time::Instant;

use super::batch::{batches_per_epoch, make_batches};
use super::checkpoint::{save_checkpoint, Checkpoint};
use super::config::RunConfig;
use super::data::Dataset;
use super::metrics::{append_metrics, write_metrics, MetricsRecord};
use crate::error::{Error, Result};
use crate::model::{argmax_rows, EncoderState, Forward};
use crate::perlm::{PerLMInstance, PredictionSpace};
use crate::seed::{self, stream};
use crate::tensor::{adam_step, clip_global_norm, lr_at, AdamState, Graph};

/// Instances per graph during evaluation.
const EVAL_CHUNK: usize = 32;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Default)]
pub struct TrainOptions {
    /// Receives `metrics.jsonl`, `run.json` and checkpoints.
    pub out_dir: Option<PathBuf>,
    pub resume: Option<Checkpoint>,
    /// Stop once this many steps are done, writing a checkpoint there.
    pub stop_at: Option<u64>,
    /// Called with every metrics record as it is produced.
    pub on_record: Option<fn(&MetricsRecord)>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: EncoderState,
    pub adam: AdamState,
    pub step: u64,
    pub metrics: Vec<MetricsRecord>,
    pub last_checkpoint: Option<PathBuf>,
}

/// Mean loss and argmax accuracy over every prediction row of
/// `instances`, with dropout off. `step` and `learning_rate` are left at
/// zero for the caller.
pub fn evaluate(state: &EncoderState, instances: &[PerLMInstance], space: PredictionSpace) -> Result<MetricsRecord> {
    if instances.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let (mut loss_sum, mut rows) = (0.0, 0usize);
    let (mut pos_hits, mut vocab_hits) = (0usize, 0usize);
    let mut rng = seed::rng(0, &[stream::EVAL]);
    for chunk in instances.chunks(EVAL_CHUNK) {
        let mut g = Graph::new();
        let bound = state.bind(&mut g, false);
        let refs: Vec<&PerLMInstance> = chunk.iter().collect();
        let out = Forward { state, graph: &mut g, params: &bound, rng: &mut rng, training: false }.perlm_loss(&refs, space)?;
        let k = out.position_targets.len();
        loss_sum += g.value(out.loss).item() * k as f64;
        rows += k;
        if let Some(l) = out.local_logits {
            pos_hits += hits(&argmax_rows(g.value(l)), &out.position_targets);
        }
        if let Some(v) = out.global_logits {
            vocab_hits += hits(&argmax_rows(g.value(v)), &out.vocab_targets);
        }
    }
    let frac = |h: usize| if rows == 0 { 0.0 } else { h as f64 / rows as f64 };
    Ok(MetricsRecord {
        loss: if rows == 0 { 0.0 } else { loss_sum / rows as f64 },
        position_accuracy: space.uses_local().then(|| frac(pos_hits)),
        vocab_accuracy: space.uses_global().then(|| frac(vocab_hits)),
        ..Default::default()
    })
}

fn hits(pred: &[usize], gold: &[usize]) -> usize {
    pred.iter().zip(gold).filter(|(a, b)| a == b).count()
}

fn stem(step: u64) -> String {
    format!("checkpoint-{step:08}")
}

/// Runs `run.total_steps` optimizer steps over `data.train`, evaluating on
/// `data.eval` at step 0, every `eval_every` steps and at the end.
///
/// Every random draw is derived from the run seed and the step number, so
/// a run resumed from a checkpoint continues exactly as the uninterrupted
/// run would have.
pub fn train(run: &RunConfig, data: &Dataset, opts: TrainOptions) -> Result<TrainOutcome> {
    run.validate()?;
    let space = run.masking.prediction_space;
    let schedule = run.schedule();
    let started = Instant::now();
    let wall = |r: &mut MetricsRecord| {
        if run.log_wall_time {
            r.wall_time = Some(started.elapsed().as_secs_f64());
        }
    };
    let metrics_path = opts.out_dir.as_ref().map(|d| d.join(METRICS_FILE));
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RUN_FILE);
        let text = serde_json::to_string_pretty(run).expect("config serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    }

    let (mut train_sum, mut train_n) = (0.0, 0u64);
    let (mut state, mut adam, mut metrics, start) = match opts.resume {
        Some(ckpt) => {
            if ckpt.run.as_ref() != Some(run) {
                return Err(Error::Config("checkpoint was written by a different run configuration".into()));
            }
            let adam = ckpt.adam.ok_or_else(|| Error::Config("checkpoint has no optimizer state".into()))?;
            (train_sum, train_n) = ckpt.pending_loss;
            (ckpt.state, adam, ckpt.metrics, ckpt.step)
        }
        None => {
            let state = EncoderState::init(run.model.clone(), &mut seed::rng(run.seed, &[stream::INIT]))?;
            let adam = AdamState::new(&state.params, run.adam_beta1, run.adam_beta2, run.adam_epsilon, run.weight_decay);
            let mut first = evaluate(&state, &data.eval, space)?;
            first.learning_rate = lr_at(&schedule, 0);
            wall(&mut first);
            (state, adam, vec![first], 0)
        }
    };
    if let Some(path) = &metrics_path {
        write_metrics(path, &metrics)?;
    }
    if start == 0 {
        if let (Some(cb), Some(r)) = (opts.on_record, metrics.first()) {
            cb(r);
        }
    }

    let per_epoch = batches_per_epoch(data.train.len(), run.batch_size) as u64;
    let mut epoch_batches: Option<(u64, Vec<Vec<usize>>)> = None;
    let mut last_checkpoint: Option<PathBuf> = None;
    let mut step = start;
    while step < run.total_steps {
        let epoch = step / per_epoch.max(1);
        if epoch_batches.as_ref().map(|(e, _)| *e) != Some(epoch) {
            epoch_batches = Some((epoch, make_batches(&data.train, run.batch_size, run.data.max_len, run.seed, epoch)?));
        }
        let batch: Vec<&PerLMInstance> = epoch_batches.as_ref().expect("set above").1[(step % per_epoch) as usize]
            .iter()
            .map(|&i| &data.train[i])
            .collect();

        let mut g = Graph::new();
        let bound = state.bind(&mut g, true);
        let mut rng = seed::rng(run.seed, &[stream::DROPOUT, step]);
        let out = Forward { state: &state, graph: &mut g, params: &bound, rng: &mut rng, training: true }.perlm_loss(&batch, space)?;
        let loss = g.value(out.loss).item();
        let diverged = |name: String| Error::Divergence {
            name: match &last_checkpoint {
                Some(p) => format!("{name} (last good checkpoint: {})", p.display()),
                None => format!("{name} (no checkpoint written yet)"),
            },
            step,
        };
        if !loss.is_finite() {
            return Err(diverged("loss".into()));
        }
        g.backward(out.loss)?;
        let mut grads = state.collect_grads(&g, &bound);
        if let Some(c) = run.grad_clip {
            clip_global_norm(&mut grads, c);
        }
        adam_step(&mut state.params, &grads, &mut adam, lr_at(&schedule, step)).map_err(|e| match e {
            Error::Divergence { name, .. } => diverged(format!("gradient of {name}")),
            other => other,
        })?;
        if !state.is_finite() {
            return Err(diverged("parameters".into()));
        }
        train_sum += loss;
        train_n += 1;
        step += 1;

        if step % run.eval_every == 0 || step == run.total_steps {
            let mut r = evaluate(&state, &data.eval, space)?;
            r.step = step;
            r.learning_rate = lr_at(&schedule, step);
            r.train_loss = Some(train_sum / train_n as f64);
            (train_sum, train_n) = (0.0, 0);
            wall(&mut r);
            if let Some(path) = &metrics_path {
                append_metrics(path, &r)?;
            }
            if let Some(cb) = opts.on_record {
                cb(&r);
            }
            metrics.push(r);
        }
        let stopping = opts.stop_at == Some(step);
        let scheduled = run.checkpoint_every > 0 && step % run.checkpoint_every == 0;
        if let Some(dir) = &opts.out_dir {
            if scheduled || stopping || step == run.total_steps {
                let ckpt = Checkpoint {
                    step,
                    state: state.clone(),
                    run: Some(run.clone()),
                    adam: Some(adam.clone()),
                    metrics: metrics.clone(),
                    pending_loss: (train_sum, train_n),
                };
                last_checkpoint = Some(save_checkpoint(dir, &stem(step), &ckpt)?);
            }
        }
        if stopping {
            break;
        }
    }
    Ok(TrainOutcome {
        state,
        adam,
        step,
        metrics,
        last_checkpoint,
    })
}
