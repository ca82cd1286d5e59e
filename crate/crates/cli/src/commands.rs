use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pert_core::harness::{
    self, build_dataset, check_comparable, comparison_table, load_checkpoint, load_corpus, read_metrics,
    run_ablation_suite, save_checkpoint, series, train, Checkpoint, MetricsRecord, Preset, RunConfig, Suite,
    TrainOptions, METRICS_FILE, RUN_FILE,
};
use pert_core::model::EncoderState;
use pert_core::perlm::{instance_at, read_instances, render_instance, write_instances};
use pert_core::tokenizer::{Vocab, WordSplitterKind};
use pert_core::wor::{
    self, build_wor_corpus, wor_evaluate, wor_finetune, wordpiece_pieces, CorruptionConfig, WorConfig,
};
use pert_core::{seed, toy, Error};

use crate::args::{RunArgs, WorTrainArgs};

const DEFAULT_OUT: &str = "pert-out";

fn read_text(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(fs::write(path, text).map_err(|e| Error::io(path, e))?)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializes") + "\n"
}

/// Defaults, then the preset, then the file, then flags and overrides.
pub fn resolve_run(args: &RunArgs, extra: &[String]) -> Result<RunConfig> {
    let base = match &args.preset {
        Some(p) => p.parse::<Preset>()?.config(),
        None => RunConfig::default(),
    };
    let file = args.config.as_deref().map(read_text).transpose()?;
    let mut overrides = Vec::new();
    if let Some(s) = args.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(s) = args.steps {
        overrides.push(format!("total_steps={s}"));
    }
    if let Some(p) = &args.corpus {
        overrides.push(format!("data.corpus={}", p.display()));
    }
    if let Some(p) = &args.vocab {
        overrides.push(format!("data.vocab={}", p.display()));
    }
    overrides.extend_from_slice(extra);
    overrides.extend(args.overrides.iter().cloned());
    // Validation waits until the vocabulary has fixed model.vocab_size.
    Ok(harness::layer(&base, file.as_deref(), &overrides)?)
}

fn out_dir(args: &RunArgs) -> PathBuf {
    args.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Loads the corpus named by the run and sizes the embedding table to its
/// vocabulary.
fn corpus_for(run: &mut RunConfig) -> Result<harness::PreparedCorpus> {
    let corpus = load_corpus(run)?;
    run.model.vocab_size = corpus.vocab.len();
    run.validate()?;
    Ok(corpus)
}

pub fn prepare(args: &RunArgs, select_ratio: Option<f64>) -> Result<()> {
    let extra: Vec<String> = select_ratio.map(|r| format!("masking.select_ratio={r}")).into_iter().collect();
    let mut run = resolve_run(args, &extra)?;
    if run.masking.select_ratio == 0.0 {
        eprintln!("warning: select_ratio is 0; every instance will be all-negative");
    }
    let corpus = corpus_for(&mut run)?;
    let data = build_dataset(&corpus, &run)?;
    let out = out_dir(args);
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_instances(out.join("train.jsonl"), &data.train)?;
    write_instances(out.join("eval.jsonl"), &data.eval)?;
    let summary = data.train_stats.summary();
    write_text(&out.join("stats.json"), &to_json(&summary))?;
    write_text(&out.join(RUN_FILE), &to_json(&run))?;
    println!(
        "{} training and {} held-out instances in {}",
        data.train.len(),
        data.eval.len(),
        out.display()
    );
    println!("selected words     {:.4}", summary.selected_word_fraction);
    println!("shuffled / kept    {:.4} / {:.4}", summary.shuffled_fraction, summary.kept_fraction);
    let grams: Vec<String> = summary.gram_distribution.iter().map(|g| format!("{g:.4}")).collect();
    println!("gram lengths 1..{}  {}", grams.len(), grams.join(" "));
    Ok(())
}

fn print_record(r: &MetricsRecord) {
    let acc = r
        .position_accuracy
        .or(r.vocab_accuracy)
        .map_or(String::new(), |a| format!(" acc {:.4}", a));
    eprintln!("step {:>8}  loss {:.4}{acc}  lr {:.3e}", r.step, r.loss, r.learning_rate);
}

pub fn pretrain(args: &RunArgs, resume: Option<&Path>) -> Result<()> {
    let (mut run, ckpt) = match resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            let run = ckpt
                .run
                .clone()
                .ok_or_else(|| Error::Config(format!("{} has no run configuration", path.display())))?;
            (run, Some(ckpt))
        }
        None => (resolve_run(args, &[])?, None),
    };
    let corpus = corpus_for(&mut run)?;
    let data = build_dataset(&corpus, &run)?;
    let out = out_dir(args);
    eprintln!(
        "{} training / {} held-out instances, {} steps",
        data.train.len(),
        data.eval.len(),
        run.total_steps
    );
    let outcome = train(
        &run,
        &data,
        TrainOptions {
            out_dir: Some(out.clone()),
            resume: ckpt,
            on_record: Some(print_record),
            ..Default::default()
        },
    )?;
    let vocab_path = out.join("vocab.txt");
    write_text(&vocab_path, &corpus.vocab.to_file_string())?;
    if let Some(p) = outcome.last_checkpoint {
        println!("checkpoint {}", p.display());
    }
    println!("metrics {}", out.join(METRICS_FILE).display());
    Ok(())
}

pub fn ablate(args: &RunArgs, suite: &str) -> Result<()> {
    let mut base = resolve_run(args, &[])?;
    let corpus = corpus_for(&mut base)?;
    let suites: Vec<Suite> = match suite {
        "all" => Suite::ALL.to_vec(),
        s => vec![s.parse()?],
    };
    let out = out_dir(args);
    let mut text = String::new();
    let mut reports = Vec::new();
    for s in suites {
        let variants = s.variants(&base);
        let report = run_ablation_suite(&corpus, &base, s, &variants, |v| eprintln!("training {v}"))?;
        let table = report.to_table();
        println!("{table}");
        text.push_str(&table);
        text.push('\n');
        reports.push(report);
    }
    write_text(&out.join("ablation.txt"), &text)?;
    write_text(&out.join("ablation.json"), &to_json(&reports))?;
    let worse: Vec<String> = reports
        .iter()
        .flat_map(|r| r.rows.iter().filter(|row| !row.improved()).map(|row| row.variant.clone()))
        .collect();
    if !worse.is_empty() {
        eprintln!("warning: final loss did not improve for {}", worse.join(", "));
    }
    Ok(())
}

pub struct CorruptArgs<'a> {
    pub input: &'a Path,
    pub out: &'a Path,
    pub vocab: Option<&'a Path>,
    pub seed: u64,
    pub cfg: CorruptionConfig,
    pub splitter: &'a str,
}

pub fn wor_corrupt(a: CorruptArgs) -> Result<()> {
    let kind: WordSplitterKind = serde_json::from_value(serde_json::Value::String(a.splitter.into()))
        .map_err(|_| Error::Config(format!("unknown splitter {}", a.splitter)))?;
    let splitter = kind.splitter();
    let sentences: Vec<Vec<String>> = read_text(a.input)?
        .lines()
        .map(|l| splitter.split_words(l.trim()).into_iter().map(String::from).collect::<Vec<_>>())
        .filter(|w| !w.is_empty())
        .collect();
    let records = match a.vocab {
        Some(p) => {
            let vocab = Vocab::load(p)?;
            build_wor_corpus(&sentences, &a.cfg, wordpiece_pieces(&vocab), a.seed)
        }
        None => build_wor_corpus(&sentences, &a.cfg, |w| vec![w.to_string()], a.seed),
    };
    wor::write_labeled(a.out, &records)?;
    println!(
        "{} of {} sentences corrupted into {}",
        records.len(),
        sentences.len(),
        a.out.display()
    );
    Ok(())
}

pub fn wor_train(a: &WorTrainArgs) -> Result<()> {
    let file = a.config.as_deref().map(read_text).transpose()?;
    let mut overrides = Vec::new();
    if let Some(s) = a.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(s) = a.steps {
        overrides.push(format!("steps={s}"));
    }
    overrides.extend(a.overrides.iter().cloned());
    let cfg: WorConfig = harness::layer(&WorConfig::default(), file.as_deref(), &overrides)?;
    cfg.validate()?;
    let vocab = Vocab::load(&a.vocab)?;
    let state = match &a.init {
        Some(p) => load_checkpoint(p)?.state,
        None => {
            let mut model = a.preset.parse::<Preset>()?.config().model;
            model.vocab_size = vocab.len();
            model.max_positions = model.max_positions.max(cfg.max_len);
            EncoderState::init(model, &mut seed::rng(cfg.seed, &[seed::stream::INIT]))?
        }
    };
    let train_data = wor::read_labeled(&a.train)?;
    let tagger = wor_finetune(state, &train_data, &vocab, &cfg)?;
    let ckpt = Checkpoint {
        step: cfg.steps,
        state: tagger,
        run: None,
        adam: None,
        metrics: Vec::new(),
        pending_loss: (0.0, 0),
    };
    let manifest = save_checkpoint(&a.out, "wor-model", &ckpt)?;
    write_text(&a.out.join("wor.json"), &to_json(&cfg))?;
    println!("tagger {}", manifest.display());
    if let Some(dev) = &a.dev {
        let report = wor_evaluate(&ckpt.state, &wor::read_labeled(dev)?, &vocab, cfg.max_len)?;
        println!("{}", to_json(&report).trim_end());
    }
    Ok(())
}

pub fn wor_eval(model: &Path, data: &Path, vocab: &Path, max_len: Option<usize>, out: Option<&Path>) -> Result<()> {
    let state = load_checkpoint(model)?.state;
    if !state.has_tagger() {
        return Err(Error::Config(format!("{} has no tagging layer; run wor-train first", model.display())).into());
    }
    let max_len = max_len.unwrap_or(state.config.max_positions);
    let report = wor_evaluate(&state, &wor::read_labeled(data)?, &Vocab::load(vocab)?, max_len)?;
    let text = to_json(&report);
    print!("{text}");
    if let Some(p) = out {
        write_text(p, &text)?;
    }
    Ok(())
}

pub fn inspect(instances: &Path, index: usize, vocab: Option<&Path>) -> Result<()> {
    let all = read_instances(instances)?;
    let inst = instance_at(&all, index)?;
    let vocab = vocab.map(Vocab::load).transpose()?;
    print!("{}", render_instance(inst, vocab.as_ref()));
    Ok(())
}

fn run_label(path: &Path) -> String {
    let parent = path.parent().and_then(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned());
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match parent {
        Some(p) if stem == "metrics" => p,
        Some(p) => format!("{p}/{stem}"),
        None => stem,
    }
}

pub fn report(files: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut runs = Vec::new();
    let mut configs: Vec<(String, RunConfig)> = Vec::new();
    for f in files {
        let label = run_label(f);
        let records = read_metrics(f)?;
        runs.push(series(&label, &records)?);
        let cfg_path = f.with_file_name(RUN_FILE);
        if let Ok(text) = fs::read_to_string(&cfg_path) {
            let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("reading {}", cfg_path.display()))?;
            configs.push((label, cfg));
        }
    }
    if let Some((first_label, first)) = configs.first() {
        for (label, cfg) in &configs[1..] {
            if let Err(e) = check_comparable(first, cfg) {
                eprintln!("warning: {label} is not comparable with {first_label}: {e}");
            }
        }
    }
    print!("{}", comparison_table(&runs));
    if let Some(dir) = out {
        for r in &runs {
            let name = r.label.replace(['/', '\\'], "_");
            write_text(&dir.join(format!("{name}.csv")), &r.to_csv())?;
        }
        println!("series written to {}", dir.display());
    }
    Ok(())
}

pub fn toy_files(out: &Path, seed: u64, spec: &toy::ToySpec) -> Result<()> {
    let text = toy::toy_corpus(spec, seed)?;
    write_text(&out.join("corpus.txt"), &text)?;
    write_text(&out.join("vocab.txt"), &toy::toy_vocab(spec.max_words).to_file_string())?;
    println!("toy corpus and vocabulary in {}", out.display());
    Ok(())
}
