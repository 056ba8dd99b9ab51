use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{DataConfig, ExperimentConfig};
use crate::data::{
    export_corpus, generate, load_corpus, load_corpus_with_vocab, Corpus, CorpusFiles,
    ParallelPair, Vocab,
};
use crate::decode::{
    batch_decode, default_max_len, hypotheses_text, traces_text, TranslationTrace,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_traces, EvalReport};
use crate::model::checkpoint::{self, Checkpoint, CheckpointMeta};
use crate::model::train::{StepReport, Trainer};
use crate::model::{ModelConfig, ModelParams};
use crate::parallel::Execution;
use crate::policy::PolicySpec;

/// Environment variable naming the directory that receives run outputs.
pub const OUTPUT_ROOT_ENV: &str = "SIMT_OUTPUT_ROOT";

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const EVAL_CSV_FILE: &str = "eval.csv";
pub const EVAL_TEXT_FILE: &str = "eval.txt";

/// `$SIMT_OUTPUT_ROOT`, or `runs` in the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

pub(crate) fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Training and test corpora sharing one pair of vocabularies.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpora {
    pub train: Corpus,
    pub test: Corpus,
}

pub fn prepare_data(config: &ExperimentConfig) -> Result<Corpora> {
    match &config.data {
        DataConfig::Synthetic { vocab_size, .. } => {
            let (spec, n_train) = config.data.task_spec(config.seed).expect("synthetic data");
            let vocab = Vocab::synthetic(*vocab_size);
            let corpus = |pairs| Corpus {
                pairs,
                src_vocab: vocab.clone(),
                tgt_vocab: vocab.clone(),
            };
            let mut train = generate(&spec)?;
            let test = train.split_off(n_train);
            Ok(Corpora {
                train: corpus(train),
                test: corpus(test),
            })
        }
        DataConfig::Files {
            train,
            test,
            min_freq,
        } => {
            let files = |c: &super::config::CorpusPaths| CorpusFiles {
                src: c.src.clone(),
                tgt: c.tgt.clone(),
                align: c.align.clone(),
            };
            let train = load_corpus(&files(train), *min_freq)?;
            let test = load_corpus_with_vocab(&files(test), &train.src_vocab, &train.tgt_vocab)?;
            Ok(Corpora { train, test })
        }
    }
}

/// Model config with vocabulary sizes taken from the data.
pub fn model_config(config: &ExperimentConfig, corpora: &Corpora) -> ModelConfig {
    ModelConfig {
        src_vocab: corpora.train.src_vocab.len(),
        tgt_vocab: corpora.train.tgt_vocab.len(),
        ..config.model.clone()
    }
}

/// Writes `train.*` and `test.*` corpus files into `dir`.
pub fn generate_run(config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let corpora = prepare_data(config)?;
    let mut written = Vec::new();
    for (name, corpus) in [("train", &corpora.train), ("test", &corpora.test)] {
        let files = CorpusFiles::in_dir(dir, name);
        export_corpus(corpus, &files)?;
        written.push(files.src);
        written.push(files.tgt);
        if corpus.pairs.iter().all(|p| p.alignment.is_some()) {
            written.extend(files.align);
        }
    }
    write_file(&dir.join(CONFIG_FILE), resolved_config_json(config))?;
    Ok(written)
}

/// The resolved config with its fingerprint, as echoed into run directories.
pub fn resolved_config_json(config: &ExperimentConfig) -> String {
    let mut v = serde_json::to_value(config).expect("config serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.insert("fingerprint".into(), config.fingerprint().into());
    }
    serde_json::to_string_pretty(&v).expect("value serializes") + "\n"
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: u64,
    pub loss: f64,
    pub alpha: f64,
}

pub const TRAIN_LOG_HEADER: &str = "step,loss,alpha";

impl LogRow {
    pub fn csv(&self) -> String {
        format!("{},{:.6},{}", self.step, self.loss, self.alpha)
    }
}

/// Result of an in-memory training run.
pub struct TrainedModel {
    pub params: ModelParams<f32>,
    pub log: Vec<LogRow>,
    pub meta: CheckpointMeta,
}

fn build_trainer(
    config: &ExperimentConfig,
    corpora: &Corpora,
    execution: Execution,
) -> Result<Trainer<f32>> {
    let model = model_config(config, corpora);
    model.validate()?;
    let params = ModelParams::<f32>::init(&model, config.seed);
    let schedule = config.curriculum.schedule(config.seed)?;
    Ok(Trainer::new(
        params,
        config.training.optimizer.clone(),
        schedule,
        config.policy,
        config.seed,
    )?
    .with_execution(execution)
    .with_dropout(!config.training.deterministic))
}

fn checkpoint_meta(config: &ExperimentConfig, corpora: &Corpora, updates: u64) -> CheckpointMeta {
    CheckpointMeta {
        model: model_config(config, corpora),
        src_vocab: corpora.train.src_vocab.clone(),
        tgt_vocab: corpora.train.tgt_vocab.clone(),
        updates,
        seed: config.seed,
        fingerprint: config.fingerprint(),
    }
}

/// Trains according to `config`, calling `on_step` after every update and
/// collecting the log rows. The trainer is returned even when training fails
/// so the caller can keep its last good parameters.
fn run_training(
    config: &ExperimentConfig,
    corpora: &Corpora,
    execution: Execution,
    mut on_step: impl FnMut(&StepReport, &Trainer<f32>) -> Result<()>,
) -> Result<(Trainer<f32>, Vec<LogRow>, Result<()>)> {
    let mut trainer = build_trainer(config, corpora, execution)?;
    let steps = config.training.steps;
    let every = config.training.log_every;
    let mut log = Vec::new();
    let outcome = trainer.fit(&corpora.train.pairs, &config.training, |r, t| {
        if r.step % every == 0 || r.step + 1 == steps {
            log.push(LogRow {
                step: r.step,
                loss: r.loss.per_token,
                alpha: r.alpha,
            });
        }
        on_step(r, t)
    });
    Ok((trainer, log, outcome))
}

/// Trains without touching the filesystem.
pub fn train_model(
    config: &ExperimentConfig,
    corpora: &Corpora,
    execution: Execution,
) -> Result<TrainedModel> {
    let (trainer, log, outcome) = run_training(config, corpora, execution, |_, _| Ok(()))?;
    outcome?;
    let meta = checkpoint_meta(config, corpora, trainer.updates());
    Ok(TrainedModel {
        params: trainer.into_params(),
        log,
        meta,
    })
}

pub fn train_log_csv(rows: &[LogRow]) -> String {
    let mut out = String::from(TRAIN_LOG_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

/// Paths written by a training run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub config: PathBuf,
}

/// Trains and writes `config.json`, `train_log.csv` and `checkpoint.bin`
/// into `dir`. If training diverges the parameters from before the failing
/// update are saved and the error is returned.
pub fn train_run(
    config: &ExperimentConfig,
    dir: &Path,
    execution: Execution,
) -> Result<TrainOutputs> {
    let corpora = prepare_data(config)?;
    let outputs = TrainOutputs {
        checkpoint: dir.join(CHECKPOINT_FILE),
        log: dir.join(TRAIN_LOG_FILE),
        config: dir.join(CONFIG_FILE),
    };
    write_file(&outputs.config, resolved_config_json(config))?;
    let every = config.training.checkpoint_every;
    let ckpt = outputs.checkpoint.clone();
    let (trainer, log, outcome) = run_training(config, &corpora, execution, |r, t| {
        if every > 0 && (r.step + 1) % every == 0 {
            checkpoint::save(
                &ckpt,
                &checkpoint_meta(config, &corpora, t.updates()),
                t.params(),
            )?;
        }
        Ok(())
    })?;
    write_file(&outputs.log, train_log_csv(&log))?;
    checkpoint::save(
        &outputs.checkpoint,
        &checkpoint_meta(config, &corpora, trainer.updates()),
        trainer.params(),
    )?;
    outcome?;
    Ok(outputs)
}

/// Decoding results for one test-time wait-k value.
#[derive(Debug, Clone, PartialEq)]
pub struct KEvaluation {
    pub k_test: usize,
    pub report: EvalReport,
    pub traces: Vec<TranslationTrace>,
}

/// Decodes `pairs` under wait-k for each `k_test` and scores the output.
pub fn evaluate_params(
    params: &ModelParams<f32>,
    pairs: &[ParallelPair],
    k_test: &[usize],
    config_hash: &str,
    seed: u64,
    execution: Execution,
) -> Result<Vec<KEvaluation>> {
    let sources: Vec<Vec<u32>> = pairs.iter().map(|p| p.src.clone()).collect();
    k_test
        .iter()
        .map(|&k| {
            let traces = batch_decode(
                params,
                &sources,
                &PolicySpec::WaitK { k },
                default_max_len,
                execution,
            )?;
            let report = evaluate_traces(&traces, pairs, config_hash, seed)?;
            Ok(KEvaluation {
                k_test: k,
                report,
                traces,
            })
        })
        .collect()
}

/// Checks that a checkpoint was trained with the vocabularies of `corpora`.
pub fn check_vocab(meta: &CheckpointMeta, corpora: &Corpora) -> Result<()> {
    if meta.src_vocab != corpora.train.src_vocab || meta.tgt_vocab != corpora.train.tgt_vocab {
        return Err(Error::Config(format!(
            "vocabulary mismatch: checkpoint has {}/{} entries, corpus has {}/{}",
            meta.src_vocab.len(),
            meta.tgt_vocab.len(),
            corpora.train.src_vocab.len(),
            corpora.train.tgt_vocab.len()
        )));
    }
    Ok(())
}

pub fn eval_text(config: &ExperimentConfig, results: &[KEvaluation]) -> String {
    let mut out = String::new();
    for r in results {
        let _ = writeln!(out, "[{} | wait-{} decoding]", config.run_name(), r.k_test);
        out.push_str(&r.report.to_string());
        out.push('\n');
    }
    out
}

/// Loads a checkpoint, decodes the test corpus of `config` under every
/// `eval.k_test` and writes `eval.csv`, `eval.txt` and per-k hypotheses and
/// traces into `dir`.
pub fn evaluate_run(
    checkpoint_path: &Path,
    config: &ExperimentConfig,
    dir: &Path,
    execution: Execution,
) -> Result<Vec<KEvaluation>> {
    let ckpt: Checkpoint<f32> = checkpoint::load(checkpoint_path)?;
    let corpora = prepare_data(config)?;
    check_vocab(&ckpt.meta, &corpora)?;
    let results = evaluate_params(
        &ckpt.params,
        &corpora.test.pairs,
        &config.eval.k_test,
        &config.fingerprint(),
        config.seed,
        execution,
    )?;
    let reports: Vec<EvalReport> = results.iter().map(|r| r.report.clone()).collect();
    write_file(&dir.join(EVAL_CSV_FILE), EvalReport::to_csv(&reports))?;
    write_file(&dir.join(EVAL_TEXT_FILE), eval_text(config, &results))?;
    for r in &results {
        write_file(
            &dir.join(format!("hypotheses.k{}.txt", r.k_test)),
            hypotheses_text(&r.traces, &corpora.test.tgt_vocab),
        )?;
        write_file(
            &dir.join(format!("traces.k{}.txt", r.k_test)),
            traces_text(&r.traces),
        )?;
    }
    Ok(results)
}
