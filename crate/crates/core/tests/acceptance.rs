//! Acceptance suite. Every criterion prints one PASS/FAIL line to stderr
//! (bypassing the test harness capture) and then asserts its outcome.
//!
//! The training criteria share their runs through `OnceLock`s, so running the
//! whole file costs each training run once. On one CPU core the full suite
//! takes roughly ten minutes in the optimized test profile.

mod checks;
mod common;
mod oracle;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use simt_core::curriculum::{AlphaMode, CurriculumSchedule, GlanceStrategy};
use simt_core::data::{generate, TaskKind, TaskSpec};
use simt_core::decode::{Action, TranslationTrace};
use simt_core::experiment::{
    evaluate_run, sweep_run, train_run, ExperimentConfig, SweepRow, TRAIN_LOG_FILE,
};
use simt_core::metrics::{average_lagging, corpus_bleu, evaluate_traces, EvalReport};
use simt_core::parallel::Execution;
use simt_core::policy::{hmt_lattice, wait_k_policy};

fn report(n: u32, title: &str, start: Instant, outcome: Result<String, String>) {
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    let line = format!(
        "criterion {n} {tag}: {title} ({detail}) [{:.1}s]\n",
        start.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    if let Err(d) = outcome {
        panic!("criterion {n} failed: {d}");
    }
}

// Shifted copy by two positions, evaluated at wait-1: every target token
// depends on a source token that has not been read yet.
const SHIFTED_COPY: &str = r#"{
  "seed": 1,
  "data": {"kind": "synthetic", "task": {"kind": "shifted_copy", "delta": 2},
           "vocab_size": 50, "min_len": 5, "max_len": 12,
           "train_pairs": 20000, "test_pairs": 300},
  "model": {"src_vocab": 50, "tgt_vocab": 50, "d_model": 32, "n_heads": 2,
            "n_enc_layers": 1, "n_dec_layers": 1, "d_ff": 64,
            "dropout": 0.1, "label_smoothing": 0.1},
  "policy": {"kind": "wait_k", "k": 1},
  "curriculum": {"alpha_min": 0.05, "decay_updates": 2000, "glance_strategy": "adjacency"},
  "training": {"steps": 3000, "batch_tokens": 600, "log_every": 250,
               "optimizer": {"lr": 0.002, "warmup": 100}},
  "eval": {"k_test": [1]}
}"#;

const SEEDS: [u64; 3] = [1, 2, 3];
const PREFIX_TO_PREFIX: [&str; 2] = ["curriculum.constant_alpha=true", "curriculum.alpha_min=0"];

fn config(overrides: &[String]) -> ExperimentConfig {
    ExperimentConfig::from_json_str(SHIFTED_COPY, overrides).unwrap()
}

fn glance_config(seed: u64) -> ExperimentConfig {
    config(&[format!("seed={seed}")])
}

fn p2p_config(seed: u64) -> ExperimentConfig {
    let mut o: Vec<String> = PREFIX_TO_PREFIX.iter().map(|s| s.to_string()).collect();
    o.push(format!("seed={seed}"));
    config(&o)
}

fn scratch() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().unwrap()).path()
}

/// Trains and evaluates into `dir`, returning the wait-1 report.
fn file_run(config: &ExperimentConfig, dir: &Path) -> EvalReport {
    let out = train_run(config, dir, Execution::Parallel).unwrap();
    let results = evaluate_run(&out.checkpoint, config, dir, Execution::Parallel).unwrap();
    results.into_iter().find(|r| r.k_test == 1).unwrap().report
}

struct PairedRuns {
    glance: Vec<(PathBuf, EvalReport)>,
    p2p: Vec<EvalReport>,
}

fn paired_runs() -> &'static PairedRuns {
    static RUNS: OnceLock<PairedRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut glance = Vec::new();
        let mut p2p = Vec::new();
        for seed in SEEDS {
            let dir = scratch().join(format!("glance-{seed}"));
            glance.push((dir.clone(), file_run(&glance_config(seed), &dir)));
            p2p.push(file_run(
                &p2p_config(seed),
                &scratch().join(format!("p2p-{seed}")),
            ));
        }
        PairedRuns { glance, p2p }
    })
}

#[test]
fn criterion_1_policy_and_schedule_formulas() {
    let start = Instant::now();
    let outcome = (|| {
        let mut cases = 0;
        for i in 1..=12 {
            for j in 1..=12 {
                for k in 1..=8 {
                    let got = wait_k_policy(k, i, j).unwrap();
                    if got.reads() != oracle::wait_k_reads(k, i, j).as_slice() {
                        return Err(format!("wait-{k} I={i} J={j}"));
                    }
                    cases += 1;
                }
                for l in 1..=8 {
                    for n in 1..=8 {
                        let got = hmt_lattice(l, n, i, j).unwrap();
                        if got.events() != oracle::hmt_events(l, n, i, j).as_slice() {
                            return Err(format!("hmt L={l} N={n} I={i} J={j}"));
                        }
                        cases += 1;
                    }
                }
            }
        }
        let alphas: Vec<f64> = (0..50).map(|a| a as f64 / 49.0).collect();
        for &alpha_min in &alphas {
            for d in [1u64, 2, 3, 7, 10, 100, 2000] {
                let s = CurriculumSchedule::new(
                    alpha_min,
                    d,
                    GlanceStrategy::Adjacency,
                    AlphaMode::Decay,
                    0,
                )
                .unwrap();
                for n in (0..=d + 5).chain([2 * d, 10 * d]) {
                    let diff = (s.alpha_at(n) - oracle::alpha(n, alpha_min, d)).abs();
                    if diff > 1e-12 {
                        return Err(format!(
                            "alpha_min={alpha_min} d={d} n={n}: off by {diff:e}"
                        ));
                    }
                    cases += 1;
                }
            }
        }
        for &alpha in &alphas {
            for j in 1..=12 {
                for i in 1..=12 {
                    for k in 1..=8 {
                        let base = wait_k_policy(k, i, j).unwrap();
                        let mut s = CurriculumSchedule::new(
                            0.0,
                            1,
                            GlanceStrategy::Adjacency,
                            AlphaMode::Decay,
                            0,
                        )
                        .unwrap();
                        let adj = s.adjust_with_alpha(&base, alpha, None).unwrap();
                        for (step, &g) in base.reads().iter().enumerate() {
                            let f = simt_core::curriculum::future_count(j, g, alpha).unwrap();
                            let want = oracle::future_count(j, g, alpha);
                            if f != want || adj.g_hat()[step] != g + want {
                                return Err(format!(
                                    "J={j} g={g} alpha={alpha}: f={f}, oracle {want}"
                                ));
                            }
                            cases += 1;
                        }
                    }
                }
            }
        }
        Ok(format!("{cases} grid points exact"))
    })();
    report(
        1,
        "wait-k, HMT lattice, glance ratio and future count match loop oracles",
        start,
        outcome,
    );
}

#[test]
fn criterion_2_masking_invariants() {
    let start = Instant::now();
    let outcome = checks::hidden_tokens_are_invisible(100).and_then(|a| {
        let b = checks::prefix_equality(100)?;
        let c = checks::oracle_equivalence(100)?;
        Ok(format!("{a}; {b}; {c}"))
    });
    report(
        2,
        "hidden source tokens are invisible and prefix encoding is exact",
        start,
        outcome,
    );
}

#[test]
fn criterion_3_gradient_check() {
    let start = Instant::now();
    report(
        3,
        "analytic gradients match central differences in double precision",
        start,
        checks::gradient_check(1e-5, 1e-4),
    );
}

#[test]
fn criterion_4_metric_closed_forms() {
    let start = Instant::now();
    let outcome = (|| {
        for k in 1..=5 {
            for len in k..=30 {
                let g = wait_k_policy(k, len, len).unwrap();
                let al = average_lagging(g.reads(), len).unwrap();
                if al != k as f64 {
                    return Err(format!("AL(wait-{k}, {len} tokens) = {al}"));
                }
            }
        }
        let pairs = generate(&TaskSpec {
            task: TaskKind::ShiftedCopy { delta: 2 },
            vocab_size: 50,
            min_len: 5,
            max_len: 12,
            pairs: 200,
            seed: 4,
            source: Default::default(),
        })
        .map_err(|e| e.to_string())?;
        let refs: Vec<Vec<u32>> = pairs.iter().map(|p| p.tgt.clone()).collect();
        let bleu = corpus_bleu(&refs, &refs, 4).map_err(|e| e.to_string())?;
        if bleu != 100.0 {
            return Err(format!("BLEU(ref, ref) = {bleu}"));
        }
        let traces: Vec<TranslationTrace> = pairs
            .iter()
            .map(|p| {
                let j = p.src.len();
                let mut actions = vec![Action::Read; j];
                actions.extend(p.tgt.iter().map(|&t| Action::Write(t)));
                TranslationTrace {
                    actions,
                    reads_at_write: vec![j; p.tgt.len()],
                    src_len: j,
                    output: p.tgt.clone(),
                    truncated: false,
                }
            })
            .collect();
        let r = evaluate_traces(&traces, &pairs, "closed-form", 0).map_err(|e| e.to_string())?;
        if r.hr != 0.0 || r.bleu != 100.0 {
            return Err(format!(
                "perfect full-sentence output: HR {} BLEU {}",
                r.hr, r.bleu
            ));
        }
        Ok("AL = k for k in 1..=5, BLEU = 100, HR = 0".to_string())
    })();
    report(4, "metric closed forms", start, outcome);
}

fn log_alphas(dir: &Path) -> Vec<(u64, f64)> {
    fs::read_to_string(dir.join(TRAIN_LOG_FILE))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn criterion_5_curriculum_endpoints() {
    let start = Instant::now();
    let outcome = (|| {
        let cfg = glance_config(1);
        let d = cfg.curriculum.decay_updates;
        let alpha_min = cfg.curriculum.alpha_min;
        let (dir, _) = &paired_runs().glance[0];
        let rows = log_alphas(dir);
        if rows.first() != Some(&(0, 1.0)) {
            return Err(format!("first log row {:?}", rows.first()));
        }
        let late: Vec<_> = rows.iter().filter(|(s, _)| *s >= d).collect();
        if late.is_empty() || late.iter().any(|(_, a)| *a != alpha_min) {
            return Err(format!("rows at or after {d} updates: {late:?}"));
        }
        // without curriculum the ratio stays at alpha_min from the first update
        let ablation = config(&[
            "curriculum.constant_alpha=true".into(),
            "training.steps=30".into(),
            "training.log_every=1".into(),
            "data.train_pairs=200".into(),
        ]);
        let dir = scratch().join("constant");
        train_run(&ablation, &dir, Execution::Parallel).map_err(|e| e.to_string())?;
        let rows = log_alphas(&dir);
        if rows.len() != 30 || rows.iter().any(|&(_, a)| a != alpha_min) {
            return Err(format!("constant-ratio log {rows:?}"));
        }
        Ok(format!(
            "alpha 1 at step 0, {alpha_min} from step {d}; constant ablation logs {alpha_min} at all 30 steps"
        ))
    })();
    report(
        5,
        "glance ratio starts at 1, saturates at alpha_min; constant ablation",
        start,
        outcome,
    );
}

#[test]
fn criterion_6_glancing_beats_prefix_to_prefix_at_wait_1() {
    let start = Instant::now();
    let runs = paired_runs();
    let mut acc_wins = 0;
    let mut hr_wins = 0;
    let mut detail = Vec::new();
    for ((seed, (_, g)), p) in SEEDS.iter().zip(&runs.glance).zip(&runs.p2p) {
        if g.accuracy >= p.accuracy {
            acc_wins += 1;
        }
        if g.hr < p.hr {
            hr_wins += 1;
        }
        detail.push(format!(
            "seed {seed}: acc {:.6} vs {:.6}, HR {:.6} vs {:.6} ({} vs {} output tokens)",
            g.accuracy, p.accuracy, g.hr, p.hr, g.tokens, p.tokens
        ));
    }
    let summary = format!(
        "accuracy >= in {acc_wins}/3, HR < in {hr_wins}/3; {}",
        detail.join("; ")
    );
    let outcome = if acc_wins >= 2 && hr_wins == 3 {
        Ok(summary)
    } else {
        Err(summary)
    };
    report(
        6,
        "glancing future vs prefix-to-prefix training, wait-1 evaluation",
        start,
        outcome,
    );
}

fn sweep_rows(overrides: Vec<String>, dir: &Path) -> Result<Vec<SweepRow>, String> {
    let outcome = sweep_run(&config(&overrides), dir).map_err(|e| e.to_string())?;
    if !outcome.failed_variants.is_empty() {
        return Err(format!("failed variants {:?}", outcome.failed_variants));
    }
    Ok(outcome.rows)
}

#[test]
fn criterion_7_higher_training_latency_helps_wait_1() {
    let start = Instant::now();
    let outcome = (|| {
        let mut wins = 0;
        let mut detail = Vec::new();
        for seed in SEEDS {
            let mut o: Vec<String> = PREFIX_TO_PREFIX.iter().map(|s| s.to_string()).collect();
            o.push(format!("seed={seed}"));
            o.push("sweep.k_train=[1,3,5]".into());
            let rows = sweep_rows(o, &scratch().join(format!("k-sweep-{seed}")))?;
            let acc = |name: &str| {
                rows.iter()
                    .find(|r| r.variant == name && r.k_test == 1)
                    .and_then(|r| r.report.as_ref())
                    .map(|r| r.accuracy)
                    .unwrap()
            };
            let (k1, k3, k5) = (acc("k_train=1"), acc("k_train=3"), acc("k_train=5"));
            if k3 > k1 {
                wins += 1;
            }
            detail.push(format!("seed {seed}: acc k1 {k1:.6} k3 {k3:.6} k5 {k5:.6}"));
        }
        let summary = format!("k_train=3 > k_train=1 in {wins}/3; {}", detail.join("; "));
        if wins >= 2 {
            Ok(summary)
        } else {
            Err(summary)
        }
    })();
    report(
        7,
        "wait-1 accuracy of models trained with k_train in {1,3,5}",
        start,
        outcome,
    );
}

#[test]
fn criterion_8_glance_strategies_are_comparable() {
    let start = Instant::now();
    let outcome = (|| {
        let variants = r#"sweep.variants=[
            {"name": "adjacency", "set": {"curriculum.glance_strategy": "adjacency"}},
            {"name": "attention", "set": {"curriculum.glance_strategy": "attention"}},
            {"name": "randomization", "set": {"curriculum.glance_strategy": "randomization"}}
        ]"#;
        let rows = sweep_rows(vec![variants.into()], &scratch().join("strategies"))?;
        if rows.len() != 3 {
            return Err(format!("{} rows", rows.len()));
        }
        let mut detail = Vec::new();
        for r in &rows {
            let rep = r
                .report
                .as_ref()
                .ok_or(format!("{} has no report", r.variant))?;
            let finite = [rep.bleu, rep.al, rep.hr, rep.accuracy]
                .iter()
                .all(|v| v.is_finite());
            if !finite || rep.sentences != 300 || r.k_test != 1 {
                return Err(format!("{}: {}", r.variant, rep.csv_row()));
            }
            detail.push(format!(
                "{} BLEU {:.2} AL {:.2} HR {:.4}",
                r.variant, rep.bleu, rep.al, rep.hr
            ));
        }
        Ok(detail.join("; "))
    })();
    report(
        8,
        "adjacency, attention and randomization train and report on one config",
        start,
        outcome,
    );
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn criterion_9_identical_runs_are_byte_identical() {
    let start = Instant::now();
    let (first, _) = &paired_runs().glance[0];
    let again = scratch().join("glance-1-again");
    file_run(&glance_config(1), &again);
    let (a, b) = (dir_bytes(first), dir_bytes(&again));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    let outcome = if a == b {
        Ok(format!("{} files identical: {}", a.len(), names.join(", ")))
    } else {
        let differing: Vec<&str> = a
            .iter()
            .zip(&b)
            .filter(|(x, y)| x != y)
            .map(|(x, _)| x.0.as_str())
            .collect();
        Err(format!("differing files {differing:?}"))
    };
    report(
        9,
        "same config and seed reproduce checkpoint, hypotheses and CSVs",
        start,
        outcome,
    );
}
