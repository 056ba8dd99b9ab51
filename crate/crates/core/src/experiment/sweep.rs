use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, SweepVariant};
use super::plot::{line_chart, Series};
use super::runs::{
    check_vocab, evaluate_params, prepare_data, train_log_csv, train_model, write_file,
    KEvaluation, CHECKPOINT_FILE, TRAIN_LOG_FILE,
};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::model::checkpoint;
use crate::parallel::{with_workers, Execution};

pub const SWEEP_CSV_HEADER: &str =
    "variant,k_test,bleu,al,hr,accuracy,sentences,tokens,config_hash,seed,status";

/// One evaluated (variant, k_test) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub variant: String,
    pub k_test: usize,
    /// `None` when the variant failed to train or evaluate.
    pub report: Option<EvalReport>,
    pub status: String,
}

impl SweepRow {
    pub fn csv(&self) -> String {
        match &self.report {
            Some(r) => format!(
                "{},{},{:.4},{:.4},{:.6},{:.6},{},{},{},{},{}",
                self.variant,
                self.k_test,
                r.bleu,
                r.al,
                r.hr,
                r.accuracy,
                r.sentences,
                r.tokens,
                r.config_hash,
                r.seed,
                self.status
            ),
            None => format!("{},{},,,,,,,,,{}", self.variant, self.k_test, self.status),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub failed_variants: Vec<String>,
    pub csv: PathBuf,
    pub plots: Vec<PathBuf>,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

fn safe_name(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

fn run_cell(
    variant: &SweepVariant,
    base: &ExperimentConfig,
    dir: &Path,
) -> Result<Vec<KEvaluation>> {
    let config = base.with_variant(variant)?;
    let corpora = prepare_data(&config)?;
    let trained = train_model(&config, &corpora, Execution::Parallel)?;
    check_vocab(&trained.meta, &corpora)?;
    let cell_dir = dir.join("cells").join(safe_name(&variant.name));
    write_file(&cell_dir.join(TRAIN_LOG_FILE), train_log_csv(&trained.log))?;
    checkpoint::save(
        &cell_dir.join(CHECKPOINT_FILE),
        &trained.meta,
        &trained.params,
    )?;
    evaluate_params(
        &trained.params,
        &corpora.test.pairs,
        &config.eval.k_test,
        &config.fingerprint(),
        config.seed,
        Execution::Parallel,
    )
}

/// Trains every sweep variant (in a pool of `sweep.workers` threads),
/// evaluates each under all `eval.k_test` values and writes `sweep.csv`
/// plus quality/latency and hallucination/latency plots into `dir`.
/// A failing variant is recorded in its rows and the sweep continues.
pub fn sweep_run(config: &ExperimentConfig, dir: &Path) -> Result<SweepOutcome> {
    let cells = config.sweep.cells();
    if cells.is_empty() {
        return Err(Error::Config(
            "sweep has no variants (set sweep.k_train or sweep.variants)".into(),
        ));
    }
    let workers = if config.sweep.workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        config.sweep.workers
    };
    let results: Vec<Result<Vec<KEvaluation>>> = with_workers(workers, || {
        Execution::Parallel.map(&cells, |_, v| run_cell(v, config, dir))
    });

    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for (v, res) in cells.iter().zip(results) {
        match res {
            Ok(evals) => rows.extend(evals.into_iter().map(|e| SweepRow {
                variant: csv_field(&v.name),
                k_test: e.k_test,
                report: Some(e.report),
                status: "ok".into(),
            })),
            Err(e) => {
                if e.is_config_error() && cells.len() == 1 {
                    return Err(e);
                }
                log::warn!("sweep variant {} failed: {e}", v.name);
                failed.push(v.name.clone());
                rows.extend(config.eval.k_test.iter().map(|&k| SweepRow {
                    variant: csv_field(&v.name),
                    k_test: k,
                    report: None,
                    status: csv_field(&format!("failed: {e}")),
                }));
            }
        }
    }
    let csv = dir.join("sweep.csv");
    write_file(&csv, sweep_csv(&rows))?;
    let mut plots = Vec::new();
    if rows.len() > 1 || config.sweep.force_plot {
        let series = |metric: fn(&EvalReport) -> f64| -> Vec<Series> {
            cells
                .iter()
                .map(|v| Series {
                    name: v.name.clone(),
                    points: rows
                        .iter()
                        .filter(|r| r.variant == csv_field(&v.name))
                        .filter_map(|r| r.report.as_ref().map(|rep| (rep.al, metric(rep))))
                        .collect(),
                })
                .collect()
        };
        let quality = dir.join("bleu_vs_al.svg");
        write_file(
            &quality,
            line_chart("Quality vs latency", "AL", "BLEU", &series(|r| r.bleu)),
        )?;
        let halluc = dir.join("hr_vs_al.svg");
        write_file(
            &halluc,
            line_chart(
                "Hallucination rate vs latency",
                "AL",
                "HR",
                &series(|r| r.hr),
            ),
        )?;
        plots = vec![quality, halluc];
    }
    Ok(SweepOutcome {
        rows,
        failed_variants: failed,
        csv,
        plots,
    })
}
