//! Experiment configuration files, training/evaluation runs, sweeps and plots.

mod config;
pub mod plot;
mod runs;
mod sweep;

pub use config::{
    apply_override, fingerprint_of, CorpusPaths, CurriculumConfig, DataConfig, EvalConfig,
    ExperimentConfig, SweepConfig, SweepVariant,
};
pub use runs::{
    check_vocab, eval_text, evaluate_params, evaluate_run, generate_run, model_config, output_root,
    prepare_data, resolved_config_json, train_log_csv, train_model, train_run, Corpora,
    KEvaluation, LogRow, TrainOutputs, TrainedModel, CHECKPOINT_FILE, CONFIG_FILE, EVAL_CSV_FILE,
    EVAL_TEXT_FILE, OUTPUT_ROOT_ENV, TRAIN_LOG_FILE, TRAIN_LOG_HEADER,
};
pub use sweep::{sweep_csv, sweep_run, SweepOutcome, SweepRow, SWEEP_CSV_HEADER};
