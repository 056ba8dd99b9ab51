//! `simt`: generate corpora, train, evaluate and sweep simultaneous
//! translation experiments described by a JSON config file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simt_core::experiment::{
    eval_text, evaluate_run, generate_run, output_root, sweep_run, train_run, ExperimentConfig,
};
use simt_core::model::checkpoint;
use simt_core::parallel::Execution;
use simt_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "simt", version, about = "Simultaneous translation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Override a config value, e.g. `--set curriculum.alpha_min=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (default: $SIMT_OUTPUT_ROOT/<run name>).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Run per-sentence work on one thread.
    #[arg(long)]
    sequential: bool,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        ExperimentConfig::load(&self.config, &self.overrides)
    }

    fn out_dir(&self, config: &ExperimentConfig, suffix: Option<&str>) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            let dir = output_root().join(config.run_name());
            match suffix {
                Some(s) => dir.join(s),
                None => dir,
            }
        })
    }

    fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the train/test corpora of a config as text files.
    Generate(ConfigArgs),
    /// Train a model and write its checkpoint and training log.
    Train(ConfigArgs),
    /// Decode the test corpus under every eval.k_test and score it.
    Evaluate {
        #[command(flatten)]
        args: ConfigArgs,
        /// Checkpoint to evaluate (default: checkpoint.bin in the output directory).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate every sweep variant; write a combined CSV and plots.
    Sweep(ConfigArgs),
    /// Print parameter names, shapes and norms of a checkpoint.
    DumpParams {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    if e.is_config_error() {
        ExitCode::from(EXIT_CONFIG)
    } else {
        ExitCode::from(EXIT_RUNTIME)
    }
}

/// Errors reading the config file itself count as configuration errors.
fn load_or_exit(args: &ConfigArgs) -> Result<ExperimentConfig, ExitCode> {
    args.load().map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn run(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Generate(args) => {
            let config = match load_or_exit(&args) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let dir = args.out_dir(&config, Some("data"));
            match generate_run(&config, &dir) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Train(args) => {
            let config = match load_or_exit(&args) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let dir = args.out_dir(&config, None);
            match train_run(&config, &dir, args.execution()) {
                Ok(out) => {
                    println!("checkpoint {}", out.checkpoint.display());
                    println!("log {}", out.log.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Evaluate { args, checkpoint } => {
            let config = match load_or_exit(&args) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let dir = args.out_dir(&config, None);
            let ckpt =
                checkpoint.unwrap_or_else(|| dir.join(simt_core::experiment::CHECKPOINT_FILE));
            match evaluate_run(&ckpt, &config, &dir, args.execution()) {
                Ok(results) => {
                    print!("{}", eval_text(&config, &results));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Sweep(args) => {
            let config = match load_or_exit(&args) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let dir = args.out_dir(&config, None);
            match sweep_run(&config, &dir) {
                Ok(outcome) => {
                    println!("{}", outcome.csv.display());
                    for p in &outcome.plots {
                        println!("{}", p.display());
                    }
                    if outcome.failed_variants.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        eprintln!("failed variants: {}", outcome.failed_variants.join(", "));
                        ExitCode::from(EXIT_PARTIAL)
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::DumpParams { checkpoint: path } => dump(&path),
    }
}

fn dump(path: &Path) -> ExitCode {
    match checkpoint::load::<f32>(path) {
        Ok(c) => {
            println!("updates\t{}", c.meta.updates);
            println!("seed\t{}", c.meta.seed);
            println!("config_hash\t{}", c.meta.fingerprint);
            print!("{}", checkpoint::summary(&c.params));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            ExitCode::from(code)
        }
    }
}
