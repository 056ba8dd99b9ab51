use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::curriculum::{AlphaMode, CurriculumSchedule, GlanceStrategy};
use crate::data::{SourceModel, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::model::train::TrainConfig;
use crate::model::ModelConfig;
use crate::policy::PolicySpec;

/// Glance-ratio schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub alpha_min: f64,
    pub decay_updates: u64,
    pub glance_strategy: GlanceStrategy,
    /// Keep the glance ratio at `alpha_min` instead of decaying from 1.
    pub constant_alpha: bool,
    /// Seed of the randomized strategy; defaults to the experiment seed.
    pub glance_seed: Option<u64>,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            alpha_min: 0.05,
            decay_updates: 160_000,
            glance_strategy: GlanceStrategy::Adjacency,
            constant_alpha: false,
            glance_seed: None,
        }
    }
}

impl CurriculumConfig {
    pub fn schedule(&self, seed: u64) -> Result<CurriculumSchedule> {
        let mode = if self.constant_alpha {
            AlphaMode::Constant
        } else {
            AlphaMode::Decay
        };
        CurriculumSchedule::new(
            self.alpha_min,
            self.decay_updates,
            self.glance_strategy,
            mode,
            self.glance_seed.unwrap_or(seed),
        )
        .map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub src: PathBuf,
    pub tgt: PathBuf,
    #[serde(default)]
    pub align: Option<PathBuf>,
}

/// Where the parallel data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        task: TaskKind,
        /// Total vocabulary size including reserved ids.
        vocab_size: usize,
        min_len: usize,
        max_len: usize,
        train_pairs: usize,
        test_pairs: usize,
        #[serde(default)]
        source: SourceModel,
        /// Seed of the generated corpora; defaults to the experiment seed.
        #[serde(default)]
        data_seed: Option<u64>,
    },
    Files {
        train: CorpusPaths,
        test: CorpusPaths,
        #[serde(default = "default_min_freq")]
        min_freq: usize,
    },
}

fn default_min_freq() -> usize {
    5
}

impl DataConfig {
    /// Task spec generating the training pairs followed by the test pairs
    /// of a synthetic configuration (one generator, so both halves share
    /// the source model), and the number of training pairs.
    pub fn task_spec(&self, seed: u64) -> Option<(TaskSpec, usize)> {
        match self {
            DataConfig::Synthetic {
                task,
                vocab_size,
                min_len,
                max_len,
                train_pairs,
                test_pairs,
                source,
                data_seed,
            } => Some((
                TaskSpec {
                    task: *task,
                    vocab_size: *vocab_size,
                    min_len: *min_len,
                    max_len: *max_len,
                    pairs: train_pairs + test_pairs,
                    seed: data_seed.unwrap_or(seed),
                    source: *source,
                },
                *train_pairs,
            )),
            DataConfig::Files { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k_test: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_test: vec![1, 3, 5, 7, 9],
        }
    }
}

/// One sweep variant: a name and config overrides relative to the base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepVariant {
    pub name: String,
    #[serde(default)]
    pub set: serde_json::Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Shorthand for wait-k variants `k_train=<k>`.
    pub k_train: Vec<usize>,
    pub variants: Vec<SweepVariant>,
    /// Concurrent training cells; 0 picks the number of CPUs.
    pub workers: usize,
    /// Emit plots even for a single-row sweep.
    pub force_plot: bool,
}

impl SweepConfig {
    /// All variants, `k_train` shorthand first.
    pub fn cells(&self) -> Vec<SweepVariant> {
        let mut out: Vec<SweepVariant> = self
            .k_train
            .iter()
            .map(|&k| {
                let mut set = serde_json::Map::new();
                set.insert(
                    "policy".into(),
                    serde_json::json!({"kind": "wait_k", "k": k}),
                );
                SweepVariant {
                    name: format!("k_train={k}"),
                    set,
                }
            })
            .collect();
        out.extend(self.variants.iter().cloned());
        out
    }
}

/// Complete description of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional run name; defaults to `run-<fingerprint>`.
    #[serde(default)]
    pub name: Option<String>,
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "default_policy")]
    pub policy: PolicySpec,
    #[serde(default)]
    pub curriculum: CurriculumConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_policy() -> PolicySpec {
    PolicySpec::WaitK { k: 1 }
}

impl ExperimentConfig {
    /// Parses a config from JSON text, applying `key.path=value` overrides.
    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let config: Self =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json_str(&text, overrides)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        config.check_files()?;
        Ok(config)
    }

    /// Makes relative corpus paths relative to the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        if let DataConfig::Files { train, test, .. } = &mut self.data {
            for c in [train, test] {
                for p in [&mut c.src, &mut c.tgt] {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
                if let Some(a) = &mut c.align {
                    if a.is_relative() {
                        *a = base.join(&*a);
                    }
                }
            }
        }
    }

    /// Every referenced corpus file must exist.
    pub fn check_files(&self) -> Result<()> {
        if let DataConfig::Files { train, test, .. } = &self.data {
            for c in [train, test] {
                for p in [Some(&c.src), Some(&c.tgt), c.align.as_ref()]
                    .into_iter()
                    .flatten()
                {
                    if !p.is_file() {
                        return Err(Error::Config(format!(
                            "missing corpus file {}",
                            p.display()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.policy
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.curriculum.schedule(self.seed)?;
        self.training.validate()?;
        if let Some((train, _)) = self.data.task_spec(self.seed) {
            train.validate()?;
            if self.model.src_vocab != train.vocab_size || self.model.tgt_vocab != train.vocab_size
            {
                return Err(Error::Config(format!(
                    "model vocab sizes {}/{} differ from data.vocab_size {}",
                    self.model.src_vocab, self.model.tgt_vocab, train.vocab_size
                )));
            }
        }
        self.model.validate()?;
        if self.eval.k_test.contains(&0) {
            return Err(Error::Config(
                "eval.k_test entries must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Canonical JSON (sorted keys) of the resolved config.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    /// Stable 16-hex-digit hash of the canonical config.
    pub fn fingerprint(&self) -> String {
        fingerprint_of(&self.canonical_json())
    }

    pub fn run_name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("run-{}", self.fingerprint()))
    }

    /// Config with sweep-variant overrides applied (and the sweep section dropped).
    pub fn with_variant(&self, variant: &SweepVariant) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        for (k, v) in &variant.set {
            set_path(&mut value, k, v.clone())?;
        }
        let mut out = Self::from_value(value)?;
        out.sweep = SweepConfig::default();
        out.name = Some(variant.name.clone());
        Ok(out)
    }
}

pub fn fingerprint_of(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn set_path(root: &mut Value, path: &str, v: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {path:?}")));
    }
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| {
            Error::Config(format!(
                "override {path:?}: {part:?} is not inside an object"
            ))
        })?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), v);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Applies `key.path=value`; the value is parsed as JSON when possible and
/// taken as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    set_path(root, key.trim(), v)
}
