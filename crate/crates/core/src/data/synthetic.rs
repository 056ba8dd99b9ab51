//! Synthetic parallel tasks with gold alignments.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::SPECIALS;
use super::ParallelPair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    /// `y_i = x_i`.
    Copy,
    /// `y_i = x_{i+delta}`: target step `i` needs source position `i + delta`.
    ShiftedCopy { delta: usize },
    /// Each consecutive window of `window` tokens is reversed.
    ReversalWindow { window: usize },
}

/// How source sentences are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceModel {
    /// Independent uniform tokens.
    #[default]
    Uniform,
    /// First-order Markov chain: every token has `successors` equally likely
    /// follow-up tokens, drawn once per corpus from the seed.
    Markov { successors: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task: TaskKind,
    /// Total vocabulary size including the four reserved ids.
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub pairs: usize,
    pub seed: u64,
    #[serde(default)]
    pub source: SourceModel,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let content = self.vocab_size.saturating_sub(SPECIALS.len());
        if content < 1 {
            return Err(Error::Config(format!(
                "vocab_size {} leaves no content tokens",
                self.vocab_size
            )));
        }
        if self.min_len < 1 || self.max_len < self.min_len {
            return Err(Error::Config(format!(
                "invalid length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        match self.task {
            TaskKind::ShiftedCopy { delta } if delta >= self.min_len => {
                return Err(Error::Config(format!(
                    "shift {delta} must be smaller than the minimum length {}",
                    self.min_len
                )))
            }
            TaskKind::ReversalWindow { window } if window < 1 => {
                return Err(Error::Config("reversal window must be at least 1".into()))
            }
            _ => {}
        }
        if let SourceModel::Markov { successors } = self.source {
            if successors < 1 || successors > content {
                return Err(Error::Config(format!(
                    "Markov successors {successors} outside 1..={content}"
                )));
            }
        }
        Ok(())
    }
}

/// Maps a source sentence to its target and 1-based gold alignment.
pub fn transduce(task: TaskKind, src: &[u32]) -> (Vec<u32>, Vec<usize>) {
    match task {
        TaskKind::Copy => (src.to_vec(), (1..=src.len()).collect()),
        TaskKind::ShiftedCopy { delta } => {
            let align: Vec<usize> = (1 + delta..=src.len()).collect();
            (align.iter().map(|&j| src[j - 1]).collect(), align)
        }
        TaskKind::ReversalWindow { window } => {
            let mut align = Vec::with_capacity(src.len());
            for start in (0..src.len()).step_by(window.max(1)) {
                let end = (start + window).min(src.len());
                align.extend((start + 1..=end).rev());
            }
            (align.iter().map(|&j| src[j - 1]).collect(), align)
        }
    }
}

/// Generates `spec.pairs` pairs; identical specs give identical corpora.
pub fn generate(spec: &TaskSpec) -> Result<Vec<ParallelPair>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let first = SPECIALS.len() as u32;
    let content = (spec.vocab_size - SPECIALS.len()) as u32;
    let successors: Option<Vec<Vec<u32>>> = match spec.source {
        SourceModel::Uniform => None,
        SourceModel::Markov { successors } => {
            let all: Vec<u32> = (0..content).collect();
            Some(
                (0..content)
                    .map(|_| all.choose_multiple(&mut rng, successors).copied().collect())
                    .collect(),
            )
        }
    };
    let mut out = Vec::with_capacity(spec.pairs);
    for _ in 0..spec.pairs {
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let mut src = Vec::with_capacity(len);
        let mut prev: Option<u32> = None;
        for _ in 0..len {
            let tok = match (&successors, prev) {
                (Some(table), Some(p)) => {
                    table[p as usize][rng.gen_range(0..table[p as usize].len())]
                }
                _ => rng.gen_range(0..content),
            };
            prev = Some(tok);
            src.push(first + tok);
        }
        let (tgt, align) = transduce(spec.task, &src);
        out.push(ParallelPair {
            src,
            tgt,
            alignment: Some(align.into_iter().map(Some).collect()),
        });
    }
    Ok(out)
}
