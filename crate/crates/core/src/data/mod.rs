//! Parallel data: synthetic generators, corpus files, vocabularies and batching.

mod batch;
mod corpus;
pub mod synthetic;
pub mod vocab;

pub use batch::{make_batches, Batch};
pub use corpus::{
    export_corpus, load_corpus, load_corpus_with_vocab, parse_alignment_line, read_lines, Corpus,
    CorpusFiles,
};
pub use synthetic::{generate, SourceModel, TaskKind, TaskSpec};
pub use vocab::{Vocab, BOS, EOS, PAD, UNK};

use crate::error::{Error, Result};

/// One sentence pair with token ids and an optional word alignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelPair {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
    /// For each target token, the 1-based source position it depends on, if any.
    pub alignment: Option<Vec<Option<usize>>>,
}

impl ParallelPair {
    pub fn validate(&self, src_vocab: usize, tgt_vocab: usize) -> Result<()> {
        if self.src.is_empty() {
            return Err(Error::Data("empty source sentence".into()));
        }
        if let Some(&t) = self.src.iter().find(|&&t| t as usize >= src_vocab) {
            return Err(Error::Data(format!("source id {t} outside vocabulary")));
        }
        if let Some(&t) = self.tgt.iter().find(|&&t| t as usize >= tgt_vocab) {
            return Err(Error::Data(format!("target id {t} outside vocabulary")));
        }
        if let Some(align) = &self.alignment {
            if align.len() != self.tgt.len() {
                return Err(Error::Data(format!(
                    "{} alignment entries for {} target tokens",
                    align.len(),
                    self.tgt.len()
                )));
            }
            if let Some(j) = align
                .iter()
                .flatten()
                .find(|&&j| j < 1 || j > self.src.len())
            {
                return Err(Error::Data(format!(
                    "alignment to source position {j} outside 1..={}",
                    self.src.len()
                )));
            }
        }
        Ok(())
    }

    /// Decoder input: `<s> y_1 .. y_I`.
    pub fn decoder_input(&self) -> Vec<u32> {
        std::iter::once(BOS)
            .chain(self.tgt.iter().copied())
            .collect()
    }

    /// Decoder output: `y_1 .. y_I </s>`.
    pub fn decoder_output(&self) -> Vec<u32> {
        self.tgt
            .iter()
            .copied()
            .chain(std::iter::once(EOS))
            .collect()
    }

    /// Number of predicted tokens (target plus end-of-sentence).
    pub fn steps(&self) -> usize {
        self.tgt.len() + 1
    }
}
