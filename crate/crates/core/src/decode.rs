//! Streaming greedy decoding under a READ/WRITE policy.
//!
//! Before writing target step `i` the decoder has read exactly
//! `min(g_i, J)` source tokens. The model only ever sees the read prefix, so
//! tokens beyond it cannot influence the output. Each earlier target step
//! keeps the read count it was written with, matching the training masks.

use std::fmt;
use std::str::FromStr;

use crate::data::{Vocab, BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::masking::MaskSet;
use crate::model::{forward, ModelParams};
use crate::parallel::Execution;
use crate::policy::ReadSchedule;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Read,
    Write(u32),
}

/// Record of one streaming translation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationTrace {
    pub actions: Vec<Action>,
    /// Source tokens read when each output token was written.
    pub reads_at_write: Vec<usize>,
    pub src_len: usize,
    /// Output tokens, without the end-of-sentence marker.
    pub output: Vec<u32>,
    /// Set when the length limit was hit before end-of-sentence.
    pub truncated: bool,
}

impl TranslationTrace {
    pub fn reads(&self) -> usize {
        self.actions.iter().filter(|a| **a == Action::Read).count()
    }

    pub fn line(&self) -> TraceLine {
        TraceLine {
            actions: self
                .actions
                .iter()
                .map(|a| match a {
                    Action::Read => 'R',
                    Action::Write(_) => 'W',
                })
                .collect(),
            reads_at_write: self.reads_at_write.clone(),
        }
    }
}

/// Text form of a trace: the action string followed by the read count of
/// every write, separated by spaces (`RRWRW 2 3`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLine {
    pub actions: String,
    pub reads_at_write: Vec<usize>,
}

impl fmt::Display for TraceLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.actions.is_empty() {
            write!(f, "-")?;
        } else {
            write!(f, "{}", self.actions)?;
        }
        for r in &self.reads_at_write {
            write!(f, " {r}")?;
        }
        Ok(())
    }
}

impl FromStr for TraceLine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let actions = match parts.next() {
            Some("-") | None => String::new(),
            Some(a) => a.to_string(),
        };
        if let Some(c) = actions.chars().find(|c| *c != 'R' && *c != 'W') {
            return Err(Error::Data(format!("unknown action {c:?} in trace")));
        }
        let reads_at_write = parts
            .map(|p| {
                p.parse()
                    .map_err(|_| Error::Data(format!("bad read count {p:?} in trace")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let writes = actions.chars().filter(|&c| c == 'W').count();
        if writes != reads_at_write.len() {
            return Err(Error::Data(format!(
                "trace has {writes} writes but {} read counts",
                reads_at_write.len()
            )));
        }
        let mut read = 0;
        let mut w = 0;
        for c in actions.chars() {
            if c == 'R' {
                read += 1;
            } else {
                if reads_at_write[w] != read {
                    return Err(Error::Data(format!(
                        "write {} records {} reads but {read} happened",
                        w + 1,
                        reads_at_write[w]
                    )));
                }
                w += 1;
            }
        }
        Ok(Self {
            actions,
            reads_at_write,
        })
    }
}

/// Default output length limit for a source of `src_len` tokens.
pub fn default_max_len(src_len: usize) -> usize {
    2 * src_len + 10
}

/// Highest-scoring token other than padding and begin-of-sentence; ties go
/// to the lower id.
fn argmax<T: Real>(row: &[T]) -> u32 {
    let mut best = EOS as usize;
    for (j, &v) in row.iter().enumerate() {
        if j == PAD as usize || j == BOS as usize {
            continue;
        }
        if v > row[best] {
            best = j;
        }
    }
    best as u32
}

/// Greedy streaming decode of one source sentence.
pub fn stream_decode<T: Real>(
    params: &ModelParams<T>,
    src: &[u32],
    policy: &dyn ReadSchedule,
    max_len: usize,
) -> Result<TranslationTrace> {
    let src_len = src.len();
    if src_len == 0 {
        return Err(Error::InvalidArgument("empty source sentence".into()));
    }
    let mut actions = Vec::new();
    let mut reads_at_write: Vec<usize> = Vec::new();
    let mut output: Vec<u32> = Vec::new();
    let mut tgt_in = vec![BOS];
    let mut read = 0;
    let mut truncated = true;
    for step in 1..=max_len + 1 {
        let want = policy
            .reads_before(step, src_len)
            .clamp(1, src_len)
            .max(read);
        while read < want {
            actions.push(Action::Read);
            read += 1;
        }
        let mut rows = reads_at_write.clone();
        rows.push(read);
        let masks = MaskSet::from_prefix_reads(&rows, read)?;
        let log_probs = forward(params, &src[..read], &tgt_in, &masks)?;
        let tok = argmax(log_probs.row(step - 1));
        if tok == EOS {
            truncated = false;
            break;
        }
        if step > max_len {
            break;
        }
        actions.push(Action::Write(tok));
        reads_at_write.push(read);
        output.push(tok);
        tgt_in.push(tok);
    }
    Ok(TranslationTrace {
        actions,
        reads_at_write,
        src_len,
        output,
        truncated,
    })
}

/// Decodes every source sentence; output order follows input order.
pub fn batch_decode<T: Real>(
    params: &ModelParams<T>,
    sources: &[Vec<u32>],
    policy: &dyn ReadSchedule,
    max_len: fn(usize) -> usize,
    execution: Execution,
) -> Result<Vec<TranslationTrace>> {
    execution.try_map(sources, |idx, src| {
        stream_decode(params, src, policy, max_len(src.len())).map_err(|e| e.at_sentence(idx))
    })
}

/// One detokenized hypothesis per line.
pub fn hypotheses_text(traces: &[TranslationTrace], vocab: &Vocab) -> String {
    traces
        .iter()
        .map(|t| vocab.detokenize(&t.output) + "\n")
        .collect()
}

/// One trace line per sentence.
pub fn traces_text(traces: &[TranslationTrace]) -> String {
    traces.iter().map(|t| format!("{}\n", t.line())).collect()
}
