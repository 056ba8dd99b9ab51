use std::fmt;

use super::bleu::corpus_bleu;
use super::hallucination::{corpus_hallucination_rate, ScoredSentence};
use super::latency::corpus_average_lagging;
use crate::data::ParallelPair;
use crate::decode::TranslationTrace;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "bleu,al,hr,sentences,tokens,config_hash,seed";

/// Scores of one decoding run over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Corpus BLEU-4 in percent.
    pub bleu: f64,
    /// Mean Average Lagging in source tokens.
    pub al: f64,
    /// Hallucination rate in `[0, 1]`.
    pub hr: f64,
    /// Position-wise token accuracy against the references.
    pub accuracy: f64,
    pub sentences: usize,
    /// Output tokens produced.
    pub tokens: usize,
    /// Sentences without output (left out of AL).
    pub empty_outputs: usize,
    pub config_hash: String,
    pub seed: u64,
}

impl EvalReport {
    /// Values in [`CSV_HEADER`] order.
    pub fn csv_row(&self) -> String {
        format!(
            "{:.4},{:.4},{:.6},{},{},{},{}",
            self.bleu, self.al, self.hr, self.sentences, self.tokens, self.config_hash, self.seed
        )
    }

    pub fn to_csv(reports: &[EvalReport]) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in reports {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BLEU        {:.2}", self.bleu)?;
        writeln!(f, "AL          {:.3}", self.al)?;
        writeln!(f, "HR          {:.4}", self.hr)?;
        writeln!(f, "accuracy    {:.4}", self.accuracy)?;
        writeln!(f, "sentences   {}", self.sentences)?;
        writeln!(f, "tokens      {}", self.tokens)?;
        if self.empty_outputs > 0 {
            writeln!(f, "empty       {}", self.empty_outputs)?;
        }
        writeln!(f, "config      {}", self.config_hash)?;
        writeln!(f, "seed        {}", self.seed)
    }
}

/// `sum_i [hyp_i == ref_i] / sum max(|hyp|, |ref|)` over the corpus; 1 when
/// every sentence is empty on both sides.
pub fn token_accuracy<T: PartialEq>(pairs: &[(&[T], &[T])]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (h, r) in pairs {
        hits += h.iter().zip(r.iter()).filter(|(a, b)| a == b).count();
        total += h.len().max(r.len());
    }
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}

/// Scores traces against the reference side of `pairs`.
pub fn evaluate_traces(
    traces: &[TranslationTrace],
    pairs: &[ParallelPair],
    config_hash: &str,
    seed: u64,
) -> Result<EvalReport> {
    if traces.len() != pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} traces for {} sentences",
            traces.len(),
            pairs.len()
        )));
    }
    if let Some(i) = traces
        .iter()
        .zip(pairs)
        .position(|(t, p)| t.src_len != p.src.len())
    {
        return Err(Error::InvalidArgument(format!(
            "trace {i} covers {} source tokens, sentence has {}",
            traces[i].src_len,
            pairs[i].src.len()
        )));
    }
    let hyps: Vec<Vec<u32>> = traces.iter().map(|t| t.output.clone()).collect();
    let refs: Vec<Vec<u32>> = pairs.iter().map(|p| p.tgt.clone()).collect();
    let (bleu, al, empty_outputs, hr, accuracy) = if pairs.is_empty() {
        (0.0, 0.0, 0, 0.0, 1.0)
    } else {
        let bleu = corpus_bleu(&hyps, &refs, 4)?;
        let lag: Vec<(&[usize], usize)> = traces
            .iter()
            .map(|t| (t.reads_at_write.as_slice(), t.src_len))
            .collect();
        let (al, empty) = corpus_average_lagging(&lag)?;
        let hall: Vec<ScoredSentence<u32>> = traces
            .iter()
            .zip(pairs)
            .map(|(t, p)| {
                (
                    t.output.as_slice(),
                    t.reads_at_write.as_slice(),
                    p.tgt.as_slice(),
                    p.alignment.as_deref(),
                )
            })
            .collect();
        let hr = corpus_hallucination_rate(&hall)?.rate();
        let acc: Vec<(&[u32], &[u32])> = hyps
            .iter()
            .zip(&refs)
            .map(|(h, r)| (h.as_slice(), r.as_slice()))
            .collect();
        (bleu, al, empty, hr, token_accuracy(&acc))
    };
    Ok(EvalReport {
        bleu,
        al,
        hr,
        accuracy,
        sentences: pairs.len(),
        tokens: hyps.iter().map(Vec::len).sum(),
        empty_outputs,
        config_hash: config_hash.to_string(),
        seed,
    })
}
