use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HallucinationCount {
    pub hallucinated: usize,
    pub tokens: usize,
}

impl HallucinationCount {
    pub fn rate(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.hallucinated as f64 / self.tokens as f64
        }
    }
}

/// Counts hallucinated output tokens of one sentence.
///
/// Output token `i` is hallucinated when the reference token at step `i` is
/// aligned to a source position beyond `reads_at_write[i]` and the output
/// differs from that reference token. Correct tokens are never counted,
/// nor are steps whose reference token is unaligned. Output tokens past
/// the end of the reference are always counted.
pub fn hallucination_count<T: PartialEq>(
    hyp: &[T],
    reads_at_write: &[usize],
    reference: &[T],
    alignment: &[Option<usize>],
) -> Result<HallucinationCount> {
    if hyp.len() != reads_at_write.len() {
        return Err(Error::InvalidArgument(format!(
            "{} output tokens but {} read counts",
            hyp.len(),
            reads_at_write.len()
        )));
    }
    if alignment.len() != reference.len() {
        return Err(Error::InvalidArgument(format!(
            "{} alignment entries for {} reference tokens",
            alignment.len(),
            reference.len()
        )));
    }
    let mut hallucinated = 0;
    for (i, (h, &g)) in hyp.iter().zip(reads_at_write).enumerate() {
        let unread_and_wrong = match (reference.get(i), alignment.get(i)) {
            (Some(r), Some(Some(j))) => *j > g && h != r,
            (Some(_), _) => false,
            (None, _) => true,
        };
        if unread_and_wrong {
            hallucinated += 1;
        }
    }
    Ok(HallucinationCount {
        hallucinated,
        tokens: hyp.len(),
    })
}

/// One sentence to score: output tokens, reads at each write, reference
/// tokens and the reference alignment.
pub type ScoredSentence<'a, T> = (&'a [T], &'a [usize], &'a [T], Option<&'a [Option<usize>]>);

/// Pools counts over sentences. Every sentence must carry an alignment.
pub fn corpus_hallucination_rate<T: PartialEq>(
    sentences: &[ScoredSentence<'_, T>],
) -> Result<HallucinationCount> {
    let mut total = HallucinationCount::default();
    for (idx, (hyp, reads, reference, alignment)) in sentences.iter().enumerate() {
        let alignment = alignment.ok_or_else(|| {
            Error::Data("hallucination rate needs an alignment".into()).at_sentence(idx)
        })?;
        let c = hallucination_count(hyp, reads, reference, alignment)
            .map_err(|e| e.at_sentence(idx))?;
        total.hallucinated += c.hallucinated;
        total.tokens += c.tokens;
    }
    Ok(total)
}
