use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Sufficient statistics of corpus BLEU.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BleuStats {
    /// Clipped n-gram matches for n = 1..=max_n.
    pub matches: Vec<usize>,
    /// Hypothesis n-gram counts for n = 1..=max_n.
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    /// BLEU in percent: geometric mean of the modified n-gram precisions
    /// times the brevity penalty. A zero precision for n >= 2 is replaced by
    /// add-one smoothing `(m + 1) / (t + 1)`; a zero unigram precision gives 0.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.is_empty() || self.matches[0] == 0 {
            return 0.0;
        }
        let n = self.matches.len();
        let mut log_sum = 0.0;
        for i in 0..n {
            let (m, t) = (self.matches[i] as f64, self.totals[i] as f64);
            let p = if i > 0 && self.matches[i] == 0 {
                (m + 1.0) / (t + 1.0)
            } else {
                m / t
            };
            log_sum += p.ln();
        }
        let bp = if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        (100.0 * bp * (log_sum / n as f64).exp()).clamp(0.0, 100.0)
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_default() += 1;
        }
    }
    m
}

/// Collects BLEU statistics over sentence pairs (single reference each).
pub fn bleu_stats<T: Eq + Hash>(
    hyps: &[Vec<T>],
    refs: &[Vec<T>],
    max_n: usize,
) -> Result<BleuStats> {
    if hyps.len() != refs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} hypotheses for {} references",
            hyps.len(),
            refs.len()
        )));
    }
    if hyps.is_empty() {
        return Err(Error::InvalidArgument("BLEU of an empty corpus".into()));
    }
    if max_n == 0 {
        return Err(Error::InvalidArgument(
            "BLEU order must be at least 1".into(),
        ));
    }
    let mut s = BleuStats {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        ..BleuStats::default()
    };
    for (h, r) in hyps.iter().zip(refs) {
        s.hyp_len += h.len();
        s.ref_len += r.len();
        for n in 1..=max_n {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            for (g, &c) in &hc {
                s.matches[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
            }
            s.totals[n - 1] += h.len().saturating_sub(n - 1);
        }
    }
    Ok(s)
}

/// Corpus-level BLEU in percent.
pub fn corpus_bleu<T: Eq + Hash>(hyps: &[Vec<T>], refs: &[Vec<T>], max_n: usize) -> Result<f64> {
    bleu_stats(hyps, refs, max_n).map(|s| s.score())
}
