use crate::error::{Error, Result};

/// Average Lagging of one sentence:
/// `AL = 1/tau * sum_{i=1..tau} (g_i - (i-1)/gamma)` with `gamma = I/J` and
/// `tau` the first step whose read count reaches `J` (or `I` if none does).
/// `reads_at_write` holds `g_i` for each output token and `I` is its length.
pub fn average_lagging(reads_at_write: &[usize], src_len: usize) -> Result<f64> {
    let tgt_len = reads_at_write.len();
    if tgt_len == 0 {
        return Err(Error::InvalidArgument(
            "average lagging of an empty trace".into(),
        ));
    }
    if src_len == 0 {
        return Err(Error::InvalidArgument(
            "average lagging with an empty source".into(),
        ));
    }
    if let Some(&g) = reads_at_write.iter().find(|&&g| g > src_len) {
        return Err(Error::InvalidArgument(format!(
            "trace reads {g} tokens of a {src_len}-token source"
        )));
    }
    let gamma = tgt_len as f64 / src_len as f64;
    let tau = reads_at_write
        .iter()
        .position(|&g| g == src_len)
        .map_or(tgt_len, |p| p + 1);
    let sum: f64 = reads_at_write[..tau]
        .iter()
        .enumerate()
        .map(|(i, &g)| g as f64 - i as f64 / gamma)
        .sum();
    Ok(sum / tau as f64)
}

/// Mean sentence AL over the sentences that produced output, and the number
/// of sentences skipped because they produced none.
pub fn corpus_average_lagging(traces: &[(&[usize], usize)]) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut counted = 0;
    for (reads, src_len) in traces {
        if reads.is_empty() {
            continue;
        }
        total += average_lagging(reads, *src_len)?;
        counted += 1;
    }
    let skipped = traces.len() - counted;
    if counted == 0 {
        return Ok((0.0, skipped));
    }
    Ok((total / counted as f64, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wait_k(k: usize, len: usize) -> Vec<usize> {
        (1..=len).map(|i| (k + i - 1).min(len)).collect()
    }

    #[test]
    fn wait_k_equal_lengths_is_k() {
        for k in 1..=5 {
            assert_eq!(average_lagging(&wait_k(k, 9), 9).unwrap(), k as f64);
        }
    }

    #[test]
    fn full_sentence_is_src_len() {
        assert_eq!(average_lagging(&[6; 6], 6).unwrap(), 6.0);
    }

    #[test]
    fn unfinished_source_uses_all_steps() {
        // J = 4, I = 2: gamma = 0.5, tau = 2, terms 1 and 2 - 2 = 0
        assert_eq!(average_lagging(&[1, 2], 4).unwrap(), 0.5);
    }

    #[test]
    fn errors_and_corpus_mean() {
        assert!(average_lagging(&[], 3).is_err());
        assert!(average_lagging(&[4], 3).is_err());
        let a = wait_k(2, 5);
        let (al, skipped) = corpus_average_lagging(&[(&a, 5), (&[], 3)]).unwrap();
        assert_eq!((al, skipped), (2.0, 1));
    }
}
