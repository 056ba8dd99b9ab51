use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ParallelPair;
use crate::error::{Error, Result};

/// A group of sentence pairs (by index into the corpus) and their padded lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    /// Longest source sentence.
    pub src_len: usize,
    /// Longest decoder sequence (target plus one).
    pub tgt_len: usize,
}

impl Batch {
    /// Padded token cost of the batch.
    pub fn padded_tokens(&self) -> usize {
        self.indices.len() * (self.src_len + self.tgt_len)
    }

    pub fn pairs<'a>(&self, corpus: &'a [ParallelPair]) -> Vec<&'a ParallelPair> {
        self.indices.iter().map(|&i| &corpus[i]).collect()
    }

    /// Source ids of every pair padded with `pad` to the batch length.
    pub fn padded_sources(&self, corpus: &[ParallelPair], pad: u32) -> Vec<Vec<u32>> {
        self.indices
            .iter()
            .map(|&i| {
                let mut s = corpus[i].src.clone();
                s.resize(self.src_len, pad);
                s
            })
            .collect()
    }
}

fn cost(p: &ParallelPair) -> usize {
    p.src.len() + p.steps()
}

/// Splits the corpus into length-bucketed batches whose padded size stays
/// within `max_tokens`, then shuffles the batch order with `seed`. Every pair
/// appears in exactly one batch.
pub fn make_batches(pairs: &[ParallelPair], max_tokens: usize, seed: u64) -> Result<Vec<Batch>> {
    if pairs.is_empty() {
        return Err(Error::Data("cannot batch an empty corpus".into()));
    }
    if let Some((i, p)) = pairs.iter().enumerate().find(|(_, p)| cost(p) > max_tokens) {
        return Err(Error::Data(format!(
            "pair {i} needs {} tokens, over the batch budget of {max_tokens}",
            cost(p)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tiebreak: Vec<u64> = (0..pairs.len()).map(|_| rng.gen()).collect();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by_key(|&i| (pairs[i].src.len(), pairs[i].tgt.len(), tiebreak[i]));

    let mut batches = Vec::new();
    let mut current = Batch {
        indices: Vec::new(),
        src_len: 0,
        tgt_len: 0,
    };
    for i in order {
        let p = &pairs[i];
        let src_len = current.src_len.max(p.src.len());
        let tgt_len = current.tgt_len.max(p.steps());
        if !current.indices.is_empty()
            && (current.indices.len() + 1) * (src_len + tgt_len) > max_tokens
        {
            batches.push(std::mem::replace(
                &mut current,
                Batch {
                    indices: Vec::new(),
                    src_len: 0,
                    tgt_len: 0,
                },
            ));
        }
        current.src_len = current.src_len.max(p.src.len());
        current.tgt_len = current.tgt_len.max(p.steps());
        current.indices.push(i);
    }
    batches.push(current);
    batches.shuffle(&mut rng);
    Ok(batches)
}
