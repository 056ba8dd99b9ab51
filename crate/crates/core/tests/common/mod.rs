//! Random tiny models and policy instances shared by integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simt_core::curriculum::{AdjustedPolicy, AlphaMode, CurriculumSchedule, GlanceStrategy};
use simt_core::data::BOS;
use simt_core::masking::{build_masks, MaskSet};
use simt_core::model::{ModelConfig, ModelParams};
use simt_core::policy::wait_k_policy;

pub const VOCAB: usize = 12;

pub fn tiny_config(d_model: usize, layers: usize) -> ModelConfig {
    ModelConfig {
        src_vocab: VOCAB,
        tgt_vocab: VOCAB,
        d_model,
        n_heads: 2,
        n_enc_layers: layers,
        n_dec_layers: layers,
        d_ff: 2 * d_model,
        dropout: 0.0,
        label_smoothing: 0.1,
        max_positions: 32,
    }
}

pub struct Instance {
    pub params: ModelParams<f64>,
    pub src: Vec<u32>,
    pub tgt_in: Vec<u32>,
    pub adjusted: AdjustedPolicy,
    pub masks: MaskSet,
}

impl Instance {
    /// 1-based readable source positions of every target step.
    pub fn readable(&self) -> Vec<Vec<usize>> {
        (1..=self.tgt_in.len())
            .map(|s| self.adjusted.readable(s).collect())
            .collect()
    }
}

pub fn random_tokens(rng: &mut ChaCha8Rng, len: usize) -> Vec<u32> {
    (0..len).map(|_| rng.gen_range(4..VOCAB as u32)).collect()
}

/// A random model, sentence pair and glance-adjusted wait-k policy with at
/// most six source and six target steps. `strategy` fixes the glance
/// strategy; otherwise one is drawn.
pub fn random_instance(seed: u64, strategy: Option<GlanceStrategy>) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_model = if rng.gen_bool(0.5) { 8 } else { 16 };
    let layers = rng.gen_range(1..=2);
    let params = ModelParams::init(&tiny_config(d_model, layers), rng.gen());
    let src_len = rng.gen_range(1..=6);
    let steps = rng.gen_range(1..=6);
    let src = random_tokens(&mut rng, src_len);
    let mut tgt_in = vec![BOS];
    tgt_in.extend(random_tokens(&mut rng, steps - 1));
    let strategy = strategy.unwrap_or_else(|| {
        [
            GlanceStrategy::Adjacency,
            GlanceStrategy::Attention,
            GlanceStrategy::Randomization,
        ][rng.gen_range(0..3)]
    });
    let alpha = [0.0, 0.25, 0.5, 1.0, rng.gen::<f64>()][rng.gen_range(0..5)];
    let weights: Vec<Vec<f64>> = (0..steps)
        .map(|_| (0..src_len).map(|_| rng.gen()).collect())
        .collect();
    let k = rng.gen_range(1..=4);
    let base = wait_k_policy(k, steps, src_len).unwrap();
    let mut schedule =
        CurriculumSchedule::new(0.0, 1, strategy, AlphaMode::Decay, rng.gen()).unwrap();
    let adjusted = schedule
        .adjust_with_alpha(&base, alpha, Some(&weights))
        .unwrap();
    let masks = build_masks(&adjusted, src_len, steps, (src_len, steps)).unwrap();
    Instance {
        params,
        src,
        tgt_in,
        adjusted,
        masks,
    }
}
