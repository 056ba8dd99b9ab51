//! Glancing-future curriculum.
//!
//! During training each target step may read `f_i` source tokens beyond its
//! policy limit `g_i`. The share of the unread suffix that is exposed, the
//! glance ratio `alpha`, decays linearly from 1 to `alpha_min` over
//! `decay_updates` optimizer updates:
//!
//! ```text
//! alpha = alpha_min + (1 - alpha_min) * max(1 - n_update / d, 0)
//! f_i   = floor((J - g_i) * alpha)
//! ĝ_i   = g_i + f_i
//! ```

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyVector;

/// Slack added before flooring `(J - g) * alpha` so products that are
/// mathematically integral are not rounded down by representation error.
const FLOOR_SLACK: f64 = 1e-9;

/// How the extra `f_i` future positions are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GlanceStrategy {
    /// The `f_i` positions right after the policy prefix.
    #[default]
    Adjacency,
    /// The `f_i` unread positions with the highest cross-attention weight.
    Attention,
    /// `f_i` unread positions sampled uniformly without replacement.
    Randomization,
}

impl GlanceStrategy {
    pub fn name(self) -> &'static str {
        match self {
            GlanceStrategy::Adjacency => "adjacency",
            GlanceStrategy::Attention => "attention",
            GlanceStrategy::Randomization => "randomization",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// Linear decay from 1 to `alpha_min`.
    #[default]
    Decay,
    /// `alpha_min` at every update: no curriculum. With `alpha_min = 0`
    /// this is plain prefix-to-prefix training.
    Constant,
}

#[derive(Debug, Clone)]
pub struct CurriculumSchedule {
    alpha_min: f64,
    decay_updates: u64,
    strategy: GlanceStrategy,
    mode: AlphaMode,
    seed: u64,
    rng: ChaCha8Rng,
}

impl CurriculumSchedule {
    pub fn new(
        alpha_min: f64,
        decay_updates: u64,
        strategy: GlanceStrategy,
        mode: AlphaMode,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha_min) {
            return Err(Error::InvalidArgument(format!(
                "alpha_min must lie in [0, 1], got {alpha_min}"
            )));
        }
        if decay_updates < 1 {
            return Err(Error::InvalidArgument(
                "decay_updates must be at least 1".into(),
            ));
        }
        Ok(Self {
            alpha_min,
            decay_updates,
            strategy,
            mode,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Plain prefix-to-prefix training: no future is ever exposed.
    pub fn prefix_to_prefix() -> Self {
        Self::new(0.0, 1, GlanceStrategy::Adjacency, AlphaMode::Constant, 0)
            .expect("valid constants")
    }

    pub fn alpha_min(&self) -> f64 {
        self.alpha_min
    }

    pub fn decay_updates(&self) -> u64 {
        self.decay_updates
    }

    pub fn strategy(&self) -> GlanceStrategy {
        self.strategy
    }

    pub fn mode(&self) -> AlphaMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Glance ratio used for optimizer update number `n_update` (0-based).
    pub fn alpha_at(&self, n_update: u64) -> f64 {
        match self.mode {
            AlphaMode::Constant => self.alpha_min,
            AlphaMode::Decay => {
                let remaining = (1.0 - n_update as f64 / self.decay_updates as f64).max(0.0);
                self.alpha_min + (1.0 - self.alpha_min) * remaining
            }
        }
    }

    /// Extends `policy` with future positions for update `n_update`.
    ///
    /// `attention` is required by [`GlanceStrategy::Attention`]: one row per
    /// target step holding a weight for every source position.
    pub fn adjust_policy(
        &mut self,
        policy: &PolicyVector,
        n_update: u64,
        attention: Option<&[Vec<f64>]>,
    ) -> Result<AdjustedPolicy> {
        let alpha = self.alpha_at(n_update);
        self.adjust_with_alpha(policy, alpha, attention)
    }

    /// Same as [`adjust_policy`](Self::adjust_policy) with an explicit glance ratio.
    pub fn adjust_with_alpha(
        &mut self,
        policy: &PolicyVector,
        alpha: f64,
        attention: Option<&[Vec<f64>]>,
    ) -> Result<AdjustedPolicy> {
        let src_len = policy.src_len();
        if self.strategy == GlanceStrategy::Attention {
            let rows = attention.ok_or_else(|| {
                Error::InvalidArgument(
                    "attention glance strategy needs cross-attention weights".into(),
                )
            })?;
            if rows.len() < policy.tgt_len() {
                return Err(Error::Shape(format!(
                    "{} attention rows for {} target steps",
                    rows.len(),
                    policy.tgt_len()
                )));
            }
            if let Some(bad) = rows[..policy.tgt_len()]
                .iter()
                .position(|r| r.len() < src_len)
            {
                return Err(Error::Shape(format!(
                    "attention row {} has fewer than {src_len} weights",
                    bad + 1
                )));
            }
        }
        let mut g_hat = Vec::with_capacity(policy.tgt_len());
        let mut extra = Vec::with_capacity(policy.tgt_len());
        for (idx, &g) in policy.reads().iter().enumerate() {
            let f = future_count(src_len, g, alpha)?;
            let positions: Vec<usize> = match self.strategy {
                GlanceStrategy::Adjacency => (g + 1..=g + f).collect(),
                GlanceStrategy::Randomization => {
                    let mut picked: Vec<usize> = index::sample(&mut self.rng, src_len - g, f)
                        .into_iter()
                        .map(|off| g + 1 + off)
                        .collect();
                    picked.sort_unstable();
                    picked
                }
                GlanceStrategy::Attention => {
                    let row = &attention.expect("checked above")[idx];
                    top_weighted(row, g, src_len, f)
                }
            };
            g_hat.push(g + f);
            extra.push(positions);
        }
        Ok(AdjustedPolicy {
            base: policy.clone(),
            g_hat,
            extra,
        })
    }
}

/// Highest-weight `count` positions among `g+1..=src_len` (1-based), ties to
/// the earlier position, returned in increasing order.
fn top_weighted(row: &[f64], g: usize, src_len: usize, count: usize) -> Vec<usize> {
    let mut candidates: Vec<usize> = (g + 1..=src_len).collect();
    candidates.sort_by(|&a, &b| row[b - 1].total_cmp(&row[a - 1]).then(a.cmp(&b)));
    candidates.truncate(count);
    candidates.sort_unstable();
    candidates
}

/// `f_i = floor((J - g_i) * alpha)`: number of future tokens glanced at a step.
pub fn future_count(src_len: usize, g: usize, alpha: f64) -> Result<usize> {
    if g < 1 || g > src_len {
        return Err(Error::InvalidArgument(format!(
            "read count {g} outside 1..={src_len}"
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside [0, 1]"
        )));
    }
    let remaining = src_len - g;
    let f = ((remaining as f64) * alpha + FLOOR_SLACK).floor() as usize;
    Ok(f.min(remaining))
}

/// A policy extended with glanced future positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjustedPolicy {
    base: PolicyVector,
    g_hat: Vec<usize>,
    extra: Vec<Vec<usize>>,
}

impl AdjustedPolicy {
    /// No glancing: the readable set of each step is exactly its policy prefix.
    pub fn unadjusted(base: &PolicyVector) -> Self {
        Self {
            base: base.clone(),
            g_hat: base.reads().to_vec(),
            extra: vec![Vec::new(); base.tgt_len()],
        }
    }

    pub fn base(&self) -> &PolicyVector {
        &self.base
    }

    pub fn g_hat(&self) -> &[usize] {
        &self.g_hat
    }

    /// Extra readable positions (1-based) of 1-based `step`, sorted.
    pub fn extra_positions(&self, step: usize) -> &[usize] {
        &self.extra[step - 1]
    }

    pub fn src_len(&self) -> usize {
        self.base.src_len()
    }

    pub fn tgt_len(&self) -> usize {
        self.base.tgt_len()
    }

    /// All readable source positions (1-based, increasing) of 1-based `step`.
    pub fn readable(&self, step: usize) -> impl Iterator<Item = usize> + '_ {
        (1..=self.base.at(step)).chain(self.extra[step - 1].iter().copied())
    }
}
