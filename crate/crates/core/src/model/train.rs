//! Curriculum training loop.
//!
//! Each update draws the glance ratio for the current update index, extends
//! every sentence's base policy with glanced future positions, builds the
//! cross-attention masks and takes one optimizer step on the mean
//! label-smoothed loss over the batch's target tokens.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss, loss_gradient, LossReport};
use super::network::{backward, forward_with_cache};
use super::optim::{Adam, OptimizerConfig};
use super::params::ModelParams;
use crate::curriculum::{AdjustedPolicy, CurriculumSchedule, GlanceStrategy};
use crate::data::{make_batches, ParallelPair};
use crate::error::{Error, Result};
use crate::masking::{build_masks, MaskSet};
use crate::parallel::Execution;
use crate::policy::{PolicySpec, ReadSchedule};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of optimizer updates.
    pub steps: u64,
    /// Padded token budget per batch (source plus target side).
    pub batch_tokens: usize,
    pub optimizer: OptimizerConfig,
    /// Write a log row every this many updates (and after the last one).
    pub log_every: u64,
    /// Save a checkpoint every this many updates; 0 saves only at the end.
    pub checkpoint_every: u64,
    /// Disables dropout.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_tokens: 1024,
            optimizer: OptimizerConfig::default(),
            log_every: 50,
            checkpoint_every: 0,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_tokens == 0 {
            return Err(Error::Config(
                "training.batch_tokens must be positive".into(),
            ));
        }
        if self.log_every == 0 {
            return Err(Error::Config("training.log_every must be positive".into()));
        }
        self.optimizer.validate()
    }
}

/// Outcome of one optimizer update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// 0-based index of the update (the value fed to the glance schedule).
    pub step: u64,
    pub alpha: f64,
    pub loss: LossReport,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

/// One sentence prepared for a forward/backward pass.
#[derive(Debug, Clone)]
pub struct SentenceWork {
    pub src: Vec<u32>,
    pub tgt_in: Vec<u32>,
    pub tgt_out: Vec<u32>,
    pub masks: MaskSet,
    /// Dropout stream; `None` disables dropout.
    pub dropout_seed: Option<u64>,
}

impl SentenceWork {
    pub fn new(pair: &ParallelPair, adjusted: &AdjustedPolicy) -> Result<Self> {
        let steps = pair.steps();
        let masks = build_masks(adjusted, pair.src.len(), steps, (pair.src.len(), steps))?;
        Ok(Self {
            src: pair.src.clone(),
            tgt_in: pair.decoder_input(),
            tgt_out: pair.decoder_output(),
            masks,
            dropout_seed: None,
        })
    }
}

/// Summed gradient of `sum(loss) * scale` over `work`, with per-sentence
/// passes mapped under `execution` and reduced in sentence order, so the
/// result does not depend on the execution mode.
pub fn batch_gradient<T: Real>(
    params: &ModelParams<T>,
    work: &[SentenceWork],
    scale: f64,
    execution: Execution,
) -> Result<(ModelParams<T>, LossReport)> {
    let eps = params.config.label_smoothing;
    let parts = execution.try_map(work, |idx, w| {
        let mut rng = w.dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let (log_probs, cache) =
            forward_with_cache(params, &w.src, &w.tgt_in, &w.masks, rng.as_mut())
                .map_err(|e| e.at_sentence(idx))?;
        let report =
            loss(&log_probs, &w.tgt_out, &w.masks.tgt_pad, eps).map_err(|e| e.at_sentence(idx))?;
        let dlogits = loss_gradient(&log_probs, &w.tgt_out, &w.masks.tgt_pad, eps, scale)
            .map_err(|e| e.at_sentence(idx))?;
        let mut grads = params.zeros_like();
        backward(params, &cache, &dlogits, &mut grads);
        Ok::<_, Error>((grads, report))
    })?;
    let mut it = parts.into_iter();
    let (mut total, mut report) = it
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    for (g, r) in it {
        total.accumulate(&g);
        report = report.merge(r);
    }
    Ok((total, report))
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finaliser over a combined word
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Model parameters plus everything that evolves during training.
pub struct Trainer<T: Real> {
    params: ModelParams<T>,
    adam: Adam<T>,
    schedule: CurriculumSchedule,
    policy: PolicySpec,
    updates: u64,
    seed: u64,
    dropout: bool,
    execution: Execution,
}

impl<T: Real> Trainer<T> {
    pub fn new(
        params: ModelParams<T>,
        optimizer: OptimizerConfig,
        schedule: CurriculumSchedule,
        policy: PolicySpec,
        seed: u64,
    ) -> Result<Self> {
        params.config.validate()?;
        optimizer.validate()?;
        policy.validate()?;
        let adam = Adam::new(optimizer, &params);
        Ok(Self {
            params,
            adam,
            schedule,
            policy,
            updates: 0,
            seed,
            dropout: true,
            execution: Execution::default(),
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    /// Enables or disables dropout (disabled for deterministic tests).
    pub fn with_dropout(mut self, enabled: bool) -> Self {
        self.dropout = enabled;
        self
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn into_params(self) -> ModelParams<T> {
        self.params
    }

    /// Number of updates applied so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn schedule(&self) -> &CurriculumSchedule {
        &self.schedule
    }

    pub fn policy(&self) -> &PolicySpec {
        &self.policy
    }

    /// Adjusted policies for `pairs` at the current update. Consumes
    /// randomness from the schedule for the randomized strategy.
    pub fn adjusted_policies(&mut self, pairs: &[&ParallelPair]) -> Result<Vec<AdjustedPolicy>> {
        let alpha = self.schedule.alpha_at(self.updates);
        let attention: Vec<Option<Vec<Vec<f64>>>> =
            if self.schedule.strategy() == GlanceStrategy::Attention {
                let params = &self.params;
                self.execution.try_map(pairs, |idx, p| {
                    let steps = p.steps();
                    let masks = MaskSet::from_prefix_reads(&vec![p.src.len(); steps], p.src.len())?;
                    let (_, cache) =
                        forward_with_cache(params, &p.src, &p.decoder_input(), &masks, None)
                            .map_err(|e| e.at_sentence(idx))?;
                    Ok::<_, Error>(Some(cache.top_cross_attention(params.config.n_heads)))
                })?
            } else {
                vec![None; pairs.len()]
            };
        pairs
            .iter()
            .zip(&attention)
            .enumerate()
            .map(|(idx, (p, att))| {
                let base = self.policy.vector(p.steps(), p.src.len());
                self.schedule
                    .adjust_with_alpha(&base, alpha, att.as_deref())
                    .map_err(|e| e.at_sentence(idx))
            })
            .collect()
    }

    /// One optimizer update on `pairs`. On divergence the parameters are
    /// left as they were before the update.
    pub fn step(&mut self, pairs: &[&ParallelPair]) -> Result<StepReport> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let step = self.updates;
        let alpha = self.schedule.alpha_at(step);
        let adjusted = self.adjusted_policies(pairs)?;
        let mut work = Vec::with_capacity(pairs.len());
        for (idx, (p, a)) in pairs.iter().zip(&adjusted).enumerate() {
            let mut w = SentenceWork::new(p, a).map_err(|e| e.at_sentence(idx))?;
            if self.dropout && self.params.config.dropout > 0.0 {
                w.dropout_seed = Some(mix(mix(self.seed, step), idx as u64));
            }
            work.push(w);
        }
        let tokens: usize = pairs.iter().map(|p| p.steps()).sum();
        let (grads, report) =
            match batch_gradient(&self.params, &work, 1.0 / tokens as f64, self.execution) {
                Ok(r) => r,
                Err(Error::Sentence { source, .. })
                    if matches!(*source, Error::NonFinite { .. }) =>
                {
                    return Err(Error::Diverged {
                        step,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
        if !report.total.is_finite() || !grads.all_finite() {
            return Err(Error::Diverged {
                step,
                loss: report.per_token,
            });
        }
        let before = self.params.clone();
        let grad_norm = self.adam.step(&mut self.params, &grads);
        if !self.params.all_finite() {
            self.params = before;
            return Err(Error::Diverged {
                step,
                loss: report.per_token,
            });
        }
        self.updates += 1;
        Ok(StepReport {
            step,
            alpha,
            loss: report,
            grad_norm,
        })
    }

    /// Runs updates over seed-shuffled epochs of `pairs` until `steps`
    /// updates have been applied, calling `on_step` after each one.
    pub fn fit(
        &mut self,
        pairs: &[ParallelPair],
        config: &TrainConfig,
        mut on_step: impl FnMut(&StepReport, &Self) -> Result<()>,
    ) -> Result<()> {
        config.validate()?;
        let mut epoch = 0u64;
        while self.updates < config.steps {
            let batches = make_batches(pairs, config.batch_tokens, mix(self.seed, epoch))?;
            for b in &batches {
                if self.updates >= config.steps {
                    break;
                }
                let report = self.step(&b.pairs(pairs))?;
                on_step(&report, self)?;
            }
            epoch += 1;
        }
        Ok(())
    }
}
