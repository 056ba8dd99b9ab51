//! Property checks shared by the focused test files and the acceptance suite.
//! Each returns a short summary on success and a description of the first
//! violation otherwise.

#![allow(dead_code)]

use simt_core::curriculum::GlanceStrategy;
use simt_core::masking::MaskSet;
use simt_core::model::{backward, forward, forward_with_cache, loss_gradient, ModelParams, Tensor};

use super::common::{random_instance, tiny_config, Instance};
use super::oracle;

pub fn rows(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

/// The scalar oracle reproduces the masked forward pass bit for bit.
pub fn oracle_equivalence(seeds: u64) -> Result<String, String> {
    for seed in 0..seeds {
        let inst = random_instance(seed, None);
        let fast = forward(&inst.params, &inst.src, &inst.tgt_in, &inst.masks).unwrap();
        let naive = oracle::naive_forward(&inst.params, &inst.src, &inst.tgt_in, &inst.readable());
        if rows(&fast) != naive {
            return Err(format!("seed {seed}: fast and naive forward differ"));
        }
    }
    Ok(format!("{seeds} instances identical"))
}

/// Replacing a source token that no step up to `i` can see, directly or
/// through the causal encoder, leaves output row `i` bit-identical.
pub fn hidden_tokens_are_invisible(seeds: u64) -> Result<String, String> {
    let mut checked = 0;
    for seed in 0..seeds {
        let inst = random_instance(seed, None);
        let mut furthest = Vec::new();
        let mut far = 0;
        for r in inst.readable() {
            far = r.into_iter().max().unwrap_or(0).max(far);
            furthest.push(far);
        }
        let base = forward(&inst.params, &inst.src, &inst.tgt_in, &inst.masks).unwrap();
        for j in 1..=inst.src.len() {
            let mut src = inst.src.clone();
            src[j - 1] = if src[j - 1] == 4 { 5 } else { 4 };
            let out = forward(&inst.params, &src, &inst.tgt_in, &inst.masks).unwrap();
            for (i, &f) in furthest.iter().enumerate() {
                if j > f {
                    checked += 1;
                    if out.row(i) != base.row(i) {
                        return Err(format!("seed {seed}: position {j} changed step {}", i + 1));
                    }
                }
            }
        }
    }
    Ok(format!("{checked} hidden (position, step) pairs unchanged"))
}

/// Encoding only the read prefix gives the same step outputs as encoding the
/// whole sentence under prefix masks.
pub fn prefix_equality(seeds: u64) -> Result<String, String> {
    let mut checked = 0;
    for seed in 0..seeds {
        let inst = random_instance(seed, Some(GlanceStrategy::Adjacency));
        let g_hat = inst.adjusted.g_hat().to_vec();
        let full = forward(&inst.params, &inst.src, &inst.tgt_in, &inst.masks).unwrap();
        for i in 0..g_hat.len() {
            let read = g_hat[i];
            let masks = MaskSet::from_prefix_reads(&g_hat[..=i], read).unwrap();
            let prefix =
                forward(&inst.params, &inst.src[..read], &inst.tgt_in[..=i], &masks).unwrap();
            checked += 1;
            if prefix.row(i) != full.row(i) {
                return Err(format!("seed {seed}: step {} differs", i + 1));
            }
        }
    }
    Ok(format!("{checked} prefix steps identical"))
}

/// A small partially glanced instance on a two-head, one-layer model.
pub fn gradient_instance() -> Instance {
    let mut seed = 0;
    loop {
        let mut inst = random_instance(seed, Some(GlanceStrategy::Adjacency));
        let partial = inst.readable().iter().any(|r| r.len() < inst.src.len());
        if inst.src.len() >= 3 && inst.tgt_in.len() >= 3 && partial {
            inst.params = ModelParams::init(&tiny_config(8, 1), 42);
            return inst;
        }
        seed += 1;
    }
}

/// Training targets for `inst`: the decoder input shifted left, then EOS.
pub fn targets(inst: &Instance) -> Vec<u32> {
    let mut out: Vec<u32> = inst.tgt_in[1..].to_vec();
    out.push(2);
    out
}

pub fn analytic_gradient(params: &ModelParams<f64>, inst: &Instance) -> Vec<(String, Vec<f64>)> {
    let eps = params.config.label_smoothing;
    let (lp, cache) =
        forward_with_cache(params, &inst.src, &inst.tgt_in, &inst.masks, None).unwrap();
    let dlogits = loss_gradient(&lp, &targets(inst), &inst.masks.tgt_pad, eps, 1.0).unwrap();
    let mut grads = params.zeros_like();
    backward(params, &cache, &dlogits, &mut grads);
    let mut out = Vec::new();
    grads.visit(&mut |name, t| out.push((name.to_string(), t.data().to_vec())));
    out
}

pub fn numeric_gradient(
    params: &ModelParams<f64>,
    inst: &Instance,
    h: f64,
) -> Vec<(String, Vec<f64>)> {
    let eps = params.config.label_smoothing;
    let readable = inst.readable();
    let tgt = targets(inst);
    let f = |p: &ModelParams<f64>| {
        oracle::smoothed_nll(
            &oracle::naive_forward(p, &inst.src, &inst.tgt_in, &readable),
            &tgt,
            eps,
        )
    };
    oracle::fd_gradient(params, &f, h)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Relative error `|a - n| / max(|a|, |n|)` of every parameter group at
/// step `h` must stay below `tol`. Groups whose true gradient is zero (key
/// biases: softmax ignores a shift shared by a whole row) are held to an
/// absolute bound instead.
pub fn gradient_check(h: f64, tol: f64) -> Result<String, String> {
    let inst = gradient_instance();
    let a = analytic_gradient(&inst.params, &inst);
    let n = numeric_gradient(&inst.params, &inst, h);
    let mut worst = 0.0f64;
    for ((name, ga), (_, gn)) in a.iter().zip(&n) {
        let scale = norm(ga).max(norm(gn));
        let err = diff_norm(ga, gn);
        if scale < 1e-7 {
            if err >= 1e-8 {
                return Err(format!("{name}: absolute error {err:e} on a zero gradient"));
            }
        } else {
            let rel = err / scale;
            if rel >= tol {
                return Err(format!("{name}: relative error {rel:e}"));
            }
            worst = worst.max(rel);
        }
    }
    Ok(format!(
        "{} groups, worst relative error {worst:.2e}",
        a.len()
    ))
}
