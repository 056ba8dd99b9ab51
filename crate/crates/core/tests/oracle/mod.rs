//! Brute-force reference implementations used only by tests.
//!
//! Nothing here calls library kernels: policies are simulated agent by
//! agent, the network is evaluated with scalar loops and the prefix is
//! re-encoded for every target step, gradients come from central
//! differences and metrics from direct summation. Only domain types are
//! shared with the library.

#![allow(dead_code)]

use simt_core::model::{AttentionParams, FeedForwardParams, LayerNormParams, ModelParams, Tensor};

/// Wait-k read counts by simulating the agent: read `k` tokens, then
/// alternate one write with one read until the source runs out.
pub fn wait_k_reads(k: usize, tgt_len: usize, src_len: usize) -> Vec<usize> {
    let mut read = 0;
    while read < k && read < src_len {
        read += 1;
    }
    let mut out = Vec::new();
    for _ in 0..tgt_len {
        out.push(read);
        if read < src_len {
            read += 1;
        }
    }
    out
}

/// HMT candidate read counts: start at `l`, step one per target token,
/// offer `n` consecutive options, never more than the source.
#[allow(clippy::explicit_counter_loop)]
pub fn hmt_events(l: usize, n: usize, tgt_len: usize, src_len: usize) -> Vec<Vec<usize>> {
    let mut rows = Vec::new();
    let mut start = l;
    for _ in 0..tgt_len {
        let mut row = Vec::new();
        let mut e = start;
        for _ in 0..n {
            row.push(if e > src_len { src_len } else { e });
            e += 1;
        }
        rows.push(row);
        start += 1;
    }
    rows
}

/// Glance ratio written as a piecewise function of the update index.
pub fn alpha(n_update: u64, alpha_min: f64, d: u64) -> f64 {
    if n_update >= d {
        alpha_min
    } else {
        1.0 - (1.0 - alpha_min) * (n_update as f64 / d as f64)
    }
}

/// Largest `f` with `f <= (J - g) * alpha`, found by counting up. The small
/// slack treats products that are integral in exact arithmetic as integral.
pub fn future_count(src_len: usize, g: usize, alpha: f64) -> usize {
    let bound = (src_len - g) as f64 * alpha + 1e-9;
    let mut f = 0;
    while f < src_len - g && (f + 1) as f64 <= bound {
        f += 1;
    }
    f
}

/// Sentence AL by direct summation.
pub fn average_lagging(reads: &[usize], src_len: usize) -> f64 {
    let i_len = reads.len() as f64;
    let rate = src_len as f64 / i_len;
    let mut total = 0.0;
    let mut steps = 0.0;
    for (i, &g) in reads.iter().enumerate() {
        total += g as f64 - i as f64 * rate;
        steps += 1.0;
        if g == src_len {
            break;
        }
    }
    total / steps
}

fn count_occurrences(tokens: &[u32], gram: &[u32]) -> usize {
    let n = gram.len();
    if tokens.len() < n {
        return 0;
    }
    (0..=tokens.len() - n)
        .filter(|&s| &tokens[s..s + n] == gram)
        .count()
}

/// Corpus BLEU-4 in percent from scanned n-gram counts.
pub fn bleu(hyps: &[Vec<u32>], refs: &[Vec<u32>]) -> f64 {
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hyps.iter().zip(refs) {
        c += h.len();
        r += rf.len();
        for n in 1..=4 {
            if h.len() < n {
                continue;
            }
            totals[n - 1] += h.len() + 1 - n;
            let mut seen: Vec<&[u32]> = Vec::new();
            for s in 0..=h.len() - n {
                let gram = &h[s..s + n];
                if seen.contains(&gram) {
                    continue;
                }
                seen.push(gram);
                matches[n - 1] += count_occurrences(h, gram).min(count_occurrences(rf, gram));
            }
        }
    }
    if c == 0 || matches[0] == 0 {
        return 0.0;
    }
    let mut prod = 1.0;
    for n in 0..4 {
        let p = if n > 0 && matches[n] == 0 {
            1.0 / (totals[n] as f64 + 1.0)
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        prod *= p;
    }
    let bp = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    100.0 * bp * prod.powf(0.25)
}

/// Hallucinated-token count of one sentence.
pub fn hallucinated(
    hyp: &[u32],
    reads: &[usize],
    reference: &[u32],
    alignment: &[Option<usize>],
) -> usize {
    let mut count = 0;
    for i in 0..hyp.len() {
        if i >= reference.len() {
            count += 1;
        } else if let Some(j) = alignment[i] {
            if j > reads[i] && hyp[i] != reference[i] {
                count += 1;
            }
        }
    }
    count
}

// Scalar network evaluation. Reductions run in the same index order as the
// library so results agree to the last bit.

fn affine(x: &[f64], w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let (din, dout) = (w.rows(), w.cols());
    let wd = w.data();
    let mut y = vec![0.0; dout];
    for j in 0..dout {
        let mut s = 0.0;
        for k in 0..din {
            s += x[k] * wd[k * dout + j];
        }
        y[j] = s + b.data()[j];
    }
    y
}

fn norm(x: &[f64], p: &LayerNormParams<f64>) -> Vec<f64> {
    let n = x.len() as f64;
    let mut sum = 0.0;
    for &v in x {
        sum += v;
    }
    let mean = sum / n;
    let mut sq = 0.0;
    for &v in x {
        sq += (v - mean) * (v - mean);
    }
    let inv = 1.0 / (sq / n + 1e-5).sqrt();
    (0..x.len())
        .map(|j| (x[j] - mean) * inv * p.gamma.data()[j] + p.beta.data()[j])
        .collect()
}

fn feed_forward(p: &FeedForwardParams<f64>, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = affine(x, &p.w1, &p.b1)
        .into_iter()
        .map(|v| if v < 0.0 { 0.0 } else { v })
        .collect();
    affine(&h, &p.w2, &p.b2)
}

/// Attention of one query over the listed keys (in increasing order).
fn attend(p: &AttentionParams<f64>, heads: usize, query: &[f64], keys: &[&[f64]]) -> Vec<f64> {
    let d = query.len();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = affine(query, &p.wq, &p.bq);
    let ks: Vec<Vec<f64>> = keys.iter().map(|k| affine(k, &p.wk, &p.bk)).collect();
    let vs: Vec<Vec<f64>> = keys.iter().map(|k| affine(k, &p.wv, &p.bv)).collect();
    let mut ctx = vec![0.0; d];
    for h in 0..heads {
        let o = h * dh;
        let scores: Vec<f64> = ks
            .iter()
            .map(|k| {
                let mut s = 0.0;
                for t in 0..dh {
                    s += q[o + t] * k[o + t];
                }
                s * scale
            })
            .collect();
        if scores.is_empty() {
            continue;
        }
        let mut max = f64::NEG_INFINITY;
        for &s in &scores {
            if s > max {
                max = s;
            }
        }
        let e: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
        let mut z = 0.0;
        for &v in &e {
            z += v;
        }
        for t in 0..dh {
            let mut s = 0.0;
            for (c, v) in vs.iter().enumerate() {
                s += e[c] / z * v[o + t];
            }
            ctx[o + t] = s;
        }
    }
    affine(&ctx, &p.wo, &p.bo)
}

fn embed(table: &Tensor<f64>, tokens: &[u32], d: usize) -> Vec<Vec<f64>> {
    let scale = (d as f64).sqrt();
    tokens
        .iter()
        .enumerate()
        .map(|(pos, &t)| {
            (0..d)
                .map(|i| {
                    let pair = (i / 2) * 2;
                    let angle = pos as f64 / 10000f64.powf(pair as f64 / d as f64);
                    let pe = if i % 2 == 0 { angle.sin() } else { angle.cos() };
                    table.row(t as usize)[i] * scale + pe
                })
                .collect()
        })
        .collect()
}

fn add(x: &mut [f64], y: &[f64]) {
    for (a, b) in x.iter_mut().zip(y) {
        *a += b;
    }
}

/// Causal encoding of `prefix` alone.
fn encode(params: &ModelParams<f64>, prefix: &[u32]) -> Vec<Vec<f64>> {
    let c = &params.config;
    let mut x = embed(&params.src_embed, prefix, c.d_model);
    for lp in &params.encoder {
        let h: Vec<Vec<f64>> = x.iter().map(|r| norm(r, &lp.ln_attn)).collect();
        for p in 0..x.len() {
            let keys: Vec<&[f64]> = h[..=p].iter().map(Vec::as_slice).collect();
            let a = attend(&lp.self_attn, c.n_heads, &h[p], &keys);
            add(&mut x[p], &a);
        }
        for r in x.iter_mut() {
            let f = feed_forward(&lp.ffn, &norm(r, &lp.ln_ffn));
            add(r, &f);
        }
    }
    x.iter().map(|r| norm(r, &params.enc_norm)).collect()
}

fn log_softmax(row: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = 0.0;
    for &v in row.iter() {
        sum += (v - max).exp();
    }
    let log_z = max + sum.ln();
    for v in row.iter_mut() {
        *v -= log_z;
    }
}

/// Per-step log-probabilities where target position `i` may attend to the
/// 1-based source positions `readable[i]`. For every step the source prefix
/// up to the furthest position any step so far has read is encoded afresh
/// and the decoder is rerun from scratch.
pub fn naive_forward(
    params: &ModelParams<f64>,
    src: &[u32],
    tgt_in: &[u32],
    readable: &[Vec<usize>],
) -> Vec<Vec<f64>> {
    let c = &params.config;
    let mut out = Vec::with_capacity(tgt_in.len());
    for step in 0..tgt_in.len() {
        let furthest = readable[..=step]
            .iter()
            .flat_map(|r| r.iter().copied())
            .max()
            .unwrap_or(0);
        let memory = encode(params, &src[..furthest]);
        let mut y = embed(&params.tgt_embed, &tgt_in[..=step], c.d_model);
        for lp in &params.decoder {
            let h: Vec<Vec<f64>> = y.iter().map(|r| norm(r, &lp.ln_self)).collect();
            for p in 0..y.len() {
                let keys: Vec<&[f64]> = h[..=p].iter().map(Vec::as_slice).collect();
                let a = attend(&lp.self_attn, c.n_heads, &h[p], &keys);
                add(&mut y[p], &a);
            }
            for p in 0..y.len() {
                let q = norm(&y[p], &lp.ln_cross);
                let keys: Vec<&[f64]> = readable[p]
                    .iter()
                    .map(|&j| memory[j - 1].as_slice())
                    .collect();
                let a = attend(&lp.cross_attn, c.n_heads, &q, &keys);
                add(&mut y[p], &a);
            }
            for r in y.iter_mut() {
                let f = feed_forward(&lp.ffn, &norm(r, &lp.ln_ffn));
                add(r, &f);
            }
        }
        let top = norm(&y[step], &params.dec_norm);
        let mut logits = affine(&top, &params.out_proj, &params.out_bias);
        log_softmax(&mut logits);
        out.push(logits);
    }
    out
}

/// Summed label-smoothed cross-entropy of `tgt_out` under `log_probs`.
pub fn smoothed_nll(log_probs: &[Vec<f64>], tgt_out: &[u32], eps: f64) -> f64 {
    let mut total = 0.0;
    for (row, &y) in log_probs.iter().zip(tgt_out) {
        let v = row.len() as f64;
        for (j, &lp) in row.iter().enumerate() {
            let q = eps / v + if j == y as usize { 1.0 - eps } else { 0.0 };
            total -= q * lp;
        }
    }
    total
}

fn perturbed(
    params: &ModelParams<f64>,
    tensor: usize,
    index: usize,
    delta: f64,
) -> ModelParams<f64> {
    let mut p = params.clone();
    let mut seen = 0;
    p.visit_mut(&mut |_, t| {
        if seen == tensor {
            t.data_mut()[index] += delta;
        }
        seen += 1;
    });
    p
}

/// Central-difference gradient of `f` with step `h`, one entry per scalar
/// parameter, grouped by parameter name in visiting order.
pub fn fd_gradient(
    params: &ModelParams<f64>,
    f: &dyn Fn(&ModelParams<f64>) -> f64,
    h: f64,
) -> Vec<(String, Vec<f64>)> {
    let mut shapes = Vec::new();
    params.visit(&mut |name, t| shapes.push((name.to_string(), t.len())));
    shapes
        .into_iter()
        .enumerate()
        .map(|(ti, (name, len))| {
            let g = (0..len)
                .map(|i| {
                    let up = f(&perturbed(params, ti, i, h));
                    let down = f(&perturbed(params, ti, i, -h));
                    (up - down) / (2.0 * h)
                })
                .collect();
            (name, g)
        })
        .collect()
}
