//! Layer kernels with explicit backward passes.
//!
//! Every reduction runs left to right in index order. The forward kernels
//! therefore produce the same bits regardless of how many masked (zero
//! weight) keys trail a row, which is what makes prefix re-encoding and
//! masked full-sequence encoding agree exactly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{AttentionParams, FeedForwardParams, LayerNormParams};
use super::tensor::Tensor;
use crate::masking::BoolMatrix;
use crate::real::Real;

pub(crate) const LN_EPS: f64 = 1e-5;

/// `y = x W + b` for `rows` row vectors.
pub(crate) fn linear<T: Real>(x: &[T], rows: usize, w: &Tensor<T>, b: &Tensor<T>) -> Vec<T> {
    let din = w.rows();
    let dout = w.cols();
    debug_assert_eq!(x.len(), rows * din);
    let wd = w.data();
    let mut y = vec![T::zero(); rows * dout];
    for r in 0..rows {
        let xr = &x[r * din..(r + 1) * din];
        let yr = &mut y[r * dout..(r + 1) * dout];
        for (k, &a) in xr.iter().enumerate() {
            let wk = &wd[k * dout..(k + 1) * dout];
            for (yj, &wj) in yr.iter_mut().zip(wk) {
                *yj += a * wj;
            }
        }
        for (yj, &bj) in yr.iter_mut().zip(b.data()) {
            *yj += bj;
        }
    }
    y
}

/// Accumulates `dW`, `db` and returns `dx` for [`linear`].
pub(crate) fn linear_backward<T: Real>(
    x: &[T],
    rows: usize,
    w: &Tensor<T>,
    dy: &[T],
    dw: &mut Tensor<T>,
    db: &mut Tensor<T>,
) -> Vec<T> {
    let din = w.rows();
    let dout = w.cols();
    let wd = w.data();
    let mut dx = vec![T::zero(); rows * din];
    for r in 0..rows {
        let xr = &x[r * din..(r + 1) * din];
        let dyr = &dy[r * dout..(r + 1) * dout];
        if dyr.iter().all(|v| v.is_zero()) {
            continue;
        }
        let dwd = dw.data_mut();
        for (k, &a) in xr.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let dwk = &mut dwd[k * dout..(k + 1) * dout];
            for (g, &d) in dwk.iter_mut().zip(dyr) {
                *g += a * d;
            }
        }
        for (g, &d) in db.data_mut().iter_mut().zip(dyr) {
            *g += d;
        }
        let dxr = &mut dx[r * din..(r + 1) * din];
        for (k, out) in dxr.iter_mut().enumerate() {
            let wk = &wd[k * dout..(k + 1) * dout];
            let mut s = T::zero();
            for (&d, &wj) in dyr.iter().zip(wk) {
                s += d * wj;
            }
            *out = s;
        }
    }
    dx
}

pub(crate) struct LayerNormCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

pub(crate) fn layer_norm<T: Real>(
    x: &[T],
    rows: usize,
    p: &LayerNormParams<T>,
) -> (Vec<T>, LayerNormCache<T>) {
    let d = p.gamma.len();
    let n = T::from_usize(d).expect("dim");
    let eps = T::from_f64c(LN_EPS);
    let mut y = vec![T::zero(); rows * d];
    let mut xhat = vec![T::zero(); rows * d];
    let mut rstd = vec![T::zero(); rows];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mut sum = T::zero();
        for &v in xr {
            sum += v;
        }
        let mean = sum / n;
        let mut sq = T::zero();
        for &v in xr {
            let c = v - mean;
            sq += c * c;
        }
        let var = sq / n;
        let inv = T::one() / (var + eps).sqrt();
        rstd[r] = inv;
        for j in 0..d {
            let h = (xr[j] - mean) * inv;
            xhat[r * d + j] = h;
            y[r * d + j] = h * p.gamma.data()[j] + p.beta.data()[j];
        }
    }
    (y, LayerNormCache { xhat, rstd })
}

pub(crate) fn layer_norm_backward<T: Real>(
    cache: &LayerNormCache<T>,
    rows: usize,
    p: &LayerNormParams<T>,
    dy: &[T],
    g: &mut LayerNormParams<T>,
) -> Vec<T> {
    let d = p.gamma.len();
    let n = T::from_usize(d).expect("dim");
    let mut dx = vec![T::zero(); rows * d];
    for r in 0..rows {
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let dyr = &dy[r * d..(r + 1) * d];
        let mut mean_dxh = T::zero();
        let mut mean_dxh_xh = T::zero();
        for j in 0..d {
            g.gamma.data_mut()[j] += dyr[j] * xh[j];
            g.beta.data_mut()[j] += dyr[j];
            let dxh = dyr[j] * p.gamma.data()[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[j];
        }
        mean_dxh /= n;
        mean_dxh_xh /= n;
        let inv = cache.rstd[r];
        for j in 0..d {
            let dxh = dyr[j] * p.gamma.data()[j];
            dx[r * d + j] = inv * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
        }
    }
    dx
}

pub(crate) struct AttentionCache<T> {
    xq: Vec<T>,
    xkv: Vec<T>,
    nq: usize,
    nk: usize,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// heads x nq x nk
    pub(crate) probs: Vec<T>,
    ctx: Vec<T>,
}

/// Multi-head scaled dot-product attention. `mask.get(r, c)` permits query
/// `r` to see key `c`; forbidden scores are `-inf` before the softmax, and a
/// row with no permitted key yields a zero context vector.
pub(crate) fn attention<T: Real>(
    p: &AttentionParams<T>,
    heads: usize,
    xq: &[T],
    nq: usize,
    xkv: &[T],
    nk: usize,
    mask: &BoolMatrix,
) -> (Vec<T>, AttentionCache<T>) {
    let d = p.wq.rows();
    let dh = d / heads;
    let scale = T::one() / T::from_usize(dh).expect("dim").sqrt();
    let q = linear(xq, nq, &p.wq, &p.bq);
    let k = linear(xkv, nk, &p.wk, &p.bk);
    let v = linear(xkv, nk, &p.wv, &p.bv);
    let mut probs = vec![T::zero(); heads * nq * nk];
    let mut ctx = vec![T::zero(); nq * d];
    let mut scores = vec![T::zero(); nk];
    for h in 0..heads {
        let off = h * dh;
        for r in 0..nq {
            let qr = &q[r * d + off..r * d + off + dh];
            let mut max = T::neg_infinity();
            for c in 0..nk {
                scores[c] = if mask.get(r, c) {
                    let kc = &k[c * d + off..c * d + off + dh];
                    let mut s = T::zero();
                    for t in 0..dh {
                        s += qr[t] * kc[t];
                    }
                    s * scale
                } else {
                    T::neg_infinity()
                };
                if scores[c] > max {
                    max = scores[c];
                }
            }
            if max == T::neg_infinity() {
                continue;
            }
            let mut sum = T::zero();
            for s in scores.iter_mut() {
                *s = (*s - max).exp();
                sum += *s;
            }
            let prow = &mut probs[(h * nq + r) * nk..(h * nq + r + 1) * nk];
            for c in 0..nk {
                prow[c] = scores[c] / sum;
            }
            let cr = &mut ctx[r * d + off..r * d + off + dh];
            for c in 0..nk {
                let pc = prow[c];
                let vc = &v[c * d + off..c * d + off + dh];
                for t in 0..dh {
                    cr[t] += pc * vc[t];
                }
            }
        }
    }
    let out = linear(&ctx, nq, &p.wo, &p.bo);
    let cache = AttentionCache {
        xq: xq.to_vec(),
        xkv: xkv.to_vec(),
        nq,
        nk,
        q,
        k,
        v,
        probs,
        ctx,
    };
    (out, cache)
}

impl<T: Real> AttentionCache<T> {
    /// Attention weights averaged over heads, one row per query.
    pub(crate) fn mean_probs(&self, heads: usize) -> Vec<Vec<f64>> {
        let (nq, nk) = (self.nq, self.nk);
        (0..nq)
            .map(|r| {
                (0..nk)
                    .map(|c| {
                        let s: f64 = (0..heads)
                            .map(|h| self.probs[(h * nq + r) * nk + c].to_f64().unwrap_or(0.0))
                            .sum();
                        s / heads as f64
                    })
                    .collect()
            })
            .collect()
    }
}

/// Returns `(dxq, dxkv)`.
pub(crate) fn attention_backward<T: Real>(
    p: &AttentionParams<T>,
    heads: usize,
    cache: &AttentionCache<T>,
    dout: &[T],
    g: &mut AttentionParams<T>,
) -> (Vec<T>, Vec<T>) {
    let d = p.wq.rows();
    let dh = d / heads;
    let scale = T::one() / T::from_usize(dh).expect("dim").sqrt();
    let (nq, nk) = (cache.nq, cache.nk);
    let dctx = linear_backward(&cache.ctx, nq, &p.wo, dout, &mut g.wo, &mut g.bo);
    let mut dq = vec![T::zero(); nq * d];
    let mut dk = vec![T::zero(); nk * d];
    let mut dv = vec![T::zero(); nk * d];
    let mut dp = vec![T::zero(); nk];
    for h in 0..heads {
        let off = h * dh;
        for r in 0..nq {
            let prow = &cache.probs[(h * nq + r) * nk..(h * nq + r + 1) * nk];
            let dcr = &dctx[r * d + off..r * d + off + dh];
            let mut dot = T::zero();
            for c in 0..nk {
                let pc = prow[c];
                if pc.is_zero() {
                    dp[c] = T::zero();
                    continue;
                }
                let vc = &cache.v[c * d + off..c * d + off + dh];
                let dvc = &mut dv[c * d + off..c * d + off + dh];
                let mut s = T::zero();
                for t in 0..dh {
                    s += dcr[t] * vc[t];
                    dvc[t] += pc * dcr[t];
                }
                dp[c] = s;
                dot += pc * s;
            }
            let qr = &cache.q[r * d + off..r * d + off + dh];
            for c in 0..nk {
                let pc = prow[c];
                if pc.is_zero() {
                    continue;
                }
                let ds = pc * (dp[c] - dot) * scale;
                let kc = &cache.k[c * d + off..c * d + off + dh];
                let dkc = &mut dk[c * d + off..c * d + off + dh];
                let dqr = &mut dq[r * d + off..r * d + off + dh];
                for t in 0..dh {
                    dqr[t] += ds * kc[t];
                    dkc[t] += ds * qr[t];
                }
            }
        }
    }
    let dxq = linear_backward(&cache.xq, nq, &p.wq, &dq, &mut g.wq, &mut g.bq);
    let mut dxkv = linear_backward(&cache.xkv, nk, &p.wk, &dk, &mut g.wk, &mut g.bk);
    let dxv = linear_backward(&cache.xkv, nk, &p.wv, &dv, &mut g.wv, &mut g.bv);
    for (a, b) in dxkv.iter_mut().zip(dxv) {
        *a += b;
    }
    (dxq, dxkv)
}

pub(crate) struct FeedForwardCache<T> {
    x: Vec<T>,
    hidden: Vec<T>,
    rows: usize,
}

/// `relu(x W1 + b1) W2 + b2`.
pub(crate) fn feed_forward<T: Real>(
    p: &FeedForwardParams<T>,
    x: &[T],
    rows: usize,
) -> (Vec<T>, FeedForwardCache<T>) {
    let mut hidden = linear(x, rows, &p.w1, &p.b1);
    for h in hidden.iter_mut() {
        if *h < T::zero() {
            *h = T::zero();
        }
    }
    let out = linear(&hidden, rows, &p.w2, &p.b2);
    (
        out,
        FeedForwardCache {
            x: x.to_vec(),
            hidden,
            rows,
        },
    )
}

pub(crate) fn feed_forward_backward<T: Real>(
    p: &FeedForwardParams<T>,
    cache: &FeedForwardCache<T>,
    dy: &[T],
    g: &mut FeedForwardParams<T>,
) -> Vec<T> {
    let mut dh = linear_backward(&cache.hidden, cache.rows, &p.w2, dy, &mut g.w2, &mut g.b2);
    for (d, &h) in dh.iter_mut().zip(&cache.hidden) {
        if h <= T::zero() {
            *d = T::zero();
        }
    }
    linear_backward(&cache.x, cache.rows, &p.w1, &dh, &mut g.w1, &mut g.b1)
}

/// Inverted dropout applied in place. Returns the scaling mask, or `None`
/// when dropout is inactive.
pub(crate) fn dropout<T: Real>(
    x: &mut [T],
    rate: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Option<Vec<T>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = T::from_f64c(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| {
            if rng.gen::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    for (v, &m) in x.iter_mut().zip(&mask) {
        *v *= m;
    }
    Some(mask)
}

pub(crate) fn dropout_backward<T: Real>(dy: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (d, &k) in dy.iter_mut().zip(m) {
            *d *= k;
        }
    }
}

/// Sinusoidal position encoding value for `pos` (0-based) and dimension `i`.
pub(crate) fn position_encoding(pos: usize, i: usize, d: usize) -> f64 {
    let pair = (i / 2) * 2;
    let angle = pos as f64 / 10000f64.powf(pair as f64 / d as f64);
    if i.is_multiple_of(2) {
        angle.sin()
    } else {
        angle.cos()
    }
}

/// In-place log-softmax of one row.
pub(crate) fn log_softmax_row<T: Real>(row: &mut [T]) {
    let mut max = T::neg_infinity();
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = T::zero();
    for &v in row.iter() {
        sum += (v - max).exp();
    }
    let log_z = max + sum.ln();
    for v in row.iter_mut() {
        *v -= log_z;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, data.to_vec())
    }

    #[test]
    fn linear_matches_hand_computation() {
        let w = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let b = t(&[3], &[0.5, 0., -1.]);
        let y = linear(&[1.0, -1.0, 2.0, 0.5], 2, &w, &b);
        assert_eq!(y, vec![-2.5, -3.0, -4.0, 4.5, 6.5, 8.0]);
    }

    #[test]
    fn fully_masked_row_gives_zero_context() {
        let d = 4;
        let p = AttentionParams {
            wq: Tensor::filled(&[d, d], 0.1),
            bq: Tensor::zeros(&[d]),
            wk: Tensor::filled(&[d, d], 0.2),
            bk: Tensor::zeros(&[d]),
            wv: Tensor::filled(&[d, d], 0.3),
            bv: Tensor::zeros(&[d]),
            wo: Tensor::filled(&[d, d], 1.0),
            bo: Tensor::filled(&[d], 0.25),
        };
        let mut mask = BoolMatrix::new(2, 2);
        mask.set(1, 0, true);
        let x = vec![1.0; 2 * d];
        let (out, cache) = attention(&p, 2, &x, 2, &x, 2, &mask);
        assert!(out[..d].iter().all(|&v| v == 0.25));
        assert!(cache.probs.iter().all(|v: &f64| v.is_finite()));
        // the permitted row puts all its weight on its single key
        assert_eq!(cache.mean_probs(2)[1], vec![1.0, 0.0]);
    }

    #[test]
    fn log_softmax_normalises() {
        let mut row = vec![1.0f64, 2.0, 3.0, -4.0];
        log_softmax_row(&mut row);
        let s: f64 = row.iter().map(|v| v.exp()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn position_encoding_first_row() {
        assert_eq!(position_encoding(0, 0, 8), 0.0);
        assert_eq!(position_encoding(0, 1, 8), 1.0);
        assert!((position_encoding(1, 0, 8) - 1f64.sin()).abs() < 1e-15);
    }
}
