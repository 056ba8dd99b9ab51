//! Pre-norm encoder-decoder transformer: full forward pass with caches and
//! the matching backward pass.

use rand_chacha::ChaCha8Rng;

use super::layers::{
    attention, attention_backward, dropout, dropout_backward, feed_forward, feed_forward_backward,
    layer_norm, layer_norm_backward, linear, linear_backward, log_softmax_row, position_encoding,
    AttentionCache, FeedForwardCache, LayerNormCache,
};
use super::params::ModelParams;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::masking::MaskSet;
use crate::real::Real;

struct EncoderLayerCache<T> {
    ln_attn: LayerNormCache<T>,
    attn: AttentionCache<T>,
    drop_attn: Option<Vec<T>>,
    ln_ffn: LayerNormCache<T>,
    ffn: FeedForwardCache<T>,
    drop_ffn: Option<Vec<T>>,
}

struct DecoderLayerCache<T> {
    ln_self: LayerNormCache<T>,
    self_attn: AttentionCache<T>,
    drop_self: Option<Vec<T>>,
    ln_cross: LayerNormCache<T>,
    cross_attn: AttentionCache<T>,
    drop_cross: Option<Vec<T>>,
    ln_ffn: LayerNormCache<T>,
    ffn: FeedForwardCache<T>,
    drop_ffn: Option<Vec<T>>,
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardCache<T> {
    src: Vec<u32>,
    tgt: Vec<u32>,
    drop_src_embed: Option<Vec<T>>,
    drop_tgt_embed: Option<Vec<T>>,
    encoder: Vec<EncoderLayerCache<T>>,
    enc_norm: LayerNormCache<T>,
    decoder: Vec<DecoderLayerCache<T>>,
    dec_norm: LayerNormCache<T>,
    dec_out: Vec<T>,
}

impl<T: Real> ForwardCache<T> {
    /// Cross-attention of the top decoder layer averaged over heads: one row
    /// per target position, one weight per source position.
    pub fn top_cross_attention(&self, heads: usize) -> Vec<Vec<f64>> {
        self.decoder
            .last()
            .map(|l| l.cross_attn.mean_probs(heads))
            .unwrap_or_default()
    }
}

fn check_inputs<T: Real>(
    params: &ModelParams<T>,
    src: &[u32],
    tgt: &[u32],
    masks: &MaskSet,
) -> Result<()> {
    let c = &params.config;
    if src.len() != masks.padded_src() || tgt.len() != masks.padded_tgt() {
        return Err(Error::Shape(format!(
            "inputs are {}x{} but masks are {}x{}",
            tgt.len(),
            src.len(),
            masks.padded_tgt(),
            masks.padded_src()
        )));
    }
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::Shape("empty source or target".into()));
    }
    if src.len() > c.max_positions || tgt.len() > c.max_positions {
        return Err(Error::Shape(format!(
            "sequence longer than max_positions {}",
            c.max_positions
        )));
    }
    if let Some(&t) = src.iter().find(|&&t| t as usize >= c.src_vocab) {
        return Err(Error::InvalidArgument(format!(
            "source token {t} outside vocabulary of {}",
            c.src_vocab
        )));
    }
    if let Some(&t) = tgt.iter().find(|&&t| t as usize >= c.tgt_vocab) {
        return Err(Error::InvalidArgument(format!(
            "target token {t} outside vocabulary of {}",
            c.tgt_vocab
        )));
    }
    Ok(())
}

fn embed<T: Real>(table: &Tensor<T>, tokens: &[u32], d: usize) -> Vec<T> {
    let scale = T::from_f64c((d as f64).sqrt());
    let mut x = vec![T::zero(); tokens.len() * d];
    for (pos, &tok) in tokens.iter().enumerate() {
        let row = table.row(tok as usize);
        for i in 0..d {
            x[pos * d + i] = row[i] * scale + T::from_f64c(position_encoding(pos, i, d));
        }
    }
    x
}

fn embed_backward<T: Real>(grad: &mut Tensor<T>, tokens: &[u32], dx: &[T], d: usize) {
    let scale = T::from_f64c((d as f64).sqrt());
    for (pos, &tok) in tokens.iter().enumerate() {
        let row = grad.row_mut(tok as usize);
        for i in 0..d {
            row[i] += dx[pos * d + i] * scale;
        }
    }
}

fn add_into<T: Real>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// Forward pass returning per-step log-probabilities (`tgt.len() x tgt_vocab`)
/// and the cache for [`backward`]. Dropout is active only when `rng` is given.
pub fn forward_with_cache<T: Real>(
    params: &ModelParams<T>,
    src: &[u32],
    tgt: &[u32],
    masks: &MaskSet,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Tensor<T>, ForwardCache<T>)> {
    check_inputs(params, src, tgt, masks)?;
    let c = &params.config;
    let d = c.d_model;
    let (ns, nt) = (src.len(), tgt.len());
    let rate = c.dropout;

    let mut x = embed(&params.src_embed, src, d);
    let drop_src_embed = dropout(&mut x, rate, rng.as_deref_mut());
    let mut encoder = Vec::with_capacity(params.encoder.len());
    for lp in &params.encoder {
        let (h, ln_attn) = layer_norm(&x, ns, &lp.ln_attn);
        let (mut a, attn) = attention(&lp.self_attn, c.n_heads, &h, ns, &h, ns, &masks.enc_self);
        let drop_attn = dropout(&mut a, rate, rng.as_deref_mut());
        add_into(&mut x, &a);
        let (h, ln_ffn) = layer_norm(&x, ns, &lp.ln_ffn);
        let (mut f, ffn) = feed_forward(&lp.ffn, &h, ns);
        let drop_ffn = dropout(&mut f, rate, rng.as_deref_mut());
        add_into(&mut x, &f);
        encoder.push(EncoderLayerCache {
            ln_attn,
            attn,
            drop_attn,
            ln_ffn,
            ffn,
            drop_ffn,
        });
    }
    let (memory, enc_norm) = layer_norm(&x, ns, &params.enc_norm);

    let mut y = embed(&params.tgt_embed, tgt, d);
    let drop_tgt_embed = dropout(&mut y, rate, rng.as_deref_mut());
    let mut decoder = Vec::with_capacity(params.decoder.len());
    for lp in &params.decoder {
        let (h, ln_self) = layer_norm(&y, nt, &lp.ln_self);
        let (mut a, self_attn) =
            attention(&lp.self_attn, c.n_heads, &h, nt, &h, nt, &masks.dec_self);
        let drop_self = dropout(&mut a, rate, rng.as_deref_mut());
        add_into(&mut y, &a);
        let (h, ln_cross) = layer_norm(&y, nt, &lp.ln_cross);
        let (mut a, cross_attn) =
            attention(&lp.cross_attn, c.n_heads, &h, nt, &memory, ns, &masks.cross);
        let drop_cross = dropout(&mut a, rate, rng.as_deref_mut());
        add_into(&mut y, &a);
        let (h, ln_ffn) = layer_norm(&y, nt, &lp.ln_ffn);
        let (mut f, ffn) = feed_forward(&lp.ffn, &h, nt);
        let drop_ffn = dropout(&mut f, rate, rng.as_deref_mut());
        add_into(&mut y, &f);
        decoder.push(DecoderLayerCache {
            ln_self,
            self_attn,
            drop_self,
            ln_cross,
            cross_attn,
            drop_cross,
            ln_ffn,
            ffn,
            drop_ffn,
        });
    }
    let (dec_out, dec_norm) = layer_norm(&y, nt, &params.dec_norm);
    let mut logits = linear(&dec_out, nt, &params.out_proj, &params.out_bias);
    let v = c.tgt_vocab;
    for r in 0..nt {
        log_softmax_row(&mut logits[r * v..(r + 1) * v]);
    }
    let log_probs = Tensor::from_vec(&[nt, v], logits);
    for r in 0..nt {
        if !masks.tgt_pad[r] && log_probs.row(r).iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                location: format!("log-probabilities at target step {}", r + 1),
            });
        }
    }
    let cache = ForwardCache {
        src: src.to_vec(),
        tgt: tgt.to_vec(),
        drop_src_embed,
        drop_tgt_embed,
        encoder,
        enc_norm,
        decoder,
        dec_norm,
        dec_out,
    };
    Ok((log_probs, cache))
}

/// Inference forward pass (no dropout).
pub fn forward<T: Real>(
    params: &ModelParams<T>,
    src: &[u32],
    tgt: &[u32],
    masks: &MaskSet,
) -> Result<Tensor<T>> {
    forward_with_cache(params, src, tgt, masks, None).map(|(lp, _)| lp)
}

/// Accumulates into `grads` the gradient of a loss whose derivative with
/// respect to the output logits is `dlogits` (`tgt.len() x tgt_vocab`).
pub fn backward<T: Real>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    dlogits: &[T],
    grads: &mut ModelParams<T>,
) {
    let c = &params.config;
    let d = c.d_model;
    let (ns, nt) = (cache.src.len(), cache.tgt.len());

    let dh = linear_backward(
        &cache.dec_out,
        nt,
        &params.out_proj,
        dlogits,
        &mut grads.out_proj,
        &mut grads.out_bias,
    );
    let mut dy = layer_norm_backward(
        &cache.dec_norm,
        nt,
        &params.dec_norm,
        &dh,
        &mut grads.dec_norm,
    );
    let mut dmemory = vec![T::zero(); ns * d];
    for (li, lc) in cache.decoder.iter().enumerate().rev() {
        let lp = &params.decoder[li];
        let lg = &mut grads.decoder[li];

        let mut df = dy.clone();
        dropout_backward(&mut df, &lc.drop_ffn);
        let dh = feed_forward_backward(&lp.ffn, &lc.ffn, &df, &mut lg.ffn);
        add_into(
            &mut dy,
            &layer_norm_backward(&lc.ln_ffn, nt, &lp.ln_ffn, &dh, &mut lg.ln_ffn),
        );

        let mut da = dy.clone();
        dropout_backward(&mut da, &lc.drop_cross);
        let (dq, dmem) = attention_backward(
            &lp.cross_attn,
            c.n_heads,
            &lc.cross_attn,
            &da,
            &mut lg.cross_attn,
        );
        add_into(&mut dmemory, &dmem);
        add_into(
            &mut dy,
            &layer_norm_backward(&lc.ln_cross, nt, &lp.ln_cross, &dq, &mut lg.ln_cross),
        );

        let mut da = dy.clone();
        dropout_backward(&mut da, &lc.drop_self);
        let (dq, dkv) = attention_backward(
            &lp.self_attn,
            c.n_heads,
            &lc.self_attn,
            &da,
            &mut lg.self_attn,
        );
        let mut dln = dq;
        add_into(&mut dln, &dkv);
        add_into(
            &mut dy,
            &layer_norm_backward(&lc.ln_self, nt, &lp.ln_self, &dln, &mut lg.ln_self),
        );
    }
    dropout_backward(&mut dy, &cache.drop_tgt_embed);
    embed_backward(&mut grads.tgt_embed, &cache.tgt, &dy, d);

    let mut dx = layer_norm_backward(
        &cache.enc_norm,
        ns,
        &params.enc_norm,
        &dmemory,
        &mut grads.enc_norm,
    );
    for (li, lc) in cache.encoder.iter().enumerate().rev() {
        let lp = &params.encoder[li];
        let lg = &mut grads.encoder[li];

        let mut df = dx.clone();
        dropout_backward(&mut df, &lc.drop_ffn);
        let dh = feed_forward_backward(&lp.ffn, &lc.ffn, &df, &mut lg.ffn);
        add_into(
            &mut dx,
            &layer_norm_backward(&lc.ln_ffn, ns, &lp.ln_ffn, &dh, &mut lg.ln_ffn),
        );

        let mut da = dx.clone();
        dropout_backward(&mut da, &lc.drop_attn);
        let (dq, dkv) =
            attention_backward(&lp.self_attn, c.n_heads, &lc.attn, &da, &mut lg.self_attn);
        let mut dln = dq;
        add_into(&mut dln, &dkv);
        add_into(
            &mut dx,
            &layer_norm_backward(&lc.ln_attn, ns, &lp.ln_attn, &dln, &mut lg.ln_attn),
        );
    }
    dropout_backward(&mut dx, &cache.drop_src_embed);
    embed_backward(&mut grads.src_embed, &cache.src, &dx, d);
}
