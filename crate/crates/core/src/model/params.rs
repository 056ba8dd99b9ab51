use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::tensor::Tensor;
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardParams<T> {
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams<T> {
    pub ln_attn: LayerNormParams<T>,
    pub self_attn: AttentionParams<T>,
    pub ln_ffn: LayerNormParams<T>,
    pub ffn: FeedForwardParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayerParams<T> {
    pub ln_self: LayerNormParams<T>,
    pub self_attn: AttentionParams<T>,
    pub ln_cross: LayerNormParams<T>,
    pub cross_attn: AttentionParams<T>,
    pub ln_ffn: LayerNormParams<T>,
    pub ffn: FeedForwardParams<T>,
}

/// All trainable weights. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub src_embed: Tensor<T>,
    pub tgt_embed: Tensor<T>,
    pub encoder: Vec<EncoderLayerParams<T>>,
    pub enc_norm: LayerNormParams<T>,
    pub decoder: Vec<DecoderLayerParams<T>>,
    pub dec_norm: LayerNormParams<T>,
    pub out_proj: Tensor<T>,
    pub out_bias: Tensor<T>,
}

macro_rules! visit_attention {
    ($a:expr, $p:expr, $f:expr) => {{
        $f(&format!("{}.wq", $p), &$a.wq);
        $f(&format!("{}.bq", $p), &$a.bq);
        $f(&format!("{}.wk", $p), &$a.wk);
        $f(&format!("{}.bk", $p), &$a.bk);
        $f(&format!("{}.wv", $p), &$a.wv);
        $f(&format!("{}.bv", $p), &$a.bv);
        $f(&format!("{}.wo", $p), &$a.wo);
        $f(&format!("{}.bo", $p), &$a.bo);
    }};
}

macro_rules! visit_attention_mut {
    ($a:expr, $p:expr, $f:expr) => {{
        $f(&format!("{}.wq", $p), &mut $a.wq);
        $f(&format!("{}.bq", $p), &mut $a.bq);
        $f(&format!("{}.wk", $p), &mut $a.wk);
        $f(&format!("{}.bk", $p), &mut $a.bk);
        $f(&format!("{}.wv", $p), &mut $a.wv);
        $f(&format!("{}.bv", $p), &mut $a.bv);
        $f(&format!("{}.wo", $p), &mut $a.wo);
        $f(&format!("{}.bo", $p), &mut $a.bo);
    }};
}

impl<T: Real> ModelParams<T> {
    /// All-zero parameters of the right shapes (used for gradient buffers).
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        let ln = || LayerNormParams {
            gamma: Tensor::zeros(&[d]),
            beta: Tensor::zeros(&[d]),
        };
        let attn = || AttentionParams {
            wq: Tensor::zeros(&[d, d]),
            bq: Tensor::zeros(&[d]),
            wk: Tensor::zeros(&[d, d]),
            bk: Tensor::zeros(&[d]),
            wv: Tensor::zeros(&[d, d]),
            bv: Tensor::zeros(&[d]),
            wo: Tensor::zeros(&[d, d]),
            bo: Tensor::zeros(&[d]),
        };
        let ffn = || FeedForwardParams {
            w1: Tensor::zeros(&[d, config.d_ff]),
            b1: Tensor::zeros(&[config.d_ff]),
            w2: Tensor::zeros(&[config.d_ff, d]),
            b2: Tensor::zeros(&[d]),
        };
        Self {
            config: config.clone(),
            src_embed: Tensor::zeros(&[config.src_vocab, d]),
            tgt_embed: Tensor::zeros(&[config.tgt_vocab, d]),
            encoder: (0..config.n_enc_layers)
                .map(|_| EncoderLayerParams {
                    ln_attn: ln(),
                    self_attn: attn(),
                    ln_ffn: ln(),
                    ffn: ffn(),
                })
                .collect(),
            enc_norm: ln(),
            decoder: (0..config.n_dec_layers)
                .map(|_| DecoderLayerParams {
                    ln_self: ln(),
                    self_attn: attn(),
                    ln_cross: ln(),
                    cross_attn: attn(),
                    ln_ffn: ln(),
                    ffn: ffn(),
                })
                .collect(),
            dec_norm: ln(),
            out_proj: Tensor::zeros(&[d, config.tgt_vocab]),
            out_bias: Tensor::zeros(&[config.tgt_vocab]),
        }
    }

    /// Seeded initialisation: Xavier-uniform projections, N(0, d^-1/2)
    /// embeddings, zero biases, unit layer-norm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(config);
        let embed_std = (config.d_model as f64).powf(-0.5);
        p.visit_mut(&mut |name, t| {
            let shape = t.shape().to_vec();
            if name.ends_with("gamma") {
                t.data_mut().iter_mut().for_each(|v| *v = T::one());
            } else if name.ends_with("_embed") {
                for v in t.data_mut() {
                    *v = T::from_f64c(gaussian(&mut rng) * embed_std);
                }
            } else if shape.len() == 2 {
                let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                for v in t.data_mut() {
                    *v = T::from_f64c(rng.gen_range(-bound..bound));
                }
            }
        });
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// Visits every tensor in a fixed order with its dotted name.
    pub fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<T>)) {
        f("src_embed", &self.src_embed);
        f("tgt_embed", &self.tgt_embed);
        for (i, l) in self.encoder.iter().enumerate() {
            f(&format!("encoder.{i}.ln_attn.gamma"), &l.ln_attn.gamma);
            f(&format!("encoder.{i}.ln_attn.beta"), &l.ln_attn.beta);
            visit_attention!(l.self_attn, format!("encoder.{i}.self_attn"), f);
            f(&format!("encoder.{i}.ln_ffn.gamma"), &l.ln_ffn.gamma);
            f(&format!("encoder.{i}.ln_ffn.beta"), &l.ln_ffn.beta);
            f(&format!("encoder.{i}.ffn.w1"), &l.ffn.w1);
            f(&format!("encoder.{i}.ffn.b1"), &l.ffn.b1);
            f(&format!("encoder.{i}.ffn.w2"), &l.ffn.w2);
            f(&format!("encoder.{i}.ffn.b2"), &l.ffn.b2);
        }
        f("enc_norm.gamma", &self.enc_norm.gamma);
        f("enc_norm.beta", &self.enc_norm.beta);
        for (i, l) in self.decoder.iter().enumerate() {
            f(&format!("decoder.{i}.ln_self.gamma"), &l.ln_self.gamma);
            f(&format!("decoder.{i}.ln_self.beta"), &l.ln_self.beta);
            visit_attention!(l.self_attn, format!("decoder.{i}.self_attn"), f);
            f(&format!("decoder.{i}.ln_cross.gamma"), &l.ln_cross.gamma);
            f(&format!("decoder.{i}.ln_cross.beta"), &l.ln_cross.beta);
            visit_attention!(l.cross_attn, format!("decoder.{i}.cross_attn"), f);
            f(&format!("decoder.{i}.ln_ffn.gamma"), &l.ln_ffn.gamma);
            f(&format!("decoder.{i}.ln_ffn.beta"), &l.ln_ffn.beta);
            f(&format!("decoder.{i}.ffn.w1"), &l.ffn.w1);
            f(&format!("decoder.{i}.ffn.b1"), &l.ffn.b1);
            f(&format!("decoder.{i}.ffn.w2"), &l.ffn.w2);
            f(&format!("decoder.{i}.ffn.b2"), &l.ffn.b2);
        }
        f("dec_norm.gamma", &self.dec_norm.gamma);
        f("dec_norm.beta", &self.dec_norm.beta);
        f("out_proj", &self.out_proj);
        f("out_bias", &self.out_bias);
    }

    /// Mutable counterpart of [`visit`](Self::visit), same order.
    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        f("src_embed", &mut self.src_embed);
        f("tgt_embed", &mut self.tgt_embed);
        for (i, l) in self.encoder.iter_mut().enumerate() {
            f(&format!("encoder.{i}.ln_attn.gamma"), &mut l.ln_attn.gamma);
            f(&format!("encoder.{i}.ln_attn.beta"), &mut l.ln_attn.beta);
            visit_attention_mut!(l.self_attn, format!("encoder.{i}.self_attn"), f);
            f(&format!("encoder.{i}.ln_ffn.gamma"), &mut l.ln_ffn.gamma);
            f(&format!("encoder.{i}.ln_ffn.beta"), &mut l.ln_ffn.beta);
            f(&format!("encoder.{i}.ffn.w1"), &mut l.ffn.w1);
            f(&format!("encoder.{i}.ffn.b1"), &mut l.ffn.b1);
            f(&format!("encoder.{i}.ffn.w2"), &mut l.ffn.w2);
            f(&format!("encoder.{i}.ffn.b2"), &mut l.ffn.b2);
        }
        f("enc_norm.gamma", &mut self.enc_norm.gamma);
        f("enc_norm.beta", &mut self.enc_norm.beta);
        for (i, l) in self.decoder.iter_mut().enumerate() {
            f(&format!("decoder.{i}.ln_self.gamma"), &mut l.ln_self.gamma);
            f(&format!("decoder.{i}.ln_self.beta"), &mut l.ln_self.beta);
            visit_attention_mut!(l.self_attn, format!("decoder.{i}.self_attn"), f);
            f(
                &format!("decoder.{i}.ln_cross.gamma"),
                &mut l.ln_cross.gamma,
            );
            f(&format!("decoder.{i}.ln_cross.beta"), &mut l.ln_cross.beta);
            visit_attention_mut!(l.cross_attn, format!("decoder.{i}.cross_attn"), f);
            f(&format!("decoder.{i}.ln_ffn.gamma"), &mut l.ln_ffn.gamma);
            f(&format!("decoder.{i}.ln_ffn.beta"), &mut l.ln_ffn.beta);
            f(&format!("decoder.{i}.ffn.w1"), &mut l.ffn.w1);
            f(&format!("decoder.{i}.ffn.b1"), &mut l.ffn.b1);
            f(&format!("decoder.{i}.ffn.w2"), &mut l.ffn.w2);
            f(&format!("decoder.{i}.ffn.b2"), &mut l.ffn.b2);
        }
        f("dec_norm.gamma", &mut self.dec_norm.gamma);
        f("dec_norm.beta", &mut self.dec_norm.beta);
        f("out_proj", &mut self.out_proj);
        f("out_bias", &mut self.out_bias);
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |n, _| out.push(n.to_string()));
        out
    }

    pub fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, t| ok &= t.all_finite());
        ok
    }

    /// First tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        let mut bad = None;
        self.visit(&mut |n, t| {
            if bad.is_none() && !t.all_finite() {
                bad = Some(n.to_string());
            }
        });
        bad
    }

    /// Adds `other` elementwise (gradient accumulation).
    pub fn accumulate(&mut self, other: &Self) {
        let mut rhs = Vec::new();
        other.visit(&mut |_, t| rhs.push(t.data().to_vec()));
        let mut it = rhs.into_iter();
        self.visit_mut(&mut |_, t| {
            let src = it.next().expect("same layout");
            for (a, b) in t.data_mut().iter_mut().zip(src) {
                *a += b;
            }
        });
    }

    /// Global L2 norm over all tensors.
    pub fn global_norm(&self) -> f64 {
        let mut sq = 0.0;
        self.visit(&mut |_, t| {
            let n = t.l2_norm();
            sq += n * n;
        });
        sq.sqrt()
    }

    pub fn scale(&mut self, factor: T) {
        self.visit_mut(&mut |_, t| t.data_mut().iter_mut().for_each(|v| *v *= factor));
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(&self.config);
        let mut src = Vec::new();
        self.visit(&mut |_, t| src.push(t.cast::<U>()));
        let mut it = src.into_iter();
        out.visit_mut(&mut |_, t| *t = it.next().expect("same layout"));
        out
    }
}

/// Standard normal via Box-Muller; keeps initialisation independent of
/// distribution crates.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
