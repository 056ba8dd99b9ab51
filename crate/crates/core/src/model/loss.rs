use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

/// Cross-entropy summary over the unpadded target tokens of one or more sentences.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    /// Summed (label-smoothed) cross-entropy.
    pub total: f64,
    /// `total / tokens`.
    pub per_token: f64,
    pub tokens: usize,
}

impl LossReport {
    pub fn from_total(total: f64, tokens: usize) -> Self {
        Self {
            total,
            per_token: if tokens == 0 {
                0.0
            } else {
                total / tokens as f64
            },
            tokens,
        }
    }

    pub fn merge(self, other: Self) -> Self {
        Self::from_total(self.total + other.total, self.tokens + other.tokens)
    }
}

/// Label-smoothed cross-entropy against the target distribution
/// `q = (1 - eps) * onehot(y) + eps / V`. With `eps = 0` this is
/// `-sum_i log p(y_i)` over unpadded steps.
pub fn loss<T: Real>(
    log_probs: &Tensor<T>,
    targets: &[u32],
    pad: &[bool],
    eps: f64,
) -> Result<LossReport> {
    check(log_probs, targets, pad)?;
    let v = log_probs.cols();
    let mut total = 0.0;
    let mut tokens = 0;
    for (r, (&y, &is_pad)) in targets.iter().zip(pad).enumerate() {
        if is_pad {
            continue;
        }
        let row = log_probs.row(r);
        let target = row[y as usize].to_f64().unwrap_or(f64::NAN);
        let mut sum_all = 0.0;
        for &lp in row {
            sum_all += lp.to_f64().unwrap_or(f64::NAN);
        }
        total += -(1.0 - eps) * target - eps / v as f64 * sum_all;
        tokens += 1;
    }
    if tokens == 0 {
        return Err(Error::InvalidArgument(
            "target contains only padding: no learning signal".into(),
        ));
    }
    Ok(LossReport::from_total(total, tokens))
}

/// Gradient of `scale * total_loss` with respect to the pre-softmax logits:
/// `scale * (p - q)` on unpadded rows, zero on padded rows.
pub fn loss_gradient<T: Real>(
    log_probs: &Tensor<T>,
    targets: &[u32],
    pad: &[bool],
    eps: f64,
    scale: f64,
) -> Result<Vec<T>> {
    check(log_probs, targets, pad)?;
    let v = log_probs.cols();
    let uniform = T::from_f64c(eps / v as f64);
    let hit = T::from_f64c(1.0 - eps);
    let scale = T::from_f64c(scale);
    let mut grad = vec![T::zero(); log_probs.len()];
    for (r, (&y, &is_pad)) in targets.iter().zip(pad).enumerate() {
        if is_pad {
            continue;
        }
        let row = log_probs.row(r);
        let g = &mut grad[r * v..(r + 1) * v];
        for (j, (gj, &lp)) in g.iter_mut().zip(row).enumerate() {
            let mut q = uniform;
            if j == y as usize {
                q += hit;
            }
            *gj = (lp.exp() - q) * scale;
        }
    }
    Ok(grad)
}

/// Entropy of the smoothed target distribution: the minimum achievable
/// per-token loss.
pub fn smoothed_target_entropy(vocab: usize, eps: f64) -> f64 {
    let u = eps / vocab as f64;
    let hit = 1.0 - eps + u;
    let mut h = 0.0;
    if hit > 0.0 {
        h -= hit * hit.ln();
    }
    if u > 0.0 {
        h -= (vocab - 1) as f64 * u * u.ln();
    }
    h
}

fn check<T: Real>(log_probs: &Tensor<T>, targets: &[u32], pad: &[bool]) -> Result<()> {
    if log_probs.shape().len() != 2
        || log_probs.rows() != targets.len()
        || pad.len() != targets.len()
    {
        return Err(Error::Shape(format!(
            "log-probabilities {:?} vs {} targets and {} pad flags",
            log_probs.shape(),
            targets.len(),
            pad.len()
        )));
    }
    if let Some(&y) = targets
        .iter()
        .zip(pad)
        .find(|(&y, &p)| !p && y as usize >= log_probs.cols())
        .map(|(y, _)| y)
    {
        return Err(Error::InvalidArgument(format!(
            "target {y} outside vocabulary of {}",
            log_probs.cols()
        )));
    }
    Ok(())
}
