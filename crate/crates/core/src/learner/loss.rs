use crate::error::{Error, Result};

/// Inputs to the logistic squash are clipped to this distance from 0 and 1.
pub const PROB_CLIP: f64 = 1e-6;

/// One supervised value: flat channel-major index `yaw * H * W + v * W + u`
/// into the value output, and its target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueTarget {
    pub index: usize,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean squared error over labeled cells (0 without labels).
    pub mse: f64,
    /// Mean binary cross-entropy over all obstacle pixels.
    pub bce: f64,
    pub labels: usize,
}

/// Loss value and its gradients with respect to the network outputs and
/// the two log task weights.
#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub breakdown: LossBreakdown,
    pub d_values: Vec<f64>,
    pub d_logits: Vec<f64>,
    pub d_log_sigma1: f64,
    pub d_log_sigma2: f64,
}

/// Multitask loss with learnable uncertainty weights:
/// `MSE / (2 s1^2) + BCE / s2^2 + ln s1 + ln s2`, with `s = exp(log_sigma)`.
///
/// The squared error is averaged over the labeled cells only; without labels
/// that term vanishes. Probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]`
/// and clipped pixels carry no gradient.
pub fn multitask_loss(
    values: &[f64],
    logits: &[f64],
    targets: &[ValueTarget],
    obstacle_gt: &[bool],
    log_sigma1: f64,
    log_sigma2: f64,
) -> Result<LossEval> {
    if logits.len() != obstacle_gt.len() || logits.is_empty() {
        return Err(Error::Shape("obstacle logits and targets differ in size".into()));
    }
    let w1 = (-2.0 * log_sigma1).exp();
    let w2 = (-2.0 * log_sigma2).exp();

    let mut d_values = vec![0.0; values.len()];
    let mut mse = 0.0;
    if !targets.is_empty() {
        let n = targets.len() as f64;
        for t in targets {
            let pred = *values.get(t.index).ok_or_else(|| Error::Shape("value label out of range".into()))?;
            let r = pred - t.value;
            mse += r * r / n;
            d_values[t.index] += 0.5 * w1 * 2.0 * r / n;
        }
    }

    let n = logits.len() as f64;
    let mut bce = 0.0;
    let mut d_logits = vec![0.0; logits.len()];
    for ((&z, &gt), d) in logits.iter().zip(obstacle_gt).zip(&mut d_logits) {
        let p = 1.0 / (1.0 + (-z).exp());
        let clipped = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        let y = if gt { 1.0 } else { 0.0 };
        bce -= (y * clipped.ln() + (1.0 - y) * (1.0 - clipped).ln()) / n;
        if clipped == p {
            *d = w2 * (p - y) / n;
        }
    }

    let total = 0.5 * w1 * mse + w2 * bce + log_sigma1 + log_sigma2;
    if !total.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(LossEval {
        breakdown: LossBreakdown { total, mse, bce, labels: targets.len() },
        d_values,
        d_logits,
        d_log_sigma1: 1.0 - w1 * mse,
        d_log_sigma2: 1.0 - 2.0 * w2 * bce,
    })
}
