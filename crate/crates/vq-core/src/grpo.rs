//! Group-relative policy optimization kernels.
//!
//! All functions here are pure. Advantages normalize rewards within a group
//! of `G` responses; the surrogate is the PPO-style clipped objective with an
//! exact categorical KL penalty against a frozen reference distribution.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GrpoError {
    #[error("reward group needs at least 2 entries, got {0}")]
    GroupTooSmall(usize),
    #[error("non-finite value in {context}: {value}")]
    NonFinite { context: &'static str, value: f64 },
    #[error("logit vectors differ in length: {0} vs {1}")]
    LogitLengthMismatch(usize, usize),
    #[error("logit vectors need at least 2 entries, got {0}")]
    LogitsTooShort(usize),
    #[error("inconsistent lengths: {0} responses vs {1} rewards")]
    LengthMismatch(usize, usize),
}

/// Per-response inputs to [`group_loss`].
#[derive(Debug, Clone, Copy)]
pub struct ResponseStats {
    /// log pi_theta(o_i | q) under the policy being updated.
    pub new_logprob: f64,
    /// log pi_theta_old(o_i | q) under the rollout snapshot.
    pub old_logprob: f64,
    /// KL(pi_theta || pi_ref) on this response's context.
    pub kl: f64,
}

/// Centers and normalizes rewards within the group:
/// `(r_i - mean) / (pop_std + guard_eps)`.
///
/// A zero-spread group with `guard_eps = 0` yields all-zero advantages; an
/// all-correct or all-wrong group carries no learning signal.
pub fn group_advantages(rewards: &[f64], guard_eps: f64) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    for &r in rewards {
        if !r.is_finite() {
            return Err(GrpoError::NonFinite { context: "reward", value: r });
        }
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let denom = std + guard_eps;
    if denom == 0.0 {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// `min(ratio * A, clamp(ratio, 1-eps, 1+eps) * A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Exact `KL(softmax(p_logits) || softmax(q_logits))` for categorical
/// distributions, computed with max-subtracted log-softmax.
pub fn categorical_kl(p_logits: &[f64], q_logits: &[f64]) -> Result<f64, GrpoError> {
    if p_logits.len() != q_logits.len() {
        return Err(GrpoError::LogitLengthMismatch(p_logits.len(), q_logits.len()));
    }
    if p_logits.len() < 2 {
        return Err(GrpoError::LogitsTooShort(p_logits.len()));
    }
    for &z in p_logits.iter().chain(q_logits) {
        if !z.is_finite() {
            return Err(GrpoError::NonFinite { context: "logit", value: z });
        }
    }
    let lp = log_softmax(p_logits);
    let lq = log_softmax(q_logits);
    let kl = lp
        .iter()
        .zip(&lq)
        .map(|(&a, &b)| a.exp() * (a - b))
        .sum::<f64>();
    Ok(kl)
}

/// Max-subtracted log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|z| z - log_z).collect()
}

/// The per-group loss of the training loop (negated objective):
/// `-(1/G) * sum_i [ clipped_surrogate(ratio_i, A_i, eps) - beta * kl_i ]`
/// with `ratio_i = exp(new_logprob_i - old_logprob_i)`.
pub fn group_loss(
    responses: &[ResponseStats],
    rewards: &[f64],
    clip_eps: f64,
    kl_beta: f64,
    guard_eps: f64,
) -> Result<f64, GrpoError> {
    if responses.len() != rewards.len() {
        return Err(GrpoError::LengthMismatch(responses.len(), rewards.len()));
    }
    for s in responses {
        for (v, ctx) in [
            (s.new_logprob, "new_logprob"),
            (s.old_logprob, "old_logprob"),
            (s.kl, "kl"),
        ] {
            if !v.is_finite() {
                return Err(GrpoError::NonFinite { context: ctx, value: v });
            }
        }
    }
    let advantages = group_advantages(rewards, guard_eps)?;
    let g = responses.len() as f64;
    let total: f64 = responses
        .iter()
        .zip(&advantages)
        .map(|(s, &a)| {
            let ratio = (s.new_logprob - s.old_logprob).exp();
            clipped_surrogate(ratio, a, clip_eps) - kl_beta * s.kl
        })
        .sum();
    Ok(-total / g)
}
