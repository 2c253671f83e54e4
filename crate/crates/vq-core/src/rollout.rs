//! Desk-scale two-channel policy environment and hybrid rollout scheduling.
//!
//! A `ToyTask` has `K` distinct questions and `A` answer options. The policy
//! is linear-softmax over two feature channels: a standard context carries
//! the question on the text channel (the image holds no question text, so the
//! visual channel is zero), while a visual-question context carries it on the
//! visual channel only. The text-channel weights are initialized to already
//! encode the question-to-answer mapping, modeling a pre-learned parametric
//! shortcut; the visual channel starts untrained. Training on standard
//! contexts therefore never exercises the visual pathway, while VQ training
//! forces it — which is exactly the effect the rendered-question pipeline
//! targets at full scale.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::RenderMode;
use crate::grpo::{self, GrpoError, ResponseStats};
use crate::seed;

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("a rollout group needs n1 + n2 >= 2, got {0}")]
    GroupTooSmall(usize),
    #[error("question index {question} out of range for task with {count} questions")]
    BadQuestion { question: usize, count: usize },
    #[error("training needs steps >= 1")]
    ZeroSteps,
    #[error("temperature must be > 0, got {0}")]
    BadTemperature(f64),
    #[error("non-finite gradient at ({row}, {col})")]
    NonFiniteGradient { row: usize, col: usize },
    #[error(transparent)]
    Grpo(#[from] GrpoError),
}

/// A bank of `K` questions with verifiable answers among `A` options.
#[derive(Debug, Clone)]
pub struct ToyTask {
    pub num_actions: usize,
    /// truth[q] is the correct option index for question q.
    pub truth: Vec<usize>,
}

impl ToyTask {
    pub fn new(num_actions: usize, truth: Vec<usize>) -> Self {
        assert!(num_actions >= 2, "need at least 2 answer options");
        assert!(truth.iter().all(|&t| t < num_actions));
        ToyTask { num_actions, truth }
    }

    pub fn random<R: Rng>(num_questions: usize, num_actions: usize, rng: &mut R) -> Self {
        let truth = (0..num_questions).map(|_| rng.gen_range(0..num_actions)).collect();
        ToyTask::new(num_actions, truth)
    }

    pub fn num_questions(&self) -> usize {
        self.truth.len()
    }
}

/// Two-channel feature vectors for one question.
#[derive(Debug, Clone)]
pub struct ToyContext {
    pub text_features: Array1<f64>,
    pub vis_features: Array1<f64>,
}

impl ToyContext {
    /// Question on the text channel; no question text in the image.
    pub fn standard(question: usize, num_questions: usize) -> Self {
        let mut text = Array1::zeros(num_questions);
        text[question] = 1.0;
        ToyContext { text_features: text, vis_features: Array1::zeros(num_questions) }
    }

    /// Question rendered into the image; text channel carries only the
    /// generic instruction, i.e. nothing question-specific.
    pub fn visual_question(question: usize, num_questions: usize) -> Self {
        let mut vis = Array1::zeros(num_questions);
        vis[question] = 1.0;
        ToyContext { text_features: Array1::zeros(num_questions), vis_features: vis }
    }

    pub fn for_mode(mode: RenderMode, question: usize, num_questions: usize) -> Self {
        match mode {
            RenderMode::Orig => ToyContext::standard(question, num_questions),
            RenderMode::Vq => ToyContext::visual_question(question, num_questions),
        }
    }
}

/// Linear-softmax policy over the concatenated channels.
#[derive(Debug, Clone)]
pub struct ToyPolicy {
    /// A x K text-channel weights.
    pub w_text: Array2<f64>,
    /// A x K visual-channel weights.
    pub w_vis: Array2<f64>,
    pub temperature: f64,
}

impl ToyPolicy {
    pub fn zeros(task: &ToyTask, temperature: f64) -> Result<Self, RolloutError> {
        if temperature <= 0.0 || !temperature.is_finite() {
            return Err(RolloutError::BadTemperature(temperature));
        }
        let shape = (task.num_actions, task.num_questions());
        Ok(ToyPolicy { w_text: Array2::zeros(shape), w_vis: Array2::zeros(shape), temperature })
    }

    /// Shortcut initialization: the text channel already maps each question
    /// to its answer with strength `c`; the visual channel starts at zero.
    pub fn shortcut_init(task: &ToyTask, c: f64, temperature: f64) -> Result<Self, RolloutError> {
        let mut policy = ToyPolicy::zeros(task, temperature)?;
        for (q, &t) in task.truth.iter().enumerate() {
            policy.w_text[(t, q)] = c;
        }
        Ok(policy)
    }

    /// Temperature-scaled logits for a context.
    pub fn scaled_logits(&self, ctx: &ToyContext) -> Array1<f64> {
        let z = self.w_text.dot(&ctx.text_features) + self.w_vis.dot(&ctx.vis_features);
        z / self.temperature
    }

    pub fn log_probs(&self, ctx: &ToyContext) -> Vec<f64> {
        grpo::log_softmax(self.scaled_logits(ctx).as_slice().unwrap())
    }

    pub fn sample<R: Rng>(&self, ctx: &ToyContext, rng: &mut R) -> usize {
        let probs: Vec<f64> = self.log_probs(ctx).iter().map(|lp| lp.exp()).collect();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }

    /// Greedy action; ties break toward the lowest index.
    pub fn greedy(&self, ctx: &ToyContext) -> usize {
        let z = self.scaled_logits(ctx);
        let mut best = 0;
        for i in 1..z.len() {
            if z[i] > z[best] {
                best = i;
            }
        }
        best
    }
}

/// One sampled response within a group.
#[derive(Debug, Clone)]
pub struct RolloutResponse {
    pub mode: RenderMode,
    pub action: usize,
    pub reward: f64,
    pub old_logprob: f64,
    pub new_logprob: f64,
    pub kl: f64,
}

/// G responses for one question with jointly computed advantages.
#[derive(Debug, Clone)]
pub struct RolloutGroup {
    pub question: usize,
    pub responses: Vec<RolloutResponse>,
    pub advantages: Vec<f64>,
}

impl RolloutGroup {
    pub fn rewards(&self) -> Vec<f64> {
        self.responses.iter().map(|r| r.reward).collect()
    }

    pub fn mean_reward(&self) -> f64 {
        let r = self.rewards();
        r.iter().sum::<f64>() / r.len() as f64
    }
}

/// Builds `n1` standard-tagged plus `n2` VQ-tagged contexts for one question.
pub fn make_contexts(
    question: usize,
    num_questions: usize,
    n1: usize,
    n2: usize,
) -> Result<Vec<(ToyContext, RenderMode)>, RolloutError> {
    if n1 + n2 < 2 {
        return Err(RolloutError::GroupTooSmall(n1 + n2));
    }
    if question >= num_questions {
        return Err(RolloutError::BadQuestion { question, count: num_questions });
    }
    let mut out = Vec::with_capacity(n1 + n2);
    for _ in 0..n1 {
        out.push((ToyContext::standard(question, num_questions), RenderMode::Orig));
    }
    for _ in 0..n2 {
        out.push((ToyContext::visual_question(question, num_questions), RenderMode::Vq));
    }
    Ok(out)
}

/// Samples one action per context from the old policy, scores it against the
/// task's ground truth, and computes advantages jointly over all responses.
pub fn rollout_group<R: Rng>(
    policy: &ToyPolicy,
    old_policy: &ToyPolicy,
    ref_policy: &ToyPolicy,
    question: usize,
    contexts: &[(ToyContext, RenderMode)],
    task: &ToyTask,
    rng: &mut R,
    guard_eps: f64,
) -> Result<RolloutGroup, RolloutError> {
    if contexts.len() < 2 {
        return Err(RolloutError::GroupTooSmall(contexts.len()));
    }
    if question >= task.num_questions() {
        return Err(RolloutError::BadQuestion { question, count: task.num_questions() });
    }
    let truth = task.truth[question];
    let mut responses = Vec::with_capacity(contexts.len());
    for (ctx, mode) in contexts {
        let action = old_policy.sample(ctx, rng);
        let old_logprob = old_policy.log_probs(ctx)[action];
        let new_logprob = policy.log_probs(ctx)[action];
        let kl = grpo::categorical_kl(
            policy.scaled_logits(ctx).as_slice().unwrap(),
            ref_policy.scaled_logits(ctx).as_slice().unwrap(),
        )?;
        responses.push(RolloutResponse {
            mode: *mode,
            action,
            reward: if action == truth { 1.0 } else { 0.0 },
            old_logprob,
            new_logprob,
            kl,
        });
    }
    let rewards: Vec<f64> = responses.iter().map(|r| r.reward).collect();
    let advantages = grpo::group_advantages(&rewards, guard_eps)?;
    Ok(RolloutGroup { question, responses, advantages })
}

/// Which context the update pass conditions each response on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateOn {
    /// Condition on the context the response was sampled from.
    #[default]
    Own,
    /// Condition every response on the standard context.
    Orig,
}

#[derive(Debug, Clone, Copy)]
pub struct StepConfig {
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub guard_eps: f64,
    pub lr: f64,
    pub update_on: UpdateOn,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            clip_eps: 0.2,
            kl_beta: 0.01,
            guard_eps: 1e-6,
            lr: 0.1,
            update_on: UpdateOn::Own,
        }
    }
}

fn update_context(r: &RolloutResponse, question: usize, k: usize, update_on: UpdateOn) -> ToyContext {
    match update_on {
        UpdateOn::Own => ToyContext::for_mode(r.mode, question, k),
        UpdateOn::Orig => ToyContext::standard(question, k),
    }
}

/// Average per-group loss over a batch of groups, recomputed against the
/// given policy under the configured update conditioning. This is the scalar
/// whose analytical gradient [`policy_gradient_step`] descends; tests check
/// the two against each other by finite differences.
pub fn batch_loss(
    policy: &ToyPolicy,
    old_policy: &ToyPolicy,
    ref_policy: &ToyPolicy,
    groups: &[RolloutGroup],
    cfg: &StepConfig,
) -> Result<f64, RolloutError> {
    let k = policy.w_text.ncols();
    let mut total = 0.0;
    for group in groups {
        let stats: Vec<ResponseStats> = group
            .responses
            .iter()
            .map(|r| {
                let ctx = update_context(r, group.question, k, cfg.update_on);
                let kl = grpo::categorical_kl(
                    policy.scaled_logits(&ctx).as_slice().unwrap(),
                    ref_policy.scaled_logits(&ctx).as_slice().unwrap(),
                )?;
                Ok(ResponseStats {
                    new_logprob: policy.log_probs(&ctx)[r.action],
                    old_logprob: old_policy.log_probs(&ctx)[r.action],
                    kl,
                })
            })
            .collect::<Result<_, RolloutError>>()?;
        total += grpo::group_loss(&stats, &group.rewards(), cfg.clip_eps, cfg.kl_beta, cfg.guard_eps)?;
    }
    Ok(total / groups.len() as f64)
}

/// One gradient-descent step on the analytical gradient of [`batch_loss`]
/// with respect to both channel matrices.
pub fn policy_gradient_step(
    policy: &ToyPolicy,
    old_policy: &ToyPolicy,
    ref_policy: &ToyPolicy,
    groups: &[RolloutGroup],
    cfg: &StepConfig,
) -> Result<ToyPolicy, RolloutError> {
    let (a, k) = policy.w_text.dim();
    let temp = policy.temperature;
    let mut grad_text: Array2<f64> = Array2::zeros((a, k));
    let mut grad_vis: Array2<f64> = Array2::zeros((a, k));

    for group in groups {
        let advantages = grpo::group_advantages(&group.rewards(), cfg.guard_eps)?;
        let g = group.responses.len() as f64;
        for (r, &adv) in group.responses.iter().zip(&advantages) {
            let ctx = update_context(r, group.question, k, cfg.update_on);
            let lp = policy.log_probs(&ctx);
            let probs: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
            let old_lp = old_policy.log_probs(&ctx)[r.action];
            let ratio = (lp[r.action] - old_lp).exp();

            // d surrogate / d z: the clipped branch has zero derivative when
            // it is strictly selected (ratio outside the clip band)
            let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
            let unclipped_selected = ratio * adv <= clipped * adv;
            let mut dz = vec![0.0; a];
            if unclipped_selected {
                let coeff = adv * ratio / temp;
                for j in 0..a {
                    let indicator = if j == r.action { 1.0 } else { 0.0 };
                    dz[j] += coeff * (indicator - probs[j]);
                }
            }

            // d KL(p || q_ref) / d z = p * ((log p - log q) - KL) / temp
            if cfg.kl_beta != 0.0 {
                let ref_lp = grpo::log_softmax(
                    ref_policy.scaled_logits(&ctx).as_slice().unwrap(),
                );
                let kl: f64 = lp
                    .iter()
                    .zip(&ref_lp)
                    .map(|(&p_lp, &q_lp)| p_lp.exp() * (p_lp - q_lp))
                    .sum();
                for j in 0..a {
                    let dkl = probs[j] * ((lp[j] - ref_lp[j]) - kl) / temp;
                    dz[j] -= cfg.kl_beta * dkl;
                }
            }

            // loss = -(1/G) * mean over groups of sum_i [surr_i - beta*kl_i]
            let scale = -1.0 / (g * groups.len() as f64);
            for j in 0..a {
                let d = scale * dz[j];
                for q in 0..k {
                    grad_text[(j, q)] += d * ctx.text_features[q];
                    grad_vis[(j, q)] += d * ctx.vis_features[q];
                }
            }
        }
    }

    for ((row, col), v) in grad_text.indexed_iter().chain(grad_vis.indexed_iter()) {
        if !v.is_finite() {
            return Err(RolloutError::NonFiniteGradient { row, col });
        }
    }

    Ok(ToyPolicy {
        w_text: &policy.w_text - &(grad_text * cfg.lr),
        w_vis: &policy.w_vis - &(grad_vis * cfg.lr),
        temperature: policy.temperature,
    })
}

/// Greedy accuracy of a policy over all task questions under one context kind.
pub fn evaluate_toy(policy: &ToyPolicy, task: &ToyTask, kind: RenderMode) -> f64 {
    let k = task.num_questions();
    let correct = (0..k)
        .filter(|&q| policy.greedy(&ToyContext::for_mode(kind, q, k)) == task.truth[q])
        .count();
    correct as f64 / k as f64
}

/// Rollout-context policy for a whole training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainMode {
    StandardOnly,
    VqOnly,
    Hybrid { n1: usize, n2: usize },
    /// Each (step, question) group is all-VQ with this probability, else
    /// all-standard.
    MixedRatio(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct ToyTrainConfig {
    /// Group size G for the non-hybrid modes.
    pub group_size: usize,
    pub temperature: f64,
    pub shortcut_strength: f64,
    pub step: StepConfig,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        ToyTrainConfig {
            group_size: 6,
            temperature: 1.0,
            shortcut_strength: 2.0,
            step: StepConfig::default(),
        }
    }
}

/// One line of the training trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub mean_reward: f64,
    pub eval_standard: f64,
    pub eval_vq: f64,
    /// Frobenius norm of (w_text - w_text at initialization).
    pub w_text_norm: f64,
    /// Frobenius norm of (w_vis - w_vis at initialization).
    pub w_vis_norm: f64,
}

pub struct TrainResult {
    pub trace: Vec<TraceRow>,
    pub policy: ToyPolicy,
    pub initial_policy: ToyPolicy,
}

fn frob(delta: &Array2<f64>) -> f64 {
    delta.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Runs the snapshot / sample-groups / step loop from the shortcut
/// initialization. The reference policy is frozen at initialization.
pub fn train_toy(
    task: &ToyTask,
    mode: TrainMode,
    steps: usize,
    root_seed: u64,
    cfg: &ToyTrainConfig,
) -> Result<TrainResult, RolloutError> {
    if steps == 0 {
        return Err(RolloutError::ZeroSteps);
    }
    let k = task.num_questions();
    let initial = ToyPolicy::shortcut_init(task, cfg.shortcut_strength, cfg.temperature)?;
    let ref_policy = initial.clone();
    let mut policy = initial.clone();
    let mut trace = Vec::with_capacity(steps);

    for step in 0..steps {
        let old_policy = policy.clone();
        let step_seed = seed::derive(root_seed, step as u64);
        let mut groups = Vec::with_capacity(k);
        for q in 0..k {
            let mut rng = seed::rng_for(step_seed, q as u64);
            let (n1, n2) = match mode {
                TrainMode::StandardOnly => (cfg.group_size, 0),
                TrainMode::VqOnly => (0, cfg.group_size),
                TrainMode::Hybrid { n1, n2 } => (n1, n2),
                TrainMode::MixedRatio(rho) => {
                    if rng.gen::<f64>() < rho {
                        (0, cfg.group_size)
                    } else {
                        (cfg.group_size, 0)
                    }
                }
            };
            let contexts = make_contexts(q, k, n1, n2)?;
            groups.push(rollout_group(
                &policy,
                &old_policy,
                &ref_policy,
                q,
                &contexts,
                task,
                &mut rng,
                cfg.step.guard_eps,
            )?);
        }
        policy = policy_gradient_step(&policy, &old_policy, &ref_policy, &groups, &cfg.step)?;
        let total: f64 = groups.iter().map(|g| g.rewards().iter().sum::<f64>()).sum();
        let count: usize = groups.iter().map(|g| g.responses.len()).sum();
        trace.push(TraceRow {
            step: step + 1,
            mean_reward: total / count as f64,
            eval_standard: evaluate_toy(&policy, task, RenderMode::Orig),
            eval_vq: evaluate_toy(&policy, task, RenderMode::Vq),
            w_text_norm: frob(&(&policy.w_text - &initial.w_text)),
            w_vis_norm: frob(&(&policy.w_vis - &initial.w_vis)),
        });
    }

    Ok(TrainResult { trace, policy, initial_policy: initial })
}
