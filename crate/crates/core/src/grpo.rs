//! Group-relative policy optimisation of the selection policy: group-normalised
//! advantages, the clipped surrogate (no KL term), AdamW, and the per-scene
//! training loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::argen::{GenerationState, Noise, SegmentState};
use crate::error::{Error, Result};
use crate::plsampler::{greedy_topk, pl_logprob, pl_logprob_grad, sample_topk, RankingSelection};
use crate::policynet::{score_context_recorded, PolicyParams, PromptEmbedding};
use crate::rewards::RewardBreakdown;
use crate::rng::{derive_stream, purpose, rollout_stream};
use crate::rollout::{SceneEvaluator, ScoredSegment};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields, default))]
pub struct GrpoConfig {
    pub group_size: usize,
    /// Clip range δ of the importance ratio.
    pub clip_delta: f64,
    pub learning_rate: f64,
    /// Optimisation iterations per scene.
    pub iterations: usize,
    /// Gradient steps taken on each sampled group.
    pub inner_epochs: usize,
    /// Floor ε on the reward standard deviation.
    pub std_floor: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 10,
            clip_delta: 0.2,
            learning_rate: 1e-3,
            iterations: 20,
            inner_epochs: 1,
            std_floor: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::GroupSize(self.group_size));
        }
        if !(self.clip_delta > 0.0 && self.clip_delta < 1.0) {
            return Err(Error::Config(format!("clip δ must lie in (0, 1), got {}", self.clip_delta)));
        }
        if self.inner_epochs == 0 {
            return Err(Error::Config("inner_epochs must be ≥ 1".into()));
        }
        // Negated so NaN fails too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.learning_rate >= 0.0) || !(self.std_floor > 0.0) {
            return Err(Error::Config("learning rate must be ≥ 0 and std floor > 0".into()));
        }
        Ok(())
    }
}

/// `(rᵢ − mean) / std` with population std; all zeros when `std < std_floor`.
///
/// Rewards are centred on the first entry before averaging so that adding a
/// constant to every reward does not perturb the result when the shifted
/// rewards are exactly representable.
pub fn compute_advantages(rewards: &[f64], std_floor: f64) -> Result<Vec<f64>> {
    let g = rewards.len();
    if g < 2 {
        return Err(Error::GroupSize(g));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::Numeric("non-finite reward".into()));
    }
    let anchor = rewards[0];
    let centred: Vec<f64> = rewards.iter().map(|r| r - anchor).collect();
    let mean = centred.iter().sum::<f64>() / g as f64;
    let dev: Vec<f64> = centred.iter().map(|c| c - mean).collect();
    let std = libm::sqrt(dev.iter().map(|d| d * d).sum::<f64>() / g as f64);
    if std < std_floor {
        return Ok(vec![0.0; g]);
    }
    Ok(dev.iter().map(|d| d / std).collect())
}

fn check_lengths(new: &[f64], old: &[f64], adv: &[f64]) -> Result<()> {
    if new.len() != old.len() || new.len() != adv.len() || new.is_empty() {
        return Err(Error::Shape(format!(
            "objective inputs of lengths {}, {}, {}",
            new.len(),
            old.len(),
            adv.len()
        )));
    }
    Ok(())
}

fn ratio(new: f64, old: f64) -> Result<f64> {
    let r = libm::exp(new - old);
    if !r.is_finite() {
        return Err(Error::Numeric(format!("importance ratio exp({new} − {old}) is not finite")));
    }
    Ok(r)
}

/// `(1/G) Σ min(ρA, clip(ρ, 1−δ, 1+δ)A)`, `ρ = exp(new − old)`.
pub fn grpo_objective(new: &[f64], old: &[f64], adv: &[f64], delta: f64) -> Result<f64> {
    check_lengths(new, old, adv)?;
    let mut total = 0.0;
    for i in 0..new.len() {
        let rho = ratio(new[i], old[i])?;
        let clipped = rho.clamp(1.0 - delta, 1.0 + delta);
        total += (rho * adv[i]).min(clipped * adv[i]);
    }
    Ok(total / new.len() as f64)
}

/// `∂ grpo_objective / ∂ newᵢ`: `ρA/G` where the unclipped branch is active, 0 where the clip binds.
pub fn grpo_objective_grad(new: &[f64], old: &[f64], adv: &[f64], delta: f64) -> Result<Vec<f64>> {
    check_lengths(new, old, adv)?;
    let g = new.len() as f64;
    (0..new.len())
        .map(|i| {
            let rho = ratio(new[i], old[i])?;
            let clipped = rho.clamp(1.0 - delta, 1.0 + delta);
            Ok(if rho * adv[i] <= clipped * adv[i] { rho * adv[i] / g } else { 0.0 })
        })
        .collect()
}

/// First and second moment estimates for AdamW.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: PolicyParams,
    pub v: PolicyParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &PolicyParams) -> Result<Self> {
        Ok(Self { m: PolicyParams::zeros(params.config)?, v: PolicyParams::zeros(params.config)?, step: 0 })
    }
}

/// One AdamW step minimising the loss whose gradient is `grads`.
pub fn adamw_step(
    params: &mut PolicyParams,
    grads: &PolicyParams,
    state: &mut AdamState,
    config: &GrpoConfig,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) || !params.same_shape(&state.v) {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - libm::pow(config.beta1, t);
    let bc2 = 1.0 - libm::pow(config.beta2, t);
    let grads = grads.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, (_, g)), m), v) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            let gi = g.data()[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= config.learning_rate * (m_hat / (libm::sqrt(v_hat) + config.adam_eps) + config.weight_decay * p[i]);
        }
    }
    if !params.is_finite() {
        return Err(Error::Numeric("parameters became non-finite".into()));
    }
    Ok(())
}

/// Runs `count` independent jobs. Implementations may run them concurrently
/// but must return results in index order.
pub trait RolloutExecutor {
    fn run(&self, count: usize, job: &(dyn Fn(usize) -> Result<Rollout> + Sync)) -> Vec<Result<Rollout>>;
}

/// Runs rollouts one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl RolloutExecutor for Sequential {
    fn run(&self, count: usize, job: &(dyn Fn(usize) -> Result<Rollout> + Sync)) -> Vec<Result<Rollout>> {
        (0..count).map(job).collect()
    }
}

/// One member of a group.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub selection: RankingSelection,
    pub scored: ScoredSegment,
}

/// A group of rollouts sampled from one θ_old snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRollout {
    pub rollouts: Vec<Rollout>,
    pub logprob_old: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl GroupRollout {
    pub fn rewards(&self) -> Vec<f64> {
        self.rollouts.iter().map(|r| r.scored.reward.total).collect()
    }
}

/// Summary of one training iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    pub mean_reward: f64,
    pub max_reward: f64,
    pub min_reward: f64,
    pub mean_content: f64,
    pub mean_clip: f64,
    pub mean_artifact: f64,
    /// Std of the advantages actually used (0 for a degenerate group, else 1).
    pub advantage_std: f64,
    pub objective: f64,
    pub failed_rollouts: usize,
    /// Selections of the group, in rollout order.
    pub selections: Vec<Vec<usize>>,
}

/// Everything needed to train one scene.
pub struct SceneTask<'a> {
    pub state: &'a GenerationState,
    pub prompt: &'a PromptEmbedding,
    pub prompt_id: usize,
    pub scene: usize,
    pub budget: usize,
    pub base_seed: u64,
}

pub struct SceneOutcome {
    pub committed: SegmentState,
    pub committed_selection: RankingSelection,
    pub committed_reward: RewardBreakdown,
    pub trace: Vec<IterationStats>,
}

/// Samples and scores one group under `policy`.
pub fn sample_group(
    task: &SceneTask<'_>,
    policy: &PolicyParams,
    evaluator: &SceneEvaluator,
    config: &GrpoConfig,
    iteration: usize,
    executor: &dyn RolloutExecutor,
) -> Result<GroupRollout> {
    let features = task.state.policy_features()?;
    let (scores, _) = score_context_recorded(policy, features, task.prompt)?;
    let job = |i: usize| -> Result<Rollout> {
        let mut rng = rollout_stream(task.base_seed, task.scene, iteration, i);
        let selection = sample_topk(&scores, task.budget, &mut rng)?;
        let scored = evaluator.rollout(task.state, &selection, task.prompt, task.prompt_id, Noise::Sampled, &mut rng)?;
        Ok(Rollout { selection, scored })
    };
    let rollouts = executor.run(config.group_size, &job).into_iter().collect::<Result<Vec<_>>>()?;
    let logprob_old = rollouts.iter().map(|r| r.selection.logprob()).collect();
    let rewards: Vec<f64> = rollouts.iter().map(|r| r.scored.reward.total).collect();
    let advantages = compute_advantages(&rewards, config.std_floor)?;
    Ok(GroupRollout { rollouts, logprob_old, advantages })
}

/// Applies `inner_epochs` gradient-ascent steps on the clipped objective of `group`.
/// Returns the objective value evaluated before the first step.
pub fn update_policy(
    task: &SceneTask<'_>,
    policy: &mut PolicyParams,
    optimizer: &mut AdamState,
    group: &GroupRollout,
    config: &GrpoConfig,
) -> Result<f64> {
    let features = task.state.policy_features()?;
    let mut first_objective = None;
    for _ in 0..config.inner_epochs {
        let (scores, trace) = score_context_recorded(policy, features, task.prompt)?;
        let new: Vec<f64> = group
            .rollouts
            .iter()
            .map(|r| pl_logprob(&scores, r.selection.indices()))
            .collect::<Result<_>>()?;
        let objective = grpo_objective(&new, &group.logprob_old, &group.advantages, config.clip_delta)?;
        first_objective.get_or_insert(objective);
        let coef = grpo_objective_grad(&new, &group.logprob_old, &group.advantages, config.clip_delta)?;
        let mut upstream = vec![0.0; scores.len()];
        for (r, c) in group.rollouts.iter().zip(&coef) {
            if *c == 0.0 {
                continue;
            }
            let g = pl_logprob_grad(&scores, r.selection.indices())?;
            upstream.iter_mut().zip(g).for_each(|(u, gi)| *u += c * gi);
        }
        let ascent = trace.backward(policy, &upstream)?;
        // AdamW minimises, so hand it the negated objective gradient.
        let mut loss_grad = PolicyParams::zeros(policy.config)?;
        loss_grad.add_scaled(&ascent, -1.0)?;
        adamw_step(policy, &loss_grad, optimizer, config)?;
    }
    Ok(first_objective.unwrap_or(0.0))
}

fn summarise(iteration: usize, group: &GroupRollout, objective: f64) -> IterationStats {
    let g = group.rollouts.len() as f64;
    let rewards = group.rewards();
    let mean = |f: fn(&RewardBreakdown) -> f64| group.rollouts.iter().map(|r| f(&r.scored.reward)).sum::<f64>() / g;
    let adv_std = libm::sqrt(group.advantages.iter().map(|a| a * a).sum::<f64>() / g);
    IterationStats {
        iteration,
        mean_reward: rewards.iter().sum::<f64>() / g,
        max_reward: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_reward: rewards.iter().copied().fold(f64::INFINITY, f64::min),
        mean_content: mean(|r| r.content),
        mean_clip: mean(|r| r.clip),
        mean_artifact: mean(|r| r.artifact),
        advantage_std: adv_std,
        objective,
        failed_rollouts: group.rollouts.iter().filter(|r| r.scored.segment.is_none()).count(),
        selections: group.rollouts.iter().map(|r| r.selection.indices().to_vec()).collect(),
    }
}

fn check_task(task: &SceneTask<'_>, config: &GrpoConfig) -> Result<()> {
    config.validate()?;
    if task.state.segments().is_empty() {
        return Err(Error::Precondition("scene training needs at least one committed segment".into()));
    }
    let available = task.state.history_len();
    if task.budget == 0 || task.budget > available {
        return Err(Error::Budget { k: task.budget, available });
    }
    Ok(())
}

/// Runs the GRPO iterations in `iterations` on one scene, handing each
/// iteration's summary to `observe`. Splitting a scene's range across calls
/// gives the same result as one call, provided policy and optimizer state are
/// carried over.
#[allow(clippy::too_many_arguments)]
pub fn train_iterations(
    task: &SceneTask<'_>,
    policy: &mut PolicyParams,
    optimizer: &mut AdamState,
    evaluator: &SceneEvaluator,
    config: &GrpoConfig,
    executor: &dyn RolloutExecutor,
    iterations: Range<usize>,
    observe: &mut dyn FnMut(&IterationStats),
) -> Result<()> {
    check_task(task, config)?;
    for iteration in iterations {
        let group = sample_group(task, policy, evaluator, config, iteration, executor)?;
        let objective = update_policy(task, policy, optimizer, &group, config)?;
        observe(&summarise(iteration, &group, objective));
    }
    Ok(())
}

/// Trains the policy on one scene, then generates the committed segment from
/// the greedy top-K selection. The caller appends `committed` to the state.
pub fn train_scene(
    task: &SceneTask<'_>,
    policy: &mut PolicyParams,
    optimizer: &mut AdamState,
    evaluator: &SceneEvaluator,
    config: &GrpoConfig,
    executor: &dyn RolloutExecutor,
) -> Result<SceneOutcome> {
    check_task(task, config)?;
    let mut trace = Vec::with_capacity(config.iterations);
    let mut push = |s: &IterationStats| trace.push(s.clone());
    train_iterations(task, policy, optimizer, evaluator, config, executor, 0..config.iterations, &mut push)?;
    let (committed, committed_selection, committed_reward) = commit_greedy(task, policy, evaluator)?;
    Ok(SceneOutcome { committed, committed_selection, committed_reward, trace })
}

/// Generates the scene's segment from the `budget` highest-scoring tokens.
pub fn commit_greedy(
    task: &SceneTask<'_>,
    policy: &PolicyParams,
    evaluator: &SceneEvaluator,
) -> Result<(SegmentState, RankingSelection, RewardBreakdown)> {
    let (scores, _) = score_context_recorded(policy, task.state.policy_features()?, task.prompt)?;
    let selection = greedy_topk(&scores, task.budget)?;
    let mut rng = derive_stream(task.base_seed, &[purpose::COMMIT, task.scene as u64]);
    let segment = evaluator.generate(task.state, &selection, task.prompt, task.prompt_id, Noise::Sampled, &mut rng, None)?;
    let reward = evaluator.score(&segment, task.state, task.prompt).unwrap_or_else(|_| RewardBreakdown::failed());
    Ok((segment, selection, reward))
}
