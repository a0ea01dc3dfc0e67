//! Synthetic multi-scene environment with known ground truth.
//!
//! Every history token has a hidden role. Subject tokens carry the identity
//! direction, scene backgrounds carry their scene's semantic direction, and
//! distractors are large vectors outside both subspaces. The content provider
//! reads the identity subspace, the alignment provider the semantic subspace.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::argen::{GenerationState, Geometry, Noise, SegmentState};
use crate::error::{Error, Result};
use crate::numcore::{dot, norm, Matrix};
use crate::plsampler::RankingSelection;
use crate::policynet::PromptEmbedding;
use crate::rewards::{CoherenceDetector, RewardProviders, SubspaceProvider};
use crate::rng::{derive_stream, purpose, Stream};
use crate::rollout::SceneEvaluator;

/// Largest history the exhaustive oracle accepts.
pub const ORACLE_MAX_L: usize = 12;
/// Largest budget the exhaustive oracle accepts.
pub const ORACLE_MAX_K: usize = 4;

/// Hidden role of a scene-0 token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Subject,
    SceneBackground(usize),
    Distractor,
}

/// Token counts of the scene-0 layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields, default))]
pub struct Layout {
    pub subjects: usize,
    pub backgrounds: usize,
    pub distractors: usize,
}

impl Default for Layout {
    fn default() -> Self {
        Self::for_tokens(8)
    }
}

impl Layout {
    pub fn total(&self) -> usize {
        self.subjects + self.backgrounds + self.distractors
    }

    /// 3/8 subject, 3/8 background, the rest distractors (at least one subject).
    pub fn for_tokens(tokens: usize) -> Self {
        let subjects = (3 * tokens / 8).max(1).min(tokens);
        let backgrounds = (3 * tokens / 8).min(tokens - subjects);
        Self { subjects, backgrounds, distractors: tokens - subjects - backgrounds }
    }
}

/// Magnitudes of the role vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields, default))]
pub struct Amplitudes {
    /// Scene-0 background mixed into subject tokens.
    pub subject_background: f64,
    /// Generic identity direction carried by background tokens.
    pub background_generic: f64,
    pub distractor: f64,
    /// Per-token jitter outside the signal subspaces.
    pub jitter: f64,
    /// Generic identity direction mixed into the second prompt token.
    pub prompt_generic: f64,
    /// Weight of the clutter coordinate in both providers.
    pub clutter_weight: f64,
}

impl Default for Amplitudes {
    fn default() -> Self {
        Self {
            subject_background: 0.3,
            background_generic: 0.3,
            distractor: 8.0,
            jitter: 0.05,
            prompt_generic: 0.5,
            clutter_weight: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSpec {
    pub seed: u64,
    pub geometry: Geometry,
    pub scenes: usize,
    pub layout: Layout,
    /// Shuffle the scene-0 token order with the environment seed.
    pub shuffle_layout: bool,
    pub amplitudes: Amplitudes,
}

impl EnvSpec {
    /// Eight one-token frames, four scenes: 3 subject, 3 background, 2 distractor tokens.
    pub fn canonical(seed: u64) -> Self {
        Self {
            seed,
            geometry: Geometry { n_frames: 8, height: 1, width: 1, dim: 16 },
            scenes: 4,
            layout: Layout { subjects: 3, backgrounds: 3, distractors: 2 },
            shuffle_layout: true,
            amplitudes: Amplitudes::default(),
        }
    }

    /// Identity subspace: the subject direction plus one generic direction.
    pub const IDENTITY_DIMS: usize = 2;

    pub fn semantic_dims(&self) -> usize {
        self.scenes
    }
}

/// An immutable environment instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    spec: EnvSpec,
    /// Orthonormal rows: identity (subject, generic), semantic (one per scene), nuisance.
    basis: Matrix,
    roles: Vec<Role>,
    scene0: Matrix,
    prompts: Vec<PromptEmbedding>,
}

fn orthonormal_basis(dim: usize, rng: &mut Stream) -> Matrix {
    loop {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
        let mut ok = true;
        for _ in 0..dim {
            let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
            for r in &rows {
                let p = dot(&v, r);
                v.iter_mut().zip(r).for_each(|(x, y)| *x -= p * y);
            }
            let n = norm(&v);
            if n < 1e-6 {
                ok = false;
                break;
            }
            v.iter_mut().for_each(|x| *x /= n);
            rows.push(v);
        }
        if ok {
            return Matrix::from_rows(&rows).expect("square basis");
        }
    }
}

impl Environment {
    pub fn build(spec: EnvSpec) -> Result<Self> {
        spec.geometry.validate()?;
        let dim = spec.geometry.dim;
        let signal = EnvSpec::IDENTITY_DIMS + spec.semantic_dims();
        if spec.scenes == 0 {
            return Err(Error::Config("environment needs at least one scene".into()));
        }
        if dim < 2 * signal {
            return Err(Error::Config(format!(
                "dim {dim} is below twice the identity + semantic dims ({signal})"
            )));
        }
        if spec.layout.subjects == 0 {
            return Err(Error::Config("layout needs at least one subject token".into()));
        }
        if spec.layout.total() != spec.geometry.tokens_per_segment() {
            return Err(Error::Config(format!(
                "layout has {} tokens, a segment has {}",
                spec.layout.total(),
                spec.geometry.tokens_per_segment()
            )));
        }
        let mut rng = derive_stream(spec.seed, &[purpose::ENV]);
        let basis = orthonormal_basis(dim, &mut rng);

        let mut roles: Vec<Role> = core::iter::repeat_n(Role::Subject, spec.layout.subjects)
            .chain(core::iter::repeat_n(Role::SceneBackground(0), spec.layout.backgrounds))
            .chain(core::iter::repeat_n(Role::Distractor, spec.layout.distractors))
            .collect();
        if spec.shuffle_layout {
            for i in (1..roles.len()).rev() {
                let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                roles.swap(i, j);
            }
        }

        let mut env = Self { spec, basis, roles: Vec::new(), scene0: Matrix::zeros(0, dim), prompts: Vec::new() };
        let a = spec.amplitudes;
        let nuisance = dim - signal;
        let mut distractor_slot = 0;
        let mut rows = Vec::with_capacity(roles.len());
        for role in &roles {
            let mut v = match role {
                Role::Subject => env.combine(&[(env.subject(), 1.0), (env.semantic(0), a.subject_background)]),
                Role::SceneBackground(l) => {
                    env.combine(&[(env.semantic(*l), 1.0), (env.generic(), a.background_generic)])
                }
                Role::Distractor => {
                    let d = env.nuisance(distractor_slot % nuisance);
                    distractor_slot += 1;
                    env.combine(&[(d, a.distractor)])
                }
            };
            for k in 0..nuisance {
                let z: f64 = StandardNormal.sample(&mut rng);
                let dir = env.nuisance(k);
                v.iter_mut().zip(dir).for_each(|(x, y)| *x += a.jitter * z * y);
            }
            rows.push(v);
        }
        env.scene0 = Matrix::from_rows(&rows)?;
        env.roles = roles;
        env.prompts = (0..spec.scenes)
            .map(|l| {
                let first = env.semantic(l).to_vec();
                let second = env.combine(&[(env.semantic(l), 1.0), (env.generic(), a.prompt_generic)]);
                PromptEmbedding::new(Matrix::from_rows(&[first, second])?)
            })
            .collect::<Result<_>>()?;
        Ok(env)
    }

    fn combine(&self, terms: &[(&[f64], f64)]) -> Vec<f64> {
        let mut v = vec![0.0; self.spec.geometry.dim];
        for (dir, w) in terms {
            v.iter_mut().zip(*dir).for_each(|(x, y)| *x += w * y);
        }
        v
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Identity vector u.
    pub fn subject(&self) -> &[f64] {
        self.basis.row(0)
    }

    pub fn generic(&self) -> &[f64] {
        self.basis.row(1)
    }

    /// Semantic direction of scene `l`.
    pub fn semantic(&self, l: usize) -> &[f64] {
        self.basis.row(EnvSpec::IDENTITY_DIMS + l)
    }

    pub fn nuisance(&self, k: usize) -> &[f64] {
        self.basis.row(EnvSpec::IDENTITY_DIMS + self.spec.semantic_dims() + k)
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn subject_tokens(&self) -> Vec<usize> {
        (0..self.roles.len()).filter(|&i| self.roles[i] == Role::Subject).collect()
    }

    pub fn prompt(&self, scene: usize) -> Result<&PromptEmbedding> {
        self.prompts
            .get(scene)
            .ok_or_else(|| Error::Config(format!("environment has no prompt for scene {scene}")))
    }

    fn rows(&self, range: core::ops::Range<usize>) -> Matrix {
        self.basis.select_rows(&range.collect::<Vec<_>>()).expect("basis rows in range")
    }

    fn signal_rows(&self) -> Matrix {
        self.rows(0..EnvSpec::IDENTITY_DIMS + self.spec.semantic_dims())
    }

    /// Content provider φ: identity subspace plus clutter.
    pub fn identity_provider(&self) -> SubspaceProvider {
        SubspaceProvider::new(
            "identity",
            self.rows(0..EnvSpec::IDENTITY_DIMS),
            self.signal_rows(),
            self.spec.amplitudes.clutter_weight,
        )
        .expect("basis is orthonormal")
    }

    /// Alignment provider ψ: semantic subspace plus clutter.
    pub fn semantic_provider(&self) -> SubspaceProvider {
        let start = EnvSpec::IDENTITY_DIMS;
        SubspaceProvider::new(
            "semantic",
            self.rows(start..start + self.spec.semantic_dims()),
            self.signal_rows(),
            self.spec.amplitudes.clutter_weight,
        )
        .expect("basis is orthonormal")
    }

    pub fn providers(&self, tau_art: f64) -> RewardProviders {
        RewardProviders {
            content: Box::new(self.identity_provider()),
            clip: Box::new(self.semantic_provider()),
            artifact: Box::new(CoherenceDetector { tau: tau_art }),
        }
    }

    /// The opening segment, rendered directly from the labelled layout.
    pub fn scene0_segment(&self, steps: usize) -> SegmentState {
        SegmentState::from_clean(self.scene0.clone(), steps, 0, 0)
    }

    /// A generation state holding only the opening segment.
    pub fn initial_state(&self, steps: usize) -> Result<GenerationState> {
        let mut state = GenerationState::new(self.spec.geometry, steps)?;
        state.append_segment(self.scene0_segment(steps))?;
        Ok(state)
    }
}

/// Exhaustive search over every size-`k` subset with noise switched off.
/// Ties keep the lexicographically first subset.
pub fn oracle_best_selection(
    evaluator: &SceneEvaluator,
    state: &GenerationState,
    prompt: &PromptEmbedding,
    prompt_id: usize,
    k: usize,
) -> Result<(Vec<usize>, f64)> {
    let l = state.history_len();
    if l > ORACLE_MAX_L || k > ORACLE_MAX_K {
        return Err(Error::Capacity(format!(
            "oracle limited to L ≤ {ORACLE_MAX_L}, k ≤ {ORACLE_MAX_K}; got L = {l}, k = {k}"
        )));
    }
    if k == 0 || k > l {
        return Err(Error::Budget { k, available: l });
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for subset in subsets(l, k) {
        let reward = subset_reward(evaluator, state, prompt, prompt_id, &subset)?;
        if best.as_ref().is_none_or(|(_, r)| reward > *r) {
            best = Some((subset, reward));
        }
    }
    Ok(best.expect("at least one subset"))
}

/// Noise-free total reward of generating from `subset`.
pub fn subset_reward(
    evaluator: &SceneEvaluator,
    state: &GenerationState,
    prompt: &PromptEmbedding,
    prompt_id: usize,
    subset: &[usize],
) -> Result<f64> {
    let selection = RankingSelection::new(subset.to_vec(), state.history_len(), 0.0)?;
    let mut rng = derive_stream(0, &[]);
    let scored = evaluator.rollout(state, &selection, prompt, prompt_id, Noise::Off, &mut rng)?;
    Ok(scored.reward.total)
}

/// All size-`k` subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] < n - k + i) else { break };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
    out
}

/// Pools used to build event prompt sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields, default))]
pub struct PromptSetSpec {
    pub identities: usize,
    pub actions: usize,
    pub backgrounds: usize,
    /// Prompts per set.
    pub per_set: usize,
    /// Width of the prompt embedding.
    pub embedding_dim: usize,
}

impl Default for PromptSetSpec {
    fn default() -> Self {
        Self { identities: 12, actions: 16, backgrounds: 90, per_set: 4, embedding_dim: 16 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventPrompt {
    pub identity: usize,
    pub action: usize,
    pub background: usize,
    pub text: String,
    pub embedding: Vec<f64>,
}

/// Prompts sharing one identity over distinct (action, background) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPromptSet {
    pub identity: usize,
    pub prompts: Vec<EventPrompt>,
}

/// Unit-norm embedding seeded by the `(identity, action, background)` triple alone.
pub fn prompt_embedding(identity: usize, action: usize, background: usize, dim: usize) -> Vec<f64> {
    let mut rng = derive_stream(0, &[purpose::PROMPTS, identity as u64, action as u64, background as u64]);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

pub fn render_prompt(identity: usize, action: usize, background: usize) -> String {
    format!("[Human-{identity:02}] [Action-{action:02}] [Background-{background:02}]")
}

pub fn generate_eps<R: RngCore + ?Sized>(
    spec: &PromptSetSpec,
    count: usize,
    rng: &mut R,
) -> Result<Vec<EventPromptSet>> {
    if spec.identities == 0 || spec.actions == 0 || spec.backgrounds == 0 || spec.embedding_dim == 0 {
        return Err(Error::Config("prompt pools must be non-empty".into()));
    }
    if spec.per_set == 0 || spec.per_set > spec.actions * spec.backgrounds {
        return Err(Error::Config(format!(
            "{} prompts per set cannot be drawn from {} action-background pairs",
            spec.per_set,
            spec.actions * spec.backgrounds
        )));
    }
    let pick = |rng: &mut R, n: usize| (rng.next_u64() % n as u64) as usize;
    let mut sets = Vec::with_capacity(count);
    for _ in 0..count {
        let identity = pick(rng, spec.identities);
        let mut seen = BTreeSet::new();
        let mut prompts = Vec::with_capacity(spec.per_set);
        while prompts.len() < spec.per_set {
            let pair = (pick(rng, spec.actions), pick(rng, spec.backgrounds));
            if !seen.insert(pair) {
                continue;
            }
            prompts.push(EventPrompt {
                identity,
                action: pair.0,
                background: pair.1,
                text: render_prompt(identity, pair.0, pair.1),
                embedding: prompt_embedding(identity, pair.0, pair.1, spec.embedding_dim),
            });
        }
        sets.push(EventPromptSet { identity, prompts });
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::argen::{GeneratorConfig, NoiseSchedule, ToyGenerator};
    use crate::numcore::cosine;
    use crate::rewards::{EmbeddingProvider, RewardConfig};

    fn evaluator(env: &Environment) -> SceneEvaluator {
        let schedule = NoiseSchedule::default();
        SceneEvaluator {
            generator: ToyGenerator::new(env.spec().geometry, schedule.steps(), GeneratorConfig::default()).unwrap(),
            schedule,
            providers: env.providers(0.2),
            reward: RewardConfig::default(),
        }
    }

    #[test]
    fn build_is_seeded() {
        let a = Environment::build(EnvSpec::canonical(3)).unwrap();
        assert_eq!(a, Environment::build(EnvSpec::canonical(3)).unwrap());
        assert_ne!(a, Environment::build(EnvSpec::canonical(4)).unwrap());
    }

    #[test]
    fn build_rejects_small_dim() {
        let mut spec = EnvSpec::canonical(0);
        spec.geometry.dim = 11;
        assert!(matches!(Environment::build(spec), Err(Error::Config(_))));
    }

    #[test]
    fn every_layout_has_a_subject() {
        for seed in 0..50 {
            let env = Environment::build(EnvSpec::canonical(seed)).unwrap();
            assert_eq!(env.subject_tokens().len(), 3);
        }
        for tokens in 1..20 {
            let l = Layout::for_tokens(tokens);
            assert!(l.subjects >= 1 && l.total() == tokens);
        }
    }

    #[test]
    fn identity_provider_sees_pure_subject() {
        let env = Environment::build(EnvSpec::canonical(5)).unwrap();
        let phi = env.identity_provider();
        let count = env.subject_tokens().len() as f64;
        let frame: Vec<f64> = env.subject().iter().map(|u| 2.0 * count * u).collect();
        let c = cosine(&phi.embed(&frame).unwrap(), &phi.embed(env.subject()).unwrap()).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_oracle_picks_every_subject() {
        for seed in [0u64, 1, 7, 42] {
            let env = Environment::build(EnvSpec::canonical(seed)).unwrap();
            let ev = evaluator(&env);
            let state = env.initial_state(3).unwrap();
            let (best, _) = oracle_best_selection(&ev, &state, env.prompt(1).unwrap(), 1, 3).unwrap();
            assert_eq!(best, env.subject_tokens(), "seed {seed}");
        }
    }

    #[test]
    fn oracle_beats_uniform_by_a_clear_margin() {
        for seed in [0u64, 1, 7, 42] {
            let env = Environment::build(EnvSpec::canonical(seed)).unwrap();
            let ev = evaluator(&env);
            let state = env.initial_state(3).unwrap();
            let prompt = env.prompt(1).unwrap();
            let (_, best) = oracle_best_selection(&ev, &state, prompt, 1, 3).unwrap();
            // Equal scores make every size-3 subset equally likely.
            let all = subsets(8, 3);
            let uniform =
                all.iter().map(|s| subset_reward(&ev, &state, prompt, 1, s).unwrap()).sum::<f64>() / all.len() as f64;
            assert!(best - uniform >= 0.3, "seed {seed}: oracle {best}, uniform {uniform}");
        }
    }

    #[test]
    fn oracle_is_equivariant_to_layout_order() {
        let mut a = EnvSpec::canonical(9);
        a.shuffle_layout = false;
        let env_a = Environment::build(a).unwrap();
        let env_b = Environment::build(EnvSpec::canonical(9)).unwrap();
        for env in [&env_a, &env_b] {
            let ev = evaluator(env);
            let state = env.initial_state(3).unwrap();
            let (best, _) = oracle_best_selection(&ev, &state, env.prompt(1).unwrap(), 1, 3).unwrap();
            assert_eq!(best, env.subject_tokens());
        }
    }

    #[test]
    fn oracle_full_budget_and_capacity() {
        let env = Environment::build(EnvSpec::canonical(2)).unwrap();
        let ev = evaluator(&env);
        let mut spec = EnvSpec::canonical(2);
        spec.geometry.n_frames = 4;
        spec.layout = Layout { subjects: 2, backgrounds: 1, distractors: 1 };
        let small = Environment::build(spec).unwrap();
        let small_ev = evaluator(&small);
        let state = small.initial_state(3).unwrap();
        let (best, _) = oracle_best_selection(&small_ev, &state, small.prompt(1).unwrap(), 1, 4).unwrap();
        assert_eq!(best, vec![0, 1, 2, 3]);
        let state = env.initial_state(3).unwrap();
        assert!(matches!(
            oracle_best_selection(&ev, &state, env.prompt(1).unwrap(), 1, 5),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn subsets_enumerate_lexicographically() {
        assert_eq!(subsets(4, 2), vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(subsets(8, 3).len(), 56);
        assert_eq!(subsets(3, 3), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn eps_sets_share_identity_and_distinct_pairs() {
        let spec = PromptSetSpec::default();
        let sets = generate_eps(&spec, 1000, &mut derive_stream(1, &[])).unwrap();
        assert_eq!(sets.len(), 1000);
        for set in &sets {
            assert_eq!(set.prompts.len(), 4);
            assert!(set.prompts.iter().all(|p| p.identity == set.identity));
            let pairs: BTreeSet<_> = set.prompts.iter().map(|p| (p.action, p.background)).collect();
            assert_eq!(pairs.len(), 4);
        }
        let again = generate_eps(&spec, 1000, &mut derive_stream(1, &[])).unwrap();
        assert_eq!(sets, again);
        let single = generate_eps(&PromptSetSpec { per_set: 1, ..spec }, 5, &mut derive_stream(2, &[])).unwrap();
        assert!(single.iter().all(|s| s.prompts.len() == 1));
        let too_many = PromptSetSpec { actions: 2, backgrounds: 2, per_set: 5, ..spec };
        assert!(matches!(generate_eps(&too_many, 1, &mut derive_stream(0, &[])), Err(Error::Config(_))));
        assert_eq!(render_prompt(3, 7, 42), "[Human-03] [Action-07] [Background-42]");
    }
}
