//! Hybrid reward (content consistency + prompt alignment + artifact absence)
//! and the masked cross-clip similarity metric.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::argen::{GenerationState, Geometry, SegmentState};
use crate::error::{Error, Result};
use crate::numcore::{cosine, dot, norm, Matrix};
use crate::policynet::PromptEmbedding;

/// Deterministic map from a frame (or pooled prompt) vector to an embedding.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn output_dim(&self) -> usize;
    fn embed(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// Projects onto an orthonormal subspace and appends one "clutter" coordinate:
/// the weighted norm of whatever lies outside the environment's signal subspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceProvider {
    name: String,
    basis: Matrix,
    signal_basis: Matrix,
    clutter_weight: f64,
}

impl SubspaceProvider {
    /// `basis` rows span the provider's subspace; `signal_basis` rows span every
    /// signal direction (the complement counts as clutter). Both orthonormal.
    pub fn new(name: impl Into<String>, basis: Matrix, signal_basis: Matrix, clutter_weight: f64) -> Result<Self> {
        if basis.rows() == 0 || basis.cols() != signal_basis.cols() {
            return Err(Error::Shape("provider bases must share a non-empty width".into()));
        }
        for m in [&basis, &signal_basis] {
            for i in 0..m.rows() {
                for j in 0..=i {
                    let target = if i == j { 1.0 } else { 0.0 };
                    if (dot(m.row(i), m.row(j)) - target).abs() > 1e-9 {
                        return Err(Error::Config("provider basis is not orthonormal".into()));
                    }
                }
            }
        }
        Ok(Self { name: name.into(), basis, signal_basis, clutter_weight })
    }
}

impl EmbeddingProvider for SubspaceProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_dim(&self) -> usize {
        self.basis.rows() + 1
    }

    fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.basis.cols() {
            return Err(Error::Shape(format!(
                "{} expects width {}, got {}",
                self.name,
                self.basis.cols(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSegment("non-finite input to embedding provider".into()));
        }
        let mut out: Vec<f64> = self.basis.iter_rows().map(|b| dot(b, x)).collect();
        let signal: f64 = self.signal_basis.iter_rows().map(|b| dot(b, x)).map(|d| d * d).sum();
        let residual = libm::sqrt((dot(x, x) - signal).max(0.0));
        out.push(self.clutter_weight * residual);
        Ok(out)
    }
}

/// `true` means an artifact was detected.
pub trait ArtifactDetector: Send + Sync {
    fn detect(&self, frames: &Matrix) -> Result<bool>;
}

/// Flags incoherent segments: mean cosine between consecutive frames below `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceDetector {
    pub tau: f64,
}

impl ArtifactDetector for CoherenceDetector {
    fn detect(&self, frames: &Matrix) -> Result<bool> {
        if !frames.is_finite() {
            return Err(Error::InvalidSegment("frame tokens contain NaN or infinity".into()));
        }
        if frames.rows() < 2 {
            return Ok(false);
        }
        let mut total = 0.0;
        for f in 1..frames.rows() {
            total += cosine(frames.row(f - 1), frames.row(f))
                .map_err(|_| Error::InvalidSegment("zero-norm frame".into()))?;
        }
        Ok(total / ((frames.rows() - 1) as f64) < self.tau)
    }
}

/// `e` indices spread over `0..count` with the first anchored at 0; all of
/// them when `e ≥ count`.
pub fn stride_sample(count: usize, e: usize) -> Vec<usize> {
    if e >= count {
        return (0..count).collect();
    }
    (0..e).map(|i| i * count / e).collect()
}

fn embed_rows(provider: &dyn EmbeddingProvider, frames: &Matrix, rows: &[usize]) -> Result<Vec<Vec<f64>>> {
    rows.iter().map(|&r| provider.embed(frames.row(r))).collect()
}

/// Mean pairwise cosine between `e` strided keyframes of `cur` and `e` of the history.
pub fn reward_content(
    cur: &SegmentState,
    prev: &GenerationState,
    phi: &dyn EmbeddingProvider,
    e: usize,
) -> Result<f64> {
    if e == 0 {
        return Err(Error::Precondition("keyframe count E must be ≥ 1".into()));
    }
    let history = prev.history_frames();
    if history.rows() == 0 {
        return Err(Error::Precondition("content reward needs a non-empty history".into()));
    }
    let current = cur.frame_embeddings(prev.geometry());
    content_similarity(&current, &history, phi, e)
}

/// Frame-level core of [`reward_content`].
pub fn content_similarity(
    current: &Matrix,
    history: &Matrix,
    phi: &dyn EmbeddingProvider,
    e: usize,
) -> Result<f64> {
    let cur = embed_rows(phi, current, &stride_sample(current.rows(), e))?;
    let prev = embed_rows(phi, history, &stride_sample(history.rows(), e))?;
    let mut total = 0.0;
    for c in &cur {
        for p in &prev {
            total += cosine(c, p)?;
        }
    }
    Ok(total / (cur.len() * prev.len()) as f64)
}

/// Mean cosine between the prompt and `q` strided frames under `psi`.
pub fn reward_clip(
    prompt: &PromptEmbedding,
    cur: &SegmentState,
    geometry: &Geometry,
    psi: &dyn EmbeddingProvider,
    q: usize,
) -> Result<f64> {
    if q == 0 {
        return Err(Error::Precondition("frame count Q must be ≥ 1".into()));
    }
    let frames = cur.frame_embeddings(geometry);
    let p = psi.embed(&prompt.pooled())?;
    let rows = stride_sample(frames.rows(), q);
    let mut total = 0.0;
    for f in embed_rows(psi, &frames, &rows)? {
        total += cosine(&p, &f)?;
    }
    Ok(total / rows.len() as f64)
}

/// 1 when the detector reports no artifact, 0 otherwise.
pub fn reward_artifact(cur: &SegmentState, geometry: &Geometry, detector: &dyn ArtifactDetector) -> Result<f64> {
    let artifact = detector.detect(&cur.frame_embeddings(geometry))?;
    Ok(if artifact { 0.0 } else { 1.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub content: f64,
    pub clip: f64,
    pub artifact: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(content: f64, clip: f64, artifact: f64) -> Self {
        Self { content, clip, artifact, total: content + clip + artifact }
    }

    /// Score given to a rollout whose segment could not be evaluated.
    pub fn failed() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields, default))]
pub struct RewardConfig {
    /// Keyframes per side for the content reward.
    pub e: usize,
    /// Frames for the prompt-alignment reward.
    pub q: usize,
    /// Coherence threshold of the default artifact detector.
    pub tau_art: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { e: 8, q: 16, tau_art: 0.2 }
    }
}

/// The three reward models.
pub struct RewardProviders {
    pub content: Box<dyn EmbeddingProvider>,
    pub clip: Box<dyn EmbeddingProvider>,
    pub artifact: Box<dyn ArtifactDetector>,
}

pub fn hybrid_reward(
    cur: &SegmentState,
    prev: &GenerationState,
    prompt: &PromptEmbedding,
    providers: &RewardProviders,
    config: &RewardConfig,
) -> Result<RewardBreakdown> {
    let geometry = prev.geometry();
    let artifact = reward_artifact(cur, geometry, providers.artifact.as_ref())?;
    let content = reward_content(cur, prev, providers.content.as_ref(), config.e)?;
    let clip = reward_clip(prompt, cur, geometry, providers.clip.as_ref(), config.q)?;
    Ok(RewardBreakdown::new(content, clip, artifact))
}

/// Causal cross-clip mask: `M[i][j] = 1` iff frame `i` belongs to a strictly later clip than frame `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMask {
    frame_count: usize,
    clip_of: Vec<usize>,
    starts: Vec<usize>,
}

impl SimMask {
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.clip_of[i] > self.clip_of[j]
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn clip_starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn clip_of(&self, frame: usize) -> usize {
        self.clip_of[frame]
    }

    pub fn count_ones(&self) -> usize {
        // Frames of clip c pair with every frame of earlier clips.
        let mut sizes = vec![0usize; self.starts.len()];
        self.clip_of.iter().for_each(|&c| sizes[c] += 1);
        let mut before = 0;
        let mut total = 0;
        for s in sizes {
            total += s * before;
            before += s;
        }
        total
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_fn(self.frame_count, self.frame_count, |i, j| if self.get(i, j) { 1.0 } else { 0.0 })
    }
}

/// `clip_starts` lists the first frame of each clip: strictly increasing, starting at 0, all `< frame_count`.
pub fn build_sim_mask(frame_count: usize, clip_starts: &[usize]) -> Result<SimMask> {
    if clip_starts.first() != Some(&0) {
        return Err(Error::Config("clip boundaries must start at frame 0".into()));
    }
    if clip_starts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("clip boundaries overlap or are out of order".into()));
    }
    if *clip_starts.last().unwrap() >= frame_count {
        return Err(Error::Config(format!(
            "clip boundary {} outside {frame_count} frames",
            clip_starts.last().unwrap()
        )));
    }
    let mut clip_of = Vec::with_capacity(frame_count);
    let mut clip = 0;
    for f in 0..frame_count {
        if clip + 1 < clip_starts.len() && f >= clip_starts[clip + 1] {
            clip += 1;
        }
        clip_of.push(clip);
    }
    Ok(SimMask { frame_count, clip_of, starts: clip_starts.to_vec() })
}

/// Mean cosine over causal cross-clip frame pairs.
pub fn cross_scene_sim(frames: &Matrix, clip_starts: &[usize]) -> Result<f64> {
    let mask = build_sim_mask(frames.rows(), clip_starts)?;
    let pairs = mask.count_ones();
    if pairs == 0 {
        return Err(Error::NoValidPairs);
    }
    let mut unit = frames.clone();
    for r in 0..unit.rows() {
        let n = norm(unit.row(r));
        if n == 0.0 {
            return Err(Error::DegenerateVector);
        }
        unit.row_mut(r).iter_mut().for_each(|x| *x /= n);
    }
    let mut total = 0.0;
    for i in 0..unit.rows() {
        for j in 0..unit.rows() {
            if mask.get(i, j) {
                total += dot(unit.row(i), unit.row(j));
            }
        }
    }
    Ok(total / pairs as f64)
}
