//! Toy autoregressive segment generator.
//!
//! Segments are produced one at a time by a few-step denoiser whose attention
//! reads only the selected rows of a per-timestep KV cache.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numcore::{attention_metered, ComputeMeter, Matrix};
use crate::plsampler::RankingSelection;
use crate::policynet::PromptEmbedding;
use crate::rng::{derive_stream, purpose};

/// Segment layout: `n_frames` frames of `height × width` tokens of width `dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields, default))]
pub struct Geometry {
    pub n_frames: usize,
    pub height: usize,
    pub width: usize,
    pub dim: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { n_frames: 4, height: 1, width: 1, dim: 16 }
    }
}

impl Geometry {
    pub fn tokens_per_frame(&self) -> usize {
        self.height * self.width
    }

    pub fn tokens_per_segment(&self) -> usize {
        self.n_frames * self.tokens_per_frame()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 || self.height == 0 || self.width == 0 || self.dim == 0 {
            return Err(Error::Config(format!("degenerate geometry {self:?}")));
        }
        Ok(())
    }
}

/// Per-step coefficients, listed in application order: entry `s` is used by
/// denoise step `j = T − s` and produces the state at `t_{j−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alphas: Vec<f64>,
    sigmas: Vec<f64>,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self { alphas: vec![0.5, 0.8, 1.0], sigmas: vec![0.6, 0.3, 0.0] }
    }
}

impl NoiseSchedule {
    pub fn new(alphas: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() || alphas.len() != sigmas.len() {
            return Err(Error::Config(format!(
                "schedule needs equal non-empty α/σ, got {} and {}",
                alphas.len(),
                sigmas.len()
            )));
        }
        if alphas.iter().chain(&sigmas).any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Config("schedule coefficients must lie in [0, 1]".into()));
        }
        if *sigmas.last().unwrap() != 0.0 {
            return Err(Error::Config("final σ must be 0 so the last step is clean".into()));
        }
        Ok(Self { alphas, sigmas })
    }

    /// Number of denoise steps `T`.
    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenMeta {
    pub segment: usize,
    /// Global frame index.
    pub frame: usize,
    /// Position inside the frame.
    pub spatial: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheLayer {
    pub keys: Matrix,
    pub values: Matrix,
}

/// Keys and values of every history token, one layer per denoise timestep.
/// Layer `j − 1` holds what step `j` reads.
#[derive(Debug, Clone, PartialEq)]
pub struct KvCache {
    layers: Vec<CacheLayer>,
    meta: Vec<TokenMeta>,
}

impl KvCache {
    pub fn new(steps: usize, dim: usize) -> Self {
        Self {
            layers: (0..steps)
                .map(|_| CacheLayer { keys: Matrix::zeros(0, dim), values: Matrix::zeros(0, dim) })
                .collect(),
            meta: Vec::new(),
        }
    }

    pub fn steps(&self) -> usize {
        self.layers.len()
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    /// Layer read by denoise step `timestep` (1-based, `1..=T`).
    pub fn layer(&self, timestep: usize) -> Result<&CacheLayer> {
        timestep
            .checked_sub(1)
            .and_then(|i| self.layers.get(i))
            .ok_or_else(|| Error::Config(format!("no cache layer for timestep {timestep}")))
    }

    pub fn meta(&self) -> &[TokenMeta] {
        &self.meta
    }

    fn extend(&mut self, states: &[Matrix], meta: &[TokenMeta]) -> Result<()> {
        if states.len() != self.layers.len() {
            return Err(Error::Config(format!(
                "segment carries {} timestep states, cache has {} layers",
                states.len(),
                self.layers.len()
            )));
        }
        for (layer, state) in self.layers.iter_mut().zip(states) {
            // Key and value projections are the identity in the toy generator.
            layer.keys = layer.keys.vstack(state)?;
            layer.values = layer.values.vstack(state)?;
        }
        self.meta.extend_from_slice(meta);
        Ok(())
    }
}

/// One generated (or externally rendered) segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentState {
    /// Clean tokens, `n_frames · h · w` rows in frame-major order.
    pub tokens: Matrix,
    /// State entering each denoise step, indexed by `timestep − 1`.
    pub timestep_states: Vec<Matrix>,
    pub index: usize,
    pub prompt_id: usize,
}

impl SegmentState {
    /// A segment given directly by its clean tokens; every cache layer sees them unchanged.
    pub fn from_clean(tokens: Matrix, steps: usize, index: usize, prompt_id: usize) -> Self {
        Self { timestep_states: vec![tokens.clone(); steps], tokens, index, prompt_id }
    }

    /// Mean token of each frame (`n_frames × dim`).
    pub fn frame_embeddings(&self, geometry: &Geometry) -> Matrix {
        frame_means(&self.tokens, geometry.tokens_per_frame())
    }

    pub fn is_finite(&self) -> bool {
        self.tokens.is_finite()
    }
}

pub(crate) fn frame_means(tokens: &Matrix, per_frame: usize) -> Matrix {
    let frames = tokens.rows() / per_frame;
    let mut out = Matrix::zeros(frames, tokens.cols());
    for f in 0..frames {
        for t in 0..per_frame {
            for (o, v) in out.row_mut(f).iter_mut().zip(tokens.row(f * per_frame + t)) {
                *o += v / per_frame as f64;
            }
        }
    }
    out
}

/// The growing multi-scene sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationState {
    geometry: Geometry,
    segments: Vec<SegmentState>,
    cache: KvCache,
}

impl GenerationState {
    pub fn new(geometry: Geometry, steps: usize) -> Result<Self> {
        geometry.validate()?;
        Ok(Self { geometry, segments: Vec::new(), cache: KvCache::new(steps, geometry.dim) })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn segments(&self) -> &[SegmentState] {
        &self.segments
    }

    pub fn cache(&self) -> &KvCache {
        &self.cache
    }

    /// Number of history tokens `L`.
    pub fn history_len(&self) -> usize {
        self.cache.len()
    }

    /// Frame embeddings of every committed segment, in order.
    pub fn history_frames(&self) -> Matrix {
        let mut all = Matrix::zeros(0, self.geometry.dim);
        for s in &self.segments {
            all = all.vstack(&s.frame_embeddings(&self.geometry)).expect("uniform width");
        }
        all
    }

    /// Per-token features for the selection policy: values of the final-timestep cache layer.
    pub fn policy_features(&self) -> Result<&Matrix> {
        Ok(&self.cache.layer(1)?.values)
    }

    /// Appends `segment` and extends every cache layer with its timestep states.
    pub fn append_segment(&mut self, segment: SegmentState) -> Result<()> {
        if segment.index != self.segments.len() {
            return Err(Error::Sequencing { expected: self.segments.len(), got: segment.index });
        }
        let expected = (self.geometry.tokens_per_segment(), self.geometry.dim);
        if segment.tokens.shape() != expected
            || segment.timestep_states.iter().any(|s| s.shape() != expected)
        {
            return Err(Error::Shape(format!(
                "segment must be {expected:?}, got {:?}",
                segment.tokens.shape()
            )));
        }
        if !segment.is_finite() {
            return Err(Error::InvalidSegment("non-finite tokens".into()));
        }
        let tpf = self.geometry.tokens_per_frame();
        let meta: Vec<TokenMeta> = (0..expected.0)
            .map(|t| TokenMeta {
                segment: segment.index,
                frame: segment.index * self.geometry.n_frames + t / tpf,
                spatial: t % tpf,
            })
            .collect();
        self.cache.extend(&segment.timestep_states, &meta)?;
        self.segments.push(segment);
        Ok(())
    }
}

/// Fixed (non-learned) denoiser constants.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields, default))]
pub struct GeneratorConfig {
    /// Weight of the noisy token in the attention query.
    pub noisy_gain: f64,
    /// Weight of the pooled prompt in the attention query.
    pub prompt_gain: f64,
    /// Norm of the per-position query encoding.
    pub position_scale: f64,
    /// Norm of the per-timestep query encoding.
    pub timestep_scale: f64,
    /// Blend weight λ of the prompt term in each output token.
    pub prompt_blend: f64,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            noisy_gain: 0.5,
            prompt_gain: 1.0,
            position_scale: 2.0,
            timestep_scale: 0.5,
            prompt_blend: 0.35,
            seed: 0,
        }
    }
}

/// Whether the Gaussian draws of the denoising loop are taken or replaced by zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Sampled,
    Off,
}

/// Selected key/value rows for one denoise step.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedKv {
    pub keys: Matrix,
    pub values: Matrix,
}

/// The few-step generator G.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyGenerator {
    geometry: Geometry,
    config: GeneratorConfig,
    positions: Matrix,
    timesteps: Matrix,
}

fn scaled_unit_rows(rows: usize, dim: usize, scale: f64, rng: &mut impl RngCore) -> Matrix {
    let mut m = Matrix::from_fn(rows, dim, |_, _| StandardNormal.sample(&mut *rng));
    for r in 0..rows {
        let n = crate::numcore::norm(m.row(r));
        m.row_mut(r).iter_mut().for_each(|x| *x *= scale / n);
    }
    m
}

impl ToyGenerator {
    pub fn new(geometry: Geometry, steps: usize, config: GeneratorConfig) -> Result<Self> {
        geometry.validate()?;
        if !(0.0..=1.0).contains(&config.prompt_blend) {
            return Err(Error::Config("prompt_blend must lie in [0, 1]".into()));
        }
        let mut rng = derive_stream(config.seed, &[purpose::GENERATOR]);
        let positions = scaled_unit_rows(
            geometry.tokens_per_segment(),
            geometry.dim,
            config.position_scale,
            &mut rng,
        );
        let timesteps = scaled_unit_rows(steps, geometry.dim, config.timestep_scale, &mut rng);
        Ok(Self { geometry, config, positions, timesteps })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn steps(&self) -> usize {
        self.timesteps.rows()
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    fn check_noisy(&self, noisy: &Matrix, prompt: &PromptEmbedding) -> Result<()> {
        let expected = (self.geometry.tokens_per_segment(), self.geometry.dim);
        if noisy.shape() != expected || prompt.dim() != self.geometry.dim {
            return Err(Error::Shape(format!(
                "generator expects {expected:?} tokens and width-{} prompt",
                self.geometry.dim
            )));
        }
        Ok(())
    }

    /// `G(noisy, t_j; selected KV, prompt)`: each token attends over the
    /// selected rows with a query built from itself, the prompt, its position
    /// and the timestep, then blends in the pooled prompt.
    pub fn step(
        &self,
        noisy: &Matrix,
        timestep: usize,
        context: &SelectedKv,
        prompt: &PromptEmbedding,
        meter: Option<&mut ComputeMeter>,
    ) -> Result<Matrix> {
        self.check_noisy(noisy, prompt)?;
        if timestep == 0 || timestep > self.steps() {
            return Err(Error::Config(format!("timestep {timestep} outside 1..={}", self.steps())));
        }
        let c = &self.config;
        let pooled = prompt.pooled();
        let temb = self.timesteps.row(timestep - 1);
        let query = Matrix::from_fn(noisy.rows(), noisy.cols(), |r, d| {
            c.noisy_gain * noisy[(r, d)] + c.prompt_gain * pooled[d] + self.positions[(r, d)] + temb[d]
        });
        let attended = attention_metered(
            &query,
            &context.keys,
            &context.values,
            self.geometry.dim,
            meter,
        )?;
        Ok(Matrix::from_fn(noisy.rows(), noisy.cols(), |r, d| {
            (1.0 - c.prompt_blend) * attended[(r, d)] + c.prompt_blend * pooled[d]
        }))
    }

    /// Output of G with no history at all: every token is the pooled prompt.
    pub fn step_prompt_only(&self, noisy: &Matrix, prompt: &PromptEmbedding) -> Result<Matrix> {
        self.check_noisy(noisy, prompt)?;
        let pooled = prompt.pooled();
        Ok(Matrix::from_fn(noisy.rows(), noisy.cols(), |_, d| pooled[d]))
    }

    /// Generates the next segment against the selected context.
    #[allow(clippy::too_many_arguments)]
    pub fn denoise_segment<R: RngCore + ?Sized>(
        &self,
        state: &GenerationState,
        selection: &RankingSelection,
        prompt: &PromptEmbedding,
        prompt_id: usize,
        schedule: &NoiseSchedule,
        noise: Noise,
        rng: &mut R,
        meter: Option<&mut ComputeMeter>,
    ) -> Result<SegmentState> {
        self.denoise_with_layer_offset(state, Some(selection), prompt, prompt_id, schedule, noise, rng, meter, 0)
    }

    /// Generates the next segment attending to every cached token, reading
    /// the cache layers directly instead of gathering a selection.
    #[allow(clippy::too_many_arguments)]
    pub fn denoise_full_context<R: RngCore + ?Sized>(
        &self,
        state: &GenerationState,
        prompt: &PromptEmbedding,
        prompt_id: usize,
        schedule: &NoiseSchedule,
        noise: Noise,
        rng: &mut R,
        meter: Option<&mut ComputeMeter>,
    ) -> Result<SegmentState> {
        self.denoise_with_layer_offset(state, None, prompt, prompt_id, schedule, noise, rng, meter, 0)
    }

    /// `layer_offset` shifts which cache layer each step reads; only the
    /// regression test for per-timestep cache reads uses a non-zero offset.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn denoise_with_layer_offset<R: RngCore + ?Sized>(
        &self,
        state: &GenerationState,
        selection: Option<&RankingSelection>,
        prompt: &PromptEmbedding,
        prompt_id: usize,
        schedule: &NoiseSchedule,
        noise: Noise,
        rng: &mut R,
        mut meter: Option<&mut ComputeMeter>,
        layer_offset: usize,
    ) -> Result<SegmentState> {
        let steps = schedule.steps();
        if steps != self.steps() || steps != state.cache().steps() {
            return Err(Error::Config(format!(
                "schedule has {steps} steps, generator {} and cache {}",
                self.steps(),
                state.cache().steps()
            )));
        }
        if *state.geometry() != self.geometry {
            return Err(Error::Config("generation state and generator disagree on geometry".into()));
        }
        let history = state.history_len();
        // Attention is order-insensitive; gathering rows in ascending index
        // order makes the result bit-identical for any ordering of the ranking.
        let rows = match selection {
            Some(sel) if sel.history_len() != history => {
                return Err(Error::Consistency(format!(
                    "selection covers {} tokens, history has {history}",
                    sel.history_len()
                )))
            }
            Some(sel) if history > 0 && sel.k() == 0 => return Err(Error::EmptyContext),
            Some(sel) => {
                let mut rows = sel.indices().to_vec();
                rows.sort_unstable();
                Some(rows)
            }
            None => None,
        };

        let (n, d) = (self.geometry.tokens_per_segment(), self.geometry.dim);
        let draw = |rng: &mut R| match noise {
            Noise::Sampled => Matrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut *rng)),
            Noise::Off => Matrix::zeros(n, d),
        };
        let mut x = draw(rng);
        let mut states = vec![Matrix::zeros(0, 0); steps];
        for s in 0..steps {
            let timestep = steps - s;
            states[timestep - 1] = x.clone();
            let g = if history == 0 {
                self.step_prompt_only(&x, prompt)?
            } else {
                let read = (timestep - 1).saturating_sub(layer_offset) + 1;
                let layer = state.cache().layer(read)?;
                let context = match &rows {
                    Some(rows) => SelectedKv {
                        keys: layer.keys.select_rows(rows)?,
                        values: layer.values.select_rows(rows)?,
                    },
                    None => SelectedKv { keys: layer.keys.clone(), values: layer.values.clone() },
                };
                self.step(&x, timestep, &context, prompt, meter.as_deref_mut())?
            };
            let (alpha, sigma) = (schedule.alphas()[s], schedule.sigmas()[s]);
            x = g.scale(alpha);
            if sigma > 0.0 {
                x = x.add(&draw(rng).scale(sigma))?;
            }
        }
        if !x.is_finite() {
            return Err(Error::InvalidSegment("denoising produced non-finite tokens".into()));
        }
        Ok(SegmentState { tokens: x, timestep_states: states, index: state.segments().len(), prompt_id })
    }
}
