//! The context selection network: history tokens attend to the prompt through
//! `n_cross` residual cross-attention blocks, then `n_linear` linear layers
//! reduce each token to one selection score.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numcore::{GradTape, Matrix, Var};
use crate::plsampler::ScoreVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields, default))]
pub struct PolicyConfig {
    pub model_dim: usize,
    /// Number of cross-attention blocks.
    pub n_cross: usize,
    /// Number of linear layers in the score head.
    pub n_linear: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { model_dim: 16, n_cross: 1, n_linear: 2 }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model_dim == 0 || self.n_cross == 0 || self.n_linear == 0 {
            return Err(Error::Config(format!(
                "policy needs model_dim, n_cross and n_linear ≥ 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Prompt representation: `m ≥ 1` rows of model-dim values.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbedding(Matrix);

impl PromptEmbedding {
    pub fn new(tokens: Matrix) -> Result<Self> {
        if tokens.rows() == 0 {
            return Err(Error::Shape("prompt needs at least one token".into()));
        }
        if !tokens.is_finite() {
            return Err(Error::Domain("prompt embedding must be finite".into()));
        }
        Ok(Self(tokens))
    }

    pub fn from_vector(v: &[f64]) -> Result<Self> {
        Self::new(Matrix::new(1, v.len(), v.to_vec())?)
    }

    pub fn tokens(&self) -> &Matrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    /// Mean over prompt tokens.
    pub fn pooled(&self) -> Vec<f64> {
        self.0.mean_row()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttentionBlock {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in × out`.
    pub w: Matrix,
    /// `1 × out`.
    pub b: Matrix,
}

/// Parameters θ of the selection network. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub config: PolicyConfig,
    pub blocks: Vec<CrossAttentionBlock>,
    pub layers: Vec<Linear>,
}

impl PolicyParams {
    pub fn zeros(config: PolicyConfig) -> Result<Self> {
        config.validate()?;
        let d = config.model_dim;
        let blocks = (0..config.n_cross)
            .map(|_| CrossAttentionBlock {
                wq: Matrix::zeros(d, d),
                wk: Matrix::zeros(d, d),
                wv: Matrix::zeros(d, d),
                wo: Matrix::zeros(d, d),
            })
            .collect();
        let layers = (0..config.n_linear)
            .map(|i| {
                let out = if i + 1 == config.n_linear { 1 } else { d };
                Linear { w: Matrix::zeros(d, out), b: Matrix::zeros(1, out) }
            })
            .collect();
        Ok(Self { config, blocks, layers })
    }

    /// Scaled-Gaussian projections (std 1/√dim) and a zero final layer, so the
    /// initial policy scores every token equally.
    pub fn init<R: RngCore + ?Sized>(config: PolicyConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let std = 1.0 / libm::sqrt(config.model_dim as f64);
        let last = p.layers.len() - 1;
        let mut fill = |m: &mut Matrix| {
            for x in m.data_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *x = z * std;
            }
        };
        for b in &mut p.blocks {
            fill(&mut b.wq);
            fill(&mut b.wk);
            fill(&mut b.wv);
            fill(&mut b.wo);
        }
        for layer in &mut p.layers[..last] {
            fill(&mut layer.w);
        }
        Ok(p)
    }

    /// Named tensors in a fixed order (blocks first, then linear layers).
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.wq"), &b.wq));
            out.push((format!("block{i}.wk"), &b.wk));
            out.push((format!("block{i}.wv"), &b.wv));
            out.push((format!("block{i}.wo"), &b.wo));
        }
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("linear{i}.w"), &l.w));
            out.push((format!("linear{i}.b"), &l.b));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.extend([&mut b.wq, &mut b.wk, &mut b.wv, &mut b.wo]);
        }
        for l in &mut self.layers {
            out.extend([&mut l.w, &mut l.b]);
        }
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data().len()).sum()
    }

    pub fn same_shape(&self, other: &PolicyParams) -> bool {
        self.config == other.config
            && self
                .tensors()
                .iter()
                .zip(other.tensors())
                .all(|((_, a), (_, b))| a.shape() == b.shape())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// Elementwise `self + scale · other`.
    pub fn add_scaled(&mut self, other: &PolicyParams, scale: f64) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape("parameter sets differ in shape".into()));
        }
        let others: Vec<Matrix> = other.tensors().into_iter().map(|(_, m)| m.clone()).collect();
        for (mine, theirs) in self.tensors_mut().into_iter().zip(others) {
            for (a, b) in mine.data_mut().iter_mut().zip(theirs.data()) {
                *a += scale * b;
            }
        }
        Ok(())
    }
}

/// A recorded forward pass, kept for the backward sweep.
#[derive(Debug, Clone)]
pub struct ScoreTrace {
    tape: GradTape,
    config: PolicyConfig,
    param_vars: Vec<Var>,
    output: Var,
    history_len: usize,
}

fn check_inputs(params: &PolicyParams, history: &Matrix, prompt: &PromptEmbedding) -> Result<()> {
    params.config.validate()?;
    let d = params.config.model_dim;
    if history.rows() == 0 {
        return Err(Error::Shape("history must hold at least one token".into()));
    }
    if history.cols() != d || prompt.dim() != d {
        return Err(Error::Shape(format!(
            "model dim {d}, history width {}, prompt width {}",
            history.cols(),
            prompt.dim()
        )));
    }
    if params.blocks.len() != params.config.n_cross || params.layers.len() != params.config.n_linear {
        return Err(Error::Shape("parameter layout disagrees with its config".into()));
    }
    Ok(())
}

/// One score per history row.
pub fn score_context(
    params: &PolicyParams,
    history: &Matrix,
    prompt: &PromptEmbedding,
) -> Result<ScoreVector> {
    score_context_recorded(params, history, prompt).map(|(s, _)| s)
}

/// Forward pass that also returns the tape needed by [`ScoreTrace::backward`].
pub fn score_context_recorded(
    params: &PolicyParams,
    history: &Matrix,
    prompt: &PromptEmbedding,
) -> Result<(ScoreVector, ScoreTrace)> {
    check_inputs(params, history, prompt)?;
    let d = params.config.model_dim;
    let mut tape = GradTape::new();
    let param_vars: Vec<Var> = params
        .tensors()
        .into_iter()
        .map(|(_, m)| tape.leaf(m.clone()))
        .collect();
    let mut pv = param_vars.iter().copied();
    let mut next = || pv.next().expect("parameter count fixed by config");

    let mut h = tape.leaf(history.clone());
    let p = tape.leaf(prompt.tokens().clone());
    let scale = 1.0 / libm::sqrt(d as f64);
    for _ in 0..params.config.n_cross {
        let (wq, wk, wv, wo) = (next(), next(), next(), next());
        let q = tape.matmul(h, wq)?;
        let k = tape.matmul(p, wk)?;
        let v = tape.matmul(p, wv)?;
        let logits = tape.matmul_transb(q, k)?;
        let logits = tape.scale(logits, scale);
        let weights = tape.row_softmax(logits)?;
        let ctx = tape.matmul(weights, v)?;
        let mixed = tape.matmul(ctx, wo)?;
        h = tape.add(h, mixed)?;
    }
    for i in 0..params.config.n_linear {
        let (w, b) = (next(), next());
        let z = tape.matmul(h, w)?;
        h = tape.add_row_bias(z, b)?;
        if i + 1 < params.config.n_linear {
            h = tape.relu(h);
        }
    }
    let scores = ScoreVector::new(tape.value(h).data().to_vec())
        .map_err(|_| Error::Numeric("policy produced a non-finite score".into()))?;
    let trace = ScoreTrace {
        tape,
        config: params.config,
        param_vars,
        output: h,
        history_len: history.rows(),
    };
    Ok((scores, trace))
}

impl ScoreTrace {
    pub fn history_len(&self) -> usize {
        self.history_len
    }

    /// Chains `upstream = ∂objective/∂scores` back to every parameter.
    pub fn backward(&self, params: &PolicyParams, upstream: &[f64]) -> Result<PolicyParams> {
        if params.config != self.config {
            return Err(Error::Consistency("parameters do not match the recorded pass".into()));
        }
        if upstream.len() != self.history_len {
            return Err(Error::Consistency(format!(
                "upstream has {} entries, recorded pass scored {} tokens",
                upstream.len(),
                self.history_len
            )));
        }
        let seed = Matrix::new(self.history_len, 1, upstream.to_vec())?;
        let grads = self.tape.backward(self.output, &seed)?;
        let mut out = PolicyParams::zeros(self.config)?;
        for (slot, var) in out.tensors_mut().into_iter().zip(&self.param_vars) {
            *slot = grads.get_or_zeros(*var, slot.shape());
        }
        Ok(out)
    }
}

/// Parameter gradients of `Σ upstream_i · score_i`.
pub fn score_context_backward(
    params: &PolicyParams,
    history: &Matrix,
    prompt: &PromptEmbedding,
    upstream: &[f64],
) -> Result<PolicyParams> {
    let (_, trace) = score_context_recorded(params, history, prompt)?;
    trace.backward(params, upstream)
}
