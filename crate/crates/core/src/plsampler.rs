//! Sequential top-K sampling without replacement from a Plackett–Luce model,
//! the exact ranking log-likelihood and its gradient with respect to scores.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;
use rand_distr::{Distribution, StandardUniform};

use crate::error::{Error, Result};
use crate::numcore::{log_sum_exp, softmax};

/// Largest history the brute-force enumerator accepts.
pub const ENUMERATE_MAX_L: usize = 8;
/// Largest ranking length the brute-force enumerator accepts.
pub const ENUMERATE_MAX_K: usize = 4;

/// One finite selection score per history token.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Domain("scores must be finite".into()));
        }
        Ok(Self(scores))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// An ordered top-K ranking together with its log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingSelection {
    indices: Vec<usize>,
    unselected: Vec<usize>,
    logprob: f64,
}

impl RankingSelection {
    /// Builds a selection over `0..history_len`; `unselected` is derived.
    pub fn new(indices: Vec<usize>, history_len: usize, logprob: f64) -> Result<Self> {
        let mut seen = vec![false; history_len];
        for &i in &indices {
            if i >= history_len {
                return Err(Error::Domain(format!("index {i} outside history of {history_len}")));
            }
            if core::mem::replace(&mut seen[i], true) {
                return Err(Error::Domain(format!("duplicate index {i}")));
            }
        }
        if logprob > 0.0 || logprob.is_nan() {
            return Err(Error::Domain("log-probability must be ≤ 0".into()));
        }
        let unselected = (0..history_len).filter(|&i| !seen[i]).collect();
        Ok(Self { indices, unselected, logprob })
    }

    /// The empty selection used for prompt-only generation.
    pub fn empty(history_len: usize) -> Self {
        Self { indices: Vec::new(), unselected: (0..history_len).collect(), logprob: 0.0 }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn unselected(&self) -> &[usize] {
        &self.unselected
    }

    pub fn logprob(&self) -> f64 {
        self.logprob
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn history_len(&self) -> usize {
        self.indices.len() + self.unselected.len()
    }
}

fn check_indices(len: usize, indices: &[usize]) -> Result<()> {
    let mut seen = vec![false; len];
    for &i in indices {
        if i >= len {
            return Err(Error::Domain(format!("index {i} outside {len} scores")));
        }
        if core::mem::replace(&mut seen[i], true) {
            return Err(Error::Domain(format!("duplicate index {i}")));
        }
    }
    Ok(())
}

fn check_budget(len: usize, k: usize) -> Result<()> {
    if k == 0 || k > len {
        return Err(Error::Budget { k, available: len });
    }
    Ok(())
}

/// Draws an ordered top-`k` list: at each step the remaining pool is
/// renormalised with a softmax and one token is drawn from it.
pub fn sample_topk<R: RngCore + ?Sized>(
    scores: &ScoreVector,
    k: usize,
    rng: &mut R,
) -> Result<RankingSelection> {
    let (indices, _) = sample_with_step_probs(scores, k, rng)?;
    let logprob = pl_logprob(scores, &indices)?;
    RankingSelection::new(indices, scores.len(), logprob)
}

/// Sampling loop; also returns the probability of each draw at the moment it was made.
fn sample_with_step_probs<R: RngCore + ?Sized>(
    scores: &ScoreVector,
    k: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<f64>)> {
    check_budget(scores.len(), k)?;
    let s = scores.as_slice();
    let mut pool: Vec<usize> = (0..s.len()).collect();
    let mut chosen = Vec::with_capacity(k);
    let mut step_probs = Vec::with_capacity(k);
    for _ in 0..k {
        let logits: Vec<f64> = pool.iter().map(|&i| s[i]).collect();
        let probs = softmax(&logits)?;
        let u: f64 = StandardUniform.sample(rng);
        let mut acc = 0.0;
        // Falls back to the last candidate when rounding leaves acc just below u.
        let mut pick = probs.len() - 1;
        for (slot, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = slot;
                break;
            }
        }
        step_probs.push(probs[pick]);
        chosen.push(pool.remove(pick));
    }
    Ok((chosen, step_probs))
}

/// Deterministic ranking of the `k` highest scores (ties broken by lower index).
pub fn greedy_topk(scores: &ScoreVector, k: usize) -> Result<RankingSelection> {
    check_budget(scores.len(), k)?;
    let s = scores.as_slice();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    order.truncate(k);
    let logprob = pl_logprob(scores, &order)?;
    RankingSelection::new(order, s.len(), logprob)
}

/// Log-probability of the ordered list `indices`: for every step, the chosen
/// score minus the log-sum-exp over all tokens not chosen before that step.
pub fn pl_logprob(scores: &ScoreVector, indices: &[usize]) -> Result<f64> {
    check_indices(scores.len(), indices)?;
    let s = scores.as_slice();
    let mut remaining = vec![true; s.len()];
    let mut total = 0.0;
    for &c in indices {
        let pool: Vec<f64> = (0..s.len()).filter(|&i| remaining[i]).map(|i| s[i]).collect();
        total += s[c] - log_sum_exp(&pool)?;
        remaining[c] = false;
    }
    Ok(total)
}

/// ∂ pl_logprob / ∂ scores.
pub fn pl_logprob_grad(scores: &ScoreVector, indices: &[usize]) -> Result<Vec<f64>> {
    check_indices(scores.len(), indices)?;
    let s = scores.as_slice();
    let mut remaining: Vec<usize> = (0..s.len()).collect();
    let mut grad = vec![0.0; s.len()];
    for &c in indices {
        let logits: Vec<f64> = remaining.iter().map(|&i| s[i]).collect();
        let probs = softmax(&logits)?;
        for (&i, p) in remaining.iter().zip(&probs) {
            grad[i] -= p;
        }
        grad[c] += 1.0;
        remaining.retain(|&i| i != c);
    }
    Ok(grad)
}

/// Exact probability of every ordered `k`-tuple; a brute-force oracle for small instances.
pub fn enumerate_pl_distribution(
    scores: &ScoreVector,
    k: usize,
) -> Result<BTreeMap<Vec<usize>, f64>> {
    if scores.len() > ENUMERATE_MAX_L || k > ENUMERATE_MAX_K {
        return Err(Error::Capacity(format!(
            "enumeration limited to L ≤ {ENUMERATE_MAX_L}, k ≤ {ENUMERATE_MAX_K}; got L = {}, k = {k}",
            scores.len()
        )));
    }
    check_budget(scores.len(), k)?;
    let mut out = BTreeMap::new();
    let mut prefix = Vec::with_capacity(k);
    enumerate_into(scores, k, &mut prefix, &mut out)?;
    Ok(out)
}

fn enumerate_into(
    scores: &ScoreVector,
    k: usize,
    prefix: &mut Vec<usize>,
    out: &mut BTreeMap<Vec<usize>, f64>,
) -> Result<()> {
    if prefix.len() == k {
        out.insert(prefix.clone(), libm::exp(pl_logprob(scores, prefix)?));
        return Ok(());
    }
    for i in 0..scores.len() {
        if !prefix.contains(&i) {
            prefix.push(i);
            enumerate_into(scores, k, prefix, out)?;
            prefix.pop();
        }
    }
    Ok(())
}
