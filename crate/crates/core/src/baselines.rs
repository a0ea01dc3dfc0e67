//! Heuristic context-selection strategies used as baselines.
//!
//! Every strategy returns indices in ascending order together with the
//! log-probability of that tuple under a uniform Plackett–Luce policy, which is
//! recorded but never used.

use crate::argen::Geometry;
use crate::error::{Error, Result};
use crate::plsampler::RankingSelection;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use rand_core::RngCore;
use rand_distr::{Distribution, Uniform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Vanilla,
    RandomPerToken,
    RandomPerFrame,
    SlidingWindow,
    GlobalLocal,
    RandomGlobalLocal,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Vanilla,
        Strategy::RandomPerToken,
        Strategy::RandomPerFrame,
        Strategy::SlidingWindow,
        Strategy::GlobalLocal,
        Strategy::RandomGlobalLocal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Vanilla => "vanilla",
            Strategy::RandomPerToken => "random-per-token",
            Strategy::RandomPerFrame => "random-per-frame",
            Strategy::SlidingWindow => "sliding-window",
            Strategy::GlobalLocal => "global-local",
            Strategy::RandomGlobalLocal => "random-global-local",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown baseline strategy {s:?}")))
    }
}

/// Frame split for the global-local strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields, default))]
pub struct WindowParams {
    /// Leading frames kept as the global anchor.
    pub anchor_frames: usize,
    /// Most recent frames kept by random global-local; `None` takes half of
    /// what the anchor leaves, rounded up.
    pub recent_frames: Option<usize>,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self { anchor_frames: 1, recent_frames: None }
    }
}

/// Log-probability of any ordered `k`-tuple under equal scores.
fn uniform_logprob(l: usize, k: usize) -> f64 {
    -(0..k).map(|i| libm::log((l - i) as f64)).sum::<f64>()
}

fn finish(mut indices: Vec<usize>, l: usize) -> Result<RankingSelection> {
    indices.sort_unstable();
    let k = indices.len();
    RankingSelection::new(indices, l, uniform_logprob(l, k))
}

/// `m` distinct elements of `pool`, uniformly, by a partial Fisher–Yates shuffle.
fn choose<R: RngCore + ?Sized>(mut pool: Vec<usize>, m: usize, rng: &mut R) -> Vec<usize> {
    for i in 0..m {
        let j = Uniform::new(i, pool.len()).expect("non-empty range").sample(rng);
        pool.swap(i, j);
    }
    pool.truncate(m);
    pool
}

fn frame_tokens(frames: &[usize], per_frame: usize) -> Vec<usize> {
    frames.iter().flat_map(|f| f * per_frame..(f + 1) * per_frame).collect()
}

fn frames_in_budget(k: usize, per_frame: usize, strategy: Strategy) -> Result<usize> {
    if !k.is_multiple_of(per_frame) {
        return Err(Error::Config(alloc::format!(
            "{strategy} needs a budget divisible by {per_frame} tokens per frame, got {k}"
        )));
    }
    Ok(k / per_frame)
}

/// Selects context for the next segment without a learned policy.
/// `l` is the history length in tokens; `k` is ignored by vanilla.
pub fn baseline_select<R: RngCore + ?Sized>(
    strategy: Strategy,
    geometry: &Geometry,
    l: usize,
    k: usize,
    rng: &mut R,
    window: &WindowParams,
) -> Result<RankingSelection> {
    let per_frame = geometry.tokens_per_frame();
    if !l.is_multiple_of(per_frame) {
        return Err(Error::Shape(alloc::format!("history of {l} tokens is not whole frames of {per_frame}")));
    }
    if strategy == Strategy::Vanilla {
        return finish((0..l).collect(), l);
    }
    if k == 0 || k > l {
        return Err(Error::Budget { k, available: l });
    }
    let frames = l / per_frame;
    match strategy {
        Strategy::Vanilla => unreachable!(),
        Strategy::RandomPerToken => finish(choose((0..l).collect(), k, rng), l),
        Strategy::RandomPerFrame => {
            let kf = frames_in_budget(k, per_frame, strategy)?;
            finish(frame_tokens(&choose((0..frames).collect(), kf, rng), per_frame), l)
        }
        Strategy::SlidingWindow => finish((l - k..l).collect(), l),
        Strategy::GlobalLocal => {
            let anchor = window.anchor_frames * per_frame;
            if anchor > k {
                return Err(Error::Config(alloc::format!("anchor of {anchor} tokens exceeds budget {k}")));
            }
            let mut idx: Vec<usize> = (0..anchor).collect();
            idx.extend((anchor..l).rev().take(k - anchor));
            finish(idx, l)
        }
        Strategy::RandomGlobalLocal => {
            let kf = frames_in_budget(k, per_frame, strategy)?;
            let anchor = window.anchor_frames;
            if anchor > kf {
                return Err(Error::Config(alloc::format!("anchor of {anchor} frames exceeds budget of {kf}")));
            }
            let rest = kf - anchor;
            let recent = window.recent_frames.unwrap_or(rest.div_ceil(2));
            if recent > rest {
                return Err(Error::Config(alloc::format!(
                    "{recent} recent frames do not fit next to {anchor} anchor frames in {kf}"
                )));
            }
            let mut chosen: Vec<usize> = (0..anchor).collect();
            chosen.extend((anchor..frames).rev().take(recent));
            let pool: Vec<usize> = (anchor..frames - recent).collect();
            chosen.extend(choose(pool, kf - chosen.len(), rng));
            finish(frame_tokens(&chosen, per_frame), l)
        }
    }
}

/// Parses a comma-separated list of strategy names.
pub fn parse_strategies(list: &str) -> Result<Vec<Strategy>> {
    list.split(',').map(|s| s.trim().parse()).collect()
}

/// Names of all strategies, comma separated.
pub fn strategy_names() -> String {
    Strategy::ALL.iter().map(|s| s.name()).collect::<Vec<_>>().join(",")
}
