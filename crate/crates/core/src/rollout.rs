//! Everything needed to turn a selection into a scored segment: the frozen
//! generator, its schedule and the reward stack.

use crate::argen::{GenerationState, Noise, NoiseSchedule, SegmentState, ToyGenerator};
use crate::error::{Error, Result};
use crate::numcore::ComputeMeter;
use crate::plsampler::RankingSelection;
use crate::policynet::PromptEmbedding;
use crate::rewards::{hybrid_reward, RewardBreakdown, RewardConfig, RewardProviders};
use rand_core::RngCore;

pub struct SceneEvaluator {
    pub generator: ToyGenerator,
    pub schedule: NoiseSchedule,
    pub providers: RewardProviders,
    pub reward: RewardConfig,
}

/// A generated candidate and its reward. `segment` is `None` when generation
/// or scoring failed and the rollout was scored as a failure.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSegment {
    pub segment: Option<SegmentState>,
    pub reward: RewardBreakdown,
}

/// Errors that mark a single rollout as failed rather than aborting the group.
fn is_rollout_failure(e: &Error) -> bool {
    matches!(e, Error::InvalidSegment(_) | Error::DegenerateVector | Error::Numeric(_))
}

impl SceneEvaluator {
    #[allow(clippy::too_many_arguments)]
    pub fn generate<R: RngCore + ?Sized>(
        &self,
        state: &GenerationState,
        selection: &RankingSelection,
        prompt: &PromptEmbedding,
        prompt_id: usize,
        noise: Noise,
        rng: &mut R,
        meter: Option<&mut ComputeMeter>,
    ) -> Result<SegmentState> {
        self.generator
            .denoise_segment(state, selection, prompt, prompt_id, &self.schedule, noise, rng, meter)
    }

    pub fn score(
        &self,
        segment: &SegmentState,
        state: &GenerationState,
        prompt: &PromptEmbedding,
    ) -> Result<RewardBreakdown> {
        hybrid_reward(segment, state, prompt, &self.providers, &self.reward)
    }

    /// Generates and scores one candidate. Invalid segments score zero instead of erroring.
    pub fn rollout<R: RngCore + ?Sized>(
        &self,
        state: &GenerationState,
        selection: &RankingSelection,
        prompt: &PromptEmbedding,
        prompt_id: usize,
        noise: Noise,
        rng: &mut R,
    ) -> Result<ScoredSegment> {
        let segment = match self.generate(state, selection, prompt, prompt_id, noise, rng, None) {
            Ok(s) => s,
            Err(e) if is_rollout_failure(&e) => {
                return Ok(ScoredSegment { segment: None, reward: RewardBreakdown::failed() })
            }
            Err(e) => return Err(e),
        };
        match self.score(&segment, state, prompt) {
            Ok(reward) => Ok(ScoredSegment { segment: Some(segment), reward }),
            Err(e) if is_rollout_failure(&e) => {
                Ok(ScoredSegment { segment: None, reward: RewardBreakdown::failed() })
            }
            Err(e) => Err(e),
        }
    }
}
