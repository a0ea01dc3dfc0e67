#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod argen;
pub mod baselines;
pub mod error;
pub mod grpo;
pub mod numcore;
pub mod plsampler;
pub mod policynet;
pub mod rewards;
pub mod rng;
pub mod rollout;
pub mod synthenv;

pub use error::{Error, Result};
