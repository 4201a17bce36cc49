//! Value-based and actor-critic agents acting on raw or learned multimodal
//! representations, with missing-modality evaluation.

pub mod adapter;
pub mod agent;
pub mod buffer;
pub mod ddpg;
pub mod dqn;
pub mod eval;
pub mod representation;
pub mod tabular;
pub mod vecenv;

use muse_core::rng::SplitRng;

/// Seed of episode `ep` within a labeled stream of run `seed`.
pub fn episode_seed(seed: u64, label: &str, ep: u64) -> u64 {
    let base = SplitRng::derive_labeled(seed, label).next_seed();
    SplitRng::derive(base, ep).next_seed()
}
