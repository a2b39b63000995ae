//! Shared fixtures for the criterion benchmarks.

use coopmarl_core::agents::RandomAgent;
use coopmarl_core::envs::{CoopControlParams, CroSimParams, EnvSpec};
use coopmarl_core::offline::collect_episodes;
use coopmarl_core::replay::Transition;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn coop_spec(action_size: usize) -> EnvSpec {
    EnvSpec::coop_control(CoopControlParams {
        action_size,
        horizon: 20,
        ..CoopControlParams::default()
    })
}

pub fn cro_spec() -> EnvSpec {
    EnvSpec::cro_sim(CroSimParams::default())
}

/// Uniform-random play, deterministic in `seed`.
pub fn random_log(spec: &EnvSpec, episodes: usize, seed: u64) -> Vec<Transition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    collect_episodes(&RandomAgent::new(spec), spec, episodes, "random", 0, &mut rng).expect("random play")
}
