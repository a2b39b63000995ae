//! Off-policy IPS evaluation over logged trajectories and greedy rollout evaluation.
//!
//! IPS works at trajectory level: each logged episode contributes one record
//! weighted by π/μ of its first impression, with the episode's total reward
//! as the outcome.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{Agent, RandomAgent};
use crate::envs::{EnvSpec, JointAction, JointObservation};
use crate::error::{Error, Result};
use crate::offline::{collect_episodes, RANDOM_TAG};
use crate::replay::Transition;

/// Smallest target propensity used in an importance weight.
pub const PROPENSITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    Source,
    /// sign(r)·ln(1 + |r|)
    Logged,
    /// 1 if r > 0, else 0
    Indicator,
}

impl RewardVariant {
    pub const ALL: [RewardVariant; 3] = [RewardVariant::Source, RewardVariant::Logged, RewardVariant::Indicator];

    pub fn apply(self, r: f64) -> f64 {
        match self {
            RewardVariant::Source => r,
            RewardVariant::Logged => r.signum() * r.abs().ln_1p(),
            RewardVariant::Indicator => {
                if r > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            RewardVariant::Source => "source",
            RewardVariant::Logged => "logged",
            RewardVariant::Indicator => "indicator",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpsResult {
    pub variant: RewardVariant,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    /// Records whose target propensity was raised to the floor.
    pub floored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { resamples: 2000, seed: 0 }
    }
}

/// One logged episode reduced to what trajectory-level IPS needs.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedTrajectory {
    pub episode: u64,
    pub policy: String,
    pub observation: JointObservation,
    pub action: JointAction,
    /// Joint behavior propensity μ of the first impression.
    pub behavior: f64,
    pub total_reward: f64,
}

/// Groups transitions by episode (in order of first appearance) and keeps the
/// earliest step of each as the weighted impression.
pub fn trajectories(transitions: &[Transition]) -> Vec<LoggedTrajectory> {
    let mut order: Vec<u64> = Vec::new();
    let mut by_episode: BTreeMap<u64, (usize, f64)> = BTreeMap::new();
    for (idx, t) in transitions.iter().enumerate() {
        match by_episode.get_mut(&t.episode) {
            Some((first, total)) => {
                *total += t.reward;
                if t.step < transitions[*first].step {
                    *first = idx;
                }
            }
            None => {
                order.push(t.episode);
                by_episode.insert(t.episode, (idx, t.reward));
            }
        }
    }
    order
        .into_iter()
        .map(|ep| {
            let (first, total) = by_episode[&ep];
            let t = &transitions[first];
            LoggedTrajectory {
                episode: ep,
                policy: t.policy.clone(),
                observation: t.observation.clone(),
                action: t.action.clone(),
                behavior: t.propensities.iter().product(),
                total_reward: total,
            }
        })
        .collect()
}

/// Keeps the trajectories logged by the named policy.
pub fn filter_policy(records: Vec<LoggedTrajectory>, tag: &str) -> Vec<LoggedTrajectory> {
    records.into_iter().filter(|r| r.policy == tag).collect()
}

/// Joint target propensity, floored at [`PROPENSITY_FLOOR`]. Returns the
/// value and whether the floor was applied.
pub fn target_propensity(policy: &dyn Agent, obs: &JointObservation, action: &JointAction) -> Result<(f64, bool)> {
    let p = policy.joint_propensity(obs, action)?;
    if !p.is_finite() {
        return Err(Error::NonFinite("target propensity"));
    }
    if p < PROPENSITY_FLOOR {
        Ok((PROPENSITY_FLOOR, true))
    } else {
        Ok((p.min(1.0), false))
    }
}

/// Importance weights π/μ for every record, plus the floor count.
pub fn importance_weights(records: &[LoggedTrajectory], policy: &dyn Agent) -> Result<(Vec<f64>, usize)> {
    let mut floored = 0;
    let mut weights = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if !(r.behavior > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "record {i} (episode {}) has behavior propensity {}",
                r.episode, r.behavior
            )));
        }
        let (p, hit) = target_propensity(policy, &r.observation, &r.action)?;
        floored += usize::from(hit);
        weights.push(p / r.behavior);
    }
    Ok((weights, floored))
}

/// V̂ = (1/n)·Σ w_i·r_i with a percentile-bootstrap interval.
pub fn ips_from_weights(
    weights: &[f64],
    rewards: &[f64],
    variant: RewardVariant,
    bootstrap: &BootstrapConfig,
) -> Result<IpsResult> {
    if weights.is_empty() {
        return Err(Error::Empty("IPS records"));
    }
    crate::error::check_len("IPS rewards", weights.len(), rewards.len())?;
    let terms: Vec<f64> = weights.iter().zip(rewards).map(|(w, &r)| w * variant.apply(r)).collect();
    let n = terms.len();
    let estimate = terms.iter().sum::<f64>() / n as f64;
    let (mut lower, mut upper) = (estimate, estimate);
    if bootstrap.resamples > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(bootstrap.seed);
        let mut means: Vec<f64> = (0..bootstrap.resamples)
            .map(|_| (0..n).map(|_| terms[rng.random_range(0..n)]).sum::<f64>() / n as f64)
            .collect();
        means.sort_by(f64::total_cmp);
        // the interval is widened to contain the point estimate when the
        // bootstrap distribution is skewed past it
        lower = percentile(&means, 0.025).min(estimate);
        upper = percentile(&means, 0.975).max(estimate);
    }
    Ok(IpsResult {
        variant,
        estimate,
        lower,
        upper,
        n,
        floored: 0,
    })
}

/// Linear-interpolated percentile of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn ips_estimate(
    records: &[LoggedTrajectory],
    policy: &dyn Agent,
    variant: RewardVariant,
    bootstrap: &BootstrapConfig,
) -> Result<IpsResult> {
    Ok(ips_all_variants(records, policy, &[variant], bootstrap)?.remove(0))
}

/// Evaluates several reward variants while computing target propensities once.
pub fn ips_all_variants(
    records: &[LoggedTrajectory],
    policy: &dyn Agent,
    variants: &[RewardVariant],
    bootstrap: &BootstrapConfig,
) -> Result<Vec<IpsResult>> {
    if records.is_empty() {
        return Err(Error::Empty("IPS records"));
    }
    let (weights, floored) = importance_weights(records, policy)?;
    let rewards: Vec<f64> = records.iter().map(|r| r.total_reward).collect();
    variants
        .iter()
        .map(|&v| {
            let mut res = ips_from_weights(&weights, &rewards, v, bootstrap)?;
            res.floored = floored;
            Ok(res)
        })
        .collect()
}

/// Sessions simulated per chunk by [`ips_on_fresh_random_log`].
const FRESH_LOG_CHUNK: usize = 10_000;

/// IPS of every policy on a newly simulated uniform-random log of `episodes`
/// sessions. The log is generated in chunks and reduced to first impressions,
/// so memory stays bounded; all policies see the same records.
pub fn ips_on_fresh_random_log(
    policies: &[&dyn Agent],
    spec: &EnvSpec,
    episodes: usize,
    seed: u64,
    variants: &[RewardVariant],
    bootstrap: &BootstrapConfig,
) -> Result<Vec<Vec<IpsResult>>> {
    if episodes == 0 {
        return Err(Error::Empty("IPS records"));
    }
    let uniform = RandomAgent::new(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = vec![Vec::with_capacity(episodes); policies.len()];
    let mut floored = vec![0usize; policies.len()];
    let mut rewards = Vec::with_capacity(episodes);
    let mut done = 0;
    while done < episodes {
        let n = FRESH_LOG_CHUNK.min(episodes - done);
        let chunk = collect_episodes(&uniform, spec, n, RANDOM_TAG, done as u64, &mut rng)?;
        let records = trajectories(&chunk);
        for (k, policy) in policies.iter().enumerate() {
            let (w, f) = importance_weights(&records, *policy)?;
            weights[k].extend(w);
            floored[k] += f;
        }
        rewards.extend(records.iter().map(|r| r.total_reward));
        done += n;
    }
    weights
        .iter()
        .zip(floored)
        .map(|(w, f)| {
            variants
                .iter()
                .map(|&v| {
                    let mut res = ips_from_weights(w, &rewards, v, bootstrap)?;
                    res.floored = f;
                    Ok(res)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub mean: f64,
    pub stderr: f64,
    pub returns: Vec<f64>,
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Greedy rollouts; returns the mean undiscounted episode return.
pub fn rollout_eval(policy: &dyn Agent, spec: &EnvSpec, episodes: usize, seed: u64) -> Result<RolloutResult> {
    rollout(policy, spec, episodes, seed, false)
}

/// Rollouts with the policy's own exploration switched on or off.
pub fn rollout(policy: &dyn Agent, spec: &EnvSpec, episodes: usize, seed: u64, explore: bool) -> Result<RolloutResult> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("rollout needs at least one episode".into()));
    }
    let mut env = spec.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(rng.random());
        let mut total = 0.0;
        loop {
            let choice = policy.act(&obs, explore, &mut rng)?;
            let step = env.step(&choice.action)?;
            total += step.reward;
            if step.terminal {
                break;
            }
            obs = step.observation;
        }
        returns.push(total);
    }
    let (mean, stderr) = mean_stderr(&returns);
    Ok(RolloutResult { mean, stderr, returns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::RandomAgent;
    use crate::envs::{CoopControlParams, CroSimParams};

    #[test]
    fn reward_variants() {
        assert_eq!(RewardVariant::Indicator.apply(0.0), 0.0);
        assert_eq!(RewardVariant::Indicator.apply(1e-9), 1.0);
        assert_eq!(RewardVariant::Indicator.apply(-3.0), 0.0);
        assert!((RewardVariant::Logged.apply(-(std::f64::consts::E - 1.0)) + 1.0).abs() < 1e-12);
        assert_eq!(RewardVariant::Logged.apply(0.0), 0.0);
        assert_eq!(RewardVariant::Source.apply(2.5), 2.5);
    }

    #[test]
    fn hand_arithmetic_example() {
        // μ = 0.5 each, π = (1, 0), rewards (3, 7)
        let weights = [1.0 / 0.5, 0.0 / 0.5];
        let res = ips_from_weights(&weights, &[3.0, 7.0], RewardVariant::Source, &BootstrapConfig::default()).unwrap();
        assert_eq!(res.estimate, 3.0);
        assert!(res.lower <= res.estimate && res.estimate <= res.upper);
        assert_eq!(res.n, 2);
    }

    #[test]
    fn empty_records_rejected() {
        assert!(ips_from_weights(&[], &[], RewardVariant::Source, &BootstrapConfig::default()).is_err());
    }

    #[test]
    fn uniform_policy_propensity() {
        let spec = EnvSpec::coop_control(CoopControlParams {
            agents: 2,
            action_size: 4,
            ..CoopControlParams::default()
        });
        let agent = RandomAgent::new(&spec);
        let obs = spec.build().unwrap().reset(0);
        let (p, floored) = target_propensity(&agent, &obs, &JointAction(vec![3, 1])).unwrap();
        assert!((p - 1.0 / 16.0).abs() < 1e-15);
        assert!(!floored);
    }

    #[test]
    fn zero_behavior_propensity_rejected() {
        let spec = EnvSpec::cro_sim(CroSimParams::default());
        let agent = RandomAgent::new(&spec);
        let obs = spec.build().unwrap().reset(0);
        let rec = LoggedTrajectory {
            episode: 4,
            policy: "random".into(),
            observation: obs,
            action: JointAction(vec![0, 0, 0]),
            behavior: 0.0,
            total_reward: 1.0,
        };
        let err = ips_estimate(&[rec], &agent, RewardVariant::Source, &BootstrapConfig::default()).unwrap_err();
        assert!(err.to_string().contains("episode 4"));
    }

    #[test]
    fn deterministic_rollout_has_zero_stderr() {
        let spec = EnvSpec::coop_control(CoopControlParams {
            agents: 2,
            action_size: 3,
            horizon: 7,
            ..CoopControlParams::default()
        });
        let scripted = crate::agents::build_agent(
            &crate::agents::AgentConfig {
                hidden: vec![4],
                ..crate::agents::AgentConfig::with_kind(crate::agents::AgentKind::Maddpg)
            },
            &spec,
            3,
        )
        .unwrap();
        let res = rollout_eval(scripted.as_ref(), &spec, 4, 9).unwrap();
        assert_eq!(res.stderr, 0.0);
        let one = rollout_eval(scripted.as_ref(), &spec, 1, 9).unwrap();
        assert_eq!(one.mean, one.returns[0]);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), 2.0);
        assert_eq!(percentile(&v, 0.125), 0.5);
        assert_eq!(percentile(&v, 1.0), 4.0);
    }
}
