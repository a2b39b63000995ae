//! Checkpoint registries, dataset generation from frozen policies, offline
//! training from logged transitions and the daily deploy/retrain cycle.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{load_agent, read_agent_meta, Agent, RandomAgent};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::replay::{assemble_episode, Impression, ReplayBuffer, TrajectoryHeader, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub episode: usize,
    pub reward: f64,
    pub path: PathBuf,
}

/// Evaluated checkpoints in training order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRegistry {
    pub entries: Vec<CheckpointEntry>,
}

impl CheckpointRegistry {
    pub fn record(&mut self, episode: usize, reward: f64, path: PathBuf) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if episode <= last.episode {
                return Err(Error::InvalidArgument(format!(
                    "checkpoint episode {episode} does not follow {}",
                    last.episode
                )));
            }
        }
        if !reward.is_finite() {
            return Err(Error::NonFinite("checkpoint reward"));
        }
        self.entries.push(CheckpointEntry { episode, reward, path });
        Ok(())
    }

    pub fn best_reward(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.reward).reduce(f64::max)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Earliest checkpoint whose reward reaches `fraction × best` (raw values,
    /// so a negative best makes the threshold larger than best).
    pub fn select(&self, fraction: f64) -> Result<&CheckpointEntry> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!("fraction must be in (0, 1], got {fraction}")));
        }
        let best = self.best_reward().ok_or(Error::Empty("checkpoint registry"))?;
        let threshold = fraction * best;
        self.entries
            .iter()
            .find(|e| e.reward >= threshold)
            .ok_or(Error::NoQualifyingCheckpoint { fraction, best })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn select_checkpoint(registry: &CheckpointRegistry, fraction: f64) -> Result<PathBuf> {
    Ok(registry.select(fraction)?.path.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComponentSource {
    /// Earliest registry checkpoint reaching this fraction of the best reward.
    Checkpoint { fraction: f64 },
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetComponent {
    pub tag: String,
    pub source: ComponentSource,
    pub trajectories: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub components: Vec<DatasetComponent>,
}

impl Default for DatasetSpec {
    /// Equal thirds of expert (best checkpoint), medium (30 %) and random play.
    fn default() -> Self {
        let component = |tag: &str, source| DatasetComponent {
            tag: tag.into(),
            source,
            trajectories: 100,
        };
        Self {
            components: vec![
                component("expert", ComponentSource::Checkpoint { fraction: 1.0 }),
                component("medium", ComponentSource::Checkpoint { fraction: 0.3 }),
                component("random", ComponentSource::Random),
            ],
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Empty("dataset components"));
        }
        for c in &self.components {
            if c.trajectories == 0 {
                return Err(Error::InvalidArgument(format!("component {} has no trajectories", c.tag)));
            }
            if let ComponentSource::Checkpoint { fraction } = c.source {
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "component {}: fraction must be in (0, 1], got {fraction}",
                        c.tag
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn tags(&self) -> Vec<String> {
        self.components.iter().map(|c| c.tag.clone()).collect()
    }
}

/// Plays `episodes` sessions with exploration on and no learning. Episode ids
/// start at `first_episode`.
pub fn collect_episodes(
    policy: &dyn Agent,
    spec: &EnvSpec,
    episodes: usize,
    tag: &str,
    first_episode: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Transition>> {
    let mut env = spec.build()?;
    let mut out = Vec::new();
    for e in 0..episodes {
        let mut obs = env.reset(rng.random());
        let mut impressions = Vec::new();
        loop {
            let choice = policy.act(&obs, true, rng)?;
            let step = env.step(&choice.action)?;
            impressions.push(Impression {
                observation: obs,
                action: choice.action,
                reward: step.reward,
                propensities: choice.propensities,
                agent_rewards: step.agent_rewards,
            });
            if step.terminal {
                break;
            }
            obs = step.observation;
        }
        out.extend(assemble_episode(
            impressions,
            &spec.terminal_observation(),
            first_episode + e as u64,
            tag,
        )?);
    }
    Ok(out)
}

/// Policy tag of uniform-random episodes.
pub const RANDOM_TAG: &str = "random";

/// Logs `episodes` sessions: a `random_share` fraction (rounded) is uniform
/// play tagged [`RANDOM_TAG`], the rest comes from `policy` under `tag`.
/// Sessions are shuffled whole.
pub fn collect_mixture(
    policy: &dyn Agent,
    tag: &str,
    spec: &EnvSpec,
    episodes: usize,
    random_share: f64,
    seed: u64,
) -> Result<Vec<Transition>> {
    if !(0.0..=1.0).contains(&random_share) {
        return Err(Error::InvalidArgument(format!("random share must be in [0, 1], got {random_share}")));
    }
    if tag == RANDOM_TAG && random_share < 1.0 {
        return Err(Error::InvalidArgument(format!("tag {RANDOM_TAG:?} is reserved for uniform play")));
    }
    let random = (episodes as f64 * random_share).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = collect_episodes(policy, spec, episodes - random, tag, 0, &mut rng)?;
    let uniform = RandomAgent::new(spec);
    log.extend(collect_episodes(&uniform, spec, random, RANDOM_TAG, (episodes - random) as u64, &mut rng)?);
    Ok(shuffle_episodes(log, &mut rng))
}

/// Shuffles whole episodes, keeping each episode's transitions in step order.
pub fn shuffle_episodes(transitions: Vec<Transition>, rng: &mut ChaCha8Rng) -> Vec<Transition> {
    let mut episodes: Vec<Vec<Transition>> = Vec::new();
    for t in transitions {
        match episodes.last_mut() {
            Some(ep) if ep[0].episode == t.episode => ep.push(t),
            _ => episodes.push(vec![t]),
        }
    }
    episodes.shuffle(rng);
    episodes.into_iter().flatten().collect()
}

/// Runs every component policy for its quota and returns the episode-shuffled
/// union with a header naming the component tags.
pub fn generate_dataset(
    dataset: &DatasetSpec,
    registry: &CheckpointRegistry,
    spec: &EnvSpec,
    seed: u64,
) -> Result<(TrajectoryHeader, Vec<Transition>)> {
    dataset.validate()?;
    let hash = spec.spec_hash();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all = Vec::new();
    let mut next_episode = 0u64;
    for c in &dataset.components {
        let policy: Box<dyn Agent> = match c.source {
            ComponentSource::Random => Box::new(RandomAgent::new(spec)),
            ComponentSource::Checkpoint { fraction } => {
                let path = select_checkpoint(registry, fraction)?;
                let meta = read_agent_meta(&path)?;
                if meta.env_spec_hash != hash {
                    return Err(Error::SpecHash {
                        expected: hash,
                        found: meta.env_spec_hash,
                    });
                }
                load_agent(&path)?
            }
        };
        let batch = collect_episodes(policy.as_ref(), spec, c.trajectories, &c.tag, next_episode, &mut rng)?;
        next_episode += c.trajectories as u64;
        all.extend(batch);
    }
    let header = TrajectoryHeader::new(hash, dataset.tags());
    Ok((header, shuffle_episodes(all, &mut rng)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfflineConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Updates between evaluation-hook calls.
    pub eval_interval: usize,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 128,
            eval_interval: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub updates: u64,
    pub metric: f64,
}

/// Gradient updates from a fixed transition set; no environment is stepped.
/// Each epoch runs ⌊size / batch⌋ uniformly sampled updates (at least one).
pub fn train_offline(
    agent: &mut dyn Agent,
    transitions: &[Transition],
    config: &OfflineConfig,
    seed: u64,
    eval_hook: &mut dyn FnMut(&dyn Agent, u64) -> Result<f64>,
) -> Result<Vec<CurvePoint>> {
    if transitions.is_empty() {
        return Err(Error::Empty("offline dataset"));
    }
    if config.batch_size == 0 || config.eval_interval == 0 {
        return Err(Error::InvalidArgument("batch size and eval interval must be positive".into()));
    }
    // the buffer holds the whole dataset in order, so its indices address `transitions`
    let mut buffer = ReplayBuffer::new(transitions.len())?;
    buffer.extend(transitions.iter().cloned());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_epoch = (transitions.len() / config.batch_size).max(1);
    let mut curve = Vec::new();
    let mut updates = 0u64;
    for _ in 0..config.epochs {
        for _ in 0..per_epoch {
            let idx = buffer.sample_indices(config.batch_size, &mut rng)?;
            let batch: Vec<&Transition> = idx.iter().map(|&i| &transitions[i]).collect();
            agent.update(&batch, &mut rng)?;
            agent.target_sync()?;
            updates += 1;
            if updates % config.eval_interval as u64 == 0 {
                curve.push(CurvePoint {
                    updates,
                    metric: eval_hook(agent, updates)?,
                });
            }
        }
    }
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixConfig {
    pub days: usize,
    pub episodes_per_day: usize,
    pub epochs_per_day: usize,
    pub batch_size: usize,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            days: 20,
            episodes_per_day: 50,
            epochs_per_day: 1,
            batch_size: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayMetrics {
    pub day: usize,
    pub mean_return: f64,
    pub transitions: usize,
    /// Parameter digest while deployed.
    pub deployed_digest: String,
}

/// Each day: act with the frozen policy (exploration on), append the day's
/// sessions to the accumulated log, then retrain on the whole log.
pub fn mix_offline_cycle(
    agent: &mut dyn Agent,
    spec: &EnvSpec,
    config: &MixConfig,
    seed: u64,
) -> Result<Vec<DayMetrics>> {
    if config.days == 0 || config.episodes_per_day == 0 {
        return Err(Error::InvalidArgument("days and episodes per day must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log: Vec<Transition> = Vec::new();
    let mut out = Vec::with_capacity(config.days);
    for day in 1..=config.days {
        let deployed_digest = agent.param_digest();
        let first = log.last().map_or(0, |t| t.episode + 1);
        let today = collect_episodes(agent, spec, config.episodes_per_day, "deployed", first, &mut rng)?;
        if agent.param_digest() != deployed_digest {
            return Err(Error::InvalidArgument("deployed policy changed while acting".into()));
        }
        agent.record_env_steps(today.len() as u64);
        let mean_return = today.iter().map(|t| t.reward).sum::<f64>() / config.episodes_per_day as f64;
        log.extend(today);
        let offline = OfflineConfig {
            epochs: config.epochs_per_day,
            batch_size: config.batch_size,
            eval_interval: usize::MAX,
        };
        train_offline(agent, &log, &offline, rng.random(), &mut |_, _| Ok(0.0))?;
        out.push(DayMetrics {
            day,
            mean_return,
            transitions: log.len(),
            deployed_digest,
        });
    }
    Ok(out)
}
