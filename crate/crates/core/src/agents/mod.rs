//! Policy learners: MADDPG, flattened and branching Q-learning (plain and
//! conservative), contextual bandits at position and page level, plus the
//! random and scripted reference policies.

mod bandit;
mod batch;
mod maddpg;
mod qlearn;

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{EnvSpec, JointAction, JointObservation};
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, Bundle, Precision, Real};
use crate::replay::Transition;

pub use bandit::{PageBandit, PositionBandit, RandomAgent, ScriptedAgent};
pub use maddpg::{Maddpg, MaddpgAgent};
pub use qlearn::{flat_width, BranchingQAgent, FlatQAgent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Maddpg,
    FlatDqn,
    FlatCql,
    BranchingDqn,
    BranchingCql,
    PositionBandit,
    PageBandit,
    Random,
    Scripted,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Maddpg => "maddpg",
            AgentKind::FlatDqn => "flat_dqn",
            AgentKind::FlatCql => "flat_cql",
            AgentKind::BranchingDqn => "branching_dqn",
            AgentKind::BranchingCql => "branching_cql",
            AgentKind::PositionBandit => "position_bandit",
            AgentKind::PageBandit => "page_bandit",
            AgentKind::Random => "random",
            AgentKind::Scripted => "scripted",
        }
    }

    pub fn is_flat(self) -> bool {
        matches!(self, AgentKind::FlatDqn | AgentKind::FlatCql)
    }

    pub fn is_conservative(self) -> bool {
        matches!(self, AgentKind::FlatCql | AgentKind::BranchingCql)
    }

    /// Whether `update` changes anything.
    pub fn learns(self) -> bool {
        !matches!(self, AgentKind::Random | AgentKind::Scripted)
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// ε = min + (1 − min)·exp(−steps / decay_steps).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub min: f64,
    pub decay_steps: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            min: 0.01,
            decay_steps: 1e5,
        }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, steps: u64) -> f64 {
        self.min + (1.0 - self.min) * (-(steps as f64) / self.decay_steps).exp()
    }
}

/// Exploration rate of the ε-greedy learners after `steps` environment steps.
pub fn epsilon_at(steps: u64) -> f64 {
    EpsilonSchedule::default().at(steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub precision: Precision,
    pub hidden: Vec<usize>,
    /// Discount; falls back to the environment's when unset.
    pub gamma: Option<f64>,
    pub tau: f64,
    pub temperature: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub epsilon: EpsilonSchedule,
    /// Fixed exploration rate of the bandit learners.
    pub bandit_epsilon: f64,
    /// Conservative coefficient, applied by the `*_cql` kinds only.
    pub conservative: f64,
    /// Probability mass given to each action an agent has never trained on.
    pub new_content_floor: f64,
    /// Largest flattened output width a flat learner may allocate.
    pub max_flat_width: u64,
    /// Weight of the mean squared actor logit added to the actor loss.
    pub logit_penalty: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            kind: AgentKind::Maddpg,
            precision: Precision::F32,
            hidden: vec![256, 256],
            gamma: None,
            tau: 0.001,
            temperature: 1.0,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            epsilon: EpsilonSchedule::default(),
            bandit_epsilon: 0.05,
            conservative: 1.0,
            new_content_floor: 0.02,
            max_flat_width: 10_000_000,
            logit_penalty: 0.0,
        }
    }
}

impl AgentConfig {
    pub fn with_kind(kind: AgentKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn discount(&self, spec: &EnvSpec) -> f64 {
        self.gamma.unwrap_or(spec.discount)
    }

    pub fn actor_adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.actor_lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn critic_adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.critic_lr,
            ..self.actor_adam()
        }
    }

    pub fn conservative_coefficient(&self) -> f64 {
        if self.kind.is_conservative() {
            self.conservative
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidArgument(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        if let Some(g) = self.gamma {
            if !(0.0..=1.0).contains(&g) {
                return Err(Error::InvalidArgument(format!("gamma must be in [0, 1], got {g}")));
            }
        }
        if !(0.0..=1.0).contains(&self.bandit_epsilon) || !(0.0..1.0).contains(&self.new_content_floor) {
            return Err(Error::InvalidArgument("exploration probabilities must be in [0, 1)".into()));
        }
        if self.conservative < 0.0 || self.logit_penalty < 0.0 {
            return Err(Error::InvalidArgument("conservative coefficient and logit penalty must be >= 0".into()));
        }
        Ok(())
    }
}

/// A chosen joint action with the behavior probability of each agent's pick.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChoice {
    pub action: JointAction,
    pub propensities: Vec<f64>,
}

pub trait Agent: Send {
    fn kind(&self) -> AgentKind;

    fn action_sizes(&self) -> &[usize];

    /// Per-agent probability vectors, the softmax of each agent's model output.
    fn action_probabilities(&self, obs: &JointObservation) -> Result<Vec<Vec<f64>>>;

    /// Probability of a whole joint action; agents act independently, so by
    /// default this is the product of per-agent marginals.
    fn joint_propensity(&self, obs: &JointObservation, action: &JointAction) -> Result<f64> {
        let probs = self.action_probabilities(obs)?;
        action.validate(self.action_sizes())?;
        Ok(probs.iter().zip(&action.0).map(|(p, &a)| p[a]).product())
    }

    fn act(&self, obs: &JointObservation, explore: bool, rng: &mut ChaCha8Rng) -> Result<ActionChoice>;

    /// One gradient step on a batch. Returns the training loss.
    fn update(&mut self, batch: &[&Transition], rng: &mut ChaCha8Rng) -> Result<f64>;

    fn target_sync(&mut self) -> Result<()>;

    fn env_steps(&self) -> u64;

    fn record_env_steps(&mut self, steps: u64);

    /// Hash of every trainable parameter; equal digests mean identical policies.
    fn param_digest(&self) -> String;

    fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()>;
}

/// Checkpoint metadata shared by every agent kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentMeta {
    pub kind: AgentKind,
    pub config: AgentConfig,
    pub env: EnvSpec,
    pub env_spec_hash: String,
    pub env_steps: u64,
    pub updates: u64,
    #[serde(default)]
    pub state: serde_json::Value,
    #[serde(default)]
    pub extra: serde_json::Value,
}

/// Refuses flattened learners whose output layer would exceed the configured
/// width bound; every other kind is feasible.
pub fn check_feasible(config: &AgentConfig, spec: &EnvSpec) -> Result<()> {
    if config.kind.is_flat() {
        flat_width(&spec.action_sizes(), config.max_flat_width)?;
    }
    Ok(())
}

pub fn build_agent(config: &AgentConfig, spec: &EnvSpec, seed: u64) -> Result<Box<dyn Agent>> {
    config.validate()?;
    spec.validate()?;
    match config.precision {
        Precision::F32 => build_typed::<f32>(config, spec, seed),
        Precision::F64 => build_typed::<f64>(config, spec, seed),
    }
}

fn build_typed<T: Real>(config: &AgentConfig, spec: &EnvSpec, seed: u64) -> Result<Box<dyn Agent>> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match config.kind {
        AgentKind::Maddpg => Box::new(Maddpg::<T>::new(spec, config, &mut rng)?),
        AgentKind::FlatDqn | AgentKind::FlatCql => Box::new(FlatQAgent::<T>::new(spec, config, &mut rng)?),
        AgentKind::BranchingDqn | AgentKind::BranchingCql => {
            Box::new(BranchingQAgent::<T>::new(spec, config, &mut rng)?)
        }
        AgentKind::PositionBandit => Box::new(PositionBandit::<T>::new(spec, config, &mut rng)?),
        AgentKind::PageBandit => Box::new(PageBandit::<T>::new(spec, config, &mut rng)?),
        AgentKind::Random => Box::new(RandomAgent::new(spec)),
        AgentKind::Scripted => Box::new(ScriptedAgent::click_prior(spec, config.temperature)?),
    })
}

pub fn load_agent(path: &Path) -> Result<Box<dyn Agent>> {
    let bytes = std::fs::read(path)?;
    match Bundle::<f32>::from_bytes(&bytes) {
        Ok(bundle) => load_typed(bundle),
        Err(Error::Checkpoint(msg)) if msg.contains("precision") => load_typed(Bundle::<f64>::from_bytes(&bytes)?),
        Err(e) => Err(e),
    }
}

/// Reads only the metadata block of an agent checkpoint.
pub fn read_agent_meta(path: &Path) -> Result<AgentMeta> {
    let bytes = std::fs::read(path)?;
    let meta = match Bundle::<f32>::from_bytes(&bytes) {
        Ok(b) => b.meta,
        Err(Error::Checkpoint(msg)) if msg.contains("precision") => Bundle::<f64>::from_bytes(&bytes)?.meta,
        Err(e) => return Err(e),
    };
    Ok(serde_json::from_value(meta)?)
}

fn load_typed<T: Real>(mut bundle: Bundle<T>) -> Result<Box<dyn Agent>> {
    let meta: AgentMeta = serde_json::from_value(bundle.meta.clone())?;
    Ok(match meta.kind {
        AgentKind::Maddpg => Box::new(Maddpg::<T>::from_bundle(&meta, &mut bundle)?),
        AgentKind::FlatDqn | AgentKind::FlatCql => Box::new(FlatQAgent::<T>::from_bundle(&meta, &mut bundle)?),
        AgentKind::BranchingDqn | AgentKind::BranchingCql => {
            Box::new(BranchingQAgent::<T>::from_bundle(&meta, &mut bundle)?)
        }
        AgentKind::PositionBandit => Box::new(PositionBandit::<T>::from_bundle(&meta, &mut bundle)?),
        AgentKind::PageBandit => Box::new(PageBandit::<T>::from_bundle(&meta, &mut bundle)?),
        AgentKind::Random => Box::new(RandomAgent::new(&meta.env)),
        AgentKind::Scripted => Box::new(ScriptedAgent::click_prior(&meta.env, meta.config.temperature)?),
    })
}

pub(crate) fn digest_params<T: Real>(nets: &[&crate::numerics::DenseNet<T>]) -> String {
    let mut hasher = Sha256::new();
    let mut buf = Vec::new();
    for net in nets {
        buf.clear();
        net.for_each_param(|v| v.write_le(&mut buf));
        hasher.update(&buf);
    }
    crate::envs::hex16(&hasher.finalize())
}

pub(crate) fn save_bundle<T: Real>(
    path: &Path,
    meta: &AgentMeta,
    fill: impl FnOnce(&mut Bundle<T>),
) -> Result<()> {
    let mut bundle = Bundle::new(serde_json::to_value(meta)?);
    fill(&mut bundle);
    bundle.save(path)
}

/// ε-greedy behavior probability of `chosen` when the greedy pick is `greedy`.
pub(crate) fn epsilon_greedy_propensity(epsilon: f64, n: usize, chosen: usize, greedy: usize) -> f64 {
    let base = epsilon / n as f64;
    if chosen == greedy {
        base + 1.0 - epsilon
    } else {
        base
    }
}
