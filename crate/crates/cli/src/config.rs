//! Run configuration: one TOML document with a default for every field.

use std::path::{Path, PathBuf};

use coopmarl_core::agents::{AgentConfig, AgentKind};
use coopmarl_core::envs::EnvSpec;
use coopmarl_core::eval::BootstrapConfig;
use coopmarl_core::offline::{DatasetSpec, OfflineConfig};
use coopmarl_core::train::OnlineConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub agent: AgentConfig,
    /// Online training; `checkpoint_dir` is assigned per seed by the commands.
    pub online: OnlineConfig,
    pub offline: OfflineConfig,
    pub offline_eval: OfflineEvalConfig,
    pub dataset: DatasetSpec,
    pub sweep: SweepConfig,
    pub ips: IpsConfig,
    pub rollout: RolloutConfig,
    pub seeds: Vec<u64>,
    /// Output directory; not part of the config hash.
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvSpec::default(),
            agent: AgentConfig::default(),
            online: OnlineConfig::default(),
            offline: OfflineConfig::default(),
            offline_eval: OfflineEvalConfig::default(),
            dataset: DatasetSpec::default(),
            sweep: SweepConfig::default(),
            ips: IpsConfig::default(),
            rollout: RolloutConfig::default(),
            seeds: vec![0],
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Per-dimension action sizes of the control task.
    pub sizes: Vec<usize>,
    pub kinds: Vec<AgentKind>,
    /// Training episodes averaged into a cell's final reward.
    pub final_window: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: vec![5, 10, 25, 50],
            kinds: vec![AgentKind::Maddpg, AgentKind::FlatDqn, AgentKind::BranchingDqn],
            final_window: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfflineMetric {
    /// Mean greedy rollout return in the environment.
    Rollout,
    /// Source-reward IPS on the random slice of the training log.
    Ips,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfflineEvalConfig {
    pub metric: OfflineMetric,
    pub rollout_episodes: usize,
}

impl Default for OfflineEvalConfig {
    fn default() -> Self {
        Self {
            metric: OfflineMetric::Rollout,
            rollout_episodes: 10,
        }
    }
}

/// One evaluated model: an agent kind with an optional discount override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IpsModel {
    pub name: String,
    pub kind: AgentKind,
    #[serde(default)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IpsConfig {
    /// Logging policy, trained online with the `online` settings.
    pub logger: AgentConfig,
    pub log_episodes: usize,
    /// Share of logged sessions played uniformly at random.
    pub random_share: f64,
    /// Size of a freshly simulated uniform-random evaluation log; 0 evaluates
    /// on the random slice of the training log instead.
    pub eval_episodes: usize,
    pub bootstrap: BootstrapConfig,
    pub models: Vec<IpsModel>,
}

impl Default for IpsConfig {
    fn default() -> Self {
        let model = |name: &str, kind, gamma| IpsModel {
            name: name.into(),
            kind,
            gamma,
        };
        Self {
            logger: AgentConfig::with_kind(AgentKind::PageBandit),
            log_episodes: 20_000,
            random_share: 0.05,
            eval_episodes: 0,
            bootstrap: BootstrapConfig::default(),
            models: vec![
                model("random", AgentKind::Random, None),
                model("baseline", AgentKind::Scripted, None),
                model("position_bandit", AgentKind::PositionBandit, None),
                model("page_bandit", AgentKind::PageBandit, None),
                model("maddpg_gamma0", AgentKind::Maddpg, Some(0.0)),
                model("maddpg_gamma099", AgentKind::Maddpg, Some(0.99)),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutConfig {
    pub episodes: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self { episodes: 100 }
    }
}

impl RunConfig {
    /// Reads `path` (or starts from defaults), applies dotted `key=value`
    /// overrides, and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        // overrides may address defaults the file leaves out, so the file is
        // merged over the serialized defaults first
        let mut doc: toml::Table = RunConfig::default().to_toml().parse().expect("defaults parse");
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("reading {}: {e}", p.display())))?;
            let file = text
                .parse::<toml::Table>()
                .map_err(|e| CliError::Config(format!("parsing {}: {e}", p.display())))?;
            merge(&mut doc, file);
        }
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let config: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let check = |r: coopmarl_core::Result<()>| r.map_err(|e| CliError::Config(e.to_string()));
        check(self.env.validate())?;
        check(self.agent.validate())?;
        check(self.online.validate())?;
        check(self.dataset.validate())?;
        check(self.ips.logger.validate())?;
        if self.seeds.is_empty() {
            return Err(CliError::Config("at least one seed is required".into()));
        }
        if self.offline.batch_size == 0 || self.offline.eval_interval == 0 {
            return Err(CliError::Config("offline batch size and eval interval must be positive".into()));
        }
        if self.sweep.sizes.iter().any(|&s| s < 2) || self.sweep.final_window == 0 {
            return Err(CliError::Config("sweep sizes must be >= 2 and the final window positive".into()));
        }
        if !(0.0..=1.0).contains(&self.ips.random_share) {
            return Err(CliError::Config("ips.random_share must be in [0, 1]".into()));
        }
        if self.rollout.episodes == 0 || self.offline_eval.rollout_episodes == 0 {
            return Err(CliError::Config("rollout episode counts must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Short digest of every setting that influences outputs.
    pub fn hash(&self) -> String {
        let mut hashed = self.clone();
        hashed.out = PathBuf::new();
        let digest = Sha256::digest(hashed.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Recursively overlays `top` on `base`; tables merge, other values replace.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Sets a dotted key in a TOML table. The value is read as a TOML literal and
/// falls back to a plain string.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {spec:?} is not key=value")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key {key:?}")));
    }
    let bad = |part: &str| CliError::Config(format!("override {key:?}: cannot descend into {part:?}"));
    let (last, path) = parts.split_last().expect("non-empty key");
    let node = doc;
    // numeric parts index arrays, everything else names table keys
    let mut slot: Option<&mut toml::Value> = None;
    for part in path {
        let next = match slot.take() {
            None => node
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new())),
            Some(toml::Value::Array(items)) => {
                let i: usize = part.parse().map_err(|_| bad(part))?;
                items.get_mut(i).ok_or_else(|| bad(part))?
            }
            Some(toml::Value::Table(t)) => t
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new())),
            Some(_) => return Err(bad(part)),
        };
        slot = Some(next);
    }
    match slot {
        None => {
            node.insert(last.to_string(), value);
        }
        Some(toml::Value::Table(t)) => {
            t.insert(last.to_string(), value);
        }
        Some(toml::Value::Array(items)) => {
            let i: usize = last.parse().map_err(|_| bad(last))?;
            *items.get_mut(i).ok_or_else(|| bad(last))? = value;
        }
        Some(_) => return Err(bad(last)),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = toml::from_str::<RunConfig>("bogus = 1").unwrap_err();
        assert!(err.to_string().contains("bogus"));
        assert!(toml::from_str::<RunConfig>("[agent]\nlearning_rate = 1").is_err());
    }

    #[test]
    fn dotted_overrides() {
        let c = RunConfig::load(
            None,
            &["agent.kind=branching_dqn".into(), "online.episodes=7".into(), "env.coop_control.action_size=10".into()],
        )
        .unwrap();
        assert_eq!(c.agent.kind, AgentKind::BranchingDqn);
        assert_eq!(c.online.episodes, 7);
        assert_eq!(c.env.coop_control.action_size, 10);
        assert!(matches!(RunConfig::load(None, &["online.episodes".into()]), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::load(None, &["online.batch_size=0".into()]), Err(CliError::Config(_))));
    }

    #[test]
    fn overrides_index_default_arrays() {
        let c = RunConfig::load(None, &["dataset.components.1.trajectories=7".into()]).unwrap();
        assert_eq!(c.dataset.components[1].trajectories, 7);
        assert_eq!(c.dataset.components[0].trajectories, 100);
        assert!(RunConfig::load(None, &["dataset.components.9.trajectories=7".into()]).is_err());
    }

    #[test]
    fn file_merges_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seeds = [3, 4]\n[env.coop_control]\naction_size = 10\n").unwrap();
        let c = RunConfig::load(Some(&path), &[]).unwrap();
        assert_eq!(c.seeds, vec![3, 4]);
        assert_eq!(c.env.coop_control.action_size, 10);
        assert_eq!(c.env.coop_control.agents, 6);
        std::fs::write(&path, "[env.coop_control]\nactions = 10\n").unwrap();
        assert!(matches!(RunConfig::load(Some(&path), &[]), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = RunConfig::default();
        let b = RunConfig {
            out: "elsewhere".into(),
            ..RunConfig::default()
        };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig {
            seeds: vec![1],
            ..RunConfig::default()
        };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn published_hyperparameters_are_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.online.batch_size, 128);
        assert_eq!(c.online.buffer_capacity, 100_000);
        assert_eq!(c.agent.tau, 0.001);
        assert_eq!(c.agent.temperature, 1.0);
        assert_eq!(c.ips.models.len(), 6);
    }
}
