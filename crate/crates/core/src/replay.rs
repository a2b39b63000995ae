//! Transition storage, episode assembly and the trajectory file format.
//!
//! Trajectory files are line-delimited JSON. Line 1 is a header object:
//!
//! ```text
//! {"format":"coopmarl-trajectories","schema_version":1,"env_spec_hash":"…",
//!  "policy_tags":["expert","medium","random"],"config_hash":"…"}
//! ```
//!
//! Every following line is one transition with the fields
//! `observation`, `action`, `reward`, `next_observation`, `terminal` (0 or 1),
//! `propensities`, `episode`, `step`, `policy` and, for environments that
//! attribute reward per position, `agent_rewards`. Observations are objects
//! `{"global": [...], "locals": [[...], ...]}`. Floats are written in shortest
//! round-trip form, so loading reproduces every value bit for bit.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{JointAction, JointObservation};
use crate::error::{Error, Result};

pub const TRAJECTORY_FORMAT: &str = "coopmarl-trajectories";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub observation: JointObservation,
    pub action: JointAction,
    pub reward: f64,
    pub next_observation: JointObservation,
    #[serde(with = "flag")]
    pub terminal: bool,
    /// Behavior-policy probability of each agent's logged action.
    pub propensities: Vec<f64>,
    pub episode: u64,
    pub step: u32,
    #[serde(default)]
    pub policy: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agent_rewards: Vec<f64>,
}

mod flag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!("terminal flag must be 0 or 1, got {other}"))),
        }
    }
}

/// One impression of a session as logged before assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct Impression {
    pub observation: JointObservation,
    pub action: JointAction,
    /// Total reward received between this impression and the next.
    pub reward: f64,
    pub propensities: Vec<f64>,
    pub agent_rewards: Vec<f64>,
}

/// Turns a session's impressions into transitions: impression `k` links to
/// impression `k + 1`, and the last one links to the terminal state with flag 1.
pub fn assemble_episode(
    impressions: Vec<Impression>,
    terminal_state: &JointObservation,
    episode: u64,
    policy: &str,
) -> Result<Vec<Transition>> {
    if impressions.is_empty() {
        return Err(Error::Empty("session"));
    }
    let next_states: Vec<JointObservation> = impressions
        .iter()
        .skip(1)
        .map(|imp| imp.observation.clone())
        .chain(std::iter::once(terminal_state.clone()))
        .collect();
    let last = impressions.len() - 1;
    Ok(impressions
        .into_iter()
        .zip(next_states)
        .enumerate()
        .map(|(k, (imp, next_observation))| Transition {
            observation: imp.observation,
            action: imp.action,
            reward: imp.reward,
            next_observation,
            terminal: k == last,
            propensities: imp.propensities,
            episode,
            step: k as u32,
            policy: policy.to_string(),
            agent_rewards: imp.agent_rewards,
        })
        .collect())
}

/// Bounded FIFO store with uniform sampling with replacement.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be positive".into()));
        }
        Ok(Self {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, transition: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(transition);
    }

    pub fn extend(&mut self, transitions: impl IntoIterator<Item = Transition>) {
        for t in transitions {
            self.push(t);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if self.items.len() < batch_size {
            return Err(Error::InvalidArgument(format!(
                "buffer holds {} transitions, batch needs {batch_size}",
                self.items.len()
            )));
        }
        let n = self.items.len();
        Ok((0..batch_size).map(|_| rng.random_range(0..n)).collect())
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(batch_size, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub format: String,
    pub schema_version: u32,
    pub env_spec_hash: String,
    pub policy_tags: Vec<String>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

impl TrajectoryHeader {
    pub fn new(env_spec_hash: impl Into<String>, policy_tags: Vec<String>) -> Self {
        Self {
            format: TRAJECTORY_FORMAT.to_string(),
            schema_version: SCHEMA_VERSION,
            env_spec_hash: env_spec_hash.into(),
            policy_tags,
            config_hash: None,
        }
    }
}

pub fn save_trajectories(path: &Path, header: &TrajectoryHeader, transitions: &[Transition]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for t in transitions {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_trajectories(path: &Path) -> Result<(TrajectoryHeader, Vec<Transition>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let record_err = |record: usize, message: String| Error::Record {
        path: path.to_path_buf(),
        record,
        message,
    };
    let header_line = lines
        .next()
        .ok_or_else(|| record_err(0, "missing header".into()))??;
    let header: TrajectoryHeader =
        serde_json::from_str(&header_line).map_err(|e| record_err(0, format!("header: {e}")))?;
    if header.format != TRAJECTORY_FORMAT {
        return Err(record_err(0, format!("unknown format {:?}", header.format)));
    }
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Version {
            found: header.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    let mut transitions = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // records are numbered from 1; the header is record 0
        let t: Transition = serde_json::from_str(&line).map_err(|e| record_err(i + 1, e.to_string()))?;
        transitions.push(t);
    }
    Ok((header, transitions))
}
