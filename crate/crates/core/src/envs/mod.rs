//! Cooperative Markov-game environments sharing one stepping interface.
//!
//! Both environments emit a single scalar reward per step that every agent
//! receives. Observations carry a global context plus one local vector per
//! agent; the last global feature is reserved for the terminal-state marker.

mod coop;
mod cro;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use coop::{CoopControl, CoopControlParams};
pub use cro::{CroSim, CroSimParams, RewardWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    CoopControl,
    CroSim,
}

/// Environment description: kind, discount and the per-kind parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub discount: f64,
    pub coop_control: CoopControlParams,
    pub cro_sim: CroSimParams,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            kind: EnvKind::CoopControl,
            discount: 0.99,
            coop_control: CoopControlParams::default(),
            cro_sim: CroSimParams::default(),
        }
    }
}

impl EnvSpec {
    pub fn coop_control(params: CoopControlParams) -> Self {
        Self {
            kind: EnvKind::CoopControl,
            coop_control: params,
            ..Self::default()
        }
    }

    pub fn cro_sim(params: CroSimParams) -> Self {
        Self {
            kind: EnvKind::CroSim,
            cro_sim: params,
            ..Self::default()
        }
    }

    pub fn agent_count(&self) -> usize {
        self.action_sizes().len()
    }

    pub fn action_sizes(&self) -> Vec<usize> {
        match self.kind {
            EnvKind::CoopControl => vec![self.coop_control.action_size; self.coop_control.agents],
            EnvKind::CroSim => self.cro_sim.catalog_sizes.clone(),
        }
    }

    pub fn horizon(&self) -> usize {
        match self.kind {
            EnvKind::CoopControl => self.coop_control.horizon,
            EnvKind::CroSim => self.cro_sim.horizon,
        }
    }

    pub fn global_width(&self) -> usize {
        match self.kind {
            EnvKind::CoopControl => coop::GLOBAL_WIDTH,
            EnvKind::CroSim => self.cro_sim.global_width(),
        }
    }

    pub fn local_widths(&self) -> Vec<usize> {
        match self.kind {
            EnvKind::CoopControl => vec![coop::LOCAL_WIDTH; self.coop_control.agents],
            EnvKind::CroSim => vec![self.cro_sim.local_width(); self.cro_sim.catalog_sizes.len()],
        }
    }

    /// Width of the flattened joint observation (global context then every local).
    pub fn joint_width(&self) -> usize {
        self.global_width() + self.local_widths().iter().sum::<usize>()
    }

    pub fn joint_action_space_size(&self) -> BigUint {
        joint_action_space_size(&self.action_sizes())
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::InvalidArgument(format!(
                "discount must be in [0, 1], got {}",
                self.discount
            )));
        }
        match self.kind {
            EnvKind::CoopControl => self.coop_control.validate(),
            EnvKind::CroSim => self.cro_sim.validate(),
        }
    }

    /// Hash of everything that determines the dynamics (kind and active parameters).
    pub fn spec_hash(&self) -> String {
        let body = match self.kind {
            EnvKind::CoopControl => serde_json::to_string(&self.coop_control),
            EnvKind::CroSim => serde_json::to_string(&self.cro_sim),
        }
        .expect("env params serialize");
        let mut hasher = Sha256::new();
        hasher.update(format!("{:?}:", self.kind).as_bytes());
        hasher.update(body.as_bytes());
        hex16(&hasher.finalize())
    }

    pub fn terminal_observation(&self) -> JointObservation {
        JointObservation::terminal(self.global_width(), &self.local_widths())
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        self.validate()?;
        Ok(match self.kind {
            EnvKind::CoopControl => Box::new(CoopControl::new(self.clone())?),
            EnvKind::CroSim => Box::new(CroSim::new(self.clone())?),
        })
    }
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointObservation {
    pub global: Vec<f64>,
    pub locals: Vec<Vec<f64>>,
}

impl JointObservation {
    /// All-zero encoding with the terminal marker (last global feature) set.
    pub fn terminal(global_width: usize, local_widths: &[usize]) -> Self {
        let mut global = vec![0.0; global_width];
        global[global_width - 1] = 1.0;
        Self {
            global,
            locals: local_widths.iter().map(|&w| vec![0.0; w]).collect(),
        }
    }

    pub fn is_terminal_encoding(&self) -> bool {
        self.global.last() == Some(&1.0)
            && self.global[..self.global.len() - 1].iter().all(|&v| v == 0.0)
            && self.locals.iter().flatten().all(|&v| v == 0.0)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.global.clone();
        for l in &self.locals {
            out.extend_from_slice(l);
        }
        out
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.global);
        for l in &self.locals {
            out.extend_from_slice(l);
        }
    }
}

/// Catalog indices, one per agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointAction(pub Vec<usize>);

impl JointAction {
    pub fn validate(&self, sizes: &[usize]) -> Result<()> {
        if self.0.len() != sizes.len() {
            return Err(Error::Shape {
                context: "joint action",
                expected: sizes.len(),
                actual: self.0.len(),
            });
        }
        for (agent, (&index, &size)) in self.0.iter().zip(sizes).enumerate() {
            if index >= size {
                return Err(Error::InvalidAction { agent, index, size });
            }
        }
        Ok(())
    }

    /// Mixed-radix index into the flattened joint action space (first agent most significant).
    pub fn flat_index(&self, sizes: &[usize]) -> usize {
        self.0
            .iter()
            .zip(sizes)
            .fold(0usize, |acc, (&a, &n)| acc * n + a)
    }

    pub fn from_flat_index(mut index: usize, sizes: &[usize]) -> Self {
        let mut out = vec![0; sizes.len()];
        for (slot, &n) in out.iter_mut().zip(sizes).rev() {
            *slot = index % n;
            index /= n;
        }
        Self(out)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub revenue: f64,
    pub profit: f64,
    pub long_term: f64,
    pub clicks: f64,
    pub abandonment: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: JointObservation,
    /// Shared by every agent.
    pub reward: f64,
    pub terminal: bool,
    pub breakdown: Option<RewardBreakdown>,
    /// Per-position share of the reward, when the environment attributes it.
    pub agent_rewards: Vec<f64>,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;
    fn reset(&mut self, seed: u64) -> JointObservation;
    fn step(&mut self, action: &JointAction) -> Result<StepResult>;
    /// Total number of `step` calls over the environment's lifetime.
    fn interactions(&self) -> u64;
}

/// `size` evenly spaced values covering [−1, 1] inclusive.
pub fn discretize_axis(size: usize) -> Result<Vec<f64>> {
    if size < 2 {
        return Err(Error::InvalidArgument(format!(
            "an action axis needs at least 2 values, got {size}"
        )));
    }
    let step = 2.0 / (size - 1) as f64;
    Ok((0..size)
        .map(|i| {
            if i == size - 1 {
                1.0
            } else {
                -1.0 + step * i as f64
            }
        })
        .collect())
}

pub fn joint_action_space_size(sizes: &[usize]) -> BigUint {
    sizes
        .iter()
        .fold(BigUint::from(1u32), |acc, &n| acc * BigUint::from(n))
}

/// Σ_t γ^t · r_t.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut weight = 1.0;
    let mut total = 0.0;
    for &r in rewards {
        total += weight * r;
        weight *= gamma;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discretize_examples() {
        assert_eq!(discretize_axis(5).unwrap(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(discretize_axis(2).unwrap(), vec![-1.0, 1.0]);
        let eleven = discretize_axis(11).unwrap();
        assert_eq!(eleven[5], 0.0);
        for w in eleven.windows(2) {
            assert!((w[1] - w[0] - 0.2).abs() < 1e-12);
        }
        assert!(discretize_axis(1).is_err());
        assert!(discretize_axis(0).is_err());
    }

    #[test]
    fn joint_space_sizes() {
        assert_eq!(
            joint_action_space_size(&[50, 68, 21, 18, 7, 14]),
            BigUint::from(125_949_600u64)
        );
        assert_eq!(joint_action_space_size(&[5; 6]), BigUint::from(15_625u32));
        assert_eq!(
            joint_action_space_size(&[50; 6]),
            BigUint::from(15_625_000_000u64)
        );
        let huge = joint_action_space_size(&[1000; 10]);
        assert_eq!(huge.to_string(), format!("1{}", "0".repeat(30)));
    }

    #[test]
    fn discounted_return_examples() {
        assert!((discounted_return(&[1.0, 1.0, 1.0], 0.99) - 2.9701).abs() < 1e-12);
        assert_eq!(discounted_return(&[3.0, 7.0, -2.0], 0.0), 3.0);
        assert_eq!(discounted_return(&[5.0], 0.42), 5.0);
    }

    #[test]
    fn flat_index_round_trip() {
        let sizes = [3, 4, 5];
        for i in 0..60 {
            let a = JointAction::from_flat_index(i, &sizes);
            a.validate(&sizes).unwrap();
            assert_eq!(a.flat_index(&sizes), i);
        }
        assert_eq!(JointAction(vec![1, 0, 0]).flat_index(&sizes), 20);
    }

    #[test]
    fn terminal_encoding() {
        let obs = JointObservation::terminal(4, &[2, 3]);
        assert!(obs.is_terminal_encoding());
        assert_eq!(obs.flatten(), vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = EnvSpec::cro_sim(CroSimParams::default());
        let text = serde_json::to_string(&spec).unwrap();
        let back: EnvSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.spec_hash(), spec.spec_hash());
        assert_ne!(spec.spec_hash(), EnvSpec::default().spec_hash());
    }
}
