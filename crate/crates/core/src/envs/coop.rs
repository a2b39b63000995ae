//! Discretized cooperative control: K agents each pick one value on a [−1, 1]
//! grid; every agent tracks its own phase-shifted sinusoid while a coupling
//! term rewards neighbouring agents for agreeing in sign.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{discretize_axis, EnvKind, EnvSpec, Environment, JointAction, JointObservation, StepResult};
use crate::error::{Error, Result};

/// (sin ωt, cos ωt, t/T, terminal marker)
pub(super) const GLOBAL_WIDTH: usize = 4;
/// (sin(ωt + 2πd/K), cos(ωt + 2πd/K), t/T)
pub(super) const LOCAL_WIDTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoopControlParams {
    pub agents: usize,
    pub action_size: usize,
    pub omega: f64,
    pub coupling: f64,
    pub horizon: usize,
}

impl Default for CoopControlParams {
    fn default() -> Self {
        Self {
            agents: 6,
            action_size: 5,
            omega: 0.1,
            coupling: 0.3,
            horizon: 100,
        }
    }
}

impl CoopControlParams {
    pub(super) fn validate(&self) -> Result<()> {
        if self.agents == 0 {
            return Err(Error::InvalidArgument("coop_control needs at least one agent".into()));
        }
        if self.action_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "coop_control action_size must be >= 2, got {}",
                self.action_size
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        if !self.omega.is_finite() || !self.coupling.is_finite() {
            return Err(Error::NonFinite("coop_control parameters"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CoopControl {
    spec: EnvSpec,
    grid: Vec<f64>,
    t: usize,
    done: bool,
    interactions: u64,
}

impl CoopControl {
    pub fn new(spec: EnvSpec) -> Result<Self> {
        if spec.kind != EnvKind::CoopControl {
            return Err(Error::InvalidArgument("spec is not coop_control".into()));
        }
        spec.coop_control.validate()?;
        let grid = discretize_axis(spec.coop_control.action_size)?;
        Ok(Self {
            spec,
            grid,
            t: 0,
            done: false,
            interactions: 0,
        })
    }

    fn params(&self) -> &CoopControlParams {
        &self.spec.coop_control
    }

    fn phase(&self, t: usize, agent: usize) -> f64 {
        let p = self.params();
        p.omega * t as f64 + 2.0 * PI * agent as f64 / p.agents as f64
    }

    /// Hidden per-agent target g_d(t).
    pub fn target(&self, t: usize, agent: usize) -> f64 {
        self.phase(t, agent).sin()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn time(&self) -> usize {
        self.t
    }

    /// Reward of joint action `values` (grid values, not indices) at time `t`.
    pub fn reward_at(&self, t: usize, values: &[f64]) -> f64 {
        let k = values.len() as f64;
        let tracking: f64 = values
            .iter()
            .enumerate()
            .map(|(d, &v)| 1.0 - (v - self.target(t, d)).abs())
            .sum::<f64>()
            / k;
        let coupling: f64 = (0..values.len())
            .map(|d| values[d] * values[(d + 1) % values.len()])
            .sum::<f64>()
            / k;
        tracking + self.params().coupling * coupling
    }

    fn observe(&self, t: usize) -> JointObservation {
        let p = self.params();
        let progress = t as f64 / p.horizon as f64;
        let base = p.omega * t as f64;
        let global = vec![base.sin(), base.cos(), progress, 0.0];
        let locals = (0..p.agents)
            .map(|d| {
                let phase = self.phase(t, d);
                vec![phase.sin(), phase.cos(), progress]
            })
            .collect();
        JointObservation { global, locals }
    }
}

impl Environment for CoopControl {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// The task is deterministic; the seed is accepted for interface uniformity.
    fn reset(&mut self, _seed: u64) -> JointObservation {
        self.t = 0;
        self.done = false;
        self.observe(0)
    }

    fn step(&mut self, action: &JointAction) -> Result<StepResult> {
        if self.done {
            return Err(Error::InvalidArgument("step after terminal; call reset".into()));
        }
        action.validate(&self.spec.action_sizes())?;
        self.interactions += 1;
        let values: Vec<f64> = action.0.iter().map(|&i| self.grid[i]).collect();
        let reward = self.reward_at(self.t, &values);
        self.t += 1;
        let terminal = self.t >= self.params().horizon;
        self.done = terminal;
        let observation = if terminal {
            self.spec.terminal_observation()
        } else {
            self.observe(self.t)
        };
        Ok(StepResult {
            observation,
            reward,
            terminal,
            breakdown: None,
            agent_rewards: Vec::new(),
        })
    }

    fn interactions(&self) -> u64 {
        self.interactions
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(agents: usize, size: usize, coupling: f64, horizon: usize) -> CoopControl {
        CoopControl::new(EnvSpec::coop_control(CoopControlParams {
            agents,
            action_size: size,
            coupling,
            horizon,
            ..CoopControlParams::default()
        }))
        .unwrap()
    }

    #[test]
    fn exact_match_gives_maximum_tracking_reward() {
        let mut e = env(2, 5, 0.0, 10);
        e.reset(0);
        // t = 0: targets sin(0) = 0 and sin(π) ≈ 0; index 2 is the value 0.0
        let r = e.step(&JointAction(vec![2, 2])).unwrap();
        assert!((r.reward - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brute_force_beats_greedy_per_dimension() {
        let e = env(2, 5, 0.3, 10);
        let grid = e.grid().to_vec();
        let mut best = f64::NEG_INFINITY;
        for a in &grid {
            for b in &grid {
                best = best.max(e.reward_at(0, &[*a, *b]));
            }
        }
        let greedy: Vec<f64> = (0..2)
            .map(|d| {
                *grid
                    .iter()
                    .max_by(|x, y| {
                        let fx = 1.0 - (*x - e.target(0, d)).abs();
                        let fy = 1.0 - (*y - e.target(0, d)).abs();
                        fx.partial_cmp(&fy).unwrap()
                    })
                    .unwrap()
            })
            .collect();
        assert!(best >= e.reward_at(0, &greedy));
    }

    #[test]
    fn horizon_terminates_exactly_once() {
        let mut e = env(3, 5, 0.3, 4);
        e.reset(1);
        let mut terminals = 0;
        for step in 0..4 {
            let r = e.step(&JointAction(vec![0, 1, 2])).unwrap();
            if r.terminal {
                terminals += 1;
                assert_eq!(step, 3);
                assert!(r.observation.is_terminal_encoding());
            }
        }
        assert_eq!(terminals, 1);
        assert!(e.step(&JointAction(vec![0, 1, 2])).is_err());
        assert_eq!(e.interactions(), 4);
    }

    #[test]
    fn invalid_action_rejected() {
        let mut e = env(2, 5, 0.3, 4);
        e.reset(0);
        assert!(matches!(
            e.step(&JointAction(vec![0, 5])),
            Err(Error::InvalidAction { agent: 1, index: 5, size: 5 })
        ));
    }

    #[test]
    fn reward_bounded() {
        let e = env(6, 5, 0.3, 100);
        let grid = e.grid().to_vec();
        for t in 0..100 {
            for i in 0..grid.len() {
                for j in 0..grid.len() {
                    let values = [grid[i], grid[j], grid[i], grid[j], grid[j], grid[i]];
                    let r = e.reward_at(t, &values);
                    assert!((-1.3..=1.3).contains(&r));
                }
            }
        }
    }

    #[test]
    fn local_observation_layout() {
        let mut e = env(6, 5, 0.3, 100);
        let obs = e.reset(0);
        assert_eq!(obs.locals.len(), 6);
        let phase = 2.0 * PI * 2.0 / 6.0;
        assert!((obs.locals[2][0] - phase.sin()).abs() < 1e-12);
        assert!((obs.locals[2][1] - phase.cos()).abs() < 1e-12);
        assert_eq!(obs.locals[2][2], 0.0);
        assert_eq!(obs.global.len(), GLOBAL_WIDTH);
    }
}
