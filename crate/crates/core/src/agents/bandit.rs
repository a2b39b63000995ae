//! Contextual bandits (instant-reward regressors) and fixed reference policies.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::batch::{joint_matrix, local_matrix, to_real, validate_actions};
use super::{
    digest_params, epsilon_greedy_propensity, save_bundle, ActionChoice, Agent, AgentConfig, AgentKind, AgentMeta,
};
use crate::envs::{CroSim, EnvKind, EnvSpec, JointAction, JointObservation};
use crate::error::{check_len, Error, Result};
use crate::numerics::{argmax, softmax, Activation, Architecture, Bundle, DenseNet, Gradients, LayerGradient, OptimState, Real};
use crate::replay::Transition;

fn mlp_dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend(hidden);
    dims.push(output);
    dims
}

fn bandit_meta(kind: AgentKind, config: &AgentConfig, env: &EnvSpec, env_steps: u64, updates: u64) -> AgentMeta {
    AgentMeta {
        kind,
        config: config.clone(),
        env: env.clone(),
        env_spec_hash: env.spec_hash(),
        env_steps,
        updates,
        state: serde_json::Value::Null,
        extra: serde_json::Value::Null,
    }
}

/// Regression target of position i: its attributed reward when the
/// environment provides one, the shared page reward otherwise.
pub(crate) fn position_reward(t: &Transition, i: usize) -> f64 {
    t.agent_rewards.get(i).copied().unwrap_or(t.reward)
}

/// N independent reward predictors, each reading only its own position's
/// observation.
#[derive(Debug, Clone)]
pub struct PositionBandit<T: Real> {
    config: AgentConfig,
    env: EnvSpec,
    sizes: Vec<usize>,
    local_widths: Vec<usize>,
    nets: Vec<DenseNet<T>>,
    opts: Vec<OptimState<T>>,
    env_steps: u64,
    updates: u64,
}

impl<T: Real> PositionBandit<T> {
    pub fn new<R: Rng + ?Sized>(spec: &EnvSpec, config: &AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let sizes = spec.action_sizes();
        let local_widths = spec.local_widths();
        let nets: Vec<DenseNet<T>> = sizes
            .iter()
            .zip(&local_widths)
            .map(|(&n, &w)| DenseNet::new(&Architecture::mlp(&mlp_dims(w, &config.hidden, n), Activation::Identity)?, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            opts: nets.iter().map(|n| OptimState::new(n, config.critic_adam())).collect(),
            nets,
            config: config.clone(),
            env: spec.clone(),
            sizes,
            local_widths,
            env_steps: 0,
            updates: 0,
        })
    }

    pub(crate) fn from_bundle(meta: &AgentMeta, bundle: &mut Bundle<T>) -> Result<Self> {
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut out = Self::new(&meta.env, &meta.config, &mut rng)?;
        for i in 0..out.nets.len() {
            out.nets[i] = bundle.take_net(&format!("position_{i}"), &out.nets[i].architecture())?;
            out.opts[i] = bundle.take_optim(&format!("position_opt_{i}"), &out.nets[i])?;
        }
        out.env_steps = meta.env_steps;
        out.updates = meta.updates;
        Ok(out)
    }

    /// Predicted reward of every candidate at position i.
    pub fn predictions(&self, i: usize, local: &[f64]) -> Result<Vec<f64>> {
        Ok(self.nets[i].forward(&to_real::<T>(local))?.iter().map(|&v| v.to_f64()).collect())
    }

    /// Mean squared error of every position's prediction for its logged action.
    pub fn regression_error(&self, batch: &[&Transition]) -> Result<f64> {
        let mut total = 0.0;
        for t in batch {
            for i in 0..self.nets.len() {
                let p = self.predictions(i, &t.observation.locals[i])?[t.action.0[i]];
                total += (p - position_reward(t, i)).powi(2);
            }
        }
        Ok(total / (batch.len() * self.nets.len()) as f64)
    }
}

impl<T: Real> Agent for PositionBandit<T> {
    fn kind(&self) -> AgentKind {
        AgentKind::PositionBandit
    }

    fn action_sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn action_probabilities(&self, obs: &JointObservation) -> Result<Vec<Vec<f64>>> {
        check_len("local observations", self.nets.len(), obs.locals.len())?;
        (0..self.nets.len())
            .map(|i| Ok(softmax(&self.predictions(i, &obs.locals[i])?)))
            .collect()
    }

    /// Each position explores independently with the fixed rate.
    fn act(&self, obs: &JointObservation, explore: bool, rng: &mut ChaCha8Rng) -> Result<ActionChoice> {
        check_len("local observations", self.nets.len(), obs.locals.len())?;
        let eps = if explore { self.config.bandit_epsilon } else { 0.0 };
        let mut action = Vec::with_capacity(self.nets.len());
        let mut propensities = Vec::with_capacity(self.nets.len());
        for i in 0..self.nets.len() {
            let greedy = argmax(&self.predictions(i, &obs.locals[i])?);
            let n = self.sizes[i];
            let a = if explore && rng.random::<f64>() < eps {
                rng.random_range(0..n)
            } else {
                greedy
            };
            action.push(a);
            propensities.push(epsilon_greedy_propensity(eps, n, a, greedy));
        }
        Ok(ActionChoice {
            action: JointAction(action),
            propensities,
        })
    }

    fn update(&mut self, batch: &[&Transition], _rng: &mut ChaCha8Rng) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        validate_actions(batch, &self.sizes)?;
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for i in 0..self.nets.len() {
            let x = local_matrix::<T>(batch, i, self.local_widths[i], false)?;
            let trace = self.nets[i].forward_trace(x)?;
            let out = trace.output();
            let mut g = Array2::<T>::zeros(out.dim());
            for (b, t) in batch.iter().enumerate() {
                let a = t.action.0[i];
                let err = out[[b, a]].to_f64() - position_reward(t, i);
                total += err * err * scale;
                g[[b, a]] = T::from_f64(2.0 * err * scale);
            }
            let (grads, _) = self.nets[i].backward_batch(&trace, g.view())?;
            self.opts[i].step(&mut self.nets[i], &grads)?;
        }
        self.updates += 1;
        Ok(total / self.nets.len() as f64)
    }

    fn target_sync(&mut self) -> Result<()> {
        Ok(())
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn record_env_steps(&mut self, steps: u64) {
        self.env_steps += steps;
    }

    fn param_digest(&self) -> String {
        digest_params(&self.nets.iter().collect::<Vec<_>>())
    }

    fn save(&self, path: &std::path::Path, extra: serde_json::Value) -> Result<()> {
        let mut meta = bandit_meta(AgentKind::PositionBandit, &self.config, &self.env, self.env_steps, self.updates);
        meta.extra = extra;
        save_bundle(path, &meta, |b: &mut Bundle<T>| {
            for (i, (n, o)) in self.nets.iter().zip(&self.opts).enumerate() {
                b.push_net(format!("position_{i}"), n);
                b.push_optim(format!("position_opt_{i}"), o);
            }
        })
    }
}

/// Shared trunk over the joint observation with one head per position; the
/// page reward is predicted as the sum of the chosen heads' outputs.
#[derive(Debug, Clone)]
pub struct PageBandit<T: Real> {
    config: AgentConfig,
    env: EnvSpec,
    sizes: Vec<usize>,
    joint_width: usize,
    trunk: DenseNet<T>,
    heads: Vec<DenseNet<T>>,
    trunk_opt: OptimState<T>,
    head_opts: Vec<OptimState<T>>,
    env_steps: u64,
    updates: u64,
}

impl<T: Real> PageBandit<T> {
    pub fn new<R: Rng + ?Sized>(spec: &EnvSpec, config: &AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let width = *config
            .hidden
            .last()
            .ok_or_else(|| Error::InvalidArgument("page bandit needs at least one hidden layer".into()))?;
        let sizes = spec.action_sizes();
        let joint_width = spec.joint_width();
        let mut dims = vec![joint_width];
        dims.extend(&config.hidden);
        let trunk = DenseNet::new(&Architecture::mlp(&dims, Activation::Relu)?, rng)?;
        let heads: Vec<DenseNet<T>> = sizes
            .iter()
            .map(|&n| DenseNet::new(&Architecture::mlp(&[width, n], Activation::Identity)?, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            trunk_opt: OptimState::new(&trunk, config.critic_adam()),
            head_opts: heads.iter().map(|h| OptimState::new(h, config.critic_adam())).collect(),
            trunk,
            heads,
            config: config.clone(),
            env: spec.clone(),
            sizes,
            joint_width,
            env_steps: 0,
            updates: 0,
        })
    }

    pub(crate) fn from_bundle(meta: &AgentMeta, bundle: &mut Bundle<T>) -> Result<Self> {
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut out = Self::new(&meta.env, &meta.config, &mut rng)?;
        out.trunk = bundle.take_net("trunk", &out.trunk.architecture())?;
        out.trunk_opt = bundle.take_optim("trunk_opt", &out.trunk)?;
        for k in 0..out.heads.len() {
            out.heads[k] = bundle.take_net(&format!("head_{k}"), &out.heads[k].architecture())?;
            out.head_opts[k] = bundle.take_optim(&format!("head_opt_{k}"), &out.heads[k])?;
        }
        out.env_steps = meta.env_steps;
        out.updates = meta.updates;
        Ok(out)
    }

    /// Per-head predicted contributions.
    pub fn predictions(&self, obs: &JointObservation) -> Result<Vec<Vec<f64>>> {
        let h = Array1::from(self.trunk.forward(&to_real::<T>(&obs.flatten()))?);
        Ok(self
            .heads
            .iter()
            .map(|head| {
                let l = &head.layers()[0];
                (l.weights.dot(&h) + &l.bias).iter().map(|&v| v.to_f64()).collect()
            })
            .collect())
    }

    pub fn predict_reward(&self, obs: &JointObservation, action: &JointAction) -> Result<f64> {
        action.validate(&self.sizes)?;
        Ok(self.predictions(obs)?.iter().zip(&action.0).map(|(p, &a)| p[a]).sum())
    }

    pub fn regression_error(&self, batch: &[&Transition]) -> Result<f64> {
        let mut total = 0.0;
        for t in batch {
            total += (self.predict_reward(&t.observation, &t.action)? - t.reward).powi(2);
        }
        Ok(total / batch.len() as f64)
    }

    pub fn greedy(&self, obs: &JointObservation) -> Result<JointAction> {
        Ok(JointAction(self.predictions(obs)?.iter().map(|p| argmax(p)).collect()))
    }
}

impl<T: Real> Agent for PageBandit<T> {
    fn kind(&self) -> AgentKind {
        AgentKind::PageBandit
    }

    fn action_sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn action_probabilities(&self, obs: &JointObservation) -> Result<Vec<Vec<f64>>> {
        Ok(self.predictions(obs)?.iter().map(|p| softmax(p)).collect())
    }

    /// Whole-page exploration: with the fixed rate every position is redrawn uniformly.
    fn act(&self, obs: &JointObservation, explore: bool, rng: &mut ChaCha8Rng) -> Result<ActionChoice> {
        let greedy = self.greedy(obs)?;
        let eps = if explore { self.config.bandit_epsilon } else { 0.0 };
        let action: Vec<usize> = if explore && rng.random::<f64>() < eps {
            self.sizes.iter().map(|&n| rng.random_range(0..n)).collect()
        } else {
            greedy.0.clone()
        };
        let propensities = action
            .iter()
            .zip(&greedy.0)
            .zip(&self.sizes)
            .map(|((&a, &g), &n)| epsilon_greedy_propensity(eps, n, a, g))
            .collect();
        Ok(ActionChoice {
            action: JointAction(action),
            propensities,
        })
    }

    fn update(&mut self, batch: &[&Transition], _rng: &mut ChaCha8Rng) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        validate_actions(batch, &self.sizes)?;
        let x = joint_matrix::<T>(batch, self.joint_width, false)?;
        let trace = self.trunk.forward_trace(x)?;
        let h = trace.output();
        let outputs: Vec<Array2<T>> = self
            .heads
            .iter()
            .map(|head| {
                let l = &head.layers()[0];
                h.dot(&l.weights.t()) + &l.bias
            })
            .collect();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut residual = vec![0.0; batch.len()];
        for (b, t) in batch.iter().enumerate() {
            let pred: f64 = outputs.iter().zip(&t.action.0).map(|(o, &a)| o[[b, a]].to_f64()).sum();
            let err = pred - t.reward;
            loss += err * err * scale;
            residual[b] = 2.0 * err * scale;
        }
        let mut dh = Array2::<T>::zeros(h.dim());
        let mut head_grads = Vec::with_capacity(self.heads.len());
        for (k, head) in self.heads.iter().enumerate() {
            let mut g = Array2::<T>::zeros(outputs[k].dim());
            for (b, t) in batch.iter().enumerate() {
                g[[b, t.action.0[k]]] = T::from_f64(residual[b]);
            }
            let l = &head.layers()[0];
            dh = dh + g.dot(&l.weights);
            head_grads.push(Gradients {
                layers: vec![LayerGradient {
                    weights: g.t().dot(h),
                    bias: g.sum_axis(Axis(0)),
                }],
            });
        }
        let (trunk_grads, _) = self.trunk.backward_batch(&trace, dh.view())?;
        self.trunk_opt.step(&mut self.trunk, &trunk_grads)?;
        for ((opt, head), g) in self.head_opts.iter_mut().zip(&mut self.heads).zip(&head_grads) {
            opt.step(head, g)?;
        }
        self.updates += 1;
        Ok(loss)
    }

    fn target_sync(&mut self) -> Result<()> {
        Ok(())
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn record_env_steps(&mut self, steps: u64) {
        self.env_steps += steps;
    }

    fn param_digest(&self) -> String {
        let nets: Vec<&DenseNet<T>> = std::iter::once(&self.trunk).chain(&self.heads).collect();
        digest_params(&nets)
    }

    fn save(&self, path: &std::path::Path, extra: serde_json::Value) -> Result<()> {
        let mut meta = bandit_meta(AgentKind::PageBandit, &self.config, &self.env, self.env_steps, self.updates);
        meta.extra = extra;
        save_bundle(path, &meta, |b: &mut Bundle<T>| {
            b.push_net("trunk", &self.trunk);
            b.push_optim("trunk_opt", &self.trunk_opt);
            for (k, (h, o)) in self.heads.iter().zip(&self.head_opts).enumerate() {
                b.push_net(format!("head_{k}"), h);
                b.push_optim(format!("head_opt_{k}"), o);
            }
        })
    }
}

/// Uniform over every catalog.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    env: EnvSpec,
    sizes: Vec<usize>,
    env_steps: u64,
}

impl RandomAgent {
    pub fn new(spec: &EnvSpec) -> Self {
        Self {
            env: spec.clone(),
            sizes: spec.action_sizes(),
            env_steps: 0,
        }
    }
}

impl Agent for RandomAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Random
    }

    fn action_sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn action_probabilities(&self, _obs: &JointObservation) -> Result<Vec<Vec<f64>>> {
        Ok(self.sizes.iter().map(|&n| vec![1.0 / n as f64; n]).collect())
    }

    fn act(&self, _obs: &JointObservation, _explore: bool, rng: &mut ChaCha8Rng) -> Result<ActionChoice> {
        let action: Vec<usize> = self.sizes.iter().map(|&n| rng.random_range(0..n)).collect();
        Ok(ActionChoice {
            propensities: self.sizes.iter().map(|&n| 1.0 / n as f64).collect(),
            action: JointAction(action),
        })
    }

    fn update(&mut self, _batch: &[&Transition], _rng: &mut ChaCha8Rng) -> Result<f64> {
        Ok(0.0)
    }

    fn target_sync(&mut self) -> Result<()> {
        Ok(())
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn record_env_steps(&mut self, steps: u64) {
        self.env_steps += steps;
    }

    fn param_digest(&self) -> String {
        String::from("0000000000000000")
    }

    fn save(&self, path: &std::path::Path, extra: serde_json::Value) -> Result<()> {
        let mut meta = bandit_meta(
            AgentKind::Random,
            &AgentConfig::with_kind(AgentKind::Random),
            &self.env,
            self.env_steps,
            0,
        );
        meta.extra = extra;
        save_bundle(path, &meta, |_: &mut Bundle<f32>| {})
    }
}

/// Fixed ranking heuristic: per-position softmax of the log-odds of each
/// item's segment-averaged click prior, divided by a temperature.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    env: EnvSpec,
    temperature: f64,
    sizes: Vec<usize>,
    probabilities: Vec<Vec<f64>>,
    env_steps: u64,
}

impl ScriptedAgent {
    pub fn click_prior(spec: &EnvSpec, temperature: f64) -> Result<Self> {
        if spec.kind != EnvKind::CroSim {
            return Err(Error::InvalidArgument(
                "the scripted ranker needs a cro_sim environment".into(),
            ));
        }
        let sim = CroSim::new(spec.clone())?;
        let sizes = spec.action_sizes();
        let probabilities = sizes
            .iter()
            .enumerate()
            .map(|(p, &n)| {
                let scores: Vec<f64> = (0..n)
                    .map(|c| {
                        let prior = sim.click_prior(p, c);
                        (prior / (1.0 - prior)).ln() / temperature
                    })
                    .collect();
                softmax(&scores)
            })
            .collect();
        Ok(Self {
            env: spec.clone(),
            temperature,
            sizes,
            probabilities,
            env_steps: 0,
        })
    }
}

impl Agent for ScriptedAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Scripted
    }

    fn action_sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn action_probabilities(&self, _obs: &JointObservation) -> Result<Vec<Vec<f64>>> {
        Ok(self.probabilities.clone())
    }

    /// Samples from the ranking distribution when exploring, otherwise takes its mode.
    fn act(&self, _obs: &JointObservation, explore: bool, rng: &mut ChaCha8Rng) -> Result<ActionChoice> {
        let mut action = Vec::with_capacity(self.sizes.len());
        let mut propensities = Vec::with_capacity(self.sizes.len());
        for probs in &self.probabilities {
            let a = if explore {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                probs
                    .iter()
                    .position(|&p| {
                        acc += p;
                        u < acc
                    })
                    .unwrap_or(probs.len() - 1)
            } else {
                argmax(probs)
            };
            action.push(a);
            propensities.push(if explore { probs[a] } else { 1.0 });
        }
        Ok(ActionChoice {
            action: JointAction(action),
            propensities,
        })
    }

    fn update(&mut self, _batch: &[&Transition], _rng: &mut ChaCha8Rng) -> Result<f64> {
        Ok(0.0)
    }

    fn target_sync(&mut self) -> Result<()> {
        Ok(())
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn record_env_steps(&mut self, steps: u64) {
        self.env_steps += steps;
    }

    fn param_digest(&self) -> String {
        String::from("0000000000000000")
    }

    fn save(&self, path: &std::path::Path, extra: serde_json::Value) -> Result<()> {
        let config = AgentConfig {
            temperature: self.temperature,
            ..AgentConfig::with_kind(AgentKind::Scripted)
        };
        let mut meta = bandit_meta(AgentKind::Scripted, &config, &self.env, self.env_steps, 0);
        meta.extra = extra;
        save_bundle(path, &meta, |_: &mut Bundle<f32>| {})
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{CoopControlParams, CroSimParams};
    use rand::SeedableRng;

    fn constant_batch(spec: &EnvSpec, rng: &mut ChaCha8Rng, n: usize) -> Vec<Transition> {
        let mut env = spec.build().unwrap();
        let random = RandomAgent::new(spec);
        let mut out = Vec::new();
        let mut obs = env.reset(0);
        for _ in 0..n {
            let choice = random.act(&obs, true, rng).unwrap();
            let step = env.step(&choice.action).unwrap();
            out.push(Transition {
                observation: obs.clone(),
                action: choice.action,
                reward: 1.0,
                next_observation: step.observation.clone(),
                terminal: step.terminal,
                propensities: choice.propensities,
                episode: 0,
                step: 0,
                policy: "random".into(),
                agent_rewards: Vec::new(),
            });
            obs = if step.terminal { env.reset(0) } else { step.observation };
        }
        out
    }

    #[test]
    fn constant_reward_is_learned() {
        let spec = EnvSpec::coop_control(CoopControlParams {
            agents: 2,
            action_size: 3,
            horizon: 10,
            ..CoopControlParams::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = constant_batch(&spec, &mut rng, 200);
        let config = AgentConfig {
            hidden: vec![64],
            ..AgentConfig::with_kind(AgentKind::PositionBandit)
        };
        let mut pos = PositionBandit::<f32>::new(&spec, &config, &mut rng).unwrap();
        let mut page = PageBandit::<f32>::new(&spec, &config, &mut rng).unwrap();
        for _ in 0..2000 {
            let batch: Vec<&Transition> = (0..128).map(|_| &data[rng.random_range(0..data.len())]).collect();
            pos.update(&batch, &mut rng).unwrap();
            page.update(&batch, &mut rng).unwrap();
        }
        for t in data.iter().take(20) {
            for i in 0..2 {
                let p = pos.predictions(i, &t.observation.locals[i]).unwrap()[t.action.0[i]];
                assert!((p - 1.0).abs() < 0.01, "position prediction {p}");
            }
            let r = page.predict_reward(&t.observation, &t.action).unwrap();
            assert!((r - 1.0).abs() < 0.01, "page prediction {r}");
        }
    }

    #[test]
    fn position_bandit_ignores_other_positions() {
        let spec = EnvSpec::cro_sim(CroSimParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let agent = PositionBandit::<f32>::new(&spec, &AgentConfig::default(), &mut rng).unwrap();
        let obs = spec.build().unwrap().reset(3);
        let mut other = obs.clone();
        other.locals[1].iter_mut().for_each(|v| *v += 1.0);
        other.locals[2].iter_mut().for_each(|v| *v -= 1.0);
        assert_eq!(
            agent.action_probabilities(&obs).unwrap()[0],
            agent.action_probabilities(&other).unwrap()[0]
        );
    }

    #[test]
    fn random_and_scripted_probabilities() {
        let spec = EnvSpec::cro_sim(CroSimParams::default());
        let obs = spec.build().unwrap().reset(0);
        let random = RandomAgent::new(&spec);
        let probs = random.action_probabilities(&obs).unwrap();
        assert_eq!(probs[1], vec![1.0 / 12.0; 12]);
        let action = JointAction(vec![0, 0, 0]);
        assert!((random.joint_propensity(&obs, &action).unwrap() - 1.0 / (8.0 * 12.0 * 6.0)).abs() < 1e-15);
        let scripted = ScriptedAgent::click_prior(&spec, 1.0).unwrap();
        for p in scripted.action_probabilities(&obs).unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(ScriptedAgent::click_prior(&EnvSpec::default(), 1.0).is_err());
    }
}
