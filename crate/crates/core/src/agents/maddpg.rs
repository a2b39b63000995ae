//! MADDPG with discrete actions: decentralized actors over local observations,
//! one centralized critic per agent over the joint observation and all actions.
//!
//! Actions enter a critic as concatenated one-hot vectors. During the actor
//! update agent i's own block is replaced by a relaxed Gumbel-Softmax sample,
//! which makes the critic value differentiable in the actor's logits.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::batch::{continuation, joint_matrix, local_matrix, rewards, to_real, validate_actions};
use super::{digest_params, save_bundle, ActionChoice, Agent, AgentConfig, AgentKind, AgentMeta};
use crate::envs::{EnvSpec, JointAction, JointObservation};
use crate::error::{Error, Result};
use crate::numerics::{
    argmax, gumbel_noise, softmax, soft_update, Activation, Architecture, Bundle, DenseNet, Gradients, OptimState,
    Real,
};
use crate::replay::Transition;

#[derive(Debug, Clone)]
pub struct MaddpgAgent<T: Real> {
    pub actor: DenseNet<T>,
    pub critic: DenseNet<T>,
    pub target_actor: DenseNet<T>,
    pub target_critic: DenseNet<T>,
    pub actor_opt: OptimState<T>,
    pub critic_opt: OptimState<T>,
}

#[derive(Debug, Clone)]
pub struct Maddpg<T: Real> {
    config: AgentConfig,
    env: EnvSpec,
    gamma: f64,
    sizes: Vec<usize>,
    local_widths: Vec<usize>,
    joint_width: usize,
    agents: Vec<MaddpgAgent<T>>,
    /// Whether each action has appeared in a training batch.
    seen: Vec<Vec<bool>>,
    env_steps: u64,
    updates: u64,
}

fn actor_arch(config: &AgentConfig, input: usize, output: usize) -> Result<Architecture> {
    let mut dims = vec![input];
    dims.extend(&config.hidden);
    dims.push(output);
    Architecture::mlp(&dims, Activation::Identity)
}

impl<T: Real> Maddpg<T> {
    pub fn new<R: Rng + ?Sized>(spec: &EnvSpec, config: &AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let sizes = spec.action_sizes();
        let local_widths = spec.local_widths();
        let joint_width = spec.joint_width();
        let critic_width = joint_width + sizes.iter().sum::<usize>();
        let mut agents = Vec::with_capacity(sizes.len());
        for (&n, &w) in sizes.iter().zip(&local_widths) {
            let actor = DenseNet::new(&actor_arch(config, w, n)?, rng)?;
            let critic = DenseNet::new(&actor_arch(config, critic_width, 1)?, rng)?;
            agents.push(MaddpgAgent {
                actor_opt: OptimState::new(&actor, config.actor_adam()),
                critic_opt: OptimState::new(&critic, config.critic_adam()),
                target_actor: actor.clone(),
                target_critic: critic.clone(),
                actor,
                critic,
            });
        }
        Ok(Self {
            config: config.clone(),
            env: spec.clone(),
            gamma: config.discount(spec),
            seen: sizes.iter().map(|&n| vec![false; n]).collect(),
            sizes,
            local_widths,
            joint_width,
            agents,
            env_steps: 0,
            updates: 0,
        })
    }

    pub(crate) fn from_bundle(meta: &AgentMeta, bundle: &mut Bundle<T>) -> Result<Self> {
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut out = Self::new(&meta.env, &meta.config, &mut rng)?;
        for (i, a) in out.agents.iter_mut().enumerate() {
            a.actor = bundle.take_net(&format!("actor_{i}"), &a.actor.architecture())?;
            a.critic = bundle.take_net(&format!("critic_{i}"), &a.critic.architecture())?;
            a.target_actor = bundle.take_net(&format!("target_actor_{i}"), &a.actor.architecture())?;
            a.target_critic = bundle.take_net(&format!("target_critic_{i}"), &a.critic.architecture())?;
            a.actor_opt = bundle.take_optim(&format!("actor_opt_{i}"), &a.actor)?;
            a.critic_opt = bundle.take_optim(&format!("critic_opt_{i}"), &a.critic)?;
        }
        if let Some(seen) = meta.state.get("seen") {
            let seen: Vec<Vec<bool>> = serde_json::from_value(seen.clone())?;
            if seen.len() != out.seen.len() || seen.iter().zip(&out.sizes).any(|(s, &n)| s.len() != n) {
                return Err(Error::Checkpoint("seen-action table does not match action sizes".into()));
            }
            out.seen = seen;
        }
        out.env_steps = meta.env_steps;
        out.updates = meta.updates;
        Ok(out)
    }

    pub fn agents(&self) -> &[MaddpgAgent<T>] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [MaddpgAgent<T>] {
        &mut self.agents
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Marks every action as trained on, which disables the new-content floor.
    pub fn mark_all_seen(&mut self) {
        for s in &mut self.seen {
            s.fill(true);
        }
    }

    fn check_agent(&self, i: usize) -> Result<()> {
        if i >= self.agents.len() {
            return Err(Error::InvalidArgument(format!(
                "agent {i} out of range for {} agents",
                self.agents.len()
            )));
        }
        Ok(())
    }

    /// Actor logits from agent i's local observation only.
    pub fn agent_logits(&self, i: usize, local: &[f64]) -> Result<Vec<f64>> {
        self.check_agent(i)?;
        let out = self.agents[i].actor.forward(&to_real::<T>(local))?;
        Ok(out.iter().map(|&v| v.to_f64()).collect())
    }

    /// softmax(logits), with the new-content floor mixed in for untrained actions.
    pub fn agent_probabilities(&self, i: usize, local: &[f64]) -> Result<Vec<f64>> {
        let logits = self.agent_logits(i, local)?;
        Ok(apply_floor(softmax(&logits), &self.seen[i], self.config.new_content_floor))
    }

    /// Decentralized action selection for one agent: returns (index, probability).
    pub fn act_agent<R: Rng + ?Sized>(&self, i: usize, local: &[f64], explore: bool, rng: &mut R) -> Result<(usize, f64)> {
        let logits = self.agent_logits(i, local)?;
        let probs = apply_floor(softmax(&logits), &self.seen[i], self.config.new_content_floor);
        let index = if explore {
            let unseen: Vec<usize> = (0..probs.len()).filter(|&a| !self.seen[i][a]).collect();
            let floor = effective_floor(self.config.new_content_floor, probs.len());
            let draw: f64 = rng.random();
            if !unseen.is_empty() && draw < floor * unseen.len() as f64 {
                unseen[((draw / floor) as usize).min(unseen.len() - 1)]
            } else {
                let perturbed: Vec<f64> = logits.iter().map(|&l| l + gumbel_noise(rng)).collect();
                argmax(&perturbed)
            }
        } else {
            argmax(&logits)
        };
        Ok((index, probs[index]))
    }

    fn one_hots(&self, batch: &[&Transition], agent: usize) -> Array2<T> {
        let n = self.sizes[agent];
        let mut m = Array2::zeros((batch.len(), n));
        for (b, t) in batch.iter().enumerate() {
            m[[b, t.action.0[agent]]] = T::one();
        }
        m
    }

    fn critic_input(&self, joint: ArrayView2<T>, actions: &[Array2<T>]) -> Array2<T> {
        let mut views = vec![joint];
        views.extend(actions.iter().map(|a| a.view()));
        concatenate(Axis(1), &views).expect("batch rows agree")
    }

    fn action_offset(&self, agent: usize) -> usize {
        self.joint_width + self.sizes[..agent].iter().sum::<usize>()
    }

    /// Greedy one-hot actions of every target actor on the next observations.
    pub fn target_actions(&self, batch: &[&Transition]) -> Result<Vec<Array2<T>>> {
        (0..self.agents.len())
            .map(|j| {
                let obs = local_matrix::<T>(batch, j, self.local_widths[j], true)?;
                let logits = self.agents[j].target_actor.forward_batch(obs.view())?;
                let mut hot = Array2::zeros(logits.dim());
                for (b, row) in logits.rows().into_iter().enumerate() {
                    let row: Vec<f64> = row.iter().map(|&v| v.to_f64()).collect();
                    hot[[b, argmax(&row)]] = T::one();
                }
                Ok(hot)
            })
            .collect()
    }

    /// y_i = r + γ·Q′_i(x′, μ′(o′)), with the bootstrap dropped at terminal steps.
    pub fn critic_targets(&self, batch: &[&Transition]) -> Result<Vec<Vec<f64>>> {
        validate_actions(batch, &self.sizes)?;
        let next_joint = joint_matrix::<T>(batch, self.joint_width, true)?;
        let next_actions = self.target_actions(batch)?;
        let x_next = self.critic_input(next_joint.view(), &next_actions);
        let r = rewards(batch);
        let cont = continuation(batch);
        self.agents
            .iter()
            .map(|a| {
                let q = a.target_critic.forward_batch(x_next.view())?;
                Ok((0..batch.len())
                    .map(|b| r[b] + self.gamma * cont[b] * q[[b, 0]].to_f64())
                    .collect())
            })
            .collect()
    }

    /// Mean squared TD error of critic i against fixed targets, and its gradient.
    pub fn critic_loss_and_gradient(
        &self,
        i: usize,
        batch: &[&Transition],
        targets: &[f64],
    ) -> Result<(f64, Gradients<T>)> {
        self.check_agent(i)?;
        validate_actions(batch, &self.sizes)?;
        crate::error::check_len("critic targets", batch.len(), targets.len())?;
        let joint = joint_matrix::<T>(batch, self.joint_width, false)?;
        let actions: Vec<Array2<T>> = (0..self.agents.len()).map(|j| self.one_hots(batch, j)).collect();
        let x = self.critic_input(joint.view(), &actions);
        let critic = &self.agents[i].critic;
        let trace = critic.forward_trace(x)?;
        let q = trace.output();
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut grad = Array2::zeros((batch.len(), 1));
        for b in 0..batch.len() {
            let err = q[[b, 0]].to_f64() - targets[b];
            loss += err * err * scale;
            grad[[b, 0]] = T::from_f64(2.0 * err * scale);
        }
        let (grads, _) = critic.backward_batch(&trace, grad.view())?;
        Ok((loss, grads))
    }

    /// Actor loss −mean_b Q_i(x_b, a_1..y_i..a_N) where y_i is the relaxed
    /// sample softmax((μ_i(o_i) + g)/τ) for the given Gumbel noise, and its
    /// gradient with respect to actor i's parameters.
    pub fn actor_loss_and_gradient(
        &self,
        i: usize,
        batch: &[&Transition],
        noise: ArrayView2<f64>,
    ) -> Result<(f64, Gradients<T>)> {
        self.check_agent(i)?;
        validate_actions(batch, &self.sizes)?;
        let n = self.sizes[i];
        if noise.dim() != (batch.len(), n) {
            return Err(Error::Shape {
                context: "gumbel noise",
                expected: batch.len() * n,
                actual: noise.len(),
            });
        }
        let tau = self.config.temperature;
        let agent = &self.agents[i];
        let obs = local_matrix::<T>(batch, i, self.local_widths[i], false)?;
        let actor_trace = agent.actor.forward_trace(obs)?;
        let logits = actor_trace.output();
        let mut relaxed = Array2::<f64>::zeros((batch.len(), n));
        for b in 0..batch.len() {
            let z: Vec<f64> = (0..n).map(|k| (logits[[b, k]].to_f64() + noise[[b, k]]) / tau).collect();
            for (k, p) in softmax(&z).into_iter().enumerate() {
                relaxed[[b, k]] = p;
            }
        }
        let joint = joint_matrix::<T>(batch, self.joint_width, false)?;
        let actions: Vec<Array2<T>> = (0..self.agents.len())
            .map(|j| {
                if j == i {
                    relaxed.mapv(T::from_f64)
                } else {
                    self.one_hots(batch, j)
                }
            })
            .collect();
        let x = self.critic_input(joint.view(), &actions);
        let critic_trace = agent.critic.forward_trace(x)?;
        let scale = 1.0 / batch.len() as f64;
        let penalty = self.config.logit_penalty / (batch.len() * n) as f64;
        let loss = -critic_trace.output().iter().map(|&q| q.to_f64()).sum::<f64>() * scale
            + penalty * logits.iter().map(|&l| l.to_f64() * l.to_f64()).sum::<f64>();
        let dq = Array2::from_elem((batch.len(), 1), T::from_f64(-scale));
        let (_, dx) = agent.critic.backward_batch(&critic_trace, dq.view())?;
        let offset = self.action_offset(i);
        let dy = dx.slice(s![.., offset..offset + n]);
        let mut dlogits = Array2::<T>::zeros((batch.len(), n));
        for b in 0..batch.len() {
            let dot: f64 = (0..n).map(|k| relaxed[[b, k]] * dy[[b, k]].to_f64()).sum();
            for k in 0..n {
                let y = relaxed[[b, k]];
                let reg = 2.0 * penalty * logits[[b, k]].to_f64();
                dlogits[[b, k]] = T::from_f64(y * (dy[[b, k]].to_f64() - dot) / tau + reg);
            }
        }
        let (grads, _) = agent.actor.backward_batch(&actor_trace, dlogits.view())?;
        Ok((loss, grads))
    }

    fn sample_noise(&self, i: usize, rows: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, self.sizes[i]), || gumbel_noise(rng))
    }

    fn meta(&self) -> AgentMeta {
        AgentMeta {
            kind: AgentKind::Maddpg,
            config: self.config.clone(),
            env: self.env.clone(),
            env_spec_hash: self.env.spec_hash(),
            env_steps: self.env_steps,
            updates: self.updates,
            state: serde_json::json!({ "seen": self.seen }),
            extra: serde_json::Value::Null,
        }
    }
}

fn effective_floor(floor: f64, n: usize) -> f64 {
    floor.min(1.0 / n as f64)
}

/// p′ = (1 − k·f)·p + f on each of the k untrained actions.
pub(crate) fn apply_floor(mut probs: Vec<f64>, seen: &[bool], floor: f64) -> Vec<f64> {
    let floor = effective_floor(floor, probs.len());
    let unseen = seen.iter().filter(|&&s| !s).count();
    if unseen == 0 || floor == 0.0 {
        return probs;
    }
    let keep = 1.0 - unseen as f64 * floor;
    for (p, &s) in probs.iter_mut().zip(seen) {
        *p = keep * *p + if s { 0.0 } else { floor };
    }
    probs
}

impl<T: Real> Agent for Maddpg<T> {
    fn kind(&self) -> AgentKind {
        AgentKind::Maddpg
    }

    fn action_sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn action_probabilities(&self, obs: &JointObservation) -> Result<Vec<Vec<f64>>> {
        crate::error::check_len("local observations", self.agents.len(), obs.locals.len())?;
        (0..self.agents.len())
            .map(|i| self.agent_probabilities(i, &obs.locals[i]))
            .collect()
    }

    fn act(&self, obs: &JointObservation, explore: bool, rng: &mut ChaCha8Rng) -> Result<ActionChoice> {
        crate::error::check_len("local observations", self.agents.len(), obs.locals.len())?;
        let mut action = Vec::with_capacity(self.agents.len());
        let mut propensities = Vec::with_capacity(self.agents.len());
        for i in 0..self.agents.len() {
            let (a, p) = self.act_agent(i, &obs.locals[i], explore, rng)?;
            action.push(a);
            propensities.push(p);
        }
        Ok(ActionChoice {
            action: JointAction(action),
            propensities,
        })
    }

    fn update(&mut self, batch: &[&Transition], rng: &mut ChaCha8Rng) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        let targets = self.critic_targets(batch)?;
        let mut total = 0.0;
        for i in 0..self.agents.len() {
            let (loss, grads) = self.critic_loss_and_gradient(i, batch, &targets[i])?;
            let a = &mut self.agents[i];
            a.critic_opt.step(&mut a.critic, &grads)?;
            total += loss;
            let noise = self.sample_noise(i, batch.len(), rng);
            let (_, grads) = self.actor_loss_and_gradient(i, batch, noise.view())?;
            let a = &mut self.agents[i];
            a.actor_opt.step(&mut a.actor, &grads)?;
        }
        for t in batch {
            for (i, &a) in t.action.0.iter().enumerate() {
                self.seen[i][a] = true;
            }
        }
        self.updates += 1;
        Ok(total / self.agents.len() as f64)
    }

    fn target_sync(&mut self) -> Result<()> {
        let tau = self.config.tau;
        for a in &mut self.agents {
            soft_update(&mut a.target_actor, &a.actor, tau)?;
            soft_update(&mut a.target_critic, &a.critic, tau)?;
        }
        Ok(())
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn record_env_steps(&mut self, steps: u64) {
        self.env_steps += steps;
    }

    fn param_digest(&self) -> String {
        let nets: Vec<&DenseNet<T>> = self.agents.iter().flat_map(|a| [&a.actor, &a.critic]).collect();
        digest_params(&nets)
    }

    fn save(&self, path: &std::path::Path, extra: serde_json::Value) -> Result<()> {
        let mut meta = self.meta();
        meta.extra = extra;
        save_bundle(path, &meta, |b: &mut Bundle<T>| {
            for (i, a) in self.agents.iter().enumerate() {
                b.push_net(format!("actor_{i}"), &a.actor);
                b.push_net(format!("critic_{i}"), &a.critic);
                b.push_net(format!("target_actor_{i}"), &a.target_actor);
                b.push_net(format!("target_critic_{i}"), &a.target_critic);
                b.push_optim(format!("actor_opt_{i}"), &a.actor_opt);
                b.push_optim(format!("critic_opt_{i}"), &a.critic_opt);
            }
        })
    }
}
