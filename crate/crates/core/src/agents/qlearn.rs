//! Q-learning baselines over a shared ReLU trunk with linear heads.
//!
//! The flat learner has a single head enumerating every joint action (mixed
//! radix, first agent most significant); the branching learner has one head
//! per action dimension. Both optionally add the conservative penalty
//! c·(logsumexp Q − Q(a_logged)).

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use num_bigint::BigUint;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::batch::{conservative_term, continuation, joint_matrix, rewards, to_real, validate_actions};
use super::{
    digest_params, epsilon_greedy_propensity, save_bundle, ActionChoice, Agent, AgentConfig, AgentKind, AgentMeta,
};
use crate::envs::{EnvSpec, JointAction, JointObservation};
use crate::error::{check_len, Error, Result};
use crate::numerics::{
    argmax, softmax, soft_update, Activation, Architecture, Bundle, DenseNet, Gradients, LayerGradient, OptimState,
    Real,
};
use crate::replay::Transition;

/// Upper bound on elements materialized per chunk of a wide head.
const CHUNK_ELEMENTS: usize = 1 << 22;

#[derive(Debug, Clone)]
struct QNet<T: Real> {
    trunk: DenseNet<T>,
    heads: Vec<DenseNet<T>>,
}

impl<T: Real> QNet<T> {
    fn new<R: Rng + ?Sized>(input: usize, config: &AgentConfig, head_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let hidden = trunk_width(config)?;
        let mut dims = vec![input];
        dims.extend(&config.hidden);
        let trunk = DenseNet::new(&Architecture::mlp(&dims, Activation::Relu)?, rng)?;
        let heads = head_sizes
            .iter()
            .map(|&n| DenseNet::new(&Architecture::mlp(&[hidden, n], Activation::Identity)?, rng))
            .collect::<Result<_>>()?;
        Ok(Self { trunk, heads })
    }

    fn nets(&self) -> Vec<&DenseNet<T>> {
        std::iter::once(&self.trunk).chain(&self.heads).collect()
    }

    fn features(&self, obs: &JointObservation) -> Result<Array1<T>> {
        Ok(Array1::from(self.trunk.forward(&to_real::<T>(&obs.flatten()))?))
    }

    fn head_values(&self, head: usize, features: &Array1<T>) -> Vec<f64> {
        let layer = &self.heads[head].layers()[0];
        (layer.weights.dot(features) + &layer.bias).iter().map(|&v| v.to_f64()).collect()
    }
}

fn trunk_width(config: &AgentConfig) -> Result<usize> {
    config
        .hidden
        .last()
        .copied()
        .ok_or_else(|| Error::InvalidArgument("Q learners need at least one hidden layer".into()))
}

/// H·Wᵀ + b for a single-layer head.
fn head_batch<T: Real>(head: &DenseNet<T>, features: ArrayView2<T>) -> Array2<T> {
    let layer = &head.layers()[0];
    features.dot(&layer.weights.t()) + &layer.bias
}

fn chunk_rows(width: usize) -> usize {
    (CHUNK_ELEMENTS / width.max(1)).max(1)
}

/// Row maxima of H·Wᵀ + b. Wide heads are processed in blocks of output
/// units so each block is a tall-skinny product W_block·Hᵀ.
fn head_row_max<T: Real>(head: &DenseNet<T>, features: ArrayView2<T>) -> Vec<f64> {
    let layer = &head.layers()[0];
    let width = head.output_width();
    let block = (CHUNK_ELEMENTS / features.nrows().max(1)).max(1);
    let mut best = vec![T::neg_infinity(); features.nrows()];
    let ht = features.t();
    for start in (0..width).step_by(block) {
        let end = (start + block).min(width);
        let q = layer.weights.slice(s![start..end, ..]).dot(&ht);
        for (row, &b) in q.rows().into_iter().zip(layer.bias.slice(s![start..end])) {
            for (m, &v) in best.iter_mut().zip(row) {
                let v = v + b;
                if v > *m {
                    *m = v;
                }
            }
        }
    }
    best.into_iter().map(|v| v.to_f64()).collect()
}

/// Online and target networks with one optimizer per trunk/head.
#[derive(Debug, Clone)]
struct QModel<T: Real> {
    online: QNet<T>,
    target: QNet<T>,
    trunk_opt: OptimState<T>,
    head_opts: Vec<OptimState<T>>,
}

impl<T: Real> QModel<T> {
    fn new<R: Rng + ?Sized>(input: usize, config: &AgentConfig, head_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let online = QNet::new(input, config, head_sizes, rng)?;
        let adam = config.critic_adam();
        Ok(Self {
            trunk_opt: OptimState::new(&online.trunk, adam),
            head_opts: online.heads.iter().map(|h| OptimState::new(h, adam)).collect(),
            target: online.clone(),
            online,
        })
    }

    fn sync(&mut self, tau: f64) -> Result<()> {
        soft_update(&mut self.target.trunk, &self.online.trunk, tau)?;
        for (t, o) in self.target.heads.iter_mut().zip(&self.online.heads) {
            soft_update(t, o, tau)?;
        }
        Ok(())
    }

    fn apply(&mut self, trunk_grads: Gradients<T>, head_grads: Vec<Gradients<T>>) -> Result<()> {
        self.trunk_opt.step(&mut self.online.trunk, &trunk_grads)?;
        for ((opt, head), g) in self.head_opts.iter_mut().zip(&mut self.online.heads).zip(&head_grads) {
            opt.step(head, g)?;
        }
        Ok(())
    }

    fn push(&self, b: &mut Bundle<T>) {
        b.push_net("trunk", &self.online.trunk);
        b.push_net("target_trunk", &self.target.trunk);
        b.push_optim("trunk_opt", &self.trunk_opt);
        for (k, h) in self.online.heads.iter().enumerate() {
            b.push_net(format!("head_{k}"), h);
            b.push_net(format!("target_head_{k}"), &self.target.heads[k]);
            b.push_optim(format!("head_opt_{k}"), &self.head_opts[k]);
        }
    }

    fn take(&mut self, b: &mut Bundle<T>) -> Result<()> {
        let arch = self.online.trunk.architecture();
        self.online.trunk = b.take_net("trunk", &arch)?;
        self.target.trunk = b.take_net("target_trunk", &arch)?;
        self.trunk_opt = b.take_optim("trunk_opt", &self.online.trunk)?;
        for k in 0..self.online.heads.len() {
            let arch = self.online.heads[k].architecture();
            self.online.heads[k] = b.take_net(&format!("head_{k}"), &arch)?;
            self.target.heads[k] = b.take_net(&format!("target_head_{k}"), &arch)?;
            self.head_opts[k] = b.take_optim(&format!("head_opt_{k}"), &self.online.heads[k])?;
        }
        Ok(())
    }
}

fn epsilon_greedy_choice(
    greedy: &[usize],
    sizes: &[usize],
    epsilon: f64,
    explore: bool,
    rng: &mut ChaCha8Rng,
) -> ActionChoice {
    let action: Vec<usize> = if explore && rng.random::<f64>() < epsilon {
        sizes.iter().map(|&n| rng.random_range(0..n)).collect()
    } else {
        greedy.to_vec()
    };
    let eps = if explore { epsilon } else { 0.0 };
    let propensities = action
        .iter()
        .zip(greedy)
        .zip(sizes)
        .map(|((&a, &g), &n)| epsilon_greedy_propensity(eps, n, a, g))
        .collect();
    ActionChoice {
        action: JointAction(action),
        propensities,
    }
}

fn meta_for(kind: AgentKind, config: &AgentConfig, env: &EnvSpec, env_steps: u64, updates: u64) -> AgentMeta {
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

/// Single-agent learner over the flattened joint action space.
#[derive(Debug, Clone)]
pub struct FlatQAgent<T: Real> {
    config: AgentConfig,
    env: EnvSpec,
    gamma: f64,
    conservative: f64,
    sizes: Vec<usize>,
    width: usize,
    joint_width: usize,
    model: QModel<T>,
    env_steps: u64,
    updates: u64,
}

/// Flattened output width, or a refusal when it exceeds `bound`.
pub fn flat_width(sizes: &[usize], bound: u64) -> Result<usize> {
    let width = crate::envs::joint_action_space_size(sizes);
    if width > BigUint::from(bound) {
        return Err(Error::Infeasible {
            width: width.to_string(),
            bound,
        });
    }
    Ok(width.try_into().expect("bounded width fits usize"))
}

impl<T: Real> FlatQAgent<T> {
    pub fn new<R: Rng + ?Sized>(spec: &EnvSpec, config: &AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let sizes = spec.action_sizes();
        let width = flat_width(&sizes, config.max_flat_width)?;
        let joint_width = spec.joint_width();
        Ok(Self {
            model: QModel::new(joint_width, config, &[width], rng)?,
            config: config.clone(),
            env: spec.clone(),
            gamma: config.discount(spec),
            conservative: config.conservative_coefficient(),
            sizes,
            width,
            joint_width,
            env_steps: 0,
            updates: 0,
        })
    }

    pub(crate) fn from_bundle(meta: &AgentMeta, bundle: &mut Bundle<T>) -> Result<Self> {
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut out = Self::new(&meta.env, &meta.config, &mut rng)?;
        out.model.take(bundle)?;
        out.env_steps = meta.env_steps;
        out.updates = meta.updates;
        Ok(out)
    }

    pub fn output_width(&self) -> usize {
        self.width
    }

    /// Q(x, ·) over every joint action.
    pub fn q_values(&self, obs: &JointObservation) -> Result<Vec<f64>> {
        let h = self.model.online.features(obs)?;
        Ok(self.model.online.head_values(0, &h))
    }

    pub fn greedy(&self, obs: &JointObservation) -> Result<JointAction> {
        let h = self.model.online.features(obs)?;
        let layer = &self.model.online.heads[0].layers()[0];
        let weights = layer.weights.as_slice().expect("standard layout");
        let h = h.as_slice().expect("contiguous features");
        let (mut best, mut best_value) = (0, T::neg_infinity());
        for (i, row) in weights.chunks_exact(h.len()).enumerate() {
            let mut v = layer.bias[i];
            for (&w, &x) in row.iter().zip(h) {
                v = v + w * x;
            }
            if v > best_value {
                best = i;
                best_value = v;
            }
        }
        Ok(JointAction::from_flat_index(best, &self.sizes))
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon.at(self.env_steps)
    }

    /// TD targets r + γ·max_a Q′(x′, a), bootstrap dropped at terminal steps.
    pub fn td_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let next = joint_matrix::<T>(batch, self.joint_width, true)?;
        let h = self.model.target.trunk.forward_batch(next.view())?;
        let best = head_row_max(&self.model.target.heads[0], h.view());
        let r = rewards(batch);
        let cont = continuation(batch);
        Ok((0..batch.len()).map(|b| r[b] + self.gamma * cont[b] * best[b]).collect())
    }

    /// Loss and gradients (trunk, head) for fixed targets.
    fn loss_and_gradients(&self, batch: &[&Transition], targets: &[f64]) -> Result<(f64, Gradients<T>, Gradients<T>)> {
        check_len("TD targets", batch.len(), targets.len())?;
        let x = joint_matrix::<T>(batch, self.joint_width, false)?;
        let trunk_trace = self.model.online.trunk.forward_trace(x)?;
        let h = trunk_trace.output();
        let head = &self.model.online.heads[0].layers()[0];
        let n = batch.len();
        let scale = 1.0 / n as f64;
        let index: Vec<usize> = batch.iter().map(|t| t.action.flat_index(&self.sizes)).collect();
        let mut dw = Array2::<T>::zeros(head.weights.dim());
        let mut db = Array1::<T>::zeros(head.bias.len());
        let mut dh = Array2::<T>::zeros(h.dim());
        let mut loss = 0.0;
        if self.conservative == 0.0 {
            for b in 0..n {
                let a = index[b];
                let q = head.weights.row(a).dot(&h.row(b)).to_f64() + head.bias[a].to_f64();
                let err = q - targets[b];
                loss += err * err * scale;
                let g = T::from_f64(2.0 * err * scale);
                dw.row_mut(a).scaled_add(g, &h.row(b));
                db[a] = db[a] + g;
                dh.row_mut(b).scaled_add(g, &head.weights.row(a));
            }
        } else {
            let rows = chunk_rows(self.width);
            for start in (0..n).step_by(rows) {
                let end = (start + rows).min(n);
                let hc = h.slice(s![start..end, ..]);
                let q = head_batch(&self.model.online.heads[0], hc);
                let mut g = Array2::<T>::zeros(q.dim());
                for (r, b) in (start..end).enumerate() {
                    let qrow: Vec<f64> = q.row(r).iter().map(|&v| v.to_f64()).collect();
                    let a = index[b];
                    let err = qrow[a] - targets[b];
                    let (penalty, pgrad) = conservative_term(&qrow, a);
                    loss += (err * err + self.conservative * penalty) * scale;
                    for (k, pg) in pgrad.into_iter().enumerate() {
                        g[[r, k]] = T::from_f64(self.conservative * pg * scale);
                    }
                    g[[r, a]] = g[[r, a]] + T::from_f64(2.0 * err * scale);
                }
                dw = dw + g.t().dot(&hc);
                db = db + g.sum_axis(Axis(0));
                dh.slice_mut(s![start..end, ..]).assign(&g.dot(&head.weights));
            }
        }
        let (trunk_grads, _) = self.model.online.trunk.backward_batch(&trunk_trace, dh.view())?;
        let head_grads = Gradients {
            layers: vec![LayerGradient { weights: dw, bias: db }],
        };
        Ok((loss, trunk_grads, head_grads))
    }
}

impl<T: Real> Agent for FlatQAgent<T> {
    fn kind(&self) -> AgentKind {
        self.config.kind
    }

    fn action_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Per-agent marginals of the softmax over all joint Q values.
    fn action_probabilities(&self, obs: &JointObservation) -> Result<Vec<Vec<f64>>> {
        let joint = softmax(&self.q_values(obs)?);
        let mut out: Vec<Vec<f64>> = self.sizes.iter().map(|&n| vec![0.0; n]).collect();
        for (idx, p) in joint.into_iter().enumerate() {
            let a = JointAction::from_flat_index(idx, &self.sizes);
            for (d, &ad) in a.0.iter().enumerate() {
                out[d][ad] += p;
            }
        }
        Ok(out)
    }

    fn joint_propensity(&self, obs: &JointObservation, action: &JointAction) -> Result<f64> {
        action.validate(&self.sizes)?;
        Ok(softmax(&self.q_values(obs)?)[action.flat_index(&self.sizes)])
    }

    fn act(&self, obs: &JointObservation, explore: bool, rng: &mut ChaCha8Rng) -> Result<ActionChoice> {
        let greedy = self.greedy(obs)?;
        Ok(epsilon_greedy_choice(&greedy.0, &self.sizes, self.epsilon(), explore, rng))
    }

    fn update(&mut self, batch: &[&Transition], _rng: &mut ChaCha8Rng) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        validate_actions(batch, &self.sizes)?;
        let targets = self.td_targets(batch)?;
        let (loss, trunk, head) = self.loss_and_gradients(batch, &targets)?;
        self.model.apply(trunk, vec![head])?;
        self.updates += 1;
        Ok(loss)
    }

    fn target_sync(&mut self) -> Result<()> {
        self.model.sync(self.config.tau)
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn record_env_steps(&mut self, steps: u64) {
        self.env_steps += steps;
    }

    fn param_digest(&self) -> String {
        digest_params(&self.model.online.nets())
    }

    fn save(&self, path: &std::path::Path, extra: serde_json::Value) -> Result<()> {
        let mut meta = meta_for(self.config.kind, &self.config, &self.env, self.env_steps, self.updates);
        meta.extra = extra;
        save_bundle(path, &meta, |b: &mut Bundle<T>| self.model.push(b))
    }
}

/// One value head per action dimension over a shared trunk.
#[derive(Debug, Clone)]
pub struct BranchingQAgent<T: Real> {
    config: AgentConfig,
    env: EnvSpec,
    gamma: f64,
    conservative: f64,
    sizes: Vec<usize>,
    joint_width: usize,
    model: QModel<T>,
    env_steps: u64,
    updates: u64,
}

impl<T: Real> BranchingQAgent<T> {
    pub fn new<R: Rng + ?Sized>(spec: &EnvSpec, config: &AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let sizes = spec.action_sizes();
        let joint_width = spec.joint_width();
        Ok(Self {
            model: QModel::new(joint_width, config, &sizes, rng)?,
            config: config.clone(),
            env: spec.clone(),
            gamma: config.discount(spec),
            conservative: config.conservative_coefficient(),
            sizes,
            joint_width,
            env_steps: 0,
            updates: 0,
        })
    }

    pub(crate) fn from_bundle(meta: &AgentMeta, bundle: &mut Bundle<T>) -> Result<Self> {
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut out = Self::new(&meta.env, &meta.config, &mut rng)?;
        out.model.take(bundle)?;
        out.env_steps = meta.env_steps;
        out.updates = meta.updates;
        Ok(out)
    }

    /// Per-branch Q values.
    pub fn branch_values(&self, obs: &JointObservation) -> Result<Vec<Vec<f64>>> {
        let h = self.model.online.features(obs)?;
        Ok((0..self.sizes.len()).map(|k| self.model.online.head_values(k, &h)).collect())
    }

    /// Per-branch argmax.
    pub fn greedy(&self, obs: &JointObservation) -> Result<JointAction> {
        Ok(JointAction(self.branch_values(obs)?.iter().map(|q| argmax(q)).collect()))
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon.at(self.env_steps)
    }

    /// Shared TD target r + γ·mean_k max_a Q′_k(x′, a).
    pub fn td_targets(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let next = joint_matrix::<T>(batch, self.joint_width, true)?;
        let h = self.model.target.trunk.forward_batch(next.view())?;
        let mut bootstrap = vec![0.0; batch.len()];
        for head in &self.model.target.heads {
            for (b, m) in head_row_max(head, h.view()).into_iter().enumerate() {
                bootstrap[b] += m / self.sizes.len() as f64;
            }
        }
        let r = rewards(batch);
        let cont = continuation(batch);
        Ok((0..batch.len()).map(|b| r[b] + self.gamma * cont[b] * bootstrap[b]).collect())
    }
}

impl<T: Real> Agent for BranchingQAgent<T> {
    fn kind(&self) -> AgentKind {
        self.config.kind
    }

    fn action_sizes(&self) -> &[usize] {
        &self.sizes
    }

    fn action_probabilities(&self, obs: &JointObservation) -> Result<Vec<Vec<f64>>> {
        Ok(self.branch_values(obs)?.iter().map(|q| softmax(q)).collect())
    }

    fn act(&self, obs: &JointObservation, explore: bool, rng: &mut ChaCha8Rng) -> Result<ActionChoice> {
        let greedy = self.greedy(obs)?;
        Ok(epsilon_greedy_choice(&greedy.0, &self.sizes, self.epsilon(), explore, rng))
    }

    /// Loss = mean over branches of the squared TD error, plus the per-branch
    /// conservative penalty when enabled.
    fn update(&mut self, batch: &[&Transition], _rng: &mut ChaCha8Rng) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        validate_actions(batch, &self.sizes)?;
        let targets = self.td_targets(batch)?;
        let x = joint_matrix::<T>(batch, self.joint_width, false)?;
        let trunk_trace = self.model.online.trunk.forward_trace(x)?;
        let h = trunk_trace.output();
        let branches = self.sizes.len();
        let scale = 1.0 / (batch.len() * branches) as f64;
        let mut loss = 0.0;
        let mut dh = Array2::<T>::zeros(h.dim());
        let mut head_grads = Vec::with_capacity(branches);
        for (k, head) in self.model.online.heads.iter().enumerate() {
            let q = head_batch(head, h.view());
            let mut g = Array2::<T>::zeros(q.dim());
            for (b, t) in batch.iter().enumerate() {
                let a = t.action.0[k];
                let qrow: Vec<f64> = q.row(b).iter().map(|&v| v.to_f64()).collect();
                let err = qrow[a] - targets[b];
                loss += err * err * scale;
                if self.conservative > 0.0 {
                    let (penalty, pgrad) = conservative_term(&qrow, a);
                    loss += self.conservative * penalty * scale;
                    for (j, pg) in pgrad.into_iter().enumerate() {
                        g[[b, j]] = T::from_f64(self.conservative * pg * scale);
                    }
                }
                g[[b, a]] = g[[b, a]] + T::from_f64(2.0 * err * scale);
            }
            let layer = &head.layers()[0];
            dh = dh + g.dot(&layer.weights);
            head_grads.push(Gradients {
                layers: vec![LayerGradient {
                    weights: g.t().dot(h),
                    bias: g.sum_axis(Axis(0)),
                }],
            });
        }
        let (trunk_grads, _) = self.model.online.trunk.backward_batch(&trunk_trace, dh.view())?;
        self.model.apply(trunk_grads, head_grads)?;
        self.updates += 1;
        Ok(loss)
    }

    fn target_sync(&mut self) -> Result<()> {
        self.model.sync(self.config.tau)
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn record_env_steps(&mut self, steps: u64) {
        self.env_steps += steps;
    }

    fn param_digest(&self) -> String {
        digest_params(&self.model.online.nets())
    }

    fn save(&self, path: &std::path::Path, extra: serde_json::Value) -> Result<()> {
        let mut meta = meta_for(self.config.kind, &self.config, &self.env, self.env_steps, self.updates);
        meta.extra = extra;
        save_bundle(path, &meta, |b: &mut Bundle<T>| self.model.push(b))
    }
}
