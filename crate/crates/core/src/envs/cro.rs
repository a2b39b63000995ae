//! Whole-page content ranking session simulator.
//!
//! A session belongs to one customer segment. Every impression shows one
//! content per position; each position draws a click from a logistic model of
//! segment affinity, position bias and cross-position cannibalization (same
//! category shown elsewhere on the page, or matching the organic context of
//! another slot). Clicks may convert into purchases. Clickbait contents attract
//! clicks but, once clicked, depress purchase probability for the rest of the
//! session. Click-less impressions make abandonment more likely.
//!
//! Reward per impression:
//! `revenue + profit + alpha·long_term + beta·clicks + gamma_ab·abandonments`,
//! where `long_term` is paid on the terminal step, proportional to the
//! session's total clicks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    EnvKind, EnvSpec, Environment, JointAction, JointObservation, RewardBreakdown, StepResult,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    /// Weight of the long-term component.
    pub alpha: f64,
    /// Weight of clicks.
    pub beta: f64,
    /// Weight of abandonments; must not be positive.
    pub gamma_ab: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.1,
            gamma_ab: -1.0,
        }
    }
}

impl RewardWeights {
    pub fn combine(&self, b: &RewardBreakdown) -> f64 {
        b.revenue + b.profit + self.alpha * b.long_term + self.beta * b.clicks + self.gamma_ab * b.abandonment
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CroSimParams {
    pub catalog_sizes: Vec<usize>,
    pub horizon: usize,
    pub segments: usize,
    pub categories: usize,
    pub catalog_seed: u64,
    pub weights: RewardWeights,
    pub long_term_per_click: f64,
    pub base_click_logit: f64,
    /// Click-logit offset per position.
    pub position_bias: Vec<f64>,
    pub affinity_scale: f64,
    /// Clickbait content indices per position.
    pub clickbait: Vec<Vec<usize>>,
    pub clickbait_click_bonus: f64,
    /// Purchase-probability multiplier once a clickbait content has been clicked.
    pub clickbait_purchase_factor: f64,
    pub content_cannibalization: f64,
    pub context_cannibalization: f64,
    pub purchase_rate: [f64; 2],
    pub price: [f64; 2],
    pub margin: [f64; 2],
    pub abandon_base: f64,
    pub abandon_step: f64,
    pub abandon_max: f64,
}

impl Default for CroSimParams {
    fn default() -> Self {
        Self {
            catalog_sizes: vec![8, 12, 6],
            horizon: 12,
            segments: 4,
            categories: 3,
            catalog_seed: 17,
            weights: RewardWeights::default(),
            long_term_per_click: 0.5,
            base_click_logit: -1.0,
            position_bias: vec![0.0, -0.4, -0.8],
            affinity_scale: 1.5,
            clickbait: vec![vec![0], vec![], vec![]],
            clickbait_click_bonus: 2.0,
            clickbait_purchase_factor: 0.2,
            content_cannibalization: 0.6,
            context_cannibalization: 1.2,
            purchase_rate: [0.1, 0.35],
            price: [4.0, 12.0],
            margin: [0.1, 0.4],
            abandon_base: 0.05,
            abandon_step: 0.15,
            abandon_max: 0.9,
        }
    }
}

impl CroSimParams {
    pub(super) fn global_width(&self) -> usize {
        // segment one-hot, progress, clicks so far, clickbait exposure,
        // click-less streak, terminal marker
        self.segments + 5
    }

    pub(super) fn local_width(&self) -> usize {
        self.global_width() + self.categories
    }

    pub(super) fn validate(&self) -> Result<()> {
        let positions = self.catalog_sizes.len();
        if positions == 0 || self.catalog_sizes.iter().any(|&n| n == 0) {
            return Err(Error::InvalidArgument("catalog sizes must be positive".into()));
        }
        if self.horizon == 0 || self.segments == 0 || self.categories == 0 {
            return Err(Error::InvalidArgument(
                "horizon, segments and categories must be positive".into(),
            ));
        }
        if self.position_bias.len() != positions {
            return Err(Error::Shape {
                context: "cro_sim position_bias",
                expected: positions,
                actual: self.position_bias.len(),
            });
        }
        if self.clickbait.len() != positions {
            return Err(Error::Shape {
                context: "cro_sim clickbait",
                expected: positions,
                actual: self.clickbait.len(),
            });
        }
        for (p, list) in self.clickbait.iter().enumerate() {
            if let Some(&c) = list.iter().find(|&&c| c >= self.catalog_sizes[p]) {
                return Err(Error::InvalidAction {
                    agent: p,
                    index: c,
                    size: self.catalog_sizes[p],
                });
            }
        }
        if self.weights.gamma_ab > 0.0 {
            return Err(Error::InvalidArgument("gamma_ab must be <= 0".into()));
        }
        let finite = [
            self.weights.alpha,
            self.weights.beta,
            self.weights.gamma_ab,
            self.long_term_per_click,
            self.base_click_logit,
            self.affinity_scale,
            self.clickbait_click_bonus,
            self.clickbait_purchase_factor,
            self.content_cannibalization,
            self.context_cannibalization,
            self.abandon_base,
            self.abandon_step,
            self.abandon_max,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cro_sim parameters"));
        }
        for range in [self.purchase_rate, self.price, self.margin] {
            if !(range[0] <= range[1]) {
                return Err(Error::InvalidArgument(format!("bad range {range:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Content {
    pub category: usize,
    /// Click-logit affinity per customer segment.
    pub affinity: Vec<f64>,
    pub purchase_rate: f64,
    pub price: f64,
    pub margin: f64,
    pub clickbait: bool,
}

#[derive(Debug, Clone)]
struct Session {
    segment: usize,
    t: usize,
    clicks_total: f64,
    clickless_streak: usize,
    exposed: bool,
    contexts: Vec<usize>,
    done: bool,
}

#[derive(Debug, Clone)]
pub struct CroSim {
    spec: EnvSpec,
    catalog: Vec<Vec<Content>>,
    rng: ChaCha8Rng,
    session: Session,
    interactions: u64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl CroSim {
    pub fn new(spec: EnvSpec) -> Result<Self> {
        if spec.kind != EnvKind::CroSim {
            return Err(Error::InvalidArgument("spec is not cro_sim".into()));
        }
        spec.cro_sim.validate()?;
        let catalog = build_catalog(&spec.cro_sim);
        let positions = spec.cro_sim.catalog_sizes.len();
        Ok(Self {
            spec,
            catalog,
            rng: ChaCha8Rng::seed_from_u64(0),
            session: Session {
                segment: 0,
                t: 0,
                clicks_total: 0.0,
                clickless_streak: 0,
                exposed: false,
                contexts: vec![0; positions],
                done: true,
            },
            interactions: 0,
        })
    }

    fn params(&self) -> &CroSimParams {
        &self.spec.cro_sim
    }

    pub fn catalog(&self) -> &[Vec<Content>] {
        &self.catalog
    }

    pub fn segment(&self) -> usize {
        self.session.segment
    }

    /// Segment-averaged click probability of a content shown alone at fresh
    /// session state; the click prior used by scripted rankers.
    pub fn click_prior(&self, position: usize, content: usize) -> f64 {
        let p = self.params();
        let c = &self.catalog[position][content];
        let bonus = if c.clickbait { p.clickbait_click_bonus } else { 0.0 };
        c.affinity
            .iter()
            .map(|a| sigmoid(p.base_click_logit + p.position_bias[position] + a + bonus))
            .sum::<f64>()
            / c.affinity.len() as f64
    }

    fn click_probability(&self, position: usize, action: &[usize]) -> f64 {
        let p = self.params();
        let s = &self.session;
        let content = &self.catalog[position][action[position]];
        let mut logit = p.base_click_logit + p.position_bias[position] + content.affinity[s.segment];
        if content.clickbait {
            logit += p.clickbait_click_bonus;
        }
        for (q, &other) in action.iter().enumerate() {
            if q == position {
                continue;
            }
            if self.catalog[q][other].category == content.category {
                logit -= p.content_cannibalization;
            }
            if s.contexts[q] == content.category {
                logit -= p.context_cannibalization;
            }
        }
        sigmoid(logit)
    }

    fn observe(&self) -> JointObservation {
        let p = self.params();
        let s = &self.session;
        let horizon = p.horizon as f64;
        let mut global = vec![0.0; p.global_width()];
        global[s.segment] = 1.0;
        global[p.segments] = s.t as f64 / horizon;
        global[p.segments + 1] = s.clicks_total / horizon;
        global[p.segments + 2] = if s.exposed { 1.0 } else { 0.0 };
        global[p.segments + 3] = s.clickless_streak as f64 / horizon;
        let locals = s
            .contexts
            .iter()
            .map(|&ctx| {
                let mut local = global.clone();
                local.extend((0..p.categories).map(|k| if k == ctx { 1.0 } else { 0.0 }));
                local
            })
            .collect();
        JointObservation { global, locals }
    }

    fn draw_contexts(&mut self) {
        let categories = self.params().categories;
        for i in 0..self.session.contexts.len() {
            self.session.contexts[i] = self.rng.random_range(0..categories);
        }
    }
}

fn build_catalog(p: &CroSimParams) -> Vec<Vec<Content>> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.catalog_seed);
    let uniform = |range: [f64; 2], rng: &mut ChaCha8Rng| {
        if range[0] == range[1] {
            range[0]
        } else {
            rng.random_range(range[0]..range[1])
        }
    };
    p.catalog_sizes
        .iter()
        .enumerate()
        .map(|(pos, &n)| {
            (0..n)
                .map(|c| {
                    // symmetric triangular draws keep affinities bounded and seed-stable
                    let affinity = (0..p.segments)
                        .map(|_| {
                            let a: f64 = rng.random::<f64>() + rng.random::<f64>() - 1.0;
                            a * 2.0 * p.affinity_scale
                        })
                        .collect();
                    Content {
                        category: c % p.categories,
                        affinity,
                        purchase_rate: uniform(p.purchase_rate, &mut rng),
                        price: uniform(p.price, &mut rng),
                        margin: uniform(p.margin, &mut rng),
                        clickbait: p.clickbait[pos].contains(&c),
                    }
                })
                .collect()
        })
        .collect()
}

impl Environment for CroSim {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> JointObservation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let segments = self.params().segments;
        self.session.segment = self.rng.random_range(0..segments);
        self.session.t = 0;
        self.session.clicks_total = 0.0;
        self.session.clickless_streak = 0;
        self.session.exposed = false;
        self.session.done = false;
        self.draw_contexts();
        self.observe()
    }

    fn step(&mut self, action: &JointAction) -> Result<StepResult> {
        if self.session.done {
            return Err(Error::InvalidArgument("step after terminal; call reset".into()));
        }
        action.validate(&self.spec.action_sizes())?;
        self.interactions += 1;
        let positions = action.0.len();
        let weights = self.params().weights;
        let purchase_factor = if self.session.exposed {
            self.params().clickbait_purchase_factor
        } else {
            1.0
        };

        let mut breakdown = RewardBreakdown::default();
        let mut agent_rewards = vec![0.0; positions];
        let mut clicked_bait = false;
        for p in 0..positions {
            let click_prob = self.click_probability(p, &action.0);
            // both uniforms are always drawn so the stream does not depend on outcomes
            let u_click: f64 = self.rng.random();
            let u_buy: f64 = self.rng.random();
            if u_click >= click_prob {
                continue;
            }
            let content = &self.catalog[p][action.0[p]];
            breakdown.clicks += 1.0;
            agent_rewards[p] += weights.beta;
            clicked_bait |= content.clickbait;
            if u_buy < content.purchase_rate * purchase_factor {
                breakdown.revenue += content.price;
                breakdown.profit += content.price * content.margin;
                agent_rewards[p] += content.price * (1.0 + content.margin);
            }
        }

        let s = &mut self.session;
        s.exposed |= clicked_bait;
        s.clicks_total += breakdown.clicks;
        if breakdown.clicks == 0.0 {
            s.clickless_streak += 1;
        } else {
            s.clickless_streak = 0;
        }
        s.t += 1;
        let p = &self.spec.cro_sim;
        let abandon_prob = (p.abandon_base + p.abandon_step * s.clickless_streak as f64).min(p.abandon_max);
        let u_abandon: f64 = self.rng.random();
        let abandoned = u_abandon < abandon_prob;
        let terminal = abandoned || s.t >= p.horizon;
        if abandoned {
            breakdown.abandonment = 1.0;
        }
        if terminal {
            breakdown.long_term = p.long_term_per_click * s.clicks_total;
        }
        s.done = terminal;
        let reward = weights.combine(&breakdown);

        self.draw_contexts();
        let observation = if terminal {
            self.spec.terminal_observation()
        } else {
            self.observe()
        };
        Ok(StepResult {
            observation,
            reward,
            terminal,
            breakdown: Some(breakdown),
            agent_rewards,
        })
    }

    fn interactions(&self) -> u64 {
        self.interactions
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim() -> CroSim {
        CroSim::new(EnvSpec::cro_sim(CroSimParams::default())).unwrap()
    }

    #[test]
    fn reward_arithmetic() {
        let w = RewardWeights {
            alpha: 0.0,
            beta: 0.0,
            gamma_ab: -1.0,
        };
        assert_eq!(w.combine(&RewardBreakdown::default()), 0.0);
        let w = RewardWeights {
            alpha: 0.5,
            beta: 0.1,
            gamma_ab: -1.0,
        };
        let two_clicks = RewardBreakdown {
            clicks: 2.0,
            ..RewardBreakdown::default()
        };
        assert!((w.combine(&two_clicks) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn observation_widths() {
        let mut env = sim();
        let obs = env.reset(3);
        let spec = env.spec().clone();
        assert_eq!(obs.global.len(), spec.global_width());
        assert_eq!(obs.locals.len(), 3);
        for (l, w) in obs.locals.iter().zip(spec.local_widths()) {
            assert_eq!(l.len(), w);
        }
        assert_eq!(obs.global[env.segment()], 1.0);
    }

    #[test]
    fn invalid_content_rejected() {
        let mut env = sim();
        env.reset(0);
        assert!(matches!(
            env.step(&JointAction(vec![0, 12, 0])),
            Err(Error::InvalidAction { agent: 1, .. })
        ));
    }

    #[test]
    fn sessions_terminate_and_are_seed_deterministic() {
        let run = |seed| {
            let mut env = sim();
            env.reset(seed);
            let mut rewards = Vec::new();
            let mut k = 0usize;
            loop {
                let a = JointAction(vec![k % 8, (k * 5) % 12, (k * 3) % 6]);
                let r = env.step(&a).unwrap();
                rewards.push(r.reward);
                k += 1;
                if r.terminal {
                    break;
                }
            }
            rewards
        };
        for seed in 0..50 {
            let a = run(seed);
            assert!(a.len() <= 12);
            assert_eq!(a, run(seed));
        }
    }

    #[test]
    fn attributed_rewards_sum_to_position_components() {
        let mut env = sim();
        for seed in 0..200 {
            env.reset(seed);
            loop {
                let r = env.step(&JointAction(vec![0, 1, 2])).unwrap();
                let b = r.breakdown.unwrap();
                let w = env.params().weights;
                let attributed: f64 = r.agent_rewards.iter().sum();
                let expected = b.revenue + b.profit + w.beta * b.clicks;
                assert!((attributed - expected).abs() < 1e-9);
                assert!((r.reward - w.combine(&b)).abs() < 1e-9);
                if r.terminal {
                    break;
                }
            }
        }
    }

    #[test]
    fn clickbait_has_the_highest_top_click_prior() {
        let env = sim();
        let bait = env.click_prior(0, 0);
        for c in 1..8 {
            assert!(bait > env.click_prior(0, c));
        }
    }
}
