use coopmarl_core::agents::{Agent, AgentConfig, AgentKind, Maddpg, RandomAgent};
use coopmarl_core::envs::{CoopControlParams, CroSimParams, EnvSpec, JointAction};
use coopmarl_core::eval::{
    importance_weights, ips_estimate, ips_from_weights, mean_stderr, rollout, target_propensity, BootstrapConfig,
    LoggedTrajectory, RewardVariant,
};
use coopmarl_core::numerics::{Activation, DenseNet, Layer, Precision};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn two_slot_cro(sizes: [usize; 2]) -> EnvSpec {
    EnvSpec::cro_sim(CroSimParams {
        catalog_sizes: sizes.to_vec(),
        position_bias: vec![0.0, -0.4],
        clickbait: vec![vec![0], vec![]],
        ..CroSimParams::default()
    })
}

/// MADDPG whose actors ignore the observation and emit fixed logits.
fn fixed_logit_policy(spec: &EnvSpec, logits: &[Vec<f64>]) -> Maddpg<f64> {
    let config = AgentConfig {
        precision: Precision::F64,
        hidden: vec![4],
        ..AgentConfig::with_kind(AgentKind::Maddpg)
    };
    let mut agent = Maddpg::<f64>::new(spec, &config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    agent.mark_all_seen();
    for (a, (l, width)) in agent.agents_mut().iter_mut().zip(logits.iter().zip(spec.local_widths())) {
        a.actor = DenseNet::from_layers(vec![Layer {
            weights: Array2::zeros((l.len(), width)),
            bias: Array1::from(l.clone()),
            activation: Activation::Identity,
        }])
        .unwrap();
    }
    agent
}

#[test]
fn hand_built_logits_give_the_product_of_softmaxes() {
    let spec = two_slot_cro([4, 5]);
    let logits = vec![vec![0.5, -1.0, 2.0, 0.0], vec![1.5, 0.25, -0.75, 3.0, -2.0]];
    let policy = fixed_logit_policy(&spec, &logits);
    let obs = spec.build().unwrap().reset(3);
    let manual = |l: &[f64], k: usize| {
        let z: f64 = l.iter().map(|v| v.exp()).sum();
        l[k].exp() / z
    };
    for a in 0..4 {
        for b in 0..5 {
            let (p, floored) = target_propensity(&policy, &obs, &JointAction(vec![a, b])).unwrap();
            assert!(!floored);
            assert!((p - manual(&logits[0], a) * manual(&logits[1], b)).abs() <= 1e-9);
        }
    }
}

#[test]
fn uniform_and_deterministic_propensities() {
    let spec = two_slot_cro([4, 5]);
    let obs = spec.build().unwrap().reset(0);
    let uniform = RandomAgent::new(&spec);
    let (p, _) = target_propensity(&uniform, &obs, &JointAction(vec![3, 1])).unwrap();
    assert!((p - 1.0 / 20.0).abs() < 1e-15);

    let sharp = fixed_logit_policy(&spec, &[vec![40.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 40.0, 0.0, 0.0]]);
    let (p, _) = target_propensity(&sharp, &obs, &JointAction(vec![0, 2])).unwrap();
    assert!((p - 1.0).abs() < 1e-12);
}

#[test]
fn vanishing_target_probability_is_floored_and_counted() {
    let spec = two_slot_cro([2, 2]);
    let policy = fixed_logit_policy(&spec, &[vec![0.0, -1e4], vec![0.0, 0.0]]);
    let obs = spec.build().unwrap().reset(0);
    let record = |action: Vec<usize>| LoggedTrajectory {
        episode: 0,
        policy: "random".into(),
        observation: obs.clone(),
        action: JointAction(action),
        behavior: 0.25,
        total_reward: 1.0,
    };
    let records = vec![record(vec![1, 0]), record(vec![0, 1]), record(vec![1, 1])];
    let (weights, floored) = importance_weights(&records, &policy).unwrap();
    assert_eq!(floored, 2);
    assert!((weights[0] - 1e-6 / 0.25).abs() < 1e-18);
    assert!((weights[1] - 0.5 / 0.25).abs() < 1e-12);
    let none = BootstrapConfig { resamples: 0, seed: 0 };
    assert_eq!(ips_estimate(&records, &policy, RewardVariant::Source, &none).unwrap().floored, 2);
}

#[test]
fn random_rollouts_match_the_enumerated_expectation() {
    let (agents, size, horizon, omega) = (3usize, 5usize, 8usize, 0.1f64);
    let spec = EnvSpec::coop_control(CoopControlParams {
        agents,
        action_size: size,
        horizon,
        omega,
        coupling: 0.3,
    });
    let grid: Vec<f64> = (0..size).map(|i| -1.0 + 2.0 * i as f64 / (size - 1) as f64).collect();
    // exhaustive expectation of the per-step reward under independent uniform choices
    let mut expected = 0.0;
    for t in 0..horizon {
        let target = |d: usize| (omega * t as f64 + 2.0 * std::f64::consts::PI * d as f64 / agents as f64).sin();
        let mut total = 0.0;
        let count = size.pow(agents as u32);
        for idx in 0..count {
            let values: Vec<f64> = (0..agents).map(|d| grid[(idx / size.pow(d as u32)) % size]).collect();
            let tracking: f64 = (0..agents).map(|d| 1.0 - (values[d] - target(d)).abs()).sum::<f64>() / agents as f64;
            let coupling: f64 =
                (0..agents).map(|d| values[d] * values[(d + 1) % agents]).sum::<f64>() / agents as f64;
            total += tracking + 0.3 * coupling;
        }
        expected += total / count as f64;
    }
    let result = rollout(&RandomAgent::new(&spec), &spec, 2000, 4, true).unwrap();
    assert!(
        (result.mean - expected).abs() <= 3.0 * result.stderr,
        "{} vs {expected} (stderr {})",
        result.mean,
        result.stderr
    );
}

#[test]
fn single_episode_rollout_is_that_return() {
    let spec = EnvSpec::coop_control(CoopControlParams {
        agents: 2,
        horizon: 5,
        ..CoopControlParams::default()
    });
    let policy = RandomAgent::new(&spec);
    let result = rollout(&policy, &spec, 1, 9, true).unwrap();
    assert_eq!(result.returns.len(), 1);
    assert_eq!(result.mean, result.returns[0]);
    assert_eq!(mean_stderr(&[2.5]), (2.5, 0.0));
}

#[test]
fn bootstrap_interval_widens_as_the_sample_shrinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut widths = (0.0, 0.0);
    for draw in 0..20u64 {
        let terms: Vec<f64> = (0..2000).map(|_| rand::Rng::random_range(&mut rng, 0.0..4.0)).collect();
        let boot = BootstrapConfig { resamples: 400, seed: draw };
        let ones = vec![1.0; 2000];
        let big = ips_from_weights(&ones, &terms, RewardVariant::Source, &boot).unwrap();
        let small = ips_from_weights(&ones[..200], &terms[..200], RewardVariant::Source, &boot).unwrap();
        widths.0 += big.upper - big.lower;
        widths.1 += small.upper - small.lower;
    }
    assert!(widths.1 > widths.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn indicator_variant_is_binary_and_tracks_positivity(r in -1e6f64..1e6) {
        let v = RewardVariant::Indicator.apply(r);
        prop_assert!(v == 0.0 || v == 1.0);
        prop_assert_eq!(v == 1.0, r > 0.0);
        let logged = RewardVariant::Logged.apply(r);
        prop_assert_eq!(logged.signum() == r.signum() || r == 0.0, true);
    }

    #[test]
    fn estimate_lies_in_its_interval_and_indicator_is_bounded(
        pairs in prop::collection::vec((0.0f64..50.0, -20.0f64..20.0), 1..60),
        seed in any::<u64>(),
    ) {
        let (weights, rewards): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let boot = BootstrapConfig { resamples: 50, seed };
        for variant in RewardVariant::ALL {
            let res = ips_from_weights(&weights, &rewards, variant, &boot).unwrap();
            prop_assert!(res.lower <= res.estimate && res.estimate <= res.upper);
            prop_assert_eq!(res.n, weights.len());
            if variant == RewardVariant::Indicator {
                let max_w = weights.iter().cloned().fold(0.0, f64::max);
                prop_assert!(res.estimate >= 0.0 && res.estimate <= max_w + 1e-12);
            }
        }
    }

    #[test]
    fn self_evaluation_returns_the_sample_mean(rewards in prop::collection::vec(-10.0f64..10.0, 1..40), seed in any::<u64>()) {
        let spec = two_slot_cro([3, 4]);
        let policy = RandomAgent::new(&spec);
        let obs = spec.build().unwrap().reset(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records: Vec<LoggedTrajectory> = rewards
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let choice = policy.act(&obs, true, &mut rng).unwrap();
                LoggedTrajectory {
                    episode: i as u64,
                    policy: "random".into(),
                    observation: obs.clone(),
                    behavior: choice.propensities.iter().product(),
                    action: choice.action,
                    total_reward: r,
                }
            })
            .collect();
        let none = BootstrapConfig { resamples: 0, seed: 0 };
        let est = ips_estimate(&records, &policy, RewardVariant::Source, &none).unwrap().estimate;
        prop_assert_eq!(est, rewards.iter().sum::<f64>() / rewards.len() as f64);
    }
}
