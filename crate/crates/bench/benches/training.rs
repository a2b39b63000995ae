use std::hint::black_box;

use coopmarl_bench::{coop_spec, cro_spec, random_log};
use coopmarl_core::agents::{build_agent, AgentConfig, AgentKind, ScriptedAgent};
use coopmarl_core::envs::JointObservation;
use coopmarl_core::eval::{ips_estimate, trajectories, BootstrapConfig, RewardVariant};
use coopmarl_core::replay::Transition;
use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn updates(c: &mut Criterion) {
    let spec = coop_spec(10);
    let log = random_log(&spec, 10, 0);
    let batch: Vec<&Transition> = log.iter().take(128).collect();
    for (kind, name) in [
        (AgentKind::Maddpg, "maddpg_update_size10"),
        (AgentKind::BranchingDqn, "branching_update_size10"),
    ] {
        let config = AgentConfig {
            hidden: vec![64, 64],
            ..AgentConfig::with_kind(kind)
        };
        let mut agent = build_agent(&config, &spec, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        c.bench_function(name, |b| b.iter(|| agent.update(black_box(&batch), &mut rng).unwrap()));
    }
    let config = AgentConfig {
        hidden: vec![16, 16],
        ..AgentConfig::with_kind(AgentKind::FlatDqn)
    };
    let agent = build_agent(&config, &coop_spec(5), 0).unwrap();
    let obs: JointObservation = coop_spec(5).build().unwrap().reset(0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    c.bench_function("flat_dqn_greedy_size5", |b| b.iter(|| agent.act(black_box(&obs), false, &mut rng).unwrap()));
}

fn ips(c: &mut Criterion) {
    let spec = cro_spec();
    let records = trajectories(&random_log(&spec, 5000, 4));
    let target = ScriptedAgent::click_prior(&spec, 0.5).unwrap();
    let boot = BootstrapConfig { resamples: 200, seed: 0 };
    c.bench_function("ips_5000_sessions_bootstrap200", |b| {
        b.iter(|| ips_estimate(black_box(&records), &target, RewardVariant::Source, &boot).unwrap())
    });
    c.bench_function("cro_random_sessions_100", |b| b.iter(|| random_log(&spec, 100, 5).len()));
}

criterion_group!(benches, updates, ips);
criterion_main!(benches);
