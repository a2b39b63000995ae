use std::path::Path;
use std::process::Command;

use coopmarl_cli::commands::{eval_ips_cmd, sweep_cmd};
use coopmarl_cli::RunConfig;
use coopmarl_core::agents::AgentKind;
use coopmarl_core::replay::load_trajectories;

fn exit_code(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_coopmarl"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn out_arg(dir: &Path) -> String {
    dir.to_string_lossy().into_owned()
}

fn load(overrides: &[&str]) -> RunConfig {
    let owned: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    RunConfig::load(None, &owned).unwrap()
}

#[test]
fn config_problems_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    assert_eq!(exit_code(&["train-online", "--out", &out, "--override", "agent.no_such_key=1"]), 2);
    assert_eq!(exit_code(&["train-online", "--out", &out, "--override", "agent.gamma"]), 2);
    assert_eq!(exit_code(&["train-online", "--out", &out, "--override", "ips.random_share=1.5"]), 2);
    let missing = dir.path().join("absent.toml");
    assert_eq!(exit_code(&["sweep", "--config", &out_arg(&missing), "--out", &out]), 2);
}

#[test]
fn infeasible_flat_head_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // 25^6 joint actions exceed the default flat-width limit
    let code = exit_code(&[
        "train-online",
        "--out",
        &out_arg(dir.path()),
        "--override",
        "agent.kind=\"flat_dqn\"",
        "--override",
        "env.coop_control.action_size=25",
    ]);
    assert_eq!(code, 3);
}

#[test]
fn runtime_failure_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing.json");
    assert_eq!(
        exit_code(&["gen-dataset", "--out", &out_arg(dir.path()), "--registry", &out_arg(&missing)]),
        4
    );
}

#[test]
fn config_round_trips_through_toml_and_hash_ignores_out() {
    let dir = tempfile::tempdir().unwrap();
    let config = load(&["agent.gamma=0.5", "seeds=[3, 4]", "dataset.components.1.source.fraction=1.0"]);
    assert_eq!(config.agent.gamma, Some(0.5));
    assert_eq!(config.seeds, vec![3, 4]);
    let path = dir.path().join("run.toml");
    std::fs::write(&path, config.to_toml()).unwrap();
    let reloaded = RunConfig::load(Some(&path), &[]).unwrap();
    assert_eq!(reloaded, config);

    let moved = RunConfig {
        out: dir.path().join("elsewhere"),
        ..config.clone()
    };
    assert_eq!(moved.hash(), config.hash());
    assert_ne!(load(&["seeds=[5]"]).hash(), load(&["seeds=[6]"]).hash());

    // a partial file keeps defaults for every missing key
    std::fs::write(&path, "seeds = [9]\n[online]\nepisodes = 7\n").unwrap();
    let partial = RunConfig::load(Some(&path), &[]).unwrap();
    assert_eq!(partial.online.episodes, 7);
    assert_eq!(partial.seeds, vec![9]);
    assert_eq!(partial.agent, RunConfig::default().agent);
}

#[test]
fn sweep_reports_a_verdict_per_cell_and_trains_only_feasible_ones() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = load(&[
        "env.coop_control.horizon=5",
        "agent.hidden=[8]",
        "online.episodes=3",
        "online.warmup=5",
        "online.batch_size=4",
        "online.eval_every=0",
        "sweep.sizes=[3, 25]",
        "sweep.final_window=2",
        "seeds=[0, 1]",
    ]);
    config.out = dir.path().to_path_buf();
    let result = sweep_cmd(&config).unwrap();
    assert_eq!(result.feasibility.len(), 6);
    assert_eq!(result.is_feasible(AgentKind::FlatDqn, 25), Some(false));
    assert_eq!(result.is_feasible(AgentKind::FlatDqn, 3), Some(true));
    assert_eq!(result.is_feasible(AgentKind::Maddpg, 25), Some(true));
    assert_eq!(result.rows.len(), 5 * 2);
    assert!(result.cell(AgentKind::FlatDqn, 25).is_empty());
    assert!(result.rows.iter().all(|r| r.status == "ok" && r.episodes == 3));

    let feasibility = std::fs::read_to_string(dir.path().join("feasibility.csv")).unwrap();
    assert!(feasibility.starts_with(&format!("# config_hash: {}\n", config.hash())));
    assert_eq!(feasibility.lines().count(), 2 + 6);
    assert!(feasibility.contains("244140625"));
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 2 + 10);
    assert!(dir.path().join("sweep.dat").exists() && dir.path().join("config.toml").exists());
}

#[test]
fn eval_ips_scores_every_model_under_every_reward_variant() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = load(&[
        "env.kind=\"cro_sim\"",
        "agent.hidden=[8]",
        "ips.logger.hidden=[8]",
        "online.episodes=5",
        "online.warmup=10",
        "online.batch_size=8",
        "offline.epochs=1",
        "offline.batch_size=16",
        "ips.log_episodes=100",
        "ips.random_share=0.5",
        "ips.bootstrap.resamples=10",
        "seeds=[0, 1]",
    ]);
    config.out = dir.path().to_path_buf();
    let rows = eval_ips_cmd(&config, None).unwrap();
    assert_eq!(rows.len(), 2 * 6 * 3);
    assert!(rows.iter().all(|r| r.result.lower <= r.result.estimate && r.result.estimate <= r.result.upper));
    let summary = std::fs::read_to_string(dir.path().join("ips_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2 + 6 * 3);
}

#[test]
fn generated_dataset_header_lists_the_three_tags() {
    let dir = tempfile::tempdir().unwrap();
    let out = |name: &str| out_arg(&dir.path().join(name));
    let small = [
        "--override",
        "env.coop_control.horizon=5",
        "--override",
        "agent.hidden=[8]",
        "--override",
        "online.episodes=6",
        "--override",
        "online.warmup=5",
        "--override",
        "online.batch_size=4",
        "--override",
        "online.eval_every=2",
        "--override",
        "dataset.components.1.source.fraction=1.0",
    ];
    let mut args = vec!["train-online", "--out"];
    let online = out("online");
    args.push(&online);
    args.extend(small);
    assert_eq!(exit_code(&args), 0);

    let registry = dir.path().join("online").join("seed_0").join("registry.json");
    let data_out = out("data");
    let registry_arg = out_arg(&registry);
    let mut args = vec!["gen-dataset", "--out", &data_out, "--registry", &registry_arg];
    args.extend(small);
    assert_eq!(exit_code(&args), 0);

    let (header, transitions) = load_trajectories(&dir.path().join("data").join("dataset.jsonl")).unwrap();
    assert_eq!(header.policy_tags, vec!["expert", "medium", "random"]);
    assert!(header.config_hash.is_some());
    assert_eq!(transitions.len(), 300 * 5);
    let summary = std::fs::read_to_string(dir.path().join("data").join("dataset_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2 + 3);
}
