//! One function per subcommand. Each writes its tables under `config.out`
//! next to the effective config and returns what it wrote.

use std::path::{Path, PathBuf};

use coopmarl_core::agents::{build_agent, check_feasible, load_agent, read_agent_meta, Agent, AgentConfig, AgentKind};
use coopmarl_core::envs::{joint_action_space_size, EnvKind, EnvSpec};
use coopmarl_core::eval::{
    filter_policy, ips_all_variants, ips_estimate, ips_on_fresh_random_log, rollout_eval, trajectories,
    BootstrapConfig, IpsResult, LoggedTrajectory, RewardVariant,
};
use coopmarl_core::offline::{collect_mixture, generate_dataset, train_offline, CheckpointRegistry, CurvePoint, RANDOM_TAG};
use coopmarl_core::replay::{load_trajectories, save_trajectories, TrajectoryHeader, Transition};
use coopmarl_core::train::{train_online, OnlineReport};
use log::info;

use crate::config::{OfflineMetric, RunConfig};
use crate::output::{cell, num, Table};
use crate::CliError;

// stream salts keep logging, evaluation and training draws independent
const LOG_SALT: u64 = 0x4c4f_4721;
const EVAL_SALT: u64 = 0xe7a1_0b5e;

fn seed_dir(config: &RunConfig, seed: u64) -> PathBuf {
    config.out.join(format!("seed_{seed}"))
}

fn write_config(config: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&config.out)?;
    std::fs::write(config.out.join("config.toml"), config.to_toml())?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub report: OnlineReport,
}

/// Online training for every seed: per-episode curve, seed-mean curve,
/// checkpoints, registry and final agent.
pub fn train_online_cmd(config: &RunConfig) -> Result<Vec<SeedRun>, CliError> {
    check_feasible(&config.agent, &config.env)?;
    write_config(config)?;
    let hash = config.hash();
    let mut runs = Vec::new();
    for &seed in &config.seeds {
        let dir = seed_dir(config, seed);
        let mut online = config.online.clone();
        online.checkpoint_dir = (online.eval_every > 0).then(|| dir.join("checkpoints"));
        info!("train-online seed {seed}: {} on {:?}", config.agent.kind, config.env.kind);
        let run = || -> Result<OnlineReport, CliError> {
            let mut agent = build_agent(&config.agent, &config.env, seed)?;
            let report = train_online(agent.as_mut(), &config.env, &online, seed)?;
            std::fs::create_dir_all(&dir)?;
            report.registry.save(&dir.join("registry.json"))?;
            agent.save(&dir.join("agent.bin"), serde_json::json!({ "seed": seed }))?;
            Ok(report)
        };
        let report = run().map_err(|e| e.context(&format!("train-online seed {seed}")))?;
        runs.push(SeedRun { seed, report });
    }

    let mut curve = Table::new(&["seed", "episode", "reward", "steps", "loss"]);
    for r in &runs {
        for e in &r.report.episodes {
            curve.push(vec![cell(r.seed), cell(e.episode), num(e.reward), cell(e.steps), num(e.loss)]);
        }
    }
    curve.write(&config.out, "curve", &hash)?;

    let longest = runs.iter().map(|r| r.report.episodes.len()).max().unwrap_or(0);
    let mut mean = Table::new(&["episode", "mean_reward", "seeds"]);
    for ep in 0..longest {
        let rewards: Vec<f64> = runs.iter().filter_map(|r| r.report.episodes.get(ep)).map(|e| e.reward).collect();
        mean.push(vec![
            cell(ep),
            num(rewards.iter().sum::<f64>() / rewards.len() as f64),
            cell(rewards.len()),
        ]);
    }
    mean.write(&config.out, "curve_mean", &hash)?;
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub kind: AgentKind,
    pub size: usize,
    pub seed: u64,
    pub final_mean: f64,
    pub episodes: usize,
    pub updates: u64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub kind: AgentKind,
    pub size: usize,
    pub joint_actions: String,
    pub feasible: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub feasibility: Vec<Feasibility>,
}

impl SweepResult {
    pub fn cell(&self, kind: AgentKind, size: usize) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.kind == kind && r.size == size).collect()
    }

    pub fn is_feasible(&self, kind: AgentKind, size: usize) -> Option<bool> {
        self.feasibility
            .iter()
            .find(|f| f.kind == kind && f.size == size)
            .map(|f| f.feasible)
    }
}

/// Every (kind, size) cell of the control task: feasibility verdicts for all
/// cells, one training row per seed for the feasible ones. Cell failures are
/// recorded and the sweep moves on.
pub fn sweep_cmd(config: &RunConfig) -> Result<SweepResult, CliError> {
    if config.env.kind != EnvKind::CoopControl {
        return Err(CliError::Config("sweep runs on the coop_control environment".into()));
    }
    write_config(config)?;
    let hash = config.hash();
    let mut online = config.online.clone();
    online.checkpoint_dir = None;
    let mut result = SweepResult {
        rows: Vec::new(),
        feasibility: Vec::new(),
    };
    for &kind in &config.sweep.kinds {
        for &size in &config.sweep.sizes {
            let mut spec = config.env.clone();
            spec.coop_control.action_size = size;
            let agent_config = AgentConfig {
                kind,
                ..config.agent.clone()
            };
            let verdict = check_feasible(&agent_config, &spec);
            result.feasibility.push(Feasibility {
                kind,
                size,
                joint_actions: joint_action_space_size(&spec.action_sizes()).to_string(),
                feasible: verdict.is_ok(),
                detail: verdict.as_ref().err().map(|e| e.to_string()).unwrap_or_default(),
            });
            if verdict.is_err() {
                info!("sweep {kind} size {size}: refused");
                continue;
            }
            for &seed in &config.seeds {
                info!("sweep {kind} size {size} seed {seed}");
                let run = || -> coopmarl_core::Result<OnlineReport> {
                    let mut agent = build_agent(&agent_config, &spec, seed)?;
                    train_online(agent.as_mut(), &spec, &online, seed)
                };
                result.rows.push(match run() {
                    Ok(report) => SweepRow {
                        kind,
                        size,
                        seed,
                        final_mean: report.final_mean(config.sweep.final_window),
                        episodes: report.episodes.len(),
                        updates: report.updates,
                        status: "ok".into(),
                    },
                    Err(e) => SweepRow {
                        kind,
                        size,
                        seed,
                        final_mean: f64::NAN,
                        episodes: 0,
                        updates: 0,
                        status: e.to_string(),
                    },
                });
            }
        }
    }

    let mut rows = Table::new(&["kind", "size", "seed", "final_mean_reward", "episodes", "updates", "status"]);
    for r in &result.rows {
        rows.push(vec![
            cell(r.kind),
            cell(r.size),
            cell(r.seed),
            num(r.final_mean),
            cell(r.episodes),
            cell(r.updates),
            r.status.clone(),
        ]);
    }
    rows.write(&config.out, "sweep", &hash)?;
    let mut feas = Table::new(&["kind", "size", "joint_actions", "feasible", "detail"]);
    for f in &result.feasibility {
        feas.push(vec![cell(f.kind), cell(f.size), f.joint_actions.clone(), cell(f.feasible), f.detail.clone()]);
    }
    feas.write(&config.out, "feasibility", &hash)?;
    Ok(result)
}

/// Collects the configured dataset from the checkpoints of `registry` using
/// the first seed; writes `dataset.jsonl` and a per-tag count table.
pub fn gen_dataset_cmd(config: &RunConfig, registry: &Path) -> Result<(TrajectoryHeader, Vec<Transition>), CliError> {
    write_config(config)?;
    let hash = config.hash();
    let seed = config.seeds[0];
    let reg = CheckpointRegistry::load(registry).map_err(|e| CliError::from(e).context("gen-dataset registry"))?;
    let (mut header, transitions) =
        generate_dataset(&config.dataset, &reg, &config.env, seed).map_err(|e| CliError::from(e).context("gen-dataset"))?;
    header.config_hash = Some(hash.clone());
    save_trajectories(&config.out.join("dataset.jsonl"), &header, &transitions)?;
    let mut counts = Table::new(&["tag", "episodes", "transitions"]);
    for tag in &header.policy_tags {
        let of_tag: Vec<&Transition> = transitions.iter().filter(|t| &t.policy == tag).collect();
        let mut episodes: Vec<u64> = of_tag.iter().map(|t| t.episode).collect();
        episodes.sort_unstable();
        episodes.dedup();
        counts.push(vec![tag.clone(), cell(episodes.len()), cell(of_tag.len())]);
    }
    counts.write(&config.out, "dataset_summary", &hash)?;
    Ok((header, transitions))
}

fn load_log(path: &Path, spec: &EnvSpec) -> Result<Vec<Transition>, CliError> {
    let (header, transitions) = load_trajectories(path).map_err(|e| CliError::from(e).context(&path.display().to_string()))?;
    let expected = spec.spec_hash();
    if header.env_spec_hash != expected {
        return Err(coopmarl_core::Error::SpecHash {
            expected,
            found: header.env_spec_hash,
        }
        .into());
    }
    Ok(transitions)
}

fn random_slice(log: &[Transition]) -> Vec<LoggedTrajectory> {
    filter_policy(trajectories(log), RANDOM_TAG)
}

#[derive(Debug, Clone)]
pub struct OfflineRun {
    pub seed: u64,
    pub curve: Vec<CurvePoint>,
    pub final_metric: f64,
}

/// Trains the configured agent on a logged dataset for every seed and records
/// the evaluation curve, starting from the untrained agent.
pub fn train_offline_cmd(config: &RunConfig, dataset: &Path) -> Result<Vec<OfflineRun>, CliError> {
    let transitions = load_log(dataset, &config.env)?;
    write_config(config)?;
    let hash = config.hash();
    let records = random_slice(&transitions);
    if config.offline_eval.metric == OfflineMetric::Ips && records.is_empty() {
        return Err(CliError::Config(format!("IPS metric needs {RANDOM_TAG:?} episodes in the dataset")));
    }
    let mut runs = Vec::new();
    for &seed in &config.seeds {
        info!("train-offline seed {seed}: {} on {} transitions", config.agent.kind, transitions.len());
        let metric = |agent: &dyn Agent| -> coopmarl_core::Result<f64> {
            match config.offline_eval.metric {
                OfflineMetric::Rollout => {
                    Ok(rollout_eval(agent, &config.env, config.offline_eval.rollout_episodes, seed ^ EVAL_SALT)?.mean)
                }
                OfflineMetric::Ips => {
                    let none = BootstrapConfig { resamples: 0, seed: 0 };
                    Ok(ips_estimate(&records, agent, RewardVariant::Source, &none)?.estimate)
                }
            }
        };
        let run = || -> Result<OfflineRun, CliError> {
            let mut agent = build_agent(&config.agent, &config.env, seed)?;
            let mut curve = vec![CurvePoint {
                updates: 0,
                metric: metric(agent.as_ref())?,
            }];
            curve.extend(train_offline(agent.as_mut(), &transitions, &config.offline, seed, &mut |a, _| metric(a))?);
            let final_metric = metric(agent.as_ref())?;
            agent.save(&seed_dir(config, seed).join("offline_agent.bin"), serde_json::json!({ "seed": seed }))?;
            Ok(OfflineRun {
                seed,
                curve,
                final_metric,
            })
        };
        runs.push(run().map_err(|e| e.context(&format!("train-offline seed {seed}")))?);
    }
    let mut table = Table::new(&["seed", "updates", "metric"]);
    for r in &runs {
        for p in &r.curve {
            table.push(vec![cell(r.seed), cell(p.updates), num(p.metric)]);
        }
    }
    table.write(&config.out, "offline_curve", &hash)?;
    Ok(runs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpsRow {
    pub seed: u64,
    pub model: String,
    pub result: IpsResult,
}

/// Offline ranking pipeline per seed: train the logging policy online, log a
/// policy/random mixture (unless `log` is given), train every model offline
/// on the log, and score all models with IPS on uniform-random sessions.
pub fn eval_ips_cmd(config: &RunConfig, log: Option<&Path>) -> Result<Vec<IpsRow>, CliError> {
    let ips = &config.ips;
    if ips.models.is_empty() {
        return Err(CliError::Config("ips.models is empty".into()));
    }
    let given = log.map(|p| load_log(p, &config.env)).transpose()?;
    write_config(config)?;
    let hash = config.hash();
    let mut online = config.online.clone();
    online.checkpoint_dir = None;
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let run = || -> Result<Vec<IpsRow>, CliError> {
            let generated;
            let log: &[Transition] = match &given {
                Some(l) => l,
                None => {
                    info!("eval-ips seed {seed}: training logger {}", ips.logger.kind);
                    let mut logger = build_agent(&ips.logger, &config.env, seed)?;
                    train_online(logger.as_mut(), &config.env, &online, seed)?;
                    let tag = logger.kind().name();
                    generated = collect_mixture(
                        logger.as_ref(),
                        tag,
                        &config.env,
                        ips.log_episodes,
                        ips.random_share,
                        seed ^ LOG_SALT,
                    )?;
                    &generated
                }
            };
            let mut models: Vec<Box<dyn Agent>> = Vec::new();
            for m in &ips.models {
                info!("eval-ips seed {seed}: model {}", m.name);
                let agent_config = AgentConfig {
                    kind: m.kind,
                    gamma: m.gamma.or(config.agent.gamma),
                    ..config.agent.clone()
                };
                let mut agent = build_agent(&agent_config, &config.env, seed)?;
                if m.kind.learns() {
                    train_offline(agent.as_mut(), log, &config.offline, seed, &mut |_, _| Ok(f64::NAN))?;
                }
                models.push(agent);
            }
            let results: Vec<Vec<IpsResult>> = if ips.eval_episodes > 0 {
                let refs: Vec<&dyn Agent> = models.iter().map(|m| m.as_ref()).collect();
                ips_on_fresh_random_log(
                    &refs,
                    &config.env,
                    ips.eval_episodes,
                    seed ^ EVAL_SALT,
                    &RewardVariant::ALL,
                    &ips.bootstrap,
                )?
            } else {
                let records = random_slice(log);
                models
                    .iter()
                    .map(|m| ips_all_variants(&records, m.as_ref(), &RewardVariant::ALL, &ips.bootstrap))
                    .collect::<coopmarl_core::Result<_>>()?
            };
            Ok(ips
                .models
                .iter()
                .zip(results)
                .flat_map(|(m, res)| {
                    res.into_iter().map(move |result| IpsRow {
                        seed,
                        model: m.name.clone(),
                        result,
                    })
                })
                .collect())
        };
        rows.extend(run().map_err(|e| e.context(&format!("eval-ips seed {seed}")))?);
    }

    let mut table = Table::new(&["seed", "model", "variant", "estimate", "lower", "upper", "n", "floored"]);
    for r in &rows {
        table.push(vec![
            cell(r.seed),
            r.model.clone(),
            r.result.variant.tag().into(),
            num(r.result.estimate),
            num(r.result.lower),
            num(r.result.upper),
            cell(r.result.n),
            cell(r.result.floored),
        ]);
    }
    table.write(&config.out, "ips", &hash)?;

    let mut summary = Table::new(&["model", "variant", "mean_estimate", "mean_lower", "mean_upper", "seeds"]);
    for m in &ips.models {
        for v in RewardVariant::ALL {
            let of: Vec<&IpsResult> = rows
                .iter()
                .filter(|r| r.model == m.name && r.result.variant == v)
                .map(|r| &r.result)
                .collect();
            let mean = |f: fn(&IpsResult) -> f64| of.iter().map(|r| f(r)).sum::<f64>() / of.len() as f64;
            summary.push(vec![
                m.name.clone(),
                v.tag().into(),
                num(mean(|r| r.estimate)),
                num(mean(|r| r.lower)),
                num(mean(|r| r.upper)),
                cell(of.len()),
            ]);
        }
    }
    summary.write(&config.out, "ips_summary", &hash)?;
    Ok(rows)
}

/// Seed-mean of one model's estimates for one reward variant.
pub fn aggregate_estimate(rows: &[IpsRow], model: &str, variant: RewardVariant) -> Option<f64> {
    let of: Vec<f64> = rows
        .iter()
        .filter(|r| r.model == model && r.result.variant == variant)
        .map(|r| r.result.estimate)
        .collect();
    (!of.is_empty()).then(|| of.iter().sum::<f64>() / of.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutRow {
    pub seed: u64,
    pub mean: f64,
    pub stderr: f64,
}

/// Greedy rollouts of a saved agent in the environment it was trained on,
/// one row per seed.
pub fn eval_rollout_cmd(config: &RunConfig, agent_path: &Path) -> Result<Vec<RolloutRow>, CliError> {
    let meta = read_agent_meta(agent_path)?;
    let agent = load_agent(agent_path)?;
    write_config(config)?;
    let hash = config.hash();
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let r = rollout_eval(agent.as_ref(), &meta.env, config.rollout.episodes, seed)
            .map_err(|e| CliError::from(e).context(&format!("eval-rollout seed {seed}")))?;
        rows.push(RolloutRow {
            seed,
            mean: r.mean,
            stderr: r.stderr,
        });
    }
    let mut table = Table::new(&["seed", "episodes", "mean_return", "stderr"]);
    for r in &rows {
        table.push(vec![cell(r.seed), cell(config.rollout.episodes), num(r.mean), num(r.stderr)]);
    }
    table.write(&config.out, "rollout", &hash)?;
    Ok(rows)
}
