//! Training loop, evaluation, ablation sweeps and result export.
//!
//! A run is organised in epochs of `cycles` cycles; each cycle collects
//! `episodes` episodes (the first `demo_episodes()` of them demonstrated),
//! stores every trajectory with HER and then performs `updates_per_cycle`
//! gradient updates. After each epoch the agent is tested greedily per task
//! step and on the final goal, and the adaptive schedules are refreshed.

mod config;
mod metrics;
mod plot;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{ExperimentConfig, ExplorationConfig};
pub use metrics::{
    aggregate, csv_header, mean_std, read_csv, write_csv, Curve, MetricsLog, MetricsRow,
};
pub use plot::render_svg;

use crate::agents::{Agent, AgentKind};
use crate::demos::{run_demonstrated_episode, run_plain_episode, Policy};
use crate::envs::{make_env, Env};
use crate::error::{Error, Result};
use crate::exploration::{sigma_scale, EgaSchedule, EgrSchedule, ExploreParams, SuccessTracker};
use crate::grl::ReplayBuffer;
use crate::nn::checkpoint::{ByteReader, ByteWriter};

/// Per-step success of `k` greedy demonstrated episodes. Step `i` counts as
/// solved when its subgoal is reached after subgoals `0..i` were reached in
/// order within the same episode.
pub fn evaluate_steps(
    policy: &mut dyn Policy,
    env: &mut dyn Env,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::invalid("need at least one test episode"));
    }
    let mut hits = vec![0usize; env.num_steps()];
    for _ in 0..k {
        let seed = rng.random();
        let rec = run_demonstrated_episode(policy, env, seed, None, rng)?;
        for (h, a) in hits.iter_mut().zip(&rec.achieved_at) {
            *h += usize::from(a.is_some());
        }
    }
    Ok(hits.into_iter().map(|h| h as f64 / k as f64).collect())
}

/// Fraction of `k` greedy episodes, given only the final goal, that reach
/// it at some step.
pub fn evaluate_final(
    policy: &mut dyn Policy,
    env: &mut dyn Env,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("need at least one test episode"));
    }
    let mut hits = 0;
    for _ in 0..k {
        let seed = rng.random();
        hits += usize::from(run_plain_episode(policy, env, seed, None, rng)?.final_success);
    }
    Ok(hits as f64 / k as f64)
}

/// Behaviour parameters per task step for the coming cycle.
fn exploration(
    cfg: &ExperimentConfig,
    averaged: &[f64],
    env_steps: u64,
    beta: f64,
) -> Vec<ExploreParams> {
    let e = &cfg.exploration;
    let n = averaged.len();
    let zip = |eps: Vec<f64>, sigma: Vec<f64>| {
        eps.into_iter()
            .zip(sigma)
            .map(|(eps, sigma)| ExploreParams { eps, sigma })
            .collect()
    };
    match (cfg.agent, cfg.use_adaptive) {
        (AgentKind::Dqn, true) => {
            let s = EgrSchedule {
                eps_start: e.eps_start,
                eps_end: e.eps_end,
                beta,
            };
            zip(s.adaptive(averaged), vec![0.0; n])
        }
        (AgentKind::Dqn, false) => {
            let s = EgrSchedule {
                eps_start: e.eps_start,
                eps_end: e.eps_end,
                beta,
            };
            zip(vec![s.baseline(env_steps); n], vec![0.0; n])
        }
        (AgentKind::Ddpg, true) => {
            let (eps, sigma) = EgaSchedule {
                eps0: e.eps0,
                sigma0: e.sigma0,
            }
            .adaptive(averaged);
            zip(eps, sigma)
        }
        (AgentKind::Ddpg, false) => zip(vec![e.eps0; n], vec![e.sigma0; n]),
        (AgentKind::Sac, true) => zip(vec![0.0; n], sigma_scale(averaged)),
        (AgentKind::Sac, false) => zip(vec![0.0; n], vec![1.0; n]),
    }
}

pub fn build_env(cfg: &ExperimentConfig) -> Box<dyn Env> {
    make_env(cfg.env, &cfg.environment)
}

pub fn build_agent(cfg: &ExperimentConfig, env: &dyn Env, seed: u64) -> Result<Agent> {
    Agent::new(
        cfg.agent,
        &cfg.learner,
        env.obs_dim(),
        env.goal_space().dim(),
        env.action_space(),
        seed,
    )
}

/// Trains one seed, calling `on_epoch` after each epoch is logged.
pub fn train_with(
    cfg: &ExperimentConfig,
    seed: u64,
    on_epoch: &mut dyn FnMut(&MetricsLog, &Agent) -> Result<()>,
) -> Result<MetricsLog> {
    cfg.validate()?;
    let mut env = build_env(cfg);
    let mut agent = build_agent(cfg, env.as_ref(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed);
    eval_rng.set_stream(1);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
    let n = env.num_steps();
    let mut tracker = SuccessTracker::new(n, cfg.tau_s)?;
    let horizon = env.horizon() as u64;
    let total = (cfg.epochs * cfg.cycles * cfg.episodes) as u64 * horizon;
    let beta = cfg.exploration.beta.unwrap_or(total as f64 / 5.0);
    let demos = cfg.demo_episodes();

    let mut log = MetricsLog::new(cfg.label(), seed);
    let mut env_steps = 0u64;
    let start = Instant::now();
    for epoch in 0..cfg.epochs {
        let mut eps_sum = vec![0.0; n];
        let mut sigma_sum = vec![0.0; n];
        let mut reached = vec![0usize; n];
        for _ in 0..cfg.cycles {
            let explore = exploration(cfg, tracker.averaged(), env_steps, beta);
            for (i, p) in explore.iter().enumerate() {
                eps_sum[i] += p.eps;
                sigma_sum[i] += p.sigma;
            }
            for j in 0..cfg.episodes {
                let env_seed = rng.random();
                let rec = if j < demos {
                    run_demonstrated_episode(
                        &mut agent,
                        env.as_mut(),
                        env_seed,
                        Some(&explore),
                        &mut rng,
                    )?
                } else {
                    run_plain_episode(&mut agent, env.as_mut(), env_seed, Some(&explore), &mut rng)?
                };
                env_steps += rec.steps as u64;
                for (r, a) in reached.iter_mut().zip(&rec.achieved_at) {
                    *r += usize::from(a.is_some());
                }
                for traj in &rec.trajectories {
                    agent.observe(traj.transitions());
                    buffer.store_trajectory(traj, cfg.her_k, env.goal_space(), &mut rng)?;
                }
            }
            for _ in 0..cfg.updates_per_cycle {
                let batch = buffer.sample_batch(cfg.learner.batch_size, &mut rng)?;
                agent.update(&batch)?;
            }
        }
        let step_success =
            evaluate_steps(&mut agent, env.as_mut(), cfg.eval_episodes, &mut eval_rng)?;
        if cfg.use_adaptive {
            tracker.update(&step_success)?;
        }
        let final_success =
            evaluate_final(&mut agent, env.as_mut(), cfg.eval_episodes, &mut eval_rng)?;
        let c = cfg.cycles as f64;
        let row = MetricsRow {
            epoch,
            final_success,
            step_success,
            eps: eps_sum.iter().map(|v| v / c).collect(),
            sigma: sigma_sum.iter().map(|v| v / c).collect(),
            env_steps,
        };
        log.rows.push(row);
        log.averaged_success.push(tracker.averaged().to_vec());
        log.wall_secs.push(start.elapsed().as_secs_f64());
        let episodes = (cfg.cycles * cfg.episodes) as f64;
        log.train_success
            .push(reached.iter().map(|&r| r as f64 / episodes).collect());
        on_epoch(&log, &agent)?;
    }
    Ok(log)
}

pub fn train(cfg: &ExperimentConfig, seed: u64) -> Result<MetricsLog> {
    train_with(cfg, seed, &mut |_, _| Ok(()))
}

/// One swept parameter and its values, e.g. `eta=0,0.5,1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<f64>,
}

const SWEEP_KEYS: [&str; 5] = ["eta", "tau_s", "use_demos", "use_adaptive", "her_k"];

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (key, vals) = s
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("sweep {s:?} is not key=v1,v2,...")))?;
        let key = key.trim();
        if !SWEEP_KEYS.contains(&key) {
            return Err(Error::invalid(format!(
                "cannot sweep {key:?}; expected one of {}",
                SWEEP_KEYS.join("|")
            )));
        }
        let values = vals
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::invalid(format!("sweep {s:?}: {e}")))?;
        if values.is_empty() {
            return Err(Error::invalid("empty sweep"));
        }
        Ok(Self {
            key: key.to_string(),
            values,
        })
    }
}

fn apply(cfg: &mut ExperimentConfig, key: &str, v: f64) -> Result<()> {
    let flag = |v: f64| match v {
        0.0 => Ok(false),
        1.0 => Ok(true),
        _ => Err(Error::invalid(format!("flag sweeps take 0 or 1, got {v}"))),
    };
    match key {
        "eta" => cfg.eta = v,
        "tau_s" => cfg.tau_s = v,
        "use_demos" => cfg.use_demos = flag(v)?,
        "use_adaptive" => cfg.use_adaptive = flag(v)?,
        "her_k" if v >= 0.0 && v.fract() == 0.0 => cfg.her_k = v as usize,
        _ => return Err(Error::invalid(format!("bad sweep value {key}={v}"))),
    }
    Ok(())
}

/// Cartesian product of the sweep axes; each setting is labelled
/// `key=value` joined by commas. An empty sweep yields the base config.
pub fn expand_sweep(base: &ExperimentConfig, sweep: &[SweepAxis]) -> Result<Vec<ExperimentConfig>> {
    let mut out = vec![(base.clone(), Vec::<String>::new())];
    for axis in sweep {
        let mut next = Vec::with_capacity(out.len() * axis.values.len());
        for (cfg, label) in &out {
            for &v in &axis.values {
                let mut c = cfg.clone();
                apply(&mut c, &axis.key, v)?;
                let mut l = label.clone();
                l.push(format!("{}={v}", axis.key));
                next.push((c, l));
            }
        }
        out = next;
    }
    out.into_iter()
        .map(|(mut c, l)| {
            if !l.is_empty() {
                c.setting = l.join(",");
            }
            c.validate()?;
            Ok(c)
        })
        .collect()
}

/// Runs every (setting, seed) pair, in parallel across the rayon pool.
/// Results come back in setting-major, seed-minor order.
pub fn run_settings(settings: &[ExperimentConfig], seeds: &[u64]) -> Result<Vec<MetricsLog>> {
    if settings.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("nothing to run"));
    }
    let jobs: Vec<(&ExperimentConfig, u64)> = settings
        .iter()
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    jobs.into_par_iter().map(|(c, s)| train(c, s)).collect()
}

pub fn run_ablation(
    base: &ExperimentConfig,
    sweep: &[SweepAxis],
    seeds: &[u64],
) -> Result<Vec<MetricsLog>> {
    run_settings(&expand_sweep(base, sweep)?, seeds)
}

const RUN_MAGIC: &[u8; 8] = b"A2RUN001";

/// Agent snapshot with the config needed to rebuild its environment.
#[derive(Debug, Clone)]
pub struct RunCheckpoint {
    pub config: ExperimentConfig,
    pub seed: u64,
    /// Number of completed epochs.
    pub epochs: usize,
    pub agent: Agent,
}

impl RunCheckpoint {
    pub fn write<W: Write>(
        w: W,
        config: &ExperimentConfig,
        seed: u64,
        epochs: usize,
        agent: &Agent,
    ) -> Result<()> {
        let mut w = ByteWriter::new(w);
        w.bytes(RUN_MAGIC)?;
        w.str(&config.to_toml()?)?;
        w.u64(seed)?;
        w.u64(epochs as u64)?;
        let mut inner = w.into_inner();
        agent.save(&mut inner)?;
        inner.flush()?;
        Ok(())
    }

    pub fn read<R: std::io::Read>(r: R) -> Result<Self> {
        let mut r = ByteReader::new(r);
        r.expect_magic(RUN_MAGIC)?;
        let config = ExperimentConfig::from_toml(&r.str()?)
            .map_err(|e| Error::Checkpoint(format!("embedded config: {e}")))?;
        let seed = r.u64()?;
        let epochs = r.u64()? as usize;
        let agent = Agent::load(r.into_inner())?;
        Ok(Self {
            config,
            seed,
            epochs,
            agent,
        })
    }

    /// Writes to a sibling temp file then renames, so an interrupted save
    /// never leaves a truncated checkpoint.
    pub fn save(
        path: &Path,
        config: &ExperimentConfig,
        seed: u64,
        epochs: usize,
        agent: &Agent,
    ) -> Result<()> {
        let tmp = path.with_extension("tmp");
        Self::write(
            BufWriter::new(File::create(&tmp)?),
            config,
            seed,
            epochs,
            agent,
        )?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}
