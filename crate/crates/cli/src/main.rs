use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use a2_core::demos::Policy;
use a2_core::harness::{
    aggregate, build_env, evaluate_final, evaluate_steps, read_csv, render_svg, run_ablation,
    train_with, write_csv, ExperimentConfig, MetricsLog, RunCheckpoint, SweepAxis,
};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "a2",
    version,
    about = "Goal-conditioned RL with abstract demonstrations and adaptive exploration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed; writes metrics.csv, config.toml and checkpoint.bin.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Train every sweep setting for several seeds; writes metrics.csv and curves.svg.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// `key=v1,v2,...`; repeat for a Cartesian grid.
        #[arg(long)]
        sweep: Vec<String>,
        /// Number of seeds, numbered from 0.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value = "ablation")]
        out: PathBuf,
    },
    /// Plot mean ± std final-goal success from metrics CSVs.
    Plot {
        /// A metrics CSV or a directory searched for metrics.csv files.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "final-goal success")]
        title: String,
    },
    /// Greedy test of a saved agent.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum)]
        render: Option<Render>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Render {
    Text,
}

fn write_metrics(path: &Path, logs: &[MetricsLog]) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(logs, BufWriter::new(f))?;
    Ok(())
}

fn train(config: &Path, seed: u64, out: &Path, quiet: bool) -> Result<()> {
    let cfg =
        ExperimentConfig::load(config).with_context(|| format!("reading {}", config.display()))?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let ckpt = out.join("checkpoint.bin");
    let log = train_with(&cfg, seed, &mut |log, agent| {
        let row = log.rows.last().expect("row logged before callback");
        RunCheckpoint::save(&ckpt, &cfg, seed, log.rows.len(), agent)?;
        if !quiet {
            let train = log
                .train_success
                .last()
                .map(Vec::as_slice)
                .unwrap_or_default();
            eprintln!(
                "epoch {:>3}  final {:.3}  test steps {:?}  train steps {:.3?}  env_steps {}",
                row.epoch, row.final_success, row.step_success, train, row.env_steps
            );
        }
        Ok(())
    })?;
    write_metrics(&out.join("metrics.csv"), &[log])
}

fn ablate(config: &Path, sweep: &[String], seeds: u64, out: &Path) -> Result<()> {
    let base =
        ExperimentConfig::load(config).with_context(|| format!("reading {}", config.display()))?;
    let axes = sweep
        .iter()
        .map(|s| s.parse::<SweepAxis>())
        .collect::<Result<Vec<_>, _>>()?;
    if seeds == 0 {
        bail!("--seeds must be positive");
    }
    let seeds: Vec<u64> = (0..seeds).collect();
    fs::create_dir_all(out)?;
    let logs = run_ablation(&base, &axes, &seeds)?;
    write_metrics(&out.join("metrics.csv"), &logs)?;
    let curves = aggregate(&logs)?;
    fs::write(
        out.join("curves.svg"),
        render_svg(&curves, &base.env.to_string())?,
    )?;
    println!("setting,seeds,peak_mean,last_mean,last_std");
    for c in &curves {
        println!(
            "{},{},{:.3},{:.3},{:.3}",
            c.setting,
            c.seeds,
            c.peak(),
            c.last(),
            c.std.last().copied().unwrap_or(0.0)
        );
    }
    Ok(())
}

fn collect_csvs(input: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if input.is_file() {
        out.push(input.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<_> = fs::read_dir(input)
        .with_context(|| format!("reading {}", input.display()))?
        .collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            collect_csvs(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "metrics.csv") {
            out.push(p);
        }
    }
    Ok(())
}

fn plot(input: &Path, out: &Path, title: &str) -> Result<()> {
    let mut files = Vec::new();
    collect_csvs(input, &mut files)?;
    if files.is_empty() {
        bail!("no metrics.csv under {}", input.display());
    }
    let mut logs = Vec::new();
    for f in &files {
        logs.extend(read_csv(File::open(f)?).with_context(|| format!("parsing {}", f.display()))?);
    }
    fs::write(out, render_svg(&aggregate(&logs)?, title)?)?;
    Ok(())
}

fn eval(checkpoint: &Path, episodes: usize, seed: u64, render: Option<Render>) -> Result<()> {
    let ck = RunCheckpoint::load(checkpoint)
        .with_context(|| format!("loading {}", checkpoint.display()))?;
    let mut env = build_env(&ck.config);
    let mut agent = ck.agent;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some(Render::Text) = render {
        let (mut obs, goal) = env.reset(seed);
        println!("{}", env.render_text());
        for _ in 0..env.horizon() {
            let a = agent.act(&obs, &goal, None, &mut rng)?;
            let step = env.step(&a)?;
            obs = step.observation;
            println!(
                "t={} action={a:?} reward={}\n{}",
                step.timestep,
                step.reward,
                env.render_text()
            );
            if step.reward == 0.0 {
                break;
            }
        }
    }
    let steps = evaluate_steps(&mut agent, env.as_mut(), episodes, &mut rng)?;
    let fin = evaluate_final(&mut agent, env.as_mut(), episodes, &mut rng)?;
    println!(
        "{} {} after {} epochs (seed {})",
        ck.config.agent, ck.config.env, ck.epochs, ck.seed
    );
    println!("step success: {steps:?}");
    println!("final success: {fin}");
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            seed,
            out,
            quiet,
        } => train(&config, seed, &out, quiet),
        Command::Ablate {
            config,
            sweep,
            seeds,
            out,
        } => ablate(&config, &sweep, seeds, &out),
        Command::Plot { input, out, title } => plot(&input, &out, &title),
        Command::Eval {
            checkpoint,
            episodes,
            seed,
            render,
        } => eval(&checkpoint, episodes, seed, render),
    }
}
