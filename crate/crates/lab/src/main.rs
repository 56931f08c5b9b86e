use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use msacl::checkpoint::Checkpoint;
use msacl::commands::{self, EvalRequest};
use msacl::config::RunConfig;
use msacl::report;
use msacl::{LabError, Result};
use msacl_core::eval::{Norm, DEFAULT_EPISODES, DEFAULT_INIT_SEED};

// Training allocates many short-lived large matrices; the system allocator
// returns them to the kernel and pays for the page faults on every batch.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "msacl", version, about = "Train and evaluate Lyapunov-certified multi-step actor-critic agents")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L2,
    Linf,
}

impl From<NormArg> for Norm {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::L2 => Norm::L2,
            NormArg::Linf => Norm::LInf,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every seed of a run config (or only the given ones).
    Train {
        config: PathBuf,
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Override `train.horizon`.
        #[arg(long)]
        horizon: Option<usize>,
        /// Override `train.total_env_steps`.
        #[arg(long)]
        steps: Option<u64>,
        /// Replace an existing run directory.
        #[arg(long)]
        force: bool,
    },
    /// Evaluate a checkpoint, optionally under perturbations.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Physical parameter override, `name=value`; repeatable.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        #[arg(long)]
        reference: Option<String>,
        #[arg(long, default_value_t = DEFAULT_EPISODES)]
        episodes: usize,
        #[arg(long, default_value_t = DEFAULT_INIT_SEED)]
        init_seed: u64,
        /// Sample actions instead of using the mean.
        #[arg(long)]
        stochastic: bool,
        #[arg(long, value_enum, default_value = "l2")]
        norm: NormArg,
        /// Report path; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one run per horizon and seed, then merge the final reports.
    SweepN {
        config: PathBuf,
        #[arg(long = "n", value_delimiter = ',', required = true)]
        horizons: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on every robustness cell of its task.
    Robustness {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPISODES)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample the Lyapunov network on a 2-D slice of the state space.
    Grid {
        checkpoint: PathBuf,
        /// State indices for the x and y axes, `i,j`.
        #[arg(long, value_parser = parse_pair::<usize>, default_value = "0,1")]
        axes: (usize, usize),
        #[arg(long, default_value_t = 101)]
        res: usize,
        /// Shared bounds of both axes, `lo,hi`.
        #[arg(long, value_parser = parse_pair::<f64>, allow_hyphen_values = true, default_value = "-2,2")]
        range: (f64, f64),
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick the evaluation with the highest AMCR across runs.
    SelectBest {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> std::result::Result<(T, T), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected two comma-separated values, got {s:?}"))?;
    let parse = |x: &str| x.trim().parse::<T>().map_err(|_| format!("bad value {x:?} in {s:?}"));
    Ok((parse(a)?, parse(b)?))
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Train {
            config,
            seeds,
            horizon,
            steps,
            force,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(n) = horizon {
                cfg.train.horizon = n;
            }
            if let Some(s) = steps {
                cfg.train.total_env_steps = s;
            }
            cfg.validate()?;
            let seeds = if seeds.is_empty() { cfg.run.seeds.clone() } else { seeds };
            for seed in seeds {
                let dir = commands::train(&cfg, seed, force)?;
                println!("{}", dir.display());
            }
        }
        Cmd::Eval {
            checkpoint,
            noise,
            params,
            reference,
            episodes,
            init_seed,
            stochastic,
            norm,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let req = EvalRequest {
                noise,
                params: params.into_iter().collect::<BTreeMap<_, _>>(),
                reference: reference.map(|r| r.parse()).transpose()?,
                episodes,
                init_seed,
                stochastic,
                norm: norm.into(),
            };
            let rep = commands::evaluate(&ckpt, &req)?;
            match out {
                Some(p) => report::write_json(&p, &rep)?,
                None => println!("{}", serde_json::to_string_pretty(&rep)?),
            }
        }
        Cmd::SweepN {
            config,
            horizons,
            jobs,
            out,
        } => {
            let exe = std::env::current_exe().map_err(|e| LabError::Subprocess(e.to_string()))?;
            let (path, rows) = commands::sweep_n(&exe, &config, &horizons, jobs, out.as_deref())?;
            let seeds: Vec<u64> = {
                let mut s: Vec<u64> = rows.iter().map(|r| r.seed).collect();
                s.sort_unstable();
                s.dedup();
                s
            };
            let mono = report::monotone_seeds(&rows);
            println!("{}", path.display());
            println!("RR@0.01 non-decreasing in n for {}/{} seeds", mono.len(), seeds.len());
        }
        Cmd::Robustness {
            checkpoint,
            episodes,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let reps = commands::robustness(&ckpt, episodes, &out)?;
            println!("{} cells written to {}", reps.len(), out.display());
        }
        Cmd::Grid {
            checkpoint,
            axes,
            res,
            range,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            commands::grid(&ckpt, axes, res, range, &out)?;
            println!("{}", out.display());
        }
        Cmd::SelectBest { runs } => {
            let (run, row) = commands::select_best(&runs)?;
            let out = serde_json::json!({
                "run": run,
                "env_steps": row.env_steps,
                "amcr": row.amcr,
                "report": run.join(&row.report),
                "checkpoint": run.join(&row.checkpoint),
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_divergence() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
