//! The work behind each subcommand, callable without the argument parser.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Child, Command};
use std::time::Duration;

use msacl_core::env::reference::TrackingRef;
use msacl_core::env::{Env, PerturbationSpec};
use msacl_core::eval::{self, EvalOptions, EvalRecord, EvalReport, Norm, DEFAULT_EPISODES, DEFAULT_INIT_SEED};
use msacl_core::learner::Trainer;
use serde::Serialize;

use crate::checkpoint::{Checkpoint, CheckpointHeader};
use crate::config::RunConfig;
use crate::error::{LabError, Result};
use crate::report::{self, CsvLog, EvalLogRow, SweepRow, TrainLog, CONFIG_SNAPSHOT, EVAL_LOG, TRAIN_LOG};

pub const FINAL_REPORT: &str = "final_eval.json";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(LabError::io(p))
}

fn checkpoint_of(t: &Trainer, cfg: &RunConfig) -> Checkpoint {
    let header = CheckpointHeader {
        env: t.env.id(),
        reference: t.env.reference().map(|r| r.to_string()),
        param_overrides: cfg.env.params.clone(),
        noise_sigma: cfg.env.noise_sigma,
        seed: cfg.train.seed,
        env_steps: t.env_steps,
        iterations: t.iterations,
        horizon: cfg.train.horizon,
        alpha1: cfg.train.alpha1,
        alpha2: cfg.train.alpha2,
        alpha3: cfg.train.alpha3,
        log_alpha: 0.0,
        action_low: Vec::new(),
        action_high: Vec::new(),
        nets: Vec::new(),
    };
    Checkpoint::new(header, t.agent.clone())
}

/// Trains one seed of `cfg` into its run directory and returns the path.
pub fn train(cfg: &RunConfig, seed: u64, force: bool) -> Result<PathBuf> {
    let cfg = cfg.for_seed(seed);
    cfg.validate()?;
    let dir = cfg.run_dir(seed)?;
    if dir.exists() {
        if !force {
            return Err(LabError::RunExists(dir));
        }
        std::fs::remove_dir_all(&dir).map_err(LabError::io(&dir))?;
    }
    mkdir(&dir.join("checkpoints"))?;
    mkdir(&dir.join("evals"))?;
    let snap = dir.join(CONFIG_SNAPSHOT);
    std::fs::write(&snap, cfg.to_toml()?).map_err(LabError::io(&snap))?;

    let env = cfg.env.build()?;
    let opts = cfg.eval.options(&cfg.train);
    let mut trainer = Trainer::new(env, cfg.train.clone())?;
    let mut train_log = TrainLog::create(&dir.join(TRAIN_LOG))?;
    let mut eval_log = CsvLog::<EvalLogRow>::create(&dir.join(EVAL_LOG))?;
    let mut last: Option<(u64, String, String)> = None;

    let snapshot = |t: &Trainer, eval_log: &mut CsvLog<EvalLogRow>| -> Result<(u64, String, String)> {
        let (rep, _) = eval::evaluate(&t.env, &t.agent.policy, &opts, &cfg.env.params)?;
        let rep_rel = format!("evals/eval-{:09}.json", t.env_steps);
        let ckpt_rel = format!("checkpoints/ckpt-{:09}.ckpt", t.env_steps);
        report::write_json(&dir.join(&rep_rel), &rep)?;
        checkpoint_of(t, &cfg).save(&dir.join(&ckpt_rel))?;
        eval_log.push(&EvalLogRow::new(&rep, t.env_steps, t.iterations, &rep_rel, &ckpt_rel))?;
        eval_log.flush()?;
        Ok((t.env_steps, rep_rel, ckpt_rel))
    };

    let interval = cfg.eval.interval;
    let mut next_eval = interval;
    trainer.run(|t, log| {
        train_log.push(log)?;
        if t.env_steps >= next_eval {
            last = Some(snapshot(t, &mut eval_log)?);
            while next_eval <= t.env_steps {
                next_eval += interval;
            }
        }
        Ok::<_, LabError>(())
    })?;
    train_log.flush()?;
    if last.as_ref().is_none_or(|l| l.0 != trainer.env_steps) {
        last = Some(snapshot(&trainer, &mut eval_log)?);
    }
    let (_, rep_rel, ckpt_rel) = last.expect("final snapshot");
    let copy = |from: &str, to: &str| -> Result<()> {
        std::fs::copy(dir.join(from), dir.join(to))
            .map(|_| ())
            .map_err(LabError::io(dir.join(to)))
    };
    copy(&ckpt_rel, FINAL_CHECKPOINT)?;
    copy(&rep_rel, FINAL_REPORT)?;
    Ok(dir)
}

/// Perturbations and protocol switches for [`evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRequest {
    pub noise: f64,
    pub params: BTreeMap<String, f64>,
    pub reference: Option<TrackingRef>,
    pub episodes: usize,
    pub init_seed: u64,
    pub stochastic: bool,
    pub norm: Norm,
}

impl Default for EvalRequest {
    fn default() -> Self {
        Self {
            noise: 0.0,
            params: BTreeMap::new(),
            reference: None,
            episodes: DEFAULT_EPISODES,
            init_seed: DEFAULT_INIT_SEED,
            stochastic: false,
            norm: Norm::L2,
        }
    }
}

/// The nominal training environment of a checkpoint, without noise.
pub fn base_env(c: &Checkpoint) -> Result<Env> {
    let h = &c.header;
    let mut env = Env::new(h.env).with_params(&h.param_overrides)?;
    if let Some(r) = &h.reference {
        env = env.with_reference(r.parse()?)?;
    }
    Ok(env)
}

fn options(c: &Checkpoint, req: &EvalRequest) -> EvalOptions {
    let h = &c.header;
    EvalOptions {
        episodes: req.episodes,
        init_seed: req.init_seed,
        deterministic: !req.stochastic,
        norm: req.norm,
        alpha: (h.alpha1, h.alpha2, h.alpha3),
    }
}

pub fn evaluate(c: &Checkpoint, req: &EvalRequest) -> Result<EvalReport> {
    let mut env = base_env(c)?;
    let perturb = PerturbationSpec {
        noise_sigma: req.noise,
        param_overrides: req.params.clone(),
    };
    env = env.with_perturbation(&perturb)?;
    if let Some(r) = req.reference {
        env = env.with_reference(r)?;
    }
    let mut all = c.header.param_overrides.clone();
    all.extend(req.params.clone());
    let (rep, _) = eval::evaluate(&env, &c.agent.policy, &options(c, req), &all)?;
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub cell: usize,
    pub noise_sigma: f64,
    pub overrides: String,
    pub amcr: f64,
    pub amcr_std: f64,
    pub amcc: f64,
    pub rr_0_2: f64,
    pub rr_0_1: f64,
    pub rr_0_05: f64,
    pub rr_0_01: f64,
    pub report: String,
}

/// Runs every robustness cell of the checkpoint's task, writing one report
/// per cell and a summary table into `out`.
pub fn robustness(c: &Checkpoint, episodes: usize, out: &Path) -> Result<Vec<EvalReport>> {
    mkdir(out)?;
    let mut table = CsvLog::<RobustnessRow>::create(&out.join("robustness.csv"))?;
    let mut reports = Vec::new();
    for (i, cell) in eval::robustness_cells(c.header.env).into_iter().enumerate() {
        let req = EvalRequest {
            noise: cell.noise_sigma,
            params: cell.param_overrides.clone(),
            episodes,
            ..EvalRequest::default()
        };
        let rep = evaluate(c, &req)?;
        let name = format!("cell-{i:02}.json");
        report::write_json(&out.join(&name), &rep)?;
        let row = EvalLogRow::new(&rep, c.header.env_steps, c.header.iterations, &name, "");
        table.push(&RobustnessRow {
            cell: i,
            noise_sigma: cell.noise_sigma,
            overrides: cell
                .param_overrides
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(";"),
            amcr: rep.amcr,
            amcr_std: rep.amcr_std,
            amcc: rep.amcc,
            rr_0_2: row.rr_0_2,
            rr_0_1: row.rr_0_1,
            rr_0_05: row.rr_0_05,
            rr_0_01: row.rr_0_01,
            report: name,
        })?;
        reports.push(rep);
    }
    table.flush()?;
    Ok(reports)
}

pub fn grid(c: &Checkpoint, axes: (usize, usize), res: usize, range: (f64, f64), out: &Path) -> Result<eval::Grid> {
    let g = eval::lyapunov_grid(&c.agent.lyapunov, axes, res, range)?;
    report::write_grid(out, &g, &[("env", c.header.env.to_string()), ("env_steps", c.header.env_steps.to_string())])?;
    Ok(g)
}

/// The best evaluation across the given run directories.
pub fn select_best(runs: &[PathBuf]) -> Result<(PathBuf, EvalLogRow)> {
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for run in runs {
        let path = run.join(EVAL_LOG);
        if !path.exists() {
            continue;
        }
        for row in report::read_csv::<EvalLogRow>(&path)? {
            records.push(EvalRecord {
                run: run.display().to_string(),
                env_steps: row.env_steps,
                amcr: row.amcr,
            });
            rows.push((run.clone(), row));
        }
    }
    let best = eval::select_best(&records)?;
    Ok(rows.swap_remove(best))
}

/// Sorted distinct values and the duplicates that were dropped.
pub fn dedup_horizons(ns: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut seen = Vec::new();
    let mut dups = Vec::new();
    for &n in ns {
        if seen.contains(&n) {
            dups.push(n);
        } else {
            seen.push(n);
        }
    }
    seen.sort_unstable();
    (seen, dups)
}

struct Job {
    n: usize,
    seed: u64,
    dir: PathBuf,
}

fn spawn(exe: &Path, config: &Path, job: &Job) -> Result<Child> {
    Command::new(exe)
        .arg("train")
        .arg(config)
        .args(["--seed", &job.seed.to_string(), "--horizon", &job.n.to_string(), "--force"])
        .spawn()
        .map_err(|e| LabError::Subprocess(format!("cannot start {}: {e}", exe.display())))
}

/// Trains one run per `(n, seed)` as child processes of `exe`, at most
/// `jobs` at a time, and merges their final reports into one table.
/// Completed run directories are reused.
pub fn sweep_n(exe: &Path, config: &Path, ns: &[usize], jobs: usize, out: Option<&Path>) -> Result<(PathBuf, Vec<SweepRow>)> {
    let base = RunConfig::load(config)?;
    let (ns, dups) = dedup_horizons(ns);
    if !dups.is_empty() {
        eprintln!("warning: duplicate horizons {dups:?} ignored");
    }
    let mut pending = Vec::new();
    for &n in &ns {
        let mut c = base.clone();
        c.train.horizon = n;
        c.validate()?;
        for &seed in &base.run.seeds {
            pending.push(Job {
                n,
                seed,
                dir: c.run_dir(seed)?,
            });
        }
    }
    let all: Vec<(usize, u64, PathBuf)> = pending.iter().map(|j| (j.n, j.seed, j.dir.clone())).collect();
    pending.retain(|j| !j.dir.join(FINAL_REPORT).exists());
    pending.reverse();

    let mut running: Vec<(Child, Job)> = Vec::new();
    let mut failed = Vec::new();
    while !pending.is_empty() || !running.is_empty() {
        while running.len() < jobs.max(1) {
            let Some(job) = pending.pop() else { break };
            running.push((spawn(exe, config, &job)?, job));
        }
        let mut i = 0;
        while i < running.len() {
            let status = running[i]
                .0
                .try_wait()
                .map_err(|e| LabError::Subprocess(e.to_string()))?;
            match status {
                Some(s) => {
                    let (_, job) = running.swap_remove(i);
                    if !s.success() {
                        failed.push(format!("n={} seed={} ({s})", job.n, job.seed));
                    }
                }
                None => i += 1,
            }
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    if !failed.is_empty() {
        return Err(LabError::Subprocess(format!("sweep runs failed: {}", failed.join(", "))));
    }

    let mut rows = Vec::new();
    for (n, seed, dir) in all {
        let rep = report::read_report(&dir.join(FINAL_REPORT))?;
        rows.push(SweepRow::new(n, seed, &rep, dir));
    }
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => base
            .output_root()
            .join(format!("sweep-{}-{}.csv", base.env.id, base.hash8()?)),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        mkdir(parent)?;
    }
    let mut table = CsvLog::<SweepRow>::create(&path)?;
    for r in &rows {
        table.push(r)?;
    }
    table.flush()?;
    Ok((path, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_horizons_are_dropped() {
        assert_eq!(dedup_horizons(&[10, 1, 5, 10, 1]), (vec![1, 5, 10], vec![10, 1]));
        assert_eq!(dedup_horizons(&[1]), (vec![1], vec![]));
    }
}
