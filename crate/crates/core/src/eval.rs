//! Evaluation protocol: rollouts, reach metrics, the exponential-stability
//! envelope, model selection, robustness cells and certificate grids.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvId, EnvState, PerturbationSpec};
use crate::error::{Error, Result};
use crate::math;
use crate::nn::{LyapunovNet, PolicyNet};
use crate::rng::{self, stream};
use crate::tensor::Matrix;

pub const SCHEMA: &str = "msacl-eval-1";
pub const RADII: [f64; 4] = [0.2, 0.1, 0.05, 0.01];
pub const DEFAULT_EPISODES: usize = 100;
/// Seed of the published evaluation initial states.
pub const DEFAULT_INIT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    #[default]
    L2,
    LInf,
}

impl Norm {
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L2 => math::norm2(v),
            Norm::LInf => math::norm_inf(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// Generalized states `s_0 ..= s_T`.
    pub trajectory: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub reward_sum: f64,
    pub cost_sum: f64,
    /// Control steps taken, `T`.
    pub length: usize,
    pub terminated: bool,
}

impl EpisodeRecord {
    pub fn mcr(&self) -> f64 {
        self.reward_sum / self.length.max(1) as f64
    }

    pub fn mcc(&self) -> f64 {
        self.cost_sum / self.length.max(1) as f64
    }
}

/// Per-episode seed for the action and noise streams.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_add((episode as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// The evaluation initial states: `count` consecutive draws from the reset
/// stream of `seed`.
pub fn init_states(env: &Env, count: usize, seed: u64) -> Vec<EnvState> {
    let mut r = rng::seeded_stream(seed, stream::RESET);
    (0..count).map(|_| env.reset(&mut r)).collect()
}

/// Runs every episode to termination or truncation in lockstep, batching
/// the policy forward pass across the live episodes. Episode `i` draws its
/// noise from streams keyed by `episode_seed(seed, i)`, so results do not
/// depend on which other episodes share the batch.
pub fn rollout(env: &Env, policy: &PolicyNet, inits: &[EnvState], deterministic: bool, seed: u64) -> Result<Vec<EpisodeRecord>> {
    let d = env.spec().state_dim;
    let m = env.spec().action_dim;
    let mut states: Vec<EnvState> = inits.to_vec();
    let mut noise: Vec<_> = (0..inits.len())
        .map(|i| rng::seeded_stream(episode_seed(seed, i), stream::PROCESS_NOISE))
        .collect();
    let mut act_rng: Vec<_> = (0..inits.len())
        .map(|i| rng::seeded_stream(episode_seed(seed, i), stream::ACTION))
        .collect();
    let mut recs = Vec::with_capacity(inits.len());
    for s in inits {
        recs.push(EpisodeRecord {
            trajectory: vec![env.observe(s)?],
            actions: Vec::new(),
            reward_sum: 0.0,
            cost_sum: 0.0,
            length: 0,
            terminated: false,
        });
    }
    let mut live: Vec<usize> = (0..inits.len()).collect();
    while !live.is_empty() {
        let obs = Matrix::from_fn(live.len(), d, |r, j| recs[live[r]].trajectory.last().map_or(0.0, |s| s[j]));
        let eps = (!deterministic)
            .then(|| Matrix::from_fn(live.len(), m, |r, _| rng::normal(&mut act_rng[live[r]])));
        let (u, _) = policy.act(&obs, eps.as_ref())?;
        let mut still = Vec::with_capacity(live.len());
        for (r, &i) in live.iter().enumerate() {
            let action = u.row(r).to_vec();
            let res = env.step(&states[i], &action, &mut noise[i])?;
            let rec = &mut recs[i];
            rec.reward_sum += res.reward;
            rec.cost_sum += res.cost;
            rec.length += 1;
            rec.trajectory.push(res.s_next);
            rec.actions.push(action);
            rec.terminated = res.terminated;
            states[i] = res.next;
            if !res.terminated && !res.truncated {
                still.push(i);
            }
        }
        live = still;
    }
    Ok(recs)
}

/// Single-episode convenience wrapper around [`rollout`].
pub fn run_episode(env: &Env, policy: &PolicyNet, init: &EnvState, deterministic: bool, seed: u64) -> Result<EpisodeRecord> {
    Ok(rollout(env, policy, core::slice::from_ref(init), deterministic, seed)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachStats {
    pub radius: f64,
    pub rr: f64,
    /// Mean first-entry step over reaching episodes.
    pub ars: Option<f64>,
    /// Mean count of in-radius states from first entry on.
    pub ahs: Option<f64>,
}

/// First-entry index and hold count of one trajectory.
pub fn reach_episode<S: AsRef<[f64]>>(traj: &[S], radius: f64, norm: Norm) -> Option<(usize, usize)> {
    let inside: Vec<bool> = traj.iter().map(|s| norm.of(s.as_ref()) <= radius).collect();
    let first = inside.iter().position(|&b| b)?;
    Some((first, inside[first..].iter().filter(|&&b| b).count()))
}

pub fn reach_metrics<T: AsRef<[S]>, S: AsRef<[f64]>>(trajs: &[T], radius: f64, norm: Norm) -> ReachStats {
    let hits: Vec<(usize, usize)> = trajs
        .iter()
        .filter_map(|t| reach_episode(t.as_ref(), radius, norm))
        .collect();
    let k = hits.len() as f64;
    let (ars, ahs) = if hits.is_empty() {
        (None, None)
    } else {
        (
            Some(hits.iter().map(|h| h.0 as f64).sum::<f64>() / k),
            Some(hits.iter().map(|h| h.1 as f64).sum::<f64>() / k),
        )
    };
    ReachStats {
        radius,
        rr: if trajs.is_empty() { 0.0 } else { k / trajs.len() as f64 },
        ars,
        ahs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstMargin {
    pub episode: usize,
    pub step: usize,
    /// `|s_t| - C eta^t |s_0|`; positive means violated.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityCheck {
    pub c: f64,
    pub eta: f64,
    pub satisfied: Vec<bool>,
    pub fraction: f64,
    pub worst: Option<WorstMargin>,
}

/// Checks `|s_t| <= C eta^t |s_0|` along every trajectory with
/// `C = sqrt(alpha2 / alpha1)` and `eta = sqrt(1 - alpha3)`.
pub fn exp_stability_check<T: AsRef<[S]>, S: AsRef<[f64]>>(trajs: &[T], alpha1: f64, alpha2: f64, alpha3: f64) -> StabilityCheck {
    let c = math::sqrt(alpha2 / alpha1);
    let eta = math::sqrt(1.0 - alpha3);
    let mut worst: Option<WorstMargin> = None;
    let mut satisfied = Vec::with_capacity(trajs.len());
    for (e, t) in trajs.iter().enumerate() {
        let t = t.as_ref();
        let n0 = t.first().map_or(0.0, |s| math::norm2(s.as_ref()));
        let mut ok = true;
        for (k, s) in t.iter().enumerate() {
            let margin = math::norm2(s.as_ref()) - c * math::powi(eta, k as u32) * n0;
            ok &= margin <= 0.0;
            if worst.as_ref().is_none_or(|w| margin > w.margin) {
                worst = Some(WorstMargin { episode: e, step: k, margin });
            }
        }
        satisfied.push(ok);
    }
    let fraction = if trajs.is_empty() {
        0.0
    } else {
        satisfied.iter().filter(|&&b| b).count() as f64 / trajs.len() as f64
    };
    StabilityCheck {
        c,
        eta,
        satisfied,
        fraction,
        worst,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub env: EnvId,
    pub reference: Option<String>,
    pub noise_sigma: f64,
    pub param_overrides: BTreeMap<String, f64>,
    pub episodes: usize,
    pub init_seed: u64,
    pub deterministic: bool,
    pub norm: Norm,
    pub init_states: Vec<Vec<f64>>,
    pub mcr: Vec<f64>,
    pub mcc: Vec<f64>,
    pub lengths: Vec<usize>,
    pub terminated: Vec<bool>,
    pub amcr: f64,
    pub amcr_std: f64,
    pub amcc: f64,
    pub amcc_std: f64,
    pub reach: Vec<ReachStats>,
    pub exp_stability_fraction: f64,
}

impl EvalReport {
    pub fn reach_at(&self, radius: f64) -> Option<&ReachStats> {
        self.reach.iter().find(|r| (r.radius - radius).abs() < 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub episodes: usize,
    pub init_seed: u64,
    pub deterministic: bool,
    pub norm: Norm,
    pub alpha: (f64, f64, f64),
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            episodes: DEFAULT_EPISODES,
            init_seed: DEFAULT_INIT_SEED,
            deterministic: true,
            norm: Norm::L2,
            alpha: (1.0, 2.0, 0.15),
        }
    }
}

/// Full protocol on `env` (already perturbed) with the published initial
/// states. Also returns the raw episodes.
pub fn evaluate(env: &Env, policy: &PolicyNet, opts: &EvalOptions, overrides: &BTreeMap<String, f64>) -> Result<(EvalReport, Vec<EpisodeRecord>)> {
    let inits = init_states(env, opts.episodes, opts.init_seed);
    let recs = rollout(env, policy, &inits, opts.deterministic, opts.init_seed)?;
    let mcr: Vec<f64> = recs.iter().map(EpisodeRecord::mcr).collect();
    let mcc: Vec<f64> = recs.iter().map(EpisodeRecord::mcc).collect();
    let (amcr, amcr_std) = math::mean_std(&mcr);
    let (amcc, amcc_std) = math::mean_std(&mcc);
    let trajs: Vec<&[Vec<f64>]> = recs.iter().map(|r| r.trajectory.as_slice()).collect();
    let reach = RADII.iter().map(|&r| reach_metrics(&trajs, r, opts.norm)).collect();
    let (a1, a2, a3) = opts.alpha;
    let stab = exp_stability_check(&trajs, a1, a2, a3);
    let report = EvalReport {
        schema: SCHEMA.into(),
        env: env.id(),
        reference: env.reference().map(|r| r.to_string()),
        noise_sigma: env.noise_sigma(),
        param_overrides: overrides.clone(),
        episodes: opts.episodes,
        init_seed: opts.init_seed,
        deterministic: opts.deterministic,
        norm: opts.norm,
        init_states: recs.iter().map(|r| r.trajectory[0].clone()).collect(),
        lengths: recs.iter().map(|r| r.length).collect(),
        terminated: recs.iter().map(|r| r.terminated).collect(),
        mcr,
        mcc,
        amcr,
        amcr_std,
        amcc,
        amcc_std,
        reach,
        exp_stability_fraction: stab.fraction,
    };
    Ok((report, recs))
}

/// One scored checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub run: String,
    pub env_steps: u64,
    pub amcr: f64,
}

/// Index of the highest-MCR record; the earlier training step wins ties,
/// then the earlier record.
pub fn select_best(records: &[EvalRecord]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        if !r.amcr.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = &records[b];
                if r.amcr > cur.amcr || (r.amcr == cur.amcr && r.env_steps < cur.env_steps) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.ok_or(Error::NoEvalRecords)
}

fn overrides(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

/// Robustness protocol: every parameter override set crossed with every
/// noise level.
pub fn robustness_cells(id: EnvId) -> Vec<PerturbationSpec> {
    let (sets, sigmas): (Vec<BTreeMap<String, f64>>, [f64; 2]) = match id {
        EnvId::VanderPol => (vec![overrides(&[("mu", 0.5)]), overrides(&[("mu", 1.5)])], [0.5, 0.8]),
        EnvId::Pendulum => (vec![overrides(&[("L", 0.5)]), overrides(&[("L", 1.0)])], [0.5, 1.0]),
        EnvId::DuctedFan => (vec![overrides(&[("m", 5.0)]), overrides(&[("m", 12.0)])], [0.1, 0.3]),
        EnvId::TwoLink => (vec![overrides(&[("l1", 0.75)]), overrides(&[("l2", 1.5)])], [0.1, 0.2]),
        EnvId::CarTracking => (vec![BTreeMap::new()], [0.1, 0.3]),
        EnvId::QuadrotorTracking => (vec![BTreeMap::new()], [0.01, 0.02]),
    };
    sets.iter()
        .flat_map(|o| {
            sigmas.iter().map(move |&s| PerturbationSpec {
                noise_sigma: s,
                param_overrides: o.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: (usize, usize),
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values.get(iy, ix)` is `V` at `(xs[ix], ys[iy])`.
    pub values: Matrix,
}

pub fn grid_points(res: usize, lo: f64, hi: f64) -> Vec<f64> {
    if res == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..res)
        .map(|i| lo + (hi - lo) * i as f64 / (res - 1) as f64)
        .collect()
}

/// `V` on a uniform grid over state components `axes`, all others zero.
pub fn lyapunov_grid(v: &LyapunovNet, axes: (usize, usize), res: usize, range: (f64, f64)) -> Result<Grid> {
    let d = v.mlp.input_dim();
    let (i, j) = axes;
    if i >= d || j >= d || i == j {
        return Err(Error::InvalidConfig(alloc::format!(
            "grid axes {i},{j} must be distinct and below {d}"
        )));
    }
    if res == 0 || !(range.0 <= range.1) {
        return Err(Error::InvalidConfig("grid needs res >= 1 and lo <= hi".into()));
    }
    let xs = grid_points(res, range.0, range.1);
    let ys = xs.clone();
    let pts = Matrix::from_fn(res * res, d, |r, c| {
        if c == i {
            xs[r % res]
        } else if c == j {
            ys[r / res]
        } else {
            0.0
        }
    });
    let values = v.forward(&pts)?.reshaped(res, res)?;
    Ok(Grid {
        axes,
        xs,
        ys,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mlp;

    fn traj(norms: &[f64]) -> Vec<Vec<f64>> {
        norms.iter().map(|&n| vec![n, 0.0]).collect()
    }

    #[test]
    fn entry_at_step_five_of_twenty() {
        let mut n = vec![1.0; 5];
        n.extend(core::iter::repeat_n(0.05, 16));
        let t = traj(&n);
        assert_eq!(t.len(), 21);
        let r = reach_metrics(&[t], 0.1, Norm::L2);
        assert_eq!((r.rr, r.ars, r.ahs), (1.0, Some(5.0), Some(16.0)));
    }

    #[test]
    fn never_entering_lowers_rr() {
        let r = reach_metrics(&[traj(&[1.0, 0.5]), traj(&[0.0, 0.0])], 0.1, Norm::L2);
        assert_eq!((r.rr, r.ars, r.ahs), (0.5, Some(0.0), Some(2.0)));
        let none = reach_metrics(&[traj(&[1.0])], 0.1, Norm::L2);
        assert_eq!((none.rr, none.ars, none.ahs), (0.0, None, None));
    }

    #[test]
    fn norm_switch() {
        let t = vec![vec![0.08, 0.08]];
        assert_eq!(reach_metrics(&[t.clone()], 0.1, Norm::L2).rr, 0.0);
        assert_eq!(reach_metrics(&[t], 0.1, Norm::LInf).rr, 1.0);
    }

    #[test]
    fn envelope_examples() {
        let geo: Vec<Vec<f64>> = (0..200).map(|k| vec![math::powi(0.9, k), 0.0]).collect();
        let zero = vec![vec![0.0, 0.0]; 10];
        let flat = vec![vec![1.0, 0.0]; 50];
        let c = exp_stability_check(&[geo, zero, flat], 1.0, 2.0, 0.15);
        assert_eq!(c.satisfied, vec![true, true, false]);
        assert!((c.eta - 0.921_954_445_729_288_7).abs() < 1e-15);
        assert_eq!(c.worst.unwrap().episode, 2);
    }

    #[test]
    fn selection_rules() {
        let rec = |run: &str, s, m| EvalRecord {
            run: run.into(),
            env_steps: s,
            amcr: m,
        };
        assert_eq!(select_best(&[rec("a", 1, 10.0), rec("b", 1, 33.0), rec("c", 1, 20.0)]), Ok(1));
        assert_eq!(select_best(&[rec("a", 9, 5.0), rec("b", 3, 5.0)]), Ok(1));
        assert_eq!(select_best(&[]), Err(Error::NoEvalRecords));
    }

    #[test]
    fn robustness_cell_counts() {
        assert_eq!(robustness_cells(EnvId::QuadrotorTracking).len(), 2);
        assert_eq!(robustness_cells(EnvId::VanderPol).len(), 4);
        for id in EnvId::ALL {
            for cell in robustness_cells(id) {
                Env::new(id).with_perturbation(&cell).unwrap();
            }
        }
    }

    #[test]
    fn constant_reward_episode() {
        let rec = EpisodeRecord {
            trajectory: Vec::new(),
            actions: Vec::new(),
            reward_sum: 100.0 * 1000.0,
            cost_sum: 0.0,
            length: 1000,
            terminated: false,
        };
        assert_eq!(rec.mcr(), 100.0);
        let two = EpisodeRecord {
            reward_sum: 100.0 - 50.0,
            length: 2,
            ..rec
        };
        assert_eq!(two.mcr(), 25.0);
    }

    fn zero_policy(env: &Env) -> PolicyNet {
        let s = env.spec();
        PolicyNet {
            trunk: Mlp::zeros(&[s.state_dim, 4, 2 * s.action_dim]),
            action_low: s.action_low.clone(),
            action_high: s.action_high.clone(),
        }
    }

    #[test]
    fn batched_rollout_matches_single_episodes() {
        let env = Env::new(EnvId::VanderPol).with_noise(0.1).unwrap();
        let p = zero_policy(&env);
        let inits = init_states(&env, 5, 3);
        let all = rollout(&env, &p, &inits, false, 11).unwrap();
        let head = rollout(&env, &p, &inits[..3], false, 11).unwrap();
        assert_eq!(&all[..3], &head[..]);
        let single = run_episode(&env, &p, &inits[0], false, 11).unwrap();
        assert_eq!(single, all[0]);
    }

    #[test]
    fn deterministic_eval_repeats() {
        let env = Env::new(EnvId::Pendulum);
        let p = zero_policy(&env);
        let opts = EvalOptions {
            episodes: 3,
            ..EvalOptions::default()
        };
        let (a, _) = evaluate(&env, &p, &opts, &BTreeMap::new()).unwrap();
        let (b, _) = evaluate(&env, &p, &opts, &BTreeMap::new()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.schema, SCHEMA);
        let rrs: Vec<f64> = a.reach.iter().map(|r| r.rr).collect();
        assert!(rrs.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn grid_shapes_and_errors() {
        let mut rng = rng::seeded(1);
        let v = LyapunovNet::new(3, &[4], &mut rng);
        let g = lyapunov_grid(&v, (0, 2), 101, (-1.0, 1.0)).unwrap();
        assert_eq!(g.values.shape(), (101, 101));
        assert_eq!(g.values.get(50, 50), v.value(&[0.0, 0.0, 0.0]).unwrap());
        let one = lyapunov_grid(&v, (0, 1), 1, (-1.0, 3.0)).unwrap();
        assert_eq!(one.values.data()[0], v.value(&[1.0, 1.0, 0.0]).unwrap());
        assert!(lyapunov_grid(&v, (0, 3), 5, (-1.0, 1.0)).is_err());
    }
}
