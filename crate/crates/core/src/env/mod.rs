//! Environment contract shared by the six benchmarks.
//!
//! An [`Env`] is an immutable description (dynamics parameters, spaces,
//! reward, process noise); all mutable state lives in [`EnvState`], so one
//! `Env` can drive any number of rollouts concurrently.
//!
//! Every control step holds the action for `substeps_per_control`
//! explicit-Euler substeps, then adds process noise once. Reward and cost are
//! evaluated at the generalized state before the step.

pub mod car;
pub mod ductedfan;
pub mod params;
pub mod pendulum;
pub mod quadrotor;
pub mod reference;
pub mod so3;
pub mod twolink;
pub mod vanderpol;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, PI};
use crate::rng::{self, Rng};

use car::CarParams;
use ductedfan::DuctedFanParams;
use params::ParamSet;
use pendulum::PendulumParams;
use quadrotor::{QuadState, QuadrotorParams};
use reference::TrackingRef;
use twolink::TwoLinkParams;
use vanderpol::VanderPolParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    #[serde(rename = "vanderpol")]
    VanderPol,
    Pendulum,
    #[serde(rename = "ductedfan")]
    DuctedFan,
    #[serde(rename = "twolink")]
    TwoLink,
    CarTracking,
    QuadrotorTracking,
}

impl EnvId {
    pub const ALL: [EnvId; 6] = [
        EnvId::VanderPol,
        EnvId::Pendulum,
        EnvId::DuctedFan,
        EnvId::TwoLink,
        EnvId::CarTracking,
        EnvId::QuadrotorTracking,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::VanderPol => "vanderpol",
            EnvId::Pendulum => "pendulum",
            EnvId::DuctedFan => "ductedfan",
            EnvId::TwoLink => "twolink",
            EnvId::CarTracking => "car_tracking",
            EnvId::QuadrotorTracking => "quadrotor_tracking",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvId::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::UnknownEnv(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ApproachReward {
    /// `bonus * 1(|s|_inf <= radius)`.
    Indicator { bonus: f64 },
    /// `peak * (1 - |s|_inf / radius) * 1(|s|_inf <= radius)`.
    LinearRamp { peak: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardSpec {
    /// Diagonal of the state penalty.
    pub q_r: Vec<f64>,
    /// Diagonal of the action penalty.
    pub r_r: Vec<f64>,
    pub approach_radius: f64,
    pub approach: ApproachReward,
    pub reward_scale: f64,
}

impl RewardSpec {
    pub fn approach_bonus(&self, s: &[f64]) -> f64 {
        let n = math::norm_inf(s);
        if n > self.approach_radius {
            return 0.0;
        }
        match self.approach {
            ApproachReward::Indicator { bonus } => bonus,
            ApproachReward::LinearRamp { peak } => peak * (1.0 - n / self.approach_radius),
        }
    }

    /// Unscaled reward.
    pub fn raw(&self, s: &[f64], u: &[f64]) -> f64 {
        let xs: f64 = s.iter().zip(&self.q_r).map(|(x, q)| q * x * x).sum();
        let us: f64 = u.iter().zip(&self.r_r).map(|(x, r)| r * x * x).sum();
        -(xs + us) + self.approach_bonus(s)
    }

    /// `(scaled reward, cost)`; the cost is `|s|^2` and ignores the scale.
    pub fn evaluate(&self, s: &[f64], u: &[f64]) -> (f64, f64) {
        (self.reward_scale * self.raw(s, u), math::norm2_sq(s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub id: EnvId,
    /// Dimension of the generalized state (the policy input).
    pub state_dim: usize,
    /// Dimension of the simulated physical state.
    pub physical_dim: usize,
    pub action_dim: usize,
    /// Termination box on the generalized state.
    pub state_low: Vec<f64>,
    pub state_high: Vec<f64>,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Reset sampling box. For the quadrotor the coordinates are
    /// `[p, v, rotation vector, Omega]`.
    pub init_low: Vec<f64>,
    pub init_high: Vec<f64>,
    pub dt: f64,
    pub substeps_per_control: usize,
    pub max_episode_steps: usize,
    pub reward: RewardSpec,
    pub is_tracking: bool,
}

impl EnvSpec {
    /// Seconds per control step.
    pub fn control_dt(&self) -> f64 {
        self.dt * self.substeps_per_control as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.substeps_per_control == 0 {
            return bad("substeps_per_control must be at least 1".into());
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.action_low.iter().zip(&self.action_high).any(|(l, h)| !(l < h)) {
            return bad("action_low must be below action_high".into());
        }
        let inside = self
            .init_low
            .iter()
            .zip(&self.init_high)
            .zip(self.state_low.iter().zip(&self.state_high))
            .all(|((il, ih), (sl, sh))| il >= sl && ih <= sh && il <= ih);
        if !inside {
            return bad("init box must lie inside the state box".into());
        }
        let r = &self.reward;
        if r.q_r.iter().chain(&r.r_r).any(|&q| q < 0.0) || !(r.approach_radius > 0.0) || !(r.reward_scale > 0.0) {
            return bad("reward weights must be non-negative, radius and scale positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerturbationSpec {
    pub noise_sigma: f64,
    pub param_overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// Physical state.
    pub x: Vec<f64>,
    /// Control steps taken in the current episode.
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next: EnvState,
    /// Generalized state at which reward and cost were evaluated.
    pub s: Vec<f64>,
    pub s_next: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
    /// The next generalized state left the state box (or stopped being
    /// finite).
    pub terminated: bool,
    /// The step limit was reached without termination.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    VanderPol(VanderPolParams),
    Pendulum(PendulumParams),
    DuctedFan(DuctedFanParams),
    TwoLink(TwoLinkParams),
    Car(CarParams, TrackingRef),
    Quadrotor(QuadrotorParams, TrackingRef),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Env {
    spec: EnvSpec,
    model: Model,
    noise_sigma: f64,
}

fn sym(v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (v.iter().map(|x| -x).collect(), v.to_vec())
}

fn indicator_reward(q_r: Vec<f64>, r_r: Vec<f64>) -> RewardSpec {
    RewardSpec {
        q_r,
        r_r,
        approach_radius: 0.01,
        approach: ApproachReward::Indicator { bonus: 1.0 },
        reward_scale: 100.0,
    }
}

fn base_spec(
    id: EnvId,
    state: &[f64],
    init: &[f64],
    action: (Vec<f64>, Vec<f64>),
    reward: RewardSpec,
) -> EnvSpec {
    let (state_low, state_high) = sym(state);
    let (init_low, init_high) = sym(init);
    EnvSpec {
        id,
        state_dim: state.len(),
        physical_dim: state.len(),
        action_dim: action.0.len(),
        state_low,
        state_high,
        action_low: action.0,
        action_high: action.1,
        init_low,
        init_high,
        dt: 0.01,
        substeps_per_control: 5,
        max_episode_steps: 1000,
        reward,
        is_tracking: false,
    }
}

impl Env {
    pub fn new(id: EnvId) -> Self {
        let (spec, model) = match id {
            EnvId::VanderPol => (
                base_spec(id, &[10.0, 10.0], &[5.0, 5.0], sym(&[5.0]), indicator_reward(vec![2.0, 1.0], vec![0.1])),
                Model::VanderPol(VanderPolParams::default()),
            ),
            EnvId::Pendulum => (
                base_spec(id, &[PI, 10.0], &[PI, 10.0], sym(&[5.0]), indicator_reward(vec![2.0, 1.0], vec![0.1])),
                Model::Pendulum(PendulumParams::default()),
            ),
            EnvId::DuctedFan => (
                base_spec(
                    id,
                    &[5.0, 5.0, PI / 2.0, 5.0, 5.0, 5.0],
                    &[0.5; 6],
                    sym(&[5.0, 5.0]),
                    indicator_reward(vec![2.0, 2.0, 2.0, 1.0, 1.0, 1.0], vec![0.1, 0.1]),
                ),
                Model::DuctedFan(DuctedFanParams::default()),
            ),
            EnvId::TwoLink => (
                base_spec(
                    id,
                    &[PI / 2.0, PI / 2.0, 20.0, 20.0],
                    &[0.5; 4],
                    sym(&[20.0, 20.0]),
                    indicator_reward(vec![2.0, 2.0, 1.0, 1.0], vec![0.1, 0.1]),
                ),
                Model::TwoLink(TwoLinkParams::default()),
            ),
            EnvId::CarTracking => {
                let mut spec = base_spec(
                    id,
                    &[1.0, 1.0, 1.066, 1.0, PI / 2.0, PI / 2.0, PI / 3.0],
                    &[0.5; 7],
                    sym(&[5.0, 5.0]),
                    indicator_reward(vec![2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0], vec![0.1, 0.1]),
                );
                spec.is_tracking = true;
                (spec, Model::Car(CarParams::default(), TrackingRef::Line))
            }
            EnvId::QuadrotorTracking => {
                let p = QuadrotorParams::default();
                let box12 = [2.0, 2.0, 2.0, 5.0, 5.0, 5.0, 1.0, 1.0, 1.0, 10.0, 10.0, 10.0];
                let reward = RewardSpec {
                    q_r: vec![1.0; 12],
                    r_r: vec![1e-4, 0.01, 0.01, 0.01],
                    approach_radius: 0.1,
                    approach: ApproachReward::LinearRamp { peak: 10.0 },
                    reward_scale: 100.0,
                };
                let action = (
                    vec![0.0, -p.m_max, -p.m_max, -p.m_max],
                    vec![p.f_max, p.m_max, p.m_max, p.m_max],
                );
                let mut spec = base_spec(id, &box12, &[0.01; 12], action, reward);
                spec.physical_dim = quadrotor::PHYS_DIM;
                spec.is_tracking = true;
                (spec, Model::Quadrotor(p, TrackingRef::HelixH))
            }
        };
        Self {
            spec,
            model,
            noise_sigma: 0.0,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::new(name.parse()?))
    }

    pub fn id(&self) -> EnvId {
        self.spec.id
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn reference(&self) -> Option<TrackingRef> {
        match self.model {
            Model::Car(_, r) | Model::Quadrotor(_, r) => Some(r),
            _ => None,
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self.model {
            Model::VanderPol(_) => VanderPolParams::NAMES,
            Model::Pendulum(_) => PendulumParams::NAMES,
            Model::DuctedFan(_) => DuctedFanParams::NAMES,
            Model::TwoLink(_) => TwoLinkParams::NAMES,
            Model::Car(..) => CarParams::NAMES,
            Model::Quadrotor(..) => QuadrotorParams::NAMES,
        }
    }

    pub fn with_params(&self, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut out = self.clone();
        match &mut out.model {
            Model::VanderPol(p) => p.apply(overrides)?,
            Model::Pendulum(p) => p.apply(overrides)?,
            Model::DuctedFan(p) => p.apply(overrides)?,
            Model::TwoLink(p) => p.apply(overrides)?,
            Model::Car(p, _) => p.apply(overrides)?,
            Model::Quadrotor(p, _) => p.apply(overrides)?,
        }
        Ok(out)
    }

    pub fn with_noise(&self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!("noise_sigma must be >= 0, got {sigma}")));
        }
        let mut out = self.clone();
        out.noise_sigma = sigma;
        Ok(out)
    }

    /// Same task with a different Euler step and substep count.
    pub fn with_integration(&self, dt: f64, substeps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) || substeps == 0 {
            return Err(Error::InvalidConfig(format!(
                "need dt > 0 and at least one substep, got dt = {dt}, substeps = {substeps}"
            )));
        }
        let mut out = self.clone();
        out.spec.dt = dt;
        out.spec.substeps_per_control = substeps;
        Ok(out)
    }

    pub fn with_perturbation(&self, p: &PerturbationSpec) -> Result<Self> {
        self.with_params(&p.param_overrides)?.with_noise(p.noise_sigma)
    }

    pub fn with_reference(&self, r: TrackingRef) -> Result<Self> {
        let mut out = self.clone();
        match &mut out.model {
            Model::Car(_, slot) if r.is_planar() => *slot = r,
            Model::Quadrotor(_, slot) if !r.is_planar() => *slot = r,
            _ => {
                return Err(Error::ReferenceMismatch {
                    env: self.spec.id.as_str(),
                    reference: r.as_str(),
                })
            }
        }
        Ok(out)
    }

    /// Time in seconds at the start of control step `step`.
    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.spec.control_dt()
    }

    pub fn clamp_action(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.spec.action_low.iter().zip(&self.spec.action_high))
            .map(|(&x, (&lo, &hi))| x.clamp(lo, hi))
            .collect()
    }

    pub fn in_bounds(&self, s: &[f64]) -> bool {
        s.iter()
            .zip(self.spec.state_low.iter().zip(&self.spec.state_high))
            .all(|(&x, (&lo, &hi))| x >= lo && x <= hi)
    }

    pub fn compute_reward(&self, s: &[f64], u: &[f64]) -> (f64, f64) {
        self.spec.reward.evaluate(s, u)
    }

    /// Uniform draw from the init box.
    pub fn reset(&self, rng: &mut Rng) -> EnvState {
        let draw: Vec<f64> = self
            .spec
            .init_low
            .iter()
            .zip(&self.spec.init_high)
            .map(|(&lo, &hi)| rng::uniform(rng, lo, hi))
            .collect();
        let x = match self.model {
            Model::Quadrotor(..) => {
                let s = QuadState {
                    p: [draw[0], draw[1], draw[2]],
                    v: [draw[3], draw[4], draw[5]],
                    r: so3::exp([draw[6], draw[7], draw[8]]),
                    omega: [draw[9], draw[10], draw[11]],
                };
                let mut x = vec![0.0; quadrotor::PHYS_DIM];
                s.write_flat(&mut x);
                x
            }
            _ => draw,
        };
        EnvState { x, step: 0 }
    }

    pub fn reset_seeded(&self, seed: u64) -> EnvState {
        self.reset(&mut rng::seeded_stream(seed, rng::stream::RESET))
    }

    /// Generalized state: `x` for stabilization, the tracking error otherwise.
    pub fn observe(&self, state: &EnvState) -> Result<Vec<f64>> {
        match self.model {
            Model::Quadrotor(p, r) => {
                let q = QuadState::from_flat(&state.x);
                Ok(quadrotor::error_at(&q, self.time(state.step), r, &p, self.spec.dt)?.to_vec())
            }
            _ => Ok(state.x.clone()),
        }
    }

    /// Continuous-time derivative of the physical state at time `t`
    /// (quadrotor rotation block flattened row major).
    pub fn deriv(&self, x: &[f64], u: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(match &self.model {
            Model::VanderPol(p) => vanderpol::deriv(&[x[0], x[1]], u[0], p).to_vec(),
            Model::Pendulum(p) => pendulum::deriv(&[x[0], x[1]], u[0], p).to_vec(),
            Model::DuctedFan(p) => {
                let xs: [f64; 6] = x.try_into().map_err(|_| dim_err(6, x.len()))?;
                ductedfan::deriv(&xs, [u[0], u[1]], p).to_vec()
            }
            Model::TwoLink(p) => {
                let xs: [f64; 4] = x.try_into().map_err(|_| dim_err(4, x.len()))?;
                twolink::deriv(&xs, [u[0], u[1]], p)?.to_vec()
            }
            Model::Car(p, r) => {
                let xs: [f64; 7] = x.try_into().map_err(|_| dim_err(7, x.len()))?;
                car::deriv(&xs, [u[0], u[1]], p, &r.planar(t)).to_vec()
            }
            Model::Quadrotor(p, _) => {
                let d = quadrotor::deriv(&QuadState::from_flat(x), [u[0], u[1], u[2], u[3]], p);
                let mut out = vec![0.0; quadrotor::PHYS_DIM];
                let flat = QuadState {
                    p: d.dp,
                    v: d.dv,
                    r: d.dr,
                    omega: d.domega,
                };
                flat.write_flat(&mut out);
                out
            }
        })
    }

    /// Advance one control step. Actions outside the box are clamped.
    pub fn step(&self, state: &EnvState, action: &[f64], rng: &mut Rng) -> Result<StepResult> {
        if state.x.len() != self.spec.physical_dim {
            return Err(dim_err(self.spec.physical_dim, state.x.len()));
        }
        if action.len() != self.spec.action_dim {
            return Err(dim_err(self.spec.action_dim, action.len()));
        }
        if !math::all_finite(&state.x) {
            return Err(Error::NonFinite("environment state"));
        }
        if !math::all_finite(action) {
            return Err(Error::NonFinite("action"));
        }
        let u = self.clamp_action(action);
        let s = self.observe(state)?;
        let (reward, cost) = self.compute_reward(&s, &u);

        let dt = self.spec.dt;
        let t0 = self.time(state.step);
        let mut x = state.x.clone();
        for k in 0..self.spec.substeps_per_control {
            let d = self.deriv(&x, &u, t0 + k as f64 * dt)?;
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi += dt * di;
            }
        }
        if let Model::Quadrotor(..) = self.model {
            let mut q = QuadState::from_flat(&x);
            q.r = so3::orthonormalize(&q.r);
            q.write_flat(&mut x);
        }
        if self.noise_sigma > 0.0 {
            let noisy: &[core::ops::Range<usize>] = match self.model {
                Model::Quadrotor(..) => &[0..6, 15..18],
                _ => &[0..usize::MAX],
            };
            for range in noisy {
                let end = range.end.min(x.len());
                for xi in &mut x[range.start..end] {
                    *xi += self.noise_sigma * rng::normal(rng);
                }
            }
        }

        let next = EnvState {
            x,
            step: state.step + 1,
        };
        let s_next = self.observe(&next)?;
        let terminated = !math::all_finite(&s_next) || !self.in_bounds(&s_next);
        let truncated = !terminated && next.step >= self.spec.max_episode_steps;
        Ok(StepResult {
            next,
            s,
            s_next,
            reward,
            cost,
            terminated,
            truncated,
        })
    }
}

fn dim_err(expected: usize, got: usize) -> Error {
    crate::error::shape_err("Env", (1, expected), (1, got))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn ids_round_trip() {
        for id in EnvId::ALL {
            assert_eq!(id.as_str().parse::<EnvId>().unwrap(), id);
            Env::new(id).spec().validate().unwrap();
        }
        assert!("cartpole".parse::<EnvId>().is_err());
    }

    #[test]
    fn reset_lands_in_init_box_and_is_deterministic() {
        let env = Env::new(EnvId::VanderPol);
        for seed in 0..50 {
            let a = env.reset_seeded(seed);
            assert!(a.x.iter().all(|v| v.abs() <= 5.0));
            assert_eq!(a, env.reset_seeded(seed));
            assert_eq!(a.step, 0);
        }
    }

    #[test]
    fn zero_width_init_box() {
        let mut env = Env::new(EnvId::DuctedFan);
        env.spec.init_low = vec![0.0; 6];
        env.spec.init_high = vec![0.0; 6];
        assert_eq!(env.reset_seeded(3).x, vec![0.0; 6]);
    }

    #[test]
    fn pendulum_equilibrium_and_single_substep() {
        let env = Env::new(EnvId::Pendulum);
        let mut rng = seeded(0);
        let r = env.step(&EnvState { x: vec![0.0, 0.0], step: 0 }, &[0.0], &mut rng).unwrap();
        assert_eq!(r.next.x, vec![0.0, 0.0]);
        assert!(!r.terminated && !r.truncated);

        let mut one = env.clone();
        one.spec.substeps_per_control = 1;
        let r = one
            .step(&EnvState { x: vec![PI / 2.0, 0.0], step: 0 }, &[0.0], &mut rng)
            .unwrap();
        assert_eq!(r.next.x[0], PI / 2.0);
        assert!((r.next.x[1] - 0.1962).abs() < 1e-12);
    }

    #[test]
    fn stabilization_equilibria_are_fixed_points() {
        let mut rng = seeded(0);
        for id in [EnvId::VanderPol, EnvId::Pendulum, EnvId::DuctedFan, EnvId::TwoLink] {
            let env = Env::new(id);
            let d = env.spec().state_dim;
            let r = env
                .step(&EnvState { x: vec![0.0; d], step: 0 }, &vec![0.0; env.spec().action_dim], &mut rng)
                .unwrap();
            assert_eq!(r.next.x, vec![0.0; d], "{id}");
            assert_eq!(r.reward, 100.0);
        }
    }

    #[test]
    fn leaving_the_box_terminates() {
        let env = Env::new(EnvId::VanderPol);
        let mut rng = seeded(0);
        let r = env.step(&EnvState { x: vec![0.0, 9.99], step: 0 }, &[5.0], &mut rng).unwrap();
        assert!(r.terminated);
        assert!(!r.truncated);
        assert!(r.next.x.iter().any(|v| v.abs() > 10.0));
    }

    #[test]
    fn step_limit_truncates() {
        let env = Env::new(EnvId::VanderPol);
        let mut rng = seeded(0);
        let r = env.step(&EnvState { x: vec![0.0, 0.0], step: 999 }, &[0.0], &mut rng).unwrap();
        assert!(r.truncated && !r.terminated);
    }

    #[test]
    fn non_finite_inputs_are_errors() {
        let env = Env::new(EnvId::VanderPol);
        let mut rng = seeded(0);
        let s = EnvState { x: vec![f64::NAN, 0.0], step: 0 };
        assert!(env.step(&s, &[0.0], &mut rng).is_err());
        let s = EnvState { x: vec![0.0, 0.0], step: 0 };
        assert!(env.step(&s, &[f64::INFINITY], &mut rng).is_err());
    }

    #[test]
    fn actions_are_clamped() {
        let env = Env::new(EnvId::VanderPol);
        let mut rng = seeded(0);
        let s = EnvState { x: vec![0.0, 0.0], step: 0 };
        let a = env.step(&s, &[50.0], &mut rng).unwrap();
        let b = env.step(&s, &[5.0], &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reward_examples() {
        let env = Env::new(EnvId::VanderPol);
        assert_eq!(env.compute_reward(&[0.0, 0.0], &[0.0]), (100.0, 0.0));
        let (r, c) = env.compute_reward(&[1.0, 0.0], &[1.0]);
        assert!((r - (-210.0)).abs() < 1e-12);
        assert_eq!(c, 1.0);

        let quad = Env::new(EnvId::QuadrotorTracking);
        let mut e = [0.0; 12];
        e[4] = 0.05;
        let bonus = quad.spec().reward.approach_bonus(&e);
        assert!((bonus - 5.0).abs() < 1e-12);
    }

    #[test]
    fn cost_ignores_reward_scale() {
        let mut env = Env::new(EnvId::TwoLink);
        let s = [0.1, -0.2, 0.3, 0.0];
        let (_, c1) = env.compute_reward(&s, &[1.0, 1.0]);
        env.spec.reward.reward_scale = 3.0;
        let (_, c2) = env.compute_reward(&s, &[1.0, 1.0]);
        assert_eq!(c1, c2);
    }

    #[test]
    fn zero_noise_rollouts_are_bitwise_reproducible() {
        for id in EnvId::ALL {
            let env = Env::new(id);
            let run = || {
                let mut rng = seeded(1);
                let mut s = env.reset_seeded(4);
                let mut out = Vec::new();
                for k in 0..50 {
                    let u: Vec<f64> = (0..env.spec().action_dim).map(|j| 0.1 * ((k + j) as f64).sin()).collect();
                    let r = env.step(&s, &u, &mut rng).unwrap();
                    out.push(r.reward);
                    s = r.next;
                    if r.terminated {
                        break;
                    }
                }
                (s, out)
            };
            assert_eq!(run(), run(), "{id}");
        }
    }

    #[test]
    fn noise_is_injected_once_per_control_step() {
        let env = Env::new(EnvId::VanderPol).with_noise(0.5).unwrap();
        let clean = Env::new(EnvId::VanderPol);
        let s = EnvState { x: vec![1.0, -1.0], step: 0 };
        let mut rng = seeded(2);
        let noisy = env.step(&s, &[0.3], &mut rng).unwrap();
        let base = clean.step(&s, &[0.3], &mut seeded(2)).unwrap();
        let mut rng = seeded(2);
        let want: Vec<f64> = base.next.x.iter().map(|x| x + 0.5 * rng::normal(&mut rng)).collect();
        assert_eq!(noisy.next.x, want);
    }

    #[test]
    fn overrides_and_references() {
        let env = Env::new(EnvId::Pendulum);
        let mut o = BTreeMap::new();
        o.insert(String::from("L"), 1.0);
        let e2 = env.with_params(&o).unwrap();
        assert!(matches!(e2.model(), Model::Pendulum(p) if p.l == 1.0));
        o.insert(String::from("length"), 1.0);
        assert!(matches!(env.with_params(&o), Err(Error::UnknownParam { .. })));

        let car = Env::new(EnvId::CarTracking);
        assert!(car.with_reference(TrackingRef::Circle).is_ok());
        assert!(car.with_reference(TrackingRef::HelixV).is_err());
        let quad = Env::new(EnvId::QuadrotorTracking);
        assert!(quad.with_reference(TrackingRef::Lissajous).is_ok());
        assert!(quad.with_reference(TrackingRef::Sine).is_err());
        assert!(env.with_reference(TrackingRef::Line).is_err());
        assert!(env.with_noise(-1.0).is_err());
    }

    #[test]
    fn quadrotor_stays_orthogonal_over_an_episode() {
        let env = Env::new(EnvId::QuadrotorTracking);
        let p = QuadrotorParams::default();
        let mut rng = seeded(7);
        let mut s = env.reset_seeded(7);
        for k in 0..1000 {
            let u = [p.m * p.g + 2.0 * ((k as f64) * 0.1).sin(), 0.05, -0.03, 0.02];
            let r = env.step(&s, &u, &mut rng).unwrap();
            let q = QuadState::from_flat(&r.next.x);
            assert!(so3::orthogonality_defect(&q.r) < 1e-6);
            s = r.next;
        }
    }

    #[test]
    fn car_equilibrium_under_line_reference() {
        let env = Env::new(EnvId::CarTracking);
        let mut rng = seeded(0);
        let r = env.step(&EnvState { x: vec![0.0; 7], step: 0 }, &[0.0, 0.0], &mut rng).unwrap();
        assert_eq!(r.next.x, vec![0.0; 7]);
    }
}
