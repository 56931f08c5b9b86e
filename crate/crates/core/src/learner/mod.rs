//! Off-policy actor-critic training with a learned Lyapunov certificate.
//!
//! One [`Trainer::train_iteration`] collects a fixed number of environment
//! steps into the n-step buffer and, once the buffer is warm, runs one
//! update round: certificate, both critics, target tracking, and every
//! `delay` rounds `delay` consecutive policy and temperature steps.

pub mod losses;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::autodiff::Tape;
use crate::env::{Env, EnvSpec, EnvState};
use crate::error::{Error, Result};
use crate::math;
use crate::nn::{collect_grads, CriticNet, LyapunovNet, PolicyNet};
use crate::replay::{NStepCollector, ReplayBuffer, SequenceBatch, Transition};
use crate::rng::{self, stream, Rng};
use crate::tensor::Matrix;

use losses::LyapunovCoeffs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    /// Sequence length `n`.
    pub horizon: usize,
    pub lambda: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub omega_bnd: f64,
    pub omega_stab: f64,
    pub clip_eps: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Policy delay `d`.
    pub delay: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub lyapunov_lr: f64,
    pub alpha_lr: f64,
    pub init_alpha: f64,
    /// Defaults to `-action_dim`.
    pub target_entropy: Option<f64>,
    pub batch_size: usize,
    pub samples_per_iter: usize,
    pub warm_sequences: usize,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    /// Include the stability advantage in the actor objective.
    pub use_advantage: bool,
    pub total_env_steps: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: 20,
            lambda: 0.95,
            alpha1: 1.0,
            alpha2: 2.0,
            alpha3: 0.15,
            omega_bnd: 1.0,
            omega_stab: 10.0,
            clip_eps: 0.1,
            gamma: 0.99,
            tau: 0.05,
            delay: 2,
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            lyapunov_lr: 1e-3,
            alpha_lr: 1e-3,
            init_alpha: 1.0,
            target_entropy: None,
            batch_size: 256,
            samples_per_iter: 20,
            warm_sequences: 5_000,
            buffer_capacity: 1_000_000,
            hidden: vec![256, 256],
            use_advantage: true,
            total_env_steps: 1_000_000,
        }
    }
}

impl TrainConfig {
    /// Plain soft actor-critic: one-step sequences, no certificate, no
    /// stability advantage.
    pub fn sac_ablation(mut self) -> Self {
        self.horizon = 1;
        self.omega_bnd = 0.0;
        self.omega_stab = 0.0;
        self.use_advantage = false;
        self
    }

    pub fn coeffs(&self) -> LyapunovCoeffs {
        LyapunovCoeffs {
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            alpha3: self.alpha3,
        }
    }

    pub fn lyapunov_enabled(&self) -> bool {
        self.omega_bnd != 0.0 || self.omega_stab != 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.horizon == 0 || self.batch_size == 0 || self.delay == 0 || self.samples_per_iter == 0 {
            return bad("horizon, batch_size, delay and samples_per_iter must be at least 1");
        }
        if self.buffer_capacity == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("buffer_capacity and hidden widths must be positive");
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) || !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("lambda and tau must lie in (0, 1]");
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.alpha1 > 0.0 && self.alpha2 >= self.alpha1 && self.alpha3 > 0.0 && self.alpha3 < 1.0) {
            return bad("need 0 < alpha1 <= alpha2 and 0 < alpha3 < 1");
        }
        if !(self.clip_eps > 0.0 && self.init_alpha > 0.0) {
            return bad("clip_eps and init_alpha must be positive");
        }
        let rates = [self.actor_lr, self.critic_lr, self.lyapunov_lr, self.alpha_lr];
        if rates.iter().any(|&r| !(r > 0.0)) || self.omega_bnd < 0.0 || self.omega_stab < 0.0 {
            return bad("learning rates must be positive and loss weights non-negative");
        }
        Ok(())
    }
}

/// All networks of one learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub policy: PolicyNet,
    pub q1: CriticNet,
    pub q2: CriticNet,
    pub q1_target: CriticNet,
    pub q2_target: CriticNet,
    pub lyapunov: LyapunovNet,
    pub log_alpha: f64,
}

/// Labels and weights of the stability loss for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityInputs {
    /// `N x (n-1)` labels in `{-1, +1}`.
    pub esl: Matrix,
    /// `N x (n-1)`, `w_k * IS_k`.
    pub weight: Matrix,
    /// `|s|^2` for every row of the batch.
    pub norms_sq: Vec<f64>,
    pub positive_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovLoss {
    pub total: f64,
    pub bnd: f64,
    pub stab: f64,
    pub grads: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLoss {
    pub value: f64,
    pub grads: Vec<Matrix>,
    /// Log-densities of the fresh samples, one per batch row.
    pub logp: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Critic {
    First,
    Second,
}

fn first_rows(m: &Matrix, n: usize) -> Matrix {
    Matrix::from_fn(m.rows() / n, m.cols(), |i, j| m.get(i * n, j))
}

impl Agent {
    pub fn new(spec: &EnvSpec, hidden: &[usize], init_alpha: f64, rng: &mut Rng) -> Self {
        let (d, m) = (spec.state_dim, spec.action_dim);
        let policy = PolicyNet::new(d, hidden, &spec.action_low, &spec.action_high, rng);
        let q1 = CriticNet::new(d, m, hidden, rng);
        let q2 = CriticNet::new(d, m, hidden, rng);
        let lyapunov = LyapunovNet::new(d, hidden, rng);
        Self {
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            policy,
            q1,
            q2,
            lyapunov,
            log_alpha: math::ln(init_alpha),
        }
    }

    pub fn alpha(&self) -> f64 {
        math::exp(self.log_alpha)
    }

    pub fn critic(&self, which: Critic) -> &CriticNet {
        match which {
            Critic::First => &self.q1,
            Critic::Second => &self.q2,
        }
    }

    /// Stability labels, clipped importance weights times the horizon
    /// weights, and squared norms for `batch` under the current policy.
    pub fn stability_inputs(&self, batch: &SequenceBatch, cfg: &TrainConfig) -> Result<StabilityInputs> {
        let n = batch.n;
        let c = cfg.coeffs();
        let logp_new = self.policy.log_prob(&batch.obs, &batch.actions)?;
        let norms_sq: Vec<f64> = (0..batch.rows()).map(|r| math::norm2_sq(batch.obs.row(r))).collect();
        let w = losses::lambda_weights(n, cfg.lambda);
        let k = n.saturating_sub(1);
        let mut esl = Matrix::zeros(batch.num_seqs, k);
        let mut weight = Matrix::zeros(batch.num_seqs, k);
        let mut positive = 0usize;
        for i in 0..batch.num_seqs {
            let rows = i * n..(i + 1) * n;
            let norms: Vec<f64> = norms_sq[rows.clone()].iter().map(|&q| math::sqrt(q)).collect();
            let labels = losses::esl_labels(&norms, &c);
            let is = losses::is_clip(&logp_new[rows.clone()], &batch.logp[rows]);
            for j in 0..k {
                esl.set(i, j, labels[j]);
                weight.set(i, j, w[j] * is[j]);
                positive += usize::from(labels[j] > 0.0);
            }
        }
        let total = batch.num_seqs * k;
        Ok(StabilityInputs {
            esl,
            weight,
            norms_sq,
            positive_fraction: if total == 0 { 1.0 } else { positive as f64 / total as f64 },
        })
    }

    /// `omega_bnd * L_bnd + omega_stab * L_stab` and its gradient with
    /// respect to the certificate parameters.
    pub fn lyapunov_loss(&self, batch: &SequenceBatch, inputs: &StabilityInputs, cfg: &TrainConfig) -> Result<LyapunovLoss> {
        let c = cfg.coeffs();
        let mut t = Tape::new();
        let s = t.constant(batch.obs.clone());
        let (v, vars) = self.lyapunov.forward_tape(&mut t, s, true)?;
        let bnd = losses::loss_bnd_tape(&mut t, v, &inputs.norms_sq, &c)?;
        let stab = losses::loss_stab_tape(&mut t, v, batch.n, &inputs.esl, &inputs.weight, &c)?;
        let wb = t.scale(bnd, cfg.omega_bnd);
        let ws = t.scale(stab, cfg.omega_stab);
        let total = t.add(wb, ws)?;
        let g = t.backward(total)?;
        Ok(LyapunovLoss {
            total: t.scalar(total),
            bnd: t.scalar(bnd),
            stab: t.scalar(stab),
            grads: collect_grads(&g, &vars, &self.lyapunov.mlp.param_shapes()),
        })
    }

    /// Soft-Q targets for every batch row, with next actions drawn from the
    /// current policy using `eps`.
    pub fn soft_q_targets(&self, batch: &SequenceBatch, eps: &Matrix, gamma: f64) -> Result<Vec<f64>> {
        let (u, logp) = self.policy.act(&batch.next_obs, Some(eps))?;
        let q1 = self.q1_target.forward(&batch.next_obs, &u)?;
        let q2 = self.q2_target.forward(&batch.next_obs, &u)?;
        let alpha = self.alpha();
        Ok((0..batch.rows())
            .map(|r| {
                losses::soft_q_target(
                    batch.rewards[r],
                    batch.terminated[r],
                    q1.data()[r],
                    q2.data()[r],
                    logp[r],
                    gamma,
                    alpha,
                )
            })
            .collect())
    }

    pub fn critic_loss(&self, which: Critic, batch: &SequenceBatch, targets: &[f64]) -> Result<(f64, Vec<Matrix>)> {
        let net = self.critic(which);
        let mut t = Tape::new();
        let x = t.constant(batch.obs.clone());
        let u = t.constant(batch.actions.clone());
        let (q, vars) = net.forward_tape(&mut t, x, u, true)?;
        let loss = losses::loss_softq_tape(&mut t, q, targets)?;
        let g = t.backward(loss)?;
        Ok((t.scalar(loss), collect_grads(&g, &vars, &net.mlp.param_shapes())))
    }

    /// Weighted stability advantage of every sequence under the current
    /// certificate.
    pub fn advantages(&self, batch: &SequenceBatch, cfg: &TrainConfig) -> Result<Vec<f64>> {
        let n = batch.n;
        let c = cfg.coeffs();
        let v = self.lyapunov.forward(&batch.obs)?;
        let w = losses::lambda_weights(n, cfg.lambda);
        Ok((0..batch.num_seqs)
            .map(|i| losses::stability_advantage(&v.data()[i * n..(i + 1) * n], &c, &w).1)
            .collect())
    }

    /// Negative of the entropy-regularized value of fresh reparameterized
    /// samples plus, with `adv`, the clipped surrogate on the first action
    /// of every sequence.
    pub fn policy_loss(
        &self,
        batch: &SequenceBatch,
        eps: &Matrix,
        adv: Option<&[f64]>,
        clip_eps: f64,
    ) -> Result<PolicyLoss> {
        let p = &self.policy;
        let mut t = Tape::new();
        let vars = p.trunk.bind(&mut t, true);
        let x = t.constant(batch.obs.clone());
        let head = p.head_with(&mut t, x, &vars)?;
        let (u, logp) = p.sample_tape(&mut t, head, eps)?;
        let (q1, _) = self.q1.forward_tape(&mut t, x, u, false)?;
        let (q2, _) = self.q2.forward_tape(&mut t, x, u, false)?;
        let qmin = t.min(q1, q2)?;
        let ent = t.scale(logp, self.alpha());
        let soft = t.sub(qmin, ent)?;
        let mut objective = t.mean(soft);

        if let Some(adv) = adv {
            let n = batch.n;
            if adv.len() != batch.num_seqs {
                return Err(crate::error::shape_err("policy_loss", (batch.num_seqs, 1), (adv.len(), 1)));
            }
            let x0 = t.constant(first_rows(&batch.obs, n));
            let h0 = p.head_with(&mut t, x0, &vars)?;
            let lp0 = p.log_prob_tape(&mut t, h0, &first_rows(&batch.actions, n))?;
            let old: Vec<f64> = (0..batch.num_seqs).map(|i| batch.logp[i * n]).collect();
            let old = t.constant(Matrix::column(&old));
            let dlp = t.sub(lp0, old)?;
            let rho = t.exp(dlp);
            let a = t.constant(Matrix::column(adv));
            let s1 = t.mul(rho, a)?;
            let rc = t.clip(rho, 1.0 - clip_eps, 1.0 + clip_eps);
            let s2 = t.mul(rc, a)?;
            let surr = t.min(s1, s2)?;
            let surr = t.mean(surr);
            objective = t.add(objective, surr)?;
        }
        let loss = t.neg(objective);
        let g = t.backward(loss)?;
        Ok(PolicyLoss {
            value: t.scalar(loss),
            grads: collect_grads(&g, &vars, &p.trunk.param_shapes()),
            logp: t.value(logp).data().to_vec(),
        })
    }

    /// Temperature loss and its derivative with respect to `log_alpha`.
    pub fn alpha_loss(&self, mean_logp: f64, target_entropy: f64) -> Result<(f64, f64)> {
        let mut t = Tape::new();
        let la = t.param(Matrix::scalar(self.log_alpha));
        let loss = losses::loss_alpha_tape(&mut t, la, mean_logp, target_entropy);
        let g = t.backward(loss)?;
        Ok((t.scalar(loss), g.wrt_or_zeros(la, (1, 1)).data()[0]))
    }

    pub fn update_targets(&mut self, tau: f64) {
        self.q1_target.mlp.polyak_from(&self.q1.mlp, tau);
        self.q2_target.mlp.polyak_from(&self.q2.mlp, tau);
    }
}

/// Losses of one update round. Policy columns are empty on rounds without
/// a policy step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: u64,
    pub env_steps: u64,
    pub loss_lya: f64,
    pub loss_bnd: f64,
    pub loss_stab: f64,
    pub loss_q1: f64,
    pub loss_q2: f64,
    pub loss_pi: Option<f64>,
    pub alpha: f64,
    pub mean_esl_positive_fraction: f64,
    #[serde(rename = "mean_A_lambda")]
    pub mean_a_lambda: Option<f64>,
}

#[derive(Debug, Clone)]
struct Streams {
    reset: Rng,
    action: Rng,
    noise: Rng,
    sampling: Rng,
    update: Rng,
}

/// Optimizer state for every network.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    pub policy: Adam,
    pub q1: Adam,
    pub q2: Adam,
    pub lyapunov: Adam,
    pub alpha: Adam,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub env: Env,
    pub agent: Agent,
    pub opt: Optimizers,
    pub buffer: ReplayBuffer,
    collector: NStepCollector,
    state: EnvState,
    streams: Streams,
    pub env_steps: u64,
    /// Update rounds run so far (zero during warm-up).
    pub iterations: u64,
    pub episodes: u64,
}

fn normal_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng::normal(rng))
}

fn check(what: &str, iter: u64, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence(format!("{what} = {v} at iteration {iter}")))
    }
}

fn step_adam(opt: &mut Adam, params: Vec<&mut Matrix>, grads: &[Matrix], what: &str, iter: u64) -> Result<()> {
    opt.step(params, grads).map_err(|e| match e {
        Error::NonFinite(_) => Error::Divergence(format!("non-finite {what} gradient at iteration {iter}")),
        other => other,
    })
}

impl Trainer {
    pub fn new(env: Env, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        env.spec().validate()?;
        let seed = cfg.seed;
        let agent = Agent::new(
            env.spec(),
            &cfg.hidden,
            cfg.init_alpha,
            &mut rng::seeded_stream(seed, stream::INIT),
        );
        let adam = |lr: f64, shapes: Vec<(usize, usize)>| Adam::new(AdamConfig::with_lr(lr), &shapes);
        let opt = Optimizers {
            policy: adam(cfg.actor_lr, agent.policy.trunk.param_shapes()),
            q1: adam(cfg.critic_lr, agent.q1.mlp.param_shapes()),
            q2: adam(cfg.critic_lr, agent.q2.mlp.param_shapes()),
            lyapunov: adam(cfg.lyapunov_lr, agent.lyapunov.mlp.param_shapes()),
            alpha: adam(cfg.alpha_lr, vec![(1, 1)]),
        };
        let mut streams = Streams {
            reset: rng::seeded_stream(seed, stream::RESET),
            action: rng::seeded_stream(seed, stream::ACTION),
            noise: rng::seeded_stream(seed, stream::PROCESS_NOISE),
            sampling: rng::seeded_stream(seed, stream::SAMPLING),
            update: rng::seeded_stream(seed, stream::UPDATE_NOISE),
        };
        let state = env.reset(&mut streams.reset);
        Ok(Self {
            buffer: ReplayBuffer::new(cfg.horizon, cfg.buffer_capacity, cfg.warm_sequences),
            collector: NStepCollector::new(cfg.horizon),
            state,
            streams,
            env,
            agent,
            opt,
            cfg,
            env_steps: 0,
            iterations: 0,
            episodes: 0,
        })
    }

    pub fn target_entropy(&self) -> f64 {
        self.cfg
            .target_entropy
            .unwrap_or(-(self.env.spec().action_dim as f64))
    }

    /// One environment step under the stochastic policy.
    fn env_step(&mut self) -> Result<()> {
        let m = self.env.spec().action_dim;
        let obs = self.env.observe(&self.state)?;
        let eps = normal_matrix(&mut self.streams.action, 1, m);
        let (u, logp) = self.agent.policy.act(&Matrix::row_vector(&obs), Some(&eps))?;
        let action = u.into_vec();
        let r = self.env.step(&self.state, &action, &mut self.streams.noise)?;
        self.env_steps += 1;
        let d = Transition {
            obs: r.s,
            action,
            reward: r.reward,
            logp: logp[0],
            next_obs: r.s_next,
            terminated: r.terminated,
        };
        if d.is_finite() {
            if let Some(seq) = self.collector.push(d) {
                self.buffer.insert(&seq)?;
            }
        }
        if r.terminated || r.truncated {
            self.collector.clear();
            self.state = self.env.reset(&mut self.streams.reset);
            self.episodes += 1;
        } else {
            self.state = r.next;
        }
        Ok(())
    }

    /// Collects `samples_per_iter` steps, then updates if the buffer is warm.
    pub fn train_iteration(&mut self) -> Result<Option<IterationLog>> {
        for _ in 0..self.cfg.samples_per_iter {
            self.env_step()?;
        }
        if !self.buffer.is_warm() {
            return Ok(None);
        }
        self.iterations += 1;
        self.update().map(Some)
    }

    fn update(&mut self) -> Result<IterationLog> {
        let it = self.iterations;
        let cfg = self.cfg.clone();
        let (rows, m) = (cfg.batch_size * cfg.horizon, self.env.spec().action_dim);
        let batch = self.buffer.sample(cfg.batch_size, &mut self.streams.sampling)?;

        let (mut loss_lya, mut loss_bnd, mut loss_stab, mut esl_pos) = (0.0, 0.0, 0.0, 1.0);
        if cfg.lyapunov_enabled() {
            let inputs = self.agent.stability_inputs(&batch, &cfg)?;
            let l = self.agent.lyapunov_loss(&batch, &inputs, &cfg)?;
            loss_lya = check("loss_lya", it, l.total)?;
            loss_bnd = l.bnd;
            loss_stab = l.stab;
            esl_pos = inputs.positive_fraction;
            step_adam(&mut self.opt.lyapunov, self.agent.lyapunov.mlp.params_mut(), &l.grads, "certificate", it)?;
        }

        let eps_next = normal_matrix(&mut self.streams.update, rows, m);
        let y = self.agent.soft_q_targets(&batch, &eps_next, cfg.gamma)?;
        let (l1, g1) = self.agent.critic_loss(Critic::First, &batch, &y)?;
        let (l2, g2) = self.agent.critic_loss(Critic::Second, &batch, &y)?;
        check("loss_q1", it, l1)?;
        check("loss_q2", it, l2)?;
        step_adam(&mut self.opt.q1, self.agent.q1.mlp.params_mut(), &g1, "critic", it)?;
        step_adam(&mut self.opt.q2, self.agent.q2.mlp.params_mut(), &g2, "critic", it)?;
        self.agent.update_targets(cfg.tau);

        let mut loss_pi = None;
        let mut mean_a = None;
        if it % cfg.delay as u64 == 0 {
            for j in 0..cfg.delay {
                let b = if j == 0 {
                    batch.clone()
                } else {
                    self.buffer.sample(cfg.batch_size, &mut self.streams.sampling)?
                };
                let adv = if cfg.use_advantage && cfg.horizon > 1 {
                    Some(self.agent.advantages(&b, &cfg)?)
                } else {
                    None
                };
                if j == 0 {
                    mean_a = adv.as_ref().map(|a| a.iter().sum::<f64>() / a.len() as f64);
                }
                let eps = normal_matrix(&mut self.streams.update, rows, m);
                let pl = self.agent.policy_loss(&b, &eps, adv.as_deref(), cfg.clip_eps)?;
                loss_pi = Some(check("loss_pi", it, pl.value)?);
                step_adam(&mut self.opt.policy, self.agent.policy.trunk.params_mut(), &pl.grads, "policy", it)?;

                let mean_logp = pl.logp.iter().sum::<f64>() / pl.logp.len() as f64;
                let (_, ga) = self.agent.alpha_loss(mean_logp, self.target_entropy())?;
                let mut la = Matrix::scalar(self.agent.log_alpha);
                step_adam(&mut self.opt.alpha, vec![&mut la], &[Matrix::scalar(ga)], "temperature", it)?;
                self.agent.log_alpha = check("log_alpha", it, la.data()[0])?;
            }
        }

        Ok(IterationLog {
            iter: it,
            env_steps: self.env_steps,
            loss_lya,
            loss_bnd,
            loss_stab,
            loss_q1: l1,
            loss_q2: l2,
            loss_pi,
            alpha: self.agent.alpha(),
            mean_esl_positive_fraction: esl_pos,
            mean_a_lambda: mean_a,
        })
    }

    /// Trains until `total_env_steps`, handing every update log to `on_log`.
    pub fn run<E: From<Error>>(
        &mut self,
        mut on_log: impl FnMut(&Trainer, &IterationLog) -> core::result::Result<(), E>,
    ) -> core::result::Result<(), E> {
        while self.env_steps < self.cfg.total_env_steps {
            if let Some(log) = self.train_iteration()? {
                on_log(self, &log)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvId;
    use alloc::vec::Vec;

    fn tiny(seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            horizon: 3,
            hidden: vec![8],
            batch_size: 4,
            samples_per_iter: 5,
            warm_sequences: 10,
            buffer_capacity: 1000,
            total_env_steps: 200,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn defaults_are_valid() {
        TrainConfig::default().validate().unwrap();
        let sac = TrainConfig::default().sac_ablation();
        assert_eq!(sac.horizon, 1);
        assert!(!sac.lyapunov_enabled());
        let bad = TrainConfig {
            alpha3: 1.5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn warm_up_then_updates() {
        let mut tr = Trainer::new(Env::new(EnvId::VanderPol), tiny(1)).unwrap();
        assert!(tr.train_iteration().unwrap().is_none());
        let mut logs = Vec::new();
        tr.run(|_, l| {
            logs.push(l.clone());
            Ok::<_, Error>(())
        })
        .unwrap();
        assert!(!logs.is_empty());
        assert_eq!(logs[0].iter, 1);
        assert!(logs[0].loss_pi.is_none());
        assert!(logs[1].loss_pi.is_some());
        assert!(logs.iter().all(|l| l.loss_q1.is_finite() && l.alpha > 0.0));
        assert_eq!(tr.env_steps, 200);
    }

    #[test]
    fn training_is_deterministic() {
        let run = |seed| {
            let mut tr = Trainer::new(Env::new(EnvId::Pendulum), tiny(seed)).unwrap();
            let mut logs = Vec::new();
            tr.run(|_, l| {
                logs.push(l.clone());
                Ok::<_, Error>(())
            })
            .unwrap();
            (logs, tr.agent)
        };
        let (a, agent_a) = run(7);
        let (b, agent_b) = run(7);
        assert_eq!(a, b);
        assert_eq!(agent_a, agent_b);
        let (c, _) = run(8);
        assert_ne!(a, c);
    }

    #[test]
    fn frozen_critics_leave_only_the_actor_path() {
        let mut rng = rng::seeded(2);
        let env = Env::new(EnvId::VanderPol);
        let agent = Agent::new(env.spec(), &[6], 1.0, &mut rng);
        let obs = Matrix::from_fn(6, 2, |i, j| 0.3 * i as f64 - 0.5 * j as f64);
        let (u, logp) = agent.policy.act(&obs, Some(&normal_matrix(&mut rng, 6, 1))).unwrap();
        let batch = SequenceBatch {
            num_seqs: 3,
            n: 2,
            next_obs: obs.clone(),
            obs,
            actions: u,
            rewards: vec![0.0; 6],
            logp,
            terminated: vec![false; 6],
        };
        let eps = normal_matrix(&mut rng, 6, 1);
        let pl = agent.policy_loss(&batch, &eps, Some(&[1.0, -1.0, 0.5]), 0.1).unwrap();
        assert_eq!(pl.grads.len(), agent.policy.trunk.param_shapes().len());
        assert!(pl.grads.iter().any(|g| g.data().iter().any(|&x| x != 0.0)));
        let (_, ga) = agent.alpha_loss(-2.0, -1.0).unwrap();
        assert!((ga - 3.0).abs() < 1e-12);
    }
}
