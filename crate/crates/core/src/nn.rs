//! MLP building blocks: the squashed-Gaussian policy, soft-Q critics and
//! the Lyapunov certificate network.
//!
//! Every network has two forward paths. The plain path runs on matrices and
//! is used for acting and evaluation. The tape path records the same
//! operations in the same order, so both paths agree bit for bit.

use alloc::vec::Vec;

use crate::autodiff::{Grads, Tape, Var};
use crate::error::{shape_err, Result};
use crate::math;
use crate::rng::{self, Rng};
use crate::tensor::{gemm, Matrix};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added inside the log-Jacobian of the tanh squash.
pub const SQUASH_EPS: f64 = 1e-6;
/// Output layers start in `[-OUTPUT_INIT, OUTPUT_INIT]`.
pub const OUTPUT_INIT: f64 = 3e-3;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in x out`, so a batch `B x in` maps to `B x out` by `x * w + b`.
    pub w: Matrix,
    /// `1 x out`.
    pub b: Matrix,
}

impl Linear {
    pub fn uniform(inp: usize, out: usize, bound: f64, rng: &mut Rng) -> Self {
        let w = Matrix::from_fn(inp, out, |_, _| rng::uniform(rng, -bound, bound));
        let b = Matrix::from_fn(1, out, |_, _| rng::uniform(rng, -bound, bound));
        Self { w, b }
    }

    pub fn zeros(inp: usize, out: usize) -> Self {
        Self {
            w: Matrix::zeros(inp, out),
            b: Matrix::zeros(1, out),
        }
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = Matrix::zeros(x.rows(), self.w.cols());
        gemm(1.0, x, false, &self.w, false, 0.0, &mut h)?;
        let b = self.b.data();
        let cols = b.len();
        for (i, v) in h.data_mut().iter_mut().enumerate() {
            *v += b[i % cols];
        }
        Ok(h)
    }
}

/// Fully connected ReLU network with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// Hidden layers draw from `U(±1/sqrt(fan_in))`, the output layer from
    /// `U(±OUTPUT_INIT)`.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Self {
        let n = sizes.len().saturating_sub(1);
        let layers = (0..n)
            .map(|i| {
                let bound = if i + 1 == n {
                    OUTPUT_INIT
                } else {
                    1.0 / math::sqrt(sizes[i] as f64)
                };
                Linear::uniform(sizes[i], sizes[i + 1], bound, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect();
        Self { layers }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.layers.iter().map(|l| l.w.rows()).collect();
        if let Some(l) = self.layers.last() {
            s.push(l.w.cols());
        }
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.w.rows())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.cols())
    }

    /// Parameters in declared order: `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.params().iter().map(|p| p.shape()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(shape_err("Mlp::forward", (x.rows(), self.input_dim()), x.shape()));
        }
        let last = self.layers.len().saturating_sub(1);
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if i < last {
                for v in h.data_mut() {
                    if *v <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        Ok(h)
    }

    /// Puts the weights on the tape, in declared order. With `trainable` they
    /// are parameter leaves, otherwise constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|p| if trainable { tape.param(p.clone()) } else { tape.constant(p.clone()) })
            .collect()
    }

    /// Forward pass through weights previously returned by [`Mlp::bind`].
    pub fn forward_with(&self, tape: &mut Tape, x: Var, vars: &[Var]) -> Result<Var> {
        let xs = tape.value(x).shape();
        if xs.1 != self.input_dim() {
            return Err(shape_err("Mlp::forward_tape", (xs.0, self.input_dim()), xs));
        }
        let last = self.layers.len().saturating_sub(1);
        let mut h = x;
        for i in 0..self.layers.len() {
            let xw = tape.matmul(h, vars[2 * i])?;
            h = tape.add(xw, vars[2 * i + 1])?;
            if i < last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// Records the forward pass. Returns the output and, when `trainable`,
    /// the parameter leaves in declared order (empty otherwise).
    pub fn forward_tape(&self, tape: &mut Tape, x: Var, trainable: bool) -> Result<(Var, Vec<Var>)> {
        let vars = self.bind(tape, trainable);
        let y = self.forward_with(tape, x, &vars)?;
        Ok((y, if trainable { vars } else { Vec::new() }))
    }

    /// `self <- tau * src + (1 - tau) * self`.
    pub fn polyak_from(&mut self, src: &Mlp, tau: f64) {
        for (t, s) in self.params_mut().into_iter().zip(src.params()) {
            for (a, b) in t.data_mut().iter_mut().zip(s.data()) {
                *a = tau * b + (1.0 - tau) * *a;
            }
        }
    }
}

/// Gradient matrices for `vars`, zeros where nothing flowed.
pub fn collect_grads(grads: &Grads, vars: &[Var], shapes: &[(usize, usize)]) -> Vec<Matrix> {
    vars.iter()
        .zip(shapes)
        .map(|(&v, &s)| grads.wrt_or_zeros(v, s))
        .collect()
}

/// Diagonal Gaussian policy squashed into a box by `tanh`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    /// Outputs `[mean, log_std]`, each `action_dim` wide.
    pub trunk: Mlp,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

/// Mean and clamped log-std recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct PolicyHead {
    pub mean: Var,
    pub log_std: Var,
}

impl PolicyNet {
    pub fn new(obs_dim: usize, hidden: &[usize], low: &[f64], high: &[f64], rng: &mut Rng) -> Self {
        let mut sizes = alloc::vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * low.len());
        Self {
            trunk: Mlp::new(&sizes, rng),
            action_low: low.to_vec(),
            action_high: high.to_vec(),
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_low.len()
    }

    pub fn mid_half(&self) -> (Vec<f64>, Vec<f64>) {
        let mid = self
            .action_low
            .iter()
            .zip(&self.action_high)
            .map(|(l, h)| 0.5 * (l + h))
            .collect();
        let half = self
            .action_low
            .iter()
            .zip(&self.action_high)
            .map(|(l, h)| 0.5 * (h - l))
            .collect();
        (mid, half)
    }

    /// Plain-path sample. `eps = None` means zero noise: the squashed mean.
    /// Returns actions `B x m` and log-densities.
    pub fn act(&self, x: &Matrix, eps: Option<&Matrix>) -> Result<(Matrix, Vec<f64>)> {
        let out = self.trunk.forward(x)?;
        let m = self.action_dim();
        let (mid, half) = self.mid_half();
        let rows = x.rows();
        if let Some(e) = eps {
            if e.shape() != (rows, m) {
                return Err(shape_err("PolicyNet::act", (rows, m), e.shape()));
            }
        }
        let mut u = Matrix::zeros(rows, m);
        let mut logp = Vec::with_capacity(rows);
        for i in 0..rows {
            let mut lp = 0.0;
            for j in 0..m {
                let mu = out.get(i, j);
                let ls = out.get(i, m + j).clamp(LOG_STD_MIN, LOG_STD_MAX);
                let e = eps.map_or(0.0, |e| e.get(i, j));
                let z = mu + math::exp(ls) * e;
                let t = math::tanh(z);
                u.set(i, j, mid[j] + half[j] * t);
                let gauss = -0.5 * e * e - ls - HALF_LN_2PI;
                lp += gauss - math::ln(half[j] * (1.0 - t * t) + SQUASH_EPS);
            }
            logp.push(lp);
        }
        Ok((u, logp))
    }

    /// Deterministic action for a single observation.
    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let (u, _) = self.act(&Matrix::row_vector(obs), None)?;
        Ok(u.into_vec())
    }

    pub fn head(&self, tape: &mut Tape, x: Var, trainable: bool) -> Result<(PolicyHead, Vec<Var>)> {
        let vars = self.trunk.bind(tape, trainable);
        let h = self.head_with(tape, x, &vars)?;
        Ok((h, if trainable { vars } else { Vec::new() }))
    }

    /// Head through trunk weights bound once with [`Mlp::bind`], so several
    /// heads can share one set of parameter leaves.
    pub fn head_with(&self, tape: &mut Tape, x: Var, vars: &[Var]) -> Result<PolicyHead> {
        let out = self.trunk.forward_with(tape, x, vars)?;
        let m = self.action_dim();
        let mean = tape.slice_cols(out, 0, m)?;
        let raw = tape.slice_cols(out, m, m)?;
        let log_std = tape.clip(raw, LOG_STD_MIN, LOG_STD_MAX);
        Ok(PolicyHead { mean, log_std })
    }

    /// Reparameterized sample on the tape. `eps` is a `B x m` constant.
    /// Returns `(u: B x m, logp: B x 1)`.
    pub fn sample_tape(&self, tape: &mut Tape, head: PolicyHead, eps: &Matrix) -> Result<(Var, Var)> {
        let (mid, half) = self.mid_half();
        let e = tape.constant(eps.clone());
        let std = tape.exp(head.log_std);
        let noise = tape.mul(std, e)?;
        let z = tape.add(head.mean, noise)?;
        let t = tape.tanh(z);
        let half_row = tape.constant(Matrix::row_vector(&half));
        let mid_row = tape.constant(Matrix::row_vector(&mid));
        let scaled = tape.mul(t, half_row)?;
        let u = tape.add(scaled, mid_row)?;

        let base = tape.constant(eps.map(|x| -0.5 * x * x - HALF_LN_2PI));
        let gauss = tape.sub(base, head.log_std)?;
        let t2 = tape.square(t);
        let neg = tape.scale(t2, -1.0);
        let one_minus = tape.add_scalar(neg, 1.0);
        let jac_arg = tape.mul(one_minus, half_row)?;
        let jac_arg = tape.add_scalar(jac_arg, SQUASH_EPS);
        let jac = tape.log(jac_arg);
        let per = tape.sub(gauss, jac)?;
        let logp = tape.row_sum(per);
        Ok((u, logp))
    }

    /// Log-density of stored actions `u` under the recorded head.
    pub fn log_prob_tape(&self, tape: &mut Tape, head: PolicyHead, u: &Matrix) -> Result<Var> {
        let (z, jac) = self.unsquash_with_jacobian(u)?;
        let zc = tape.constant(z);
        let diff = tape.sub(zc, head.mean)?;
        let neg_ls = tape.scale(head.log_std, -1.0);
        let inv_std = tape.exp(neg_ls);
        let w = tape.mul(diff, inv_std)?;
        let w2 = tape.square(w);
        let quad = tape.scale(w2, -0.5);
        let g = tape.sub(quad, head.log_std)?;
        let g = tape.add_scalar(g, -HALF_LN_2PI);
        let jc = tape.constant(jac);
        let per = tape.sub(g, jc)?;
        Ok(tape.row_sum(per))
    }

    /// Plain-path log-density of stored actions.
    pub fn log_prob(&self, x: &Matrix, u: &Matrix) -> Result<Vec<f64>> {
        let out = self.trunk.forward(x)?;
        let m = self.action_dim();
        let (z, jac) = self.unsquash_with_jacobian(u)?;
        Ok((0..x.rows())
            .map(|i| {
                (0..m)
                    .map(|j| {
                        let mu = out.get(i, j);
                        let ls = out.get(i, m + j).clamp(LOG_STD_MIN, LOG_STD_MAX);
                        let w = (z.get(i, j) - mu) * math::exp(-ls);
                        -0.5 * w * w - ls - HALF_LN_2PI - jac.get(i, j)
                    })
                    .sum()
            })
            .collect())
    }

    /// Inverse squash of actions, plus the per-component log-Jacobian term.
    pub fn unsquash_with_jacobian(&self, u: &Matrix) -> Result<(Matrix, Matrix)> {
        let m = self.action_dim();
        if u.cols() != m {
            return Err(shape_err("PolicyNet::unsquash", (u.rows(), m), u.shape()));
        }
        let (mid, half) = self.mid_half();
        let lim = 1.0 - 1e-15;
        let y = Matrix::from_fn(u.rows(), m, |i, j| ((u.get(i, j) - mid[j]) / half[j]).clamp(-lim, lim));
        let z = y.map(math::atanh);
        let jac = Matrix::from_fn(u.rows(), m, |i, j| {
            let t = y.get(i, j);
            math::ln(half[j] * (1.0 - t * t) + SQUASH_EPS)
        });
        Ok((z, jac))
    }

    pub fn unsquash(&self, u: &Matrix) -> Result<Matrix> {
        Ok(self.unsquash_with_jacobian(u)?.0)
    }
}

/// Soft action-value network over `obs ++ action`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub mlp: Mlp,
}

impl CriticNet {
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut Rng) -> Self {
        let mut sizes = alloc::vec![obs_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self {
            mlp: Mlp::new(&sizes, rng),
        }
    }

    pub fn forward(&self, x: &Matrix, u: &Matrix) -> Result<Matrix> {
        if x.rows() != u.rows() {
            return Err(shape_err("CriticNet::forward", x.shape(), u.shape()));
        }
        let xu = Matrix::from_fn(x.rows(), x.cols() + u.cols(), |i, j| {
            if j < x.cols() {
                x.get(i, j)
            } else {
                u.get(i, j - x.cols())
            }
        });
        self.mlp.forward(&xu)
    }

    pub fn forward_tape(&self, tape: &mut Tape, x: Var, u: Var, trainable: bool) -> Result<(Var, Vec<Var>)> {
        let xu = tape.concat_cols(x, u)?;
        self.mlp.forward_tape(tape, xu, trainable)
    }
}

/// Certificate network: `V(s) = softplus(mlp(s)) >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovNet {
    pub mlp: Mlp,
}

impl LyapunovNet {
    pub fn new(obs_dim: usize, hidden: &[usize], rng: &mut Rng) -> Self {
        let mut sizes = alloc::vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self {
            mlp: Mlp::new(&sizes, rng),
        }
    }

    pub fn forward(&self, s: &Matrix) -> Result<Matrix> {
        Ok(self.mlp.forward(s)?.map(math::softplus))
    }

    pub fn value(&self, s: &[f64]) -> Result<f64> {
        Ok(self.forward(&Matrix::row_vector(s))?.data()[0])
    }

    pub fn forward_tape(&self, tape: &mut Tape, s: Var, trainable: bool) -> Result<(Var, Vec<Var>)> {
        let (raw, vars) = self.mlp.forward_tape(tape, s, trainable)?;
        Ok((tape.softplus(raw), vars))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn identity_layer(n: usize) -> Mlp {
        Mlp {
            layers: alloc::vec![Linear {
                w: Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 }),
                b: Matrix::zeros(1, n),
            }],
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2]);
        let y = net.forward(&Matrix::filled(4, 3, 1.7)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_is_identity() {
        let x = Matrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64 - 2.0);
        assert_eq!(identity_layer(3).forward(&x).unwrap(), x);
    }

    #[test]
    fn forward_matches_straight_line_reimplementation() {
        let mut rng = seeded(11);
        let net = Mlp::new(&[3, 6, 5, 2], &mut rng);
        let x = Matrix::from_fn(4, 3, |i, j| 0.3 * i as f64 - 0.7 * j as f64);
        let got = net.forward(&x).unwrap();
        for r in 0..4 {
            let mut h: Vec<f64> = x.row(r).to_vec();
            for (li, l) in net.layers.iter().enumerate() {
                let mut next = alloc::vec![0.0; l.w.cols()];
                for (o, nv) in next.iter_mut().enumerate() {
                    let mut acc = l.b.get(0, o);
                    for (i, hv) in h.iter().enumerate() {
                        acc += hv * l.w.get(i, o);
                    }
                    *nv = if li + 1 < net.layers.len() { acc.max(0.0) } else { acc };
                }
                h = next;
            }
            for (a, b) in got.row(r).iter().zip(&h) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tape_forward_equals_plain_forward() {
        let mut rng = seeded(3);
        let net = Mlp::new(&[2, 8, 8, 3], &mut rng);
        let x = Matrix::from_fn(5, 2, |i, j| 0.4 * i as f64 - 1.1 * j as f64);
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let (y, vars) = net.forward_tape(&mut t, xv, true).unwrap();
        assert_eq!(vars.len(), 6);
        assert_eq!(t.value(y), &net.forward(&x).unwrap());
    }

    fn unit_policy(bound: f64) -> PolicyNet {
        // A zero trunk yields mean 0 and log-std 0.
        PolicyNet {
            trunk: Mlp::zeros(&[1, 4, 2]),
            action_low: alloc::vec![-bound],
            action_high: alloc::vec![bound],
        }
    }

    #[test]
    fn standard_logp_at_zero_noise() {
        let p = unit_policy(5.0);
        let (u, logp) = p.act(&Matrix::zeros(1, 1), Some(&Matrix::zeros(1, 1))).unwrap();
        assert_eq!(u.data()[0], 0.0);
        let want = -0.5 * math::ln(2.0 * math::PI) - math::ln(5.0 + 1e-6);
        assert!((logp[0] - want).abs() < 1e-12);
        assert!((logp[0] - (-2.5284)).abs() < 1e-4);
    }

    #[test]
    fn zero_noise_is_squashed_mean() {
        let mut rng = seeded(5);
        let p = PolicyNet::new(3, &[8], &[-2.0, 0.0], &[2.0, 10.0], &mut rng);
        let x = Matrix::from_fn(3, 3, |i, j| (i + j) as f64 - 1.0);
        let (a, _) = p.act(&x, None).unwrap();
        let (b, _) = p.act(&x, Some(&Matrix::zeros(3, 2))).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn density_integrates_to_one() {
        let p = unit_policy(1.0);
        let n = 200_000;
        let (lo, hi) = (-1.0, 1.0);
        let du = (hi - lo) / n as f64;
        let mut total = 0.0;
        for k in 0..n {
            let u = lo + (k as f64 + 0.5) * du;
            let lp = p
                .log_prob(&Matrix::zeros(1, 1), &Matrix::scalar(u))
                .unwrap()[0];
            total += math::exp(lp) * du;
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn sample_tape_matches_plain_path() {
        let mut rng = seeded(8);
        let p = PolicyNet::new(2, &[6, 6], &[-5.0, -1.0], &[5.0, 3.0], &mut rng);
        let x = Matrix::from_fn(4, 2, |i, j| 0.5 * i as f64 - j as f64);
        let eps = Matrix::from_fn(4, 2, |i, j| 0.3 * i as f64 - 0.6 * j as f64);
        let (u, lp) = p.act(&x, Some(&eps)).unwrap();
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let (h, _) = p.head(&mut t, xv, false).unwrap();
        let (ut, lpt) = p.sample_tape(&mut t, h, &eps).unwrap();
        for (a, b) in t.value(ut).data().iter().zip(u.data()) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in t.value(lpt).data().iter().zip(&lp) {
            assert!((a - b).abs() < 1e-12);
        }
        let lp2 = p.log_prob(&x, &u).unwrap();
        let lpt2 = p.log_prob_tape(&mut t, h, &u).unwrap();
        for ((a, b), c) in lp2.iter().zip(&lp).zip(t.value(lpt2).data()) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn lyapunov_output_is_nonnegative() {
        let mut rng = seeded(9);
        let v = LyapunovNet::new(3, &[8, 8], &mut rng);
        let x = Matrix::from_fn(50, 3, |i, j| (i as f64 - 25.0) * (j as f64 + 1.0));
        assert!(v.forward(&x).unwrap().data().iter().all(|&y| y >= 0.0));
    }

    proptest! {
        #[test]
        fn squash_round_trip(z in -8.0f64..8.0, lo in -10.0f64..0.0, w in 0.1f64..20.0) {
            let p = PolicyNet {
                trunk: Mlp::zeros(&[1, 2]),
                action_low: alloc::vec![lo],
                action_high: alloc::vec![lo + w],
            };
            let u = lo + 0.5 * w + 0.5 * w * math::tanh(z);
            prop_assert!(u > lo && u < lo + w || z.abs() > 7.0);
            let back = p.unsquash(&Matrix::scalar(u)).unwrap().data()[0];
            if z.abs() < 4.0 {
                prop_assert!((back - z).abs() < 1e-9);
            }
        }
    }
}
