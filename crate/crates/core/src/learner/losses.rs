//! Loss terms and the per-sequence quantities they are built from.
//!
//! The plain functions work on one sequence at a time and are the reference
//! the batched tape builders are tested against. Everything that acts as a
//! label (stability labels, importance weights, soft-Q targets, advantages)
//! is computed here as plain numbers and enters the tape as a constant.

use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{shape_err, Result};
use crate::math;
use crate::tensor::Matrix;

/// Constants of the certificate conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovCoeffs {
    /// Lower quadratic bound.
    pub alpha1: f64,
    /// Upper quadratic bound.
    pub alpha2: f64,
    /// Per-step decay rate.
    pub alpha3: f64,
}

impl Default for LyapunovCoeffs {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 2.0,
            alpha3: 0.15,
        }
    }
}

impl LyapunovCoeffs {
    /// `(1 - alpha3)^k`.
    pub fn decay(&self, k: usize) -> f64 {
        math::powi(1.0 - self.alpha3, k as u32)
    }
}

/// Stability labels of one sequence from the state norms `|s_{t+k}|`,
/// `k = 0..n`. Entry `k - 1` is `+1` when
/// `|s_{t+k}| <= sqrt(alpha2 / alpha1) (1 - alpha3)^(k/2) |s_t|`, else `-1`.
pub fn esl_labels(norms: &[f64], c: &LyapunovCoeffs) -> Vec<f64> {
    let Some((&n0, rest)) = norms.split_first() else {
        return Vec::new();
    };
    let gain = math::sqrt(c.alpha2 / c.alpha1);
    rest.iter()
        .enumerate()
        .map(|(i, &nk)| {
            let k = (i + 1) as f64;
            let bound = gain * math::powf(1.0 - c.alpha3, 0.5 * k) * n0;
            if nk <= bound {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// Clipped trajectory importance weights `prod_{j<k} min(ratio_j, 1)` for
/// `k = 1..n`.
pub fn is_clip(logp_new: &[f64], logp_old: &[f64]) -> Vec<f64> {
    let n = logp_new.len().min(logp_old.len());
    let mut acc = 1.0;
    (0..n.saturating_sub(1))
        .map(|j| {
            acc *= math::exp(logp_new[j] - logp_old[j]).min(1.0);
            acc
        })
        .collect()
}

/// Normalized geometric weights `lambda^(k-1) / sum` for `k = 1..n`.
pub fn lambda_weights(n: usize, lambda: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n.saturating_sub(1)).map(|k| math::powi(lambda, k as u32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Per-horizon advantages `A_k = (1 - alpha3)^k V(s_t) - V(s_{t+k})` and
/// their weighted sum. `v` holds `V(s_{t+k})` for `k = 0..n`.
pub fn stability_advantage(v: &[f64], c: &LyapunovCoeffs, weights: &[f64]) -> (Vec<f64>, f64) {
    let Some((&v0, rest)) = v.split_first() else {
        return (Vec::new(), 0.0);
    };
    let a: Vec<f64> = rest
        .iter()
        .enumerate()
        .map(|(i, &vk)| c.decay(i + 1) * v0 - vk)
        .collect();
    let total = a.iter().zip(weights).map(|(a, w)| a * w).sum();
    (a, total)
}

/// Mean hinge violation of `alpha1 |s|^2 <= V(s) <= alpha2 |s|^2`.
pub fn boundedness_loss(v: &[f64], norms_sq: &[f64], c: &LyapunovCoeffs) -> f64 {
    let total: f64 = v
        .iter()
        .zip(norms_sq)
        .map(|(&v, &q)| (c.alpha1 * q - v).max(0.0) + (v - c.alpha2 * q).max(0.0))
        .sum();
    total / v.len() as f64
}

/// Stability hinge of one sequence:
/// `sum_k w_k IS_k max(0, ESL_k (V(s_{t+k}) - (1 - alpha3)^k V(s_t)))`.
pub fn stability_loss_seq(v: &[f64], esl: &[f64], weight: &[f64], c: &LyapunovCoeffs) -> f64 {
    let Some((&v0, rest)) = v.split_first() else {
        return 0.0;
    };
    rest.iter()
        .enumerate()
        .map(|(i, &vk)| weight[i] * (esl[i] * (vk - c.decay(i + 1) * v0)).max(0.0))
        .sum()
}

/// `r + gamma (1 - done) (min(Q1', Q2') - alpha logpi')`.
pub fn soft_q_target(reward: f64, terminated: bool, q1: f64, q2: f64, logp: f64, gamma: f64, alpha: f64) -> f64 {
    let cont = if terminated { 0.0 } else { 1.0 };
    reward + gamma * cont * (q1.min(q2) - alpha * logp)
}

/// Clipped surrogate `min(rho A, clip(rho, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(rho: f64, adv: f64, eps: f64) -> f64 {
    (rho * adv).min(rho.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Tape form of [`boundedness_loss`] over a column of values.
pub fn loss_bnd_tape(tape: &mut Tape, v: Var, norms_sq: &[f64], c: &LyapunovCoeffs) -> Result<Var> {
    let rows = tape.value(v).rows();
    if norms_sq.len() != rows {
        return Err(shape_err("loss_bnd", (rows, 1), (norms_sq.len(), 1)));
    }
    let lo = tape.constant(Matrix::from_fn(rows, 1, |i, _| c.alpha1 * norms_sq[i]));
    let hi = tape.constant(Matrix::from_fn(rows, 1, |i, _| c.alpha2 * norms_sq[i]));
    let below = tape.sub(lo, v)?;
    let below = tape.relu(below);
    let above = tape.sub(v, hi)?;
    let above = tape.relu(above);
    let both = tape.add(below, above)?;
    Ok(tape.mean(both))
}

/// Tape form of the batch stability loss: the mean over sequences of
/// [`stability_loss_seq`]. `v` is the `N*n x 1` column of values in
/// sequence-major order; `esl` and `weight` are `N x (n-1)`, the latter
/// already holding `w_k * IS_k`.
pub fn loss_stab_tape(
    tape: &mut Tape,
    v: Var,
    n: usize,
    esl: &Matrix,
    weight: &Matrix,
    c: &LyapunovCoeffs,
) -> Result<Var> {
    let rows = tape.value(v).rows();
    let seqs = rows / n.max(1);
    if n < 2 {
        return Ok(tape.constant_scalar(0.0));
    }
    if esl.shape() != (seqs, n - 1) || weight.shape() != (seqs, n - 1) {
        return Err(shape_err("loss_stab", (seqs, n - 1), esl.shape()));
    }
    let vm = tape.reshape(v, seqs, n)?;
    let v0 = tape.slice_cols(vm, 0, 1)?;
    let vk = tape.slice_cols(vm, 1, n - 1)?;
    let decay = tape.constant(Matrix::from_fn(1, n - 1, |_, k| c.decay(k + 1)));
    let shrunk = tape.matmul(v0, decay)?;
    let diff = tape.sub(vk, shrunk)?;
    let e = tape.constant(esl.clone());
    let signed = tape.mul(diff, e)?;
    let hinge = tape.relu(signed);
    let w = tape.constant(weight.clone());
    let weighted = tape.mul(hinge, w)?;
    let total = tape.sum(weighted);
    Ok(tape.scale(total, 1.0 / seqs as f64))
}

/// Mean squared error against constant targets.
pub fn loss_softq_tape(tape: &mut Tape, q: Var, targets: &[f64]) -> Result<Var> {
    let rows = tape.value(q).rows();
    if targets.len() != rows {
        return Err(shape_err("loss_softq", (rows, 1), (targets.len(), 1)));
    }
    let y = tape.constant(Matrix::column(targets));
    let d = tape.sub(q, y)?;
    let d2 = tape.square(d);
    Ok(tape.mean(d2))
}

/// `-alpha * (mean logpi + target_entropy)` with `alpha = exp(log_alpha)`
/// and the log-densities held fixed.
pub fn loss_alpha_tape(tape: &mut Tape, log_alpha: Var, mean_logp: f64, target_entropy: f64) -> Var {
    let a = tape.exp(log_alpha);
    tape.scale(a, -(mean_logp + target_entropy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn coeffs() -> LyapunovCoeffs {
        LyapunovCoeffs::default()
    }

    #[test]
    fn weights_sum_to_one() {
        let w = lambda_weights(10, 0.95);
        assert_eq!(w.len(), 9);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((w[1] / w[0] - 0.95).abs() < 1e-15);
        assert!(lambda_weights(1, 0.95).is_empty());
        assert_eq!(lambda_weights(2, 0.3), vec![1.0]);
    }

    #[test]
    fn is_clip_caps_ratios_at_one() {
        let w = is_clip(&[0.0, 0.0, 0.0, 0.0], &[-1.0, 0.5, 0.0, 7.0]);
        assert_eq!(w.len(), 3);
        assert_eq!(w[0], 1.0);
        assert!((w[1] - math::exp(-0.5)).abs() < 1e-15);
        assert!((w[2] - math::exp(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn esl_matches_hand_values() {
        let c = coeffs();
        // bound_k = sqrt(2) 0.85^(k/2) |s_t|
        let b1 = math::sqrt(2.0) * math::sqrt(0.85);
        let labels = esl_labels(&[1.0, b1 * (1.0 - 1e-12), b1, 0.0], &c);
        assert_eq!(labels, vec![1.0, -1.0, 1.0]);
        assert!(esl_labels(&[3.0], &c).is_empty());
    }

    #[test]
    fn advantage_of_exact_decay_is_zero() {
        let c = coeffs();
        let v: Vec<f64> = (0..5).map(|k| 2.0 * c.decay(k)).collect();
        let (a, total) = stability_advantage(&v, &c, &lambda_weights(5, 0.95));
        assert!(a.iter().all(|x| x.abs() < 1e-15));
        assert!(total.abs() < 1e-15);
    }

    #[test]
    fn soft_target_ignores_future_after_termination() {
        assert_eq!(soft_q_target(-3.0, true, 10.0, 20.0, -1.0, 0.99, 0.5), -3.0);
        let y = soft_q_target(-3.0, false, 10.0, 20.0, -1.0, 0.99, 0.5);
        assert!((y - (-3.0 + 0.99 * 10.5)).abs() < 1e-12);
    }

    #[test]
    fn surrogate_clips_both_sides() {
        assert_eq!(clipped_surrogate(1.5, 2.0, 0.1), 2.2);
        assert_eq!(clipped_surrogate(1.5, -2.0, 0.1), -3.0);
        assert_eq!(clipped_surrogate(0.5, 2.0, 0.1), 1.0);
        assert_eq!(clipped_surrogate(0.5, -2.0, 0.1), -1.8);
    }

    #[test]
    fn tape_losses_match_plain() {
        let c = coeffs();
        let n = 4;
        let v = [1.0, 0.9, 0.95, 0.2, 3.0, 0.1, 2.0, 2.9];
        let norms_sq = [0.8, 0.4, 0.7, 0.1, 1.0, 0.3, 1.5, 1.4];
        let esl = Matrix::from_rows(&[[1.0, -1.0, 1.0], [1.0, 1.0, -1.0]]).unwrap();
        let is = Matrix::from_rows(&[[1.0, 0.5, 0.25], [0.9, 0.9, 0.8]]).unwrap();
        let w = lambda_weights(n, 0.95);
        let weight = Matrix::from_fn(2, 3, |i, k| w[k] * is.get(i, k));

        let mut t = Tape::new();
        let vv = t.param(Matrix::column(&v));
        let bnd = loss_bnd_tape(&mut t, vv, &norms_sq, &c).unwrap();
        let stab = loss_stab_tape(&mut t, vv, n, &esl, &weight, &c).unwrap();

        let want_bnd = boundedness_loss(&v, &norms_sq, &c);
        let want_stab = (stability_loss_seq(&v[..4], esl.row(0), weight.row(0), &c)
            + stability_loss_seq(&v[4..], esl.row(1), weight.row(1), &c))
            / 2.0;
        assert!((t.scalar(bnd) - want_bnd).abs() < 1e-14);
        assert!((t.scalar(stab) - want_stab).abs() < 1e-14);
        assert!(want_stab > 0.0 && want_bnd > 0.0);
    }

    #[test]
    fn single_step_stability_loss_is_zero() {
        let mut t = Tape::new();
        let v = t.param(Matrix::column(&[1.0, 2.0]));
        let z = loss_stab_tape(&mut t, v, 1, &Matrix::zeros(2, 0), &Matrix::zeros(2, 0), &coeffs()).unwrap();
        assert_eq!(t.scalar(z), 0.0);
    }

    #[test]
    fn alpha_gradient_sign() {
        let mut t = Tape::new();
        let la = t.param(Matrix::scalar(0.0));
        // Entropy above target (logp small): alpha should shrink.
        let l = loss_alpha_tape(&mut t, la, -5.0, -1.0);
        let g = t.backward(l).unwrap();
        assert!(g.wrt(la).unwrap().data()[0] > 0.0);
    }
}
