//! Adam with bias correction.

use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::math;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        Self {
            cfg,
            t: 0,
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }

    /// One update. Rejects non-finite gradients before touching anything.
    pub fn step(&mut self, params: Vec<&mut Matrix>, grads: &[Matrix]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(shape_err("Adam::step", (self.m.len(), 1), (params.len(), grads.len())));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != self.m[i].shape() || params[i].shape() != self.m[i].shape() {
                return Err(shape_err("Adam::step", self.m[i].shape(), g.shape()));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite("Adam gradient"));
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let bc1 = 1.0 - math::powf(beta1, self.t as f64);
        let bc2 = 1.0 - math::powf(beta2, self.t as f64);
        for ((p, g), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let (pd, gd) = (p.data_mut(), g.data());
            let (md, vd) = (m.data_mut(), v.data_mut());
            for k in 0..pd.len() {
                md[k] = beta1 * md[k] + (1.0 - beta1) * gd[k];
                vd[k] = beta2 * vd[k] + (1.0 - beta2) * gd[k] * gd[k];
                let mh = md[k] / bc1;
                let vh = vd[k] / bc2;
                pd[k] -= lr * mh / (math::sqrt(vh) + eps);
            }
        }
        Ok(())
    }
}
