//! Single-track car in reference-frame error coordinates,
//! `e = [sx, sy, delta, v_e, psi_e, psi_dot_e, beta]`, input
//! `u = [steering rate, longitudinal acceleration]`.
//!
//! Above the switch speed the yaw and side-slip rows follow the tyre model;
//! below it a kinematic bicycle takes over to avoid the `1/v` terms.

use crate::error::Result;
use crate::math::{cos, sin, tan};

use super::params::{set_finite, set_positive, ParamSet};
use super::reference::PlanarRef;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarParams {
    pub m: f64,
    pub iz: f64,
    pub lf: f64,
    pub lr: f64,
    pub hs: f64,
    pub tire_p_dy1: f64,
    pub tire_p_ky1: f64,
    pub mu_scale: f64,
    /// Direct friction override; otherwise `mu_scale * tire_p_dy1`.
    pub mu: Option<f64>,
    pub g: f64,
    pub v_switch: f64,
}

impl Default for CarParams {
    fn default() -> Self {
        Self {
            m: 1093.0,
            iz: 1792.0,
            lf: 1.155,
            lr: 1.423,
            hs: 0.614,
            tire_p_dy1: 1.0489,
            tire_p_ky1: -21.92,
            mu_scale: 0.1,
            mu: None,
            g: 9.81,
            v_switch: 0.1,
        }
    }
}

impl CarParams {
    pub fn friction(&self) -> f64 {
        self.mu.unwrap_or(self.mu_scale * self.tire_p_dy1)
    }

    /// Front and rear cornering stiffness coefficients.
    pub fn cornering(&self) -> f64 {
        -self.tire_p_ky1 / self.tire_p_dy1
    }

    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }
}

impl ParamSet for CarParams {
    const ENV: &'static str = "car_tracking";
    const NAMES: &'static [&'static str] = &[
        "m",
        "Iz",
        "lf",
        "lr",
        "hs",
        "tire_p_dy1",
        "tire_p_ky1",
        "mu_scale",
        "mu",
        "g",
        "v_switch",
    ];

    fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "m" => set_positive(&mut self.m, name, value),
            "Iz" => set_positive(&mut self.iz, name, value),
            "lf" => set_positive(&mut self.lf, name, value),
            "lr" => set_positive(&mut self.lr, name, value),
            "hs" => set_positive(&mut self.hs, name, value),
            "tire_p_dy1" => set_positive(&mut self.tire_p_dy1, name, value),
            "tire_p_ky1" => set_finite(&mut self.tire_p_ky1, name, value),
            "mu_scale" => set_positive(&mut self.mu_scale, name, value),
            "mu" => {
                let mut mu = 0.0;
                set_positive(&mut mu, name, value)?;
                self.mu = Some(mu);
                Ok(())
            }
            "g" => set_positive(&mut self.g, name, value),
            "v_switch" => set_positive(&mut self.v_switch, name, value),
            _ => Err(Self::unknown(name)),
        }
    }
}

pub fn is_kinematic(e: &[f64; 7], r: &PlanarRef, p: &CarParams) -> bool {
    (e[3] + r.speed).abs() < p.v_switch
}

pub fn deriv(e: &[f64; 7], u: [f64; 2], p: &CarParams, r: &PlanarRef) -> [f64; 7] {
    let v = e[3] + r.speed;
    let (sx, sy, delta, psi_e, beta) = (e[0], e[1], e[2], e[4], e[6]);
    let psi_dot = e[5] + r.omega;
    let big_l = p.wheelbase();
    let mut d = [0.0; 7];
    d[0] = v * cos(psi_e + beta) - r.speed + r.omega * sy;
    d[1] = v * sin(psi_e + beta) - r.omega * sx;
    d[2] = u[0];
    d[3] = u[1] - r.accel;

    if is_kinematic(e, r, p) {
        let tan_d = tan(delta);
        d[4] = v * cos(beta) / big_l * tan_d - r.omega;
        d[5] = cos(beta) * tan_d / big_l * u[1] - r.omega_dot;
        let k = tan_d * p.lr / big_l;
        let beta_prime = (p.lr / (big_l * cos(delta) * cos(delta))) / (1.0 + k * k);
        d[6] = beta_prime * u[0];
        return d;
    }

    let (mu, m, iz, lf, lr, hs, g) = (p.friction(), p.m, p.iz, p.lf, p.lr, p.hs, p.g);
    let (csf, csr) = (p.cornering(), p.cornering());
    let k6 = mu * m / (iz * big_l);
    let f6 = k6
        * (-(lf * lf * csf * g * lr + lr * lr * csr * g * lf) / v * psi_dot
            + (lr * csr * g * lf - lf * csf * g * lr) * beta
            + (lf * csf * g * lr) * delta);
    let f7 = (mu * (csr * g * lf * lr - csf * g * lr * lf) / (v * v * big_l) - 1.0) * psi_dot
        - mu * (csr * g * lf + csf * g * lr) / (v * big_l) * beta
        + mu * csf * g * lr / (v * big_l) * delta;
    let g62 = k6
        * (-(-lf * lf * csf * hs + lr * lr * csr * hs) / v * psi_dot
            + (lr * csr * hs + lf * csf * hs) * beta
            - (lf * csf * hs) * delta);
    let g72 = mu * (csr * hs * lr + csf * hs * lf) / (v * v * big_l) * psi_dot
        - mu * (csr * hs - csf * hs) / (v * big_l) * beta
        - mu * csf * hs / (v * big_l) * delta;
    d[4] = e[5];
    d[5] = f6 + g62 * u[1] - r.omega_dot;
    d[6] = f7 + g72 * u[1];
    d
}
