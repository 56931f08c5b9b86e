//! Damped inverted pendulum; `theta = 0` is upright.

use crate::error::Result;
use crate::math::sin;

use super::params::{set_nonnegative, set_positive, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    pub m: f64,
    pub l: f64,
    pub b: f64,
    pub g: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            m: 0.15,
            l: 0.5,
            b: 0.1,
            g: 9.81,
        }
    }
}

impl ParamSet for PendulumParams {
    const ENV: &'static str = "pendulum";
    const NAMES: &'static [&'static str] = &["m", "L", "b", "g"];

    fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "m" => set_positive(&mut self.m, name, value),
            "L" => set_positive(&mut self.l, name, value),
            "b" => set_nonnegative(&mut self.b, name, value),
            "g" => set_positive(&mut self.g, name, value),
            _ => Err(Self::unknown(name)),
        }
    }
}

pub fn deriv(x: &[f64; 2], u: f64, p: &PendulumParams) -> [f64; 2] {
    let ml2 = p.m * p.l * p.l;
    [x[1], (p.m * p.g * p.l * sin(x[0]) - p.b * x[1] + u) / ml2]
}

/// Total energy of the unforced, undamped system.
pub fn energy(x: &[f64; 2], p: &PendulumParams) -> f64 {
    0.5 * p.m * p.l * p.l * x[1] * x[1] + p.m * p.g * p.l * (crate::math::cos(x[0]) - 1.0)
}
