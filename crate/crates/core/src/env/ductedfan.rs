//! Planar ducted-fan vehicle, state `[x, y, theta, x', y', theta']`.

use crate::error::Result;
use crate::math::{cos, sin};

use super::params::{set_nonnegative, set_positive, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuctedFanParams {
    pub m: f64,
    pub r: f64,
    pub d: f64,
    pub j: f64,
    pub g: f64,
}

impl Default for DuctedFanParams {
    fn default() -> Self {
        Self {
            m: 8.5,
            r: 0.26,
            d: 0.95,
            j: 0.048,
            g: 9.81,
        }
    }
}

impl ParamSet for DuctedFanParams {
    const ENV: &'static str = "ductedfan";
    const NAMES: &'static [&'static str] = &["m", "r", "d", "J", "g"];

    fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "m" => set_positive(&mut self.m, name, value),
            "r" => set_positive(&mut self.r, name, value),
            "d" => set_nonnegative(&mut self.d, name, value),
            "J" => set_positive(&mut self.j, name, value),
            "g" => set_positive(&mut self.g, name, value),
            _ => Err(Self::unknown(name)),
        }
    }
}

/// `u1` is the lateral force, `u2` the thrust in excess of hover.
pub fn deriv(x: &[f64; 6], u: [f64; 2], p: &DuctedFanParams) -> [f64; 6] {
    let (s, c) = (sin(x[2]), cos(x[2]));
    let mg = p.m * p.g;
    [
        x[3],
        x[4],
        x[5],
        (-mg * s - p.d * x[3] + u[0] * c - u[1] * s) / p.m,
        (mg * (c - 1.0) - p.d * x[4] + u[0] * s + u[1] * c) / p.m,
        p.r * u[0] / p.j,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let p = DuctedFanParams::default();
        assert_eq!(deriv(&[0.0; 6], [0.0, 0.0], &p), [0.0; 6]);
        let d = deriv(&[0.0; 6], [1.0, 0.0], &p);
        assert!((d[3] - 1.0 / 8.5).abs() < 1e-12);
        assert_eq!(d[4], 0.0);
        assert!((d[5] - 0.26 / 0.048).abs() < 1e-12);
        let d = deriv(&[0.0; 6], [0.0, 1.0], &p);
        assert_eq!(d[3], 0.0);
        assert!((d[4] - 1.0 / 8.5).abs() < 1e-12);
        assert_eq!(d[5], 0.0);
    }
}
