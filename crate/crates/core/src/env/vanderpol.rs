//! Forced Van der Pol oscillator.

use crate::error::Result;

use super::params::{set_positive, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanderPolParams {
    pub mu: f64,
}

impl Default for VanderPolParams {
    fn default() -> Self {
        Self { mu: 1.0 }
    }
}

impl ParamSet for VanderPolParams {
    const ENV: &'static str = "vanderpol";
    const NAMES: &'static [&'static str] = &["mu"];

    fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "mu" => set_positive(&mut self.mu, name, value),
            _ => Err(Self::unknown(name)),
        }
    }
}

pub fn deriv(x: &[f64; 2], u: f64, p: &VanderPolParams) -> [f64; 2] {
    [x[1], p.mu * (1.0 - x[0] * x[0]) * x[1] - x[0] + u]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let p = VanderPolParams::default();
        assert_eq!(deriv(&[0.0, 0.0], 0.0, &p), [0.0, 0.0]);
        assert_eq!(deriv(&[1.0, 0.0], 0.0, &p), [0.0, -1.0]);
        assert_eq!(deriv(&[0.0, 1.0], 0.0, &p), [1.0, 1.0]);
    }

    #[test]
    fn unforced_orbit_settles_on_limit_cycle() {
        let p = VanderPolParams::default();
        let mut x = [2.0, 0.0];
        for _ in 0..10_000 {
            let d = deriv(&x, 0.0, &p);
            x = [x[0] + 0.01 * d[0], x[1] + 0.01 * d[1]];
            let n = crate::math::norm2(&x);
            assert!((0.1..=5.0).contains(&n), "{n}");
        }
    }
}
