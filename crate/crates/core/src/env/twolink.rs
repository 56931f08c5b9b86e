//! Two-link planar arm, state `[q1, q2, q1', q2']`.

use crate::error::{Error, Result};
use crate::math::{cos, sin};

use super::params::{set_positive, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLinkParams {
    pub l1: f64,
    pub l2: f64,
    pub m1: f64,
    pub m2: f64,
    pub lc1: f64,
    pub lc2: f64,
    pub i1: f64,
    pub i2: f64,
    pub g: f64,
}

impl Default for TwoLinkParams {
    fn default() -> Self {
        Self {
            l1: 1.0,
            l2: 1.0,
            m1: 1.0,
            m2: 1.0,
            lc1: 0.5,
            lc2: 0.5,
            i1: 0.0833,
            i2: 0.0833,
            g: 9.81,
        }
    }
}

impl ParamSet for TwoLinkParams {
    const ENV: &'static str = "twolink";
    const NAMES: &'static [&'static str] = &["l1", "l2", "m1", "m2", "lc1", "lc2", "I1", "I2", "g"];

    /// Changing a link length also moves its centre of mass to the
    /// midpoint and rescales its inertia as a uniform rod.
    fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "l1" => {
                set_positive(&mut self.l1, name, value)?;
                self.lc1 = 0.5 * value;
                self.i1 = self.m1 * value * value / 12.0;
                Ok(())
            }
            "l2" => {
                set_positive(&mut self.l2, name, value)?;
                self.lc2 = 0.5 * value;
                self.i2 = self.m2 * value * value / 12.0;
                Ok(())
            }
            "m1" => set_positive(&mut self.m1, name, value),
            "m2" => set_positive(&mut self.m2, name, value),
            "lc1" => set_positive(&mut self.lc1, name, value),
            "lc2" => set_positive(&mut self.lc2, name, value),
            "I1" => set_positive(&mut self.i1, name, value),
            "I2" => set_positive(&mut self.i2, name, value),
            "g" => set_positive(&mut self.g, name, value),
            _ => Err(Self::unknown(name)),
        }
    }

    fn apply_order(name: &str) -> u8 {
        // Length overrides reset lc and I, so they must land first.
        u8::from(!matches!(name, "l1" | "l2"))
    }
}

/// Symmetric mass matrix `[m11, m12, m22]`.
pub fn mass_matrix(q2: f64, p: &TwoLinkParams) -> [f64; 3] {
    let c2 = cos(q2);
    let m11 = p.i1 + p.i2 + p.m1 * p.lc1 * p.lc1 + p.m2 * (p.l1 * p.l1 + p.lc2 * p.lc2 + 2.0 * p.l1 * p.lc2 * c2);
    let m12 = p.i2 + p.m2 * (p.lc2 * p.lc2 + p.l1 * p.lc2 * c2);
    let m22 = p.i2 + p.m2 * p.lc2 * p.lc2;
    [m11, m12, m22]
}

/// Coriolis matrix, row major.
pub fn coriolis(x: &[f64; 4], p: &TwoLinkParams) -> [[f64; 2]; 2] {
    let h = p.m2 * p.l1 * p.lc2 * sin(x[1]);
    [[-h * x[3], -h * (x[2] + x[3])], [h * x[2], 0.0]]
}

pub fn gravity(x: &[f64; 4], p: &TwoLinkParams) -> [f64; 2] {
    let s12 = sin(x[0] + x[1]);
    [
        -(p.m1 * p.lc1 + p.m2 * p.l1) * p.g * sin(x[0]) - p.m2 * p.lc2 * p.g * s12,
        -p.m2 * p.lc2 * p.g * s12,
    ]
}

pub fn deriv(x: &[f64; 4], u: [f64; 2], p: &TwoLinkParams) -> Result<[f64; 4]> {
    let [m11, m12, m22] = mass_matrix(x[1], p);
    let det = m11 * m22 - m12 * m12;
    if !(det.abs() > 1e-12) {
        return Err(Error::SingularMassMatrix(det));
    }
    let c = coriolis(x, p);
    let g = gravity(x, p);
    let rhs = [
        u[0] - (c[0][0] * x[2] + c[0][1] * x[3]) - g[0],
        u[1] - (c[1][0] * x[2] + c[1][1] * x[3]) - g[1],
    ];
    let a1 = (m22 * rhs[0] - m12 * rhs[1]) / det;
    let a2 = (-m12 * rhs[0] + m11 * rhs[1]) / det;
    Ok([x[2], x[3], a1, a2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::PI;

    #[test]
    fn hand_values() {
        let p = TwoLinkParams::default();
        assert_eq!(deriv(&[0.0; 4], [0.0, 0.0], &p).unwrap(), [0.0; 4]);
        let [m11, m12, m22] = mass_matrix(0.0, &p);
        assert!((m11 - 2.6666).abs() < 1e-10);
        assert!((m12 - 0.8333).abs() < 1e-10);
        assert!((m22 - 0.3333).abs() < 1e-10);
        let c = coriolis(&[0.0, PI / 2.0, 1.0, 0.0], &p);
        assert!((c[1][0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn length_override_moves_com() {
        let mut p = TwoLinkParams::default();
        p.set("l1", 0.75).unwrap();
        assert_eq!((p.l1, p.lc1), (0.75, 0.375));
        assert!((p.i1 - 0.75 * 0.75 / 12.0).abs() < 1e-15);
        assert!(p.set("l3", 1.0).is_err());
    }

    #[test]
    fn singular_mass_matrix_is_an_error() {
        let p = TwoLinkParams {
            i1: 0.0,
            i2: 0.0,
            m1: 1e-30,
            lc1: 1e-30,
            ..Default::default()
        };
        assert!(matches!(deriv(&[0.0; 4], [0.0, 0.0], &p), Err(Error::SingularMassMatrix(_))));
    }
}
