//! Closed-form reference trajectories for the tracking tasks.

use core::fmt;
use core::str::FromStr;

use crate::error::Error;
use crate::math::{cos, sin, sqrt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackingRef {
    /// `[t, 0]`, the car training path.
    Line,
    /// `[8 cos(0.125 t), 8 sin(0.125 t)]`.
    Circle,
    /// `[t, sin(0.2 t)]`.
    Sine,
    /// `[0.4 t, 0.4 sin t, 0.6 cos t]`, the quadrotor training path.
    HelixH,
    /// `[0.5 cos t, 0.5 sin t, 0.3 t]`.
    HelixV,
    /// `[0.8 sin 0.4t, 0.8 cos 0.4t, 0.4 sin 1.2t + 1]`.
    Lissajous,
}

pub type Vec3 = [f64; 3];

impl TrackingRef {
    pub const ALL: [TrackingRef; 6] = [
        TrackingRef::Line,
        TrackingRef::Circle,
        TrackingRef::Sine,
        TrackingRef::HelixH,
        TrackingRef::HelixV,
        TrackingRef::Lissajous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TrackingRef::Line => "line",
            TrackingRef::Circle => "circle",
            TrackingRef::Sine => "sine",
            TrackingRef::HelixH => "helix_h",
            TrackingRef::HelixV => "helix_v",
            TrackingRef::Lissajous => "lissajous",
        }
    }

    /// Planar references drive the car; spatial ones drive the quadrotor.
    pub fn is_planar(self) -> bool {
        matches!(self, TrackingRef::Line | TrackingRef::Circle | TrackingRef::Sine)
    }

    /// Position and its first three time derivatives.
    pub fn derivatives(self, t: f64) -> [Vec3; 4] {
        match self {
            TrackingRef::Line => [[t, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0; 3], [0.0; 3]],
            TrackingRef::Circle => {
                let w = 0.125;
                let r = 8.0;
                let (s, c) = (sin(w * t), cos(w * t));
                [
                    [r * c, r * s, 0.0],
                    [-r * w * s, r * w * c, 0.0],
                    [-r * w * w * c, -r * w * w * s, 0.0],
                    [r * w * w * w * s, -r * w * w * w * c, 0.0],
                ]
            }
            TrackingRef::Sine => {
                let w = 0.2;
                let (s, c) = (sin(w * t), cos(w * t));
                [
                    [t, s, 0.0],
                    [1.0, w * c, 0.0],
                    [0.0, -w * w * s, 0.0],
                    [0.0, -w * w * w * c, 0.0],
                ]
            }
            TrackingRef::HelixH => {
                let (s, c) = (sin(t), cos(t));
                [
                    [0.4 * t, 0.4 * s, 0.6 * c],
                    [0.4, 0.4 * c, -0.6 * s],
                    [0.0, -0.4 * s, -0.6 * c],
                    [0.0, -0.4 * c, 0.6 * s],
                ]
            }
            TrackingRef::HelixV => {
                let (s, c) = (sin(t), cos(t));
                [
                    [0.5 * c, 0.5 * s, 0.3 * t],
                    [-0.5 * s, 0.5 * c, 0.3],
                    [-0.5 * c, -0.5 * s, 0.0],
                    [0.5 * s, -0.5 * c, 0.0],
                ]
            }
            TrackingRef::Lissajous => {
                let (s4, c4) = (sin(0.4 * t), cos(0.4 * t));
                let (s12, c12) = (sin(1.2 * t), cos(1.2 * t));
                [
                    [0.8 * s4, 0.8 * c4, 0.4 * s12 + 1.0],
                    [0.32 * c4, -0.32 * s4, 0.48 * c12],
                    [-0.128 * s4, -0.128 * c4, -0.576 * s12],
                    [-0.0512 * c4, 0.0512 * s4, -0.6912 * c12],
                ]
            }
        }
    }

    pub fn position(self, t: f64) -> Vec3 {
        self.derivatives(t)[0]
    }

    pub fn velocity(self, t: f64) -> Vec3 {
        self.derivatives(t)[1]
    }

    pub fn acceleration(self, t: f64) -> Vec3 {
        self.derivatives(t)[2]
    }

    /// Desired body x-axis for the quadrotor.
    pub fn heading(self, t: f64) -> Vec3 {
        [cos(t), sin(t), 0.0]
    }

    /// Speed, tangential acceleration, turn rate and its derivative of a
    /// planar reference.
    pub fn planar(self, t: f64) -> PlanarRef {
        let [_, v, a, j] = self.derivatives(t);
        let s2 = v[0] * v[0] + v[1] * v[1];
        let speed = sqrt(s2);
        let cross_va = v[0] * a[1] - v[1] * a[0];
        let dot_va = v[0] * a[0] + v[1] * a[1];
        let omega = cross_va / s2;
        let cross_vj = v[0] * j[1] - v[1] * j[0];
        PlanarRef {
            speed,
            accel: dot_va / speed,
            omega,
            omega_dot: cross_vj / s2 - 2.0 * omega * dot_va / s2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarRef {
    pub speed: f64,
    pub accel: f64,
    pub omega: f64,
    pub omega_dot: f64,
}

impl fmt::Display for TrackingRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrackingRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        TrackingRef::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::UnknownReference(s.into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_differences_match_analytic_derivatives() {
        let h = 1e-4;
        for r in TrackingRef::ALL {
            for &t in &[0.0, 0.7, 3.1, 12.5] {
                let d = r.derivatives(t);
                let dp = r.derivatives(t + h);
                let dm = r.derivatives(t - h);
                for order in 0..3 {
                    for k in 0..3 {
                        let fd = (dp[order][k] - dm[order][k]) / (2.0 * h);
                        let an = d[order + 1][k];
                        assert!((fd - an).abs() < 1e-6, "{r} order {order} comp {k}: {fd} vs {an}");
                    }
                }
            }
        }
    }

    #[test]
    fn fd_error_shrinks_quadratically() {
        for r in TrackingRef::ALL {
            let err = |h: f64| {
                let t = 1.3;
                let (p, m) = (r.position(t + h), r.position(t - h));
                let v = r.velocity(t);
                (0..3).map(|k| ((p[k] - m[k]) / (2.0 * h) - v[k]).abs()).fold(0.0, f64::max)
            };
            let (e1, e2) = (err(1e-2), err(5e-3));
            assert!(e2 <= e1 / 3.0 || e1 < 1e-12, "{r}: {e1} {e2}");
        }
    }

    #[test]
    fn helix_h_acceleration() {
        let t = 0.9;
        let a = TrackingRef::HelixH.acceleration(t);
        assert_eq!(a, [0.0, -0.4 * sin(t), -0.6 * cos(t)]);
    }

    #[test]
    fn planar_line_and_circle() {
        let l = TrackingRef::Line.planar(3.0);
        assert_eq!((l.speed, l.accel, l.omega, l.omega_dot), (1.0, 0.0, 0.0, 0.0));
        let c = TrackingRef::Circle.planar(5.0);
        assert!((c.speed - 1.0).abs() < 1e-12);
        assert!((c.omega - 0.125).abs() < 1e-12);
        assert!(c.accel.abs() < 1e-12 && c.omega_dot.abs() < 1e-12);
    }

    #[test]
    fn parse_round_trip() {
        for r in TrackingRef::ALL {
            assert_eq!(r.as_str().parse::<TrackingRef>().unwrap(), r);
        }
        assert!("zigzag".parse::<TrackingRef>().is_err());
    }
}
