//! Quadrotor rigid body on SE(3) with a geometric tracking error.
//!
//! Physical state layout (18 values): `p[3], v[3], R[9] row major, Omega[3]`.
//! The action is the wrench `[F, Mx, My, Mz]` directly; rotor thrusts are
//! recoverable through [`rotor_thrusts`].

use crate::error::{Error, Result};

use super::params::{set_positive, ParamSet};
use super::reference::TrackingRef;
use super::so3::{self, Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadrotorParams {
    pub m: f64,
    pub j: Vec3,
    pub g: f64,
    pub d: f64,
    pub c_tf: f64,
    pub f_max: f64,
    pub m_max: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            m: 4.34,
            j: [0.08, 0.09, 0.14],
            g: 9.8,
            d: 0.315,
            c_tf: 8.004e-4,
            f_max: 85.06,
            m_max: 10.0,
        }
    }
}

impl ParamSet for QuadrotorParams {
    const ENV: &'static str = "quadrotor_tracking";
    const NAMES: &'static [&'static str] = &["m", "Jxx", "Jyy", "Jzz", "g", "d", "c_tf"];

    fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "m" => set_positive(&mut self.m, name, value),
            "Jxx" => set_positive(&mut self.j[0], name, value),
            "Jyy" => set_positive(&mut self.j[1], name, value),
            "Jzz" => set_positive(&mut self.j[2], name, value),
            "g" => set_positive(&mut self.g, name, value),
            "d" => set_positive(&mut self.d, name, value),
            "c_tf" => set_positive(&mut self.c_tf, name, value),
            _ => Err(Self::unknown(name)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadState {
    pub p: Vec3,
    pub v: Vec3,
    pub r: Mat3,
    pub omega: Vec3,
}

pub const PHYS_DIM: usize = 18;

impl QuadState {
    pub fn hover() -> Self {
        Self {
            p: [0.0; 3],
            v: [0.0; 3],
            r: so3::IDENTITY,
            omega: [0.0; 3],
        }
    }

    pub fn from_flat(x: &[f64]) -> Self {
        Self {
            p: [x[0], x[1], x[2]],
            v: [x[3], x[4], x[5]],
            r: so3::from_flat(&x[6..15]),
            omega: [x[15], x[16], x[17]],
        }
    }

    pub fn write_flat(&self, x: &mut [f64]) {
        x[0..3].copy_from_slice(&self.p);
        x[3..6].copy_from_slice(&self.v);
        x[6..15].copy_from_slice(&so3::to_flat(&self.r));
        x[15..18].copy_from_slice(&self.omega);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadStateDeriv {
    pub dp: Vec3,
    pub dv: Vec3,
    pub dr: Mat3,
    pub domega: Vec3,
}

pub fn deriv(s: &QuadState, u: [f64; 4], p: &QuadrotorParams) -> QuadStateDeriv {
    let b3 = so3::column(&s.r, 2);
    let f_m = u[0] / p.m;
    let dv = [f_m * b3[0], f_m * b3[1], f_m * b3[2] - p.g];
    let dr = so3::mul(&s.r, &so3::hat(s.omega));
    let jw = [p.j[0] * s.omega[0], p.j[1] * s.omega[1], p.j[2] * s.omega[2]];
    let gyro = so3::cross(s.omega, jw);
    let domega = [
        (u[1] - gyro[0]) / p.j[0],
        (u[2] - gyro[1]) / p.j[1],
        (u[3] - gyro[2]) / p.j[2],
    ];
    QuadStateDeriv {
        dp: s.v,
        dv,
        dr,
        domega,
    }
}

/// One explicit Euler step (no re-orthonormalisation).
pub fn euler(s: &QuadState, u: [f64; 4], p: &QuadrotorParams, dt: f64) -> QuadState {
    let d = deriv(s, u, p);
    let mut out = *s;
    for k in 0..3 {
        out.p[k] += dt * d.dp[k];
        out.v[k] += dt * d.dv[k];
        out.omega[k] += dt * d.domega[k];
        for j in 0..3 {
            out.r[k][j] += dt * d.dr[k][j];
        }
    }
    out
}

/// `[F, Mx, My, Mz] = mix * [f1, f2, f3, f4]`.
pub fn mixing_matrix(p: &QuadrotorParams) -> [[f64; 4]; 4] {
    let (d, c) = (p.d, p.c_tf);
    [
        [1.0, 1.0, 1.0, 1.0],
        [0.0, -d, 0.0, d],
        [d, 0.0, -d, 0.0],
        [-c, c, -c, c],
    ]
}

/// Individual rotor thrusts that realise a wrench.
pub fn rotor_thrusts(u: [f64; 4], p: &QuadrotorParams) -> [f64; 4] {
    let [f, mx, my, mz] = u;
    let b = 0.5 * (f + mz / p.c_tf);
    let a = 0.5 * (f - mz / p.c_tf);
    [
        0.5 * (a + my / p.d),
        0.5 * (b - mx / p.d),
        0.5 * (a - my / p.d),
        0.5 * (b + mx / p.d),
    ]
}

/// Desired frame from the thrust direction and the heading vector.
pub fn reference_frame(t: f64, r: TrackingRef, p: &QuadrotorParams) -> Result<Mat3> {
    let a = r.acceleration(t);
    let thrust = [a[0], a[1], a[2] + p.g];
    let n3 = so3::norm(thrust);
    if !(n3 > 1e-9) {
        return Err(Error::DegenerateReference(t));
    }
    let b3 = so3::scale(thrust, 1.0 / n3);
    let c = so3::cross(b3, r.heading(t));
    let n2 = so3::norm(c);
    if !(n2 > 1e-9) {
        return Err(Error::DegenerateReference(t));
    }
    let b2 = so3::scale(c, 1.0 / n2);
    let b1 = so3::cross(b2, b3);
    Ok(so3::from_columns(b1, b2, b3))
}

/// `R_ref(t)` and the body rate `Omega_ref` from central differences with
/// step `h`.
pub fn reference_attitude(t: f64, r: TrackingRef, p: &QuadrotorParams, h: f64) -> Result<(Mat3, Vec3)> {
    let rr = reference_frame(t, r, p)?;
    let rp = reference_frame(t + h, r, p)?;
    let rm = reference_frame(t - h, r, p)?;
    let mut rdot = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            rdot[i][j] = (rp[i][j] - rm[i][j]) / (2.0 * h);
        }
    }
    let w = so3::mul(&so3::transpose(&rr), &rdot);
    Ok((rr, so3::vee(&w)))
}

/// Tracking error `[e_p, e_v, e_R, e_Omega]` against the reference sampled
/// at `(p_ref, v_ref, R_ref, Omega_ref)`.
pub fn tracking_error(s: &QuadState, p_ref: Vec3, v_ref: Vec3, r_ref: &Mat3, w_ref: Vec3) -> [f64; 12] {
    let rt = so3::transpose(&s.r);
    let rreft = so3::transpose(r_ref);
    let a = so3::mul(&rreft, &s.r);
    let b = so3::mul(&rt, r_ref);
    let sm = |i: usize, j: usize| a[i][j] - b[i][j];
    let e_r = [0.5 * sm(2, 1), 0.5 * sm(0, 2), 0.5 * sm(1, 0)];
    let w = so3::mul_vec(&b, w_ref);
    let mut e = [0.0; 12];
    for k in 0..3 {
        e[k] = s.p[k] - p_ref[k];
        e[3 + k] = s.v[k] - v_ref[k];
        e[6 + k] = e_r[k];
        e[9 + k] = s.omega[k] - w[k];
    }
    e
}

/// Tracking error at time `t` for reference `r`.
pub fn error_at(s: &QuadState, t: f64, r: TrackingRef, p: &QuadrotorParams, h: f64) -> Result<[f64; 12]> {
    let (r_ref, w_ref) = reference_attitude(t, r, p, h)?;
    Ok(tracking_error(s, r.position(t), r.velocity(t), &r_ref, w_ref))
}
