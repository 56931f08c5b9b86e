//! 3x3 rotation helpers.

use crate::math::{cos, sin, sqrt};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    sqrt(dot(a, a))
}

pub fn scale(a: Vec3, k: f64) -> Vec3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

pub fn hat(w: Vec3) -> Mat3 {
    [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
}

/// Inverse of [`hat`] applied to the skew part of `m`.
pub fn vee(m: &Mat3) -> Vec3 {
    [
        0.5 * (m[2][1] - m[1][2]),
        0.5 * (m[0][2] - m[2][0]),
        0.5 * (m[1][0] - m[0][1]),
    ]
}

pub fn mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for (i, row) in c.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn mul_vec(a: &Mat3, v: Vec3) -> Vec3 {
    [dot(a[0], v), dot(a[1], v), dot(a[2], v)]
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for (i, row) in a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            t[j][i] = v;
        }
    }
    t
}

pub fn from_columns(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3 {
    [[c0[0], c1[0], c2[0]], [c0[1], c1[1], c2[1]], [c0[2], c1[2], c2[2]]]
}

pub fn column(a: &Mat3, j: usize) -> Vec3 {
    [a[0][j], a[1][j], a[2][j]]
}

/// Rodrigues' formula.
pub fn exp(w: Vec3) -> Mat3 {
    let th = norm(w);
    let k = hat(w);
    let k2 = mul(&k, &k);
    let (a, b) = if th < 1e-8 {
        (1.0 - th * th / 6.0, 0.5 - th * th / 24.0)
    } else {
        (sin(th) / th, (1.0 - cos(th)) / (th * th))
    };
    let mut r = IDENTITY;
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] += a * k[i][j] + b * k2[i][j];
        }
    }
    r
}

/// Gram-Schmidt on the columns.
pub fn orthonormalize(r: &Mat3) -> Mat3 {
    let c0 = column(r, 0);
    let c1 = column(r, 1);
    let c2 = column(r, 2);
    let e0 = scale(c0, 1.0 / norm(c0));
    let u1 = sub(c1, scale(e0, dot(e0, c1)));
    let e1 = scale(u1, 1.0 / norm(u1));
    let u2 = sub(sub(c2, scale(e0, dot(e0, c2))), scale(e1, dot(e1, c2)));
    let e2 = scale(u2, 1.0 / norm(u2));
    from_columns(e0, e1, e2)
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// `max |(RᵀR - I)_ij|`.
pub fn orthogonality_defect(r: &Mat3) -> f64 {
    let rtr = mul(&transpose(r), r);
    let mut worst: f64 = 0.0;
    for (i, row) in rtr.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
    }
    worst
}

pub fn to_flat(r: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for i in 0..3 {
        out[3 * i..3 * i + 3].copy_from_slice(&r[i]);
    }
    out
}

pub fn from_flat(f: &[f64]) -> Mat3 {
    [[f[0], f[1], f[2]], [f[3], f[4], f[5]], [f[6], f[7], f[8]]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_is_orthogonal_and_rotates_about_axis() {
        let r = exp([0.0, 0.0, 0.3]);
        assert!(orthogonality_defect(&r) < 1e-15);
        assert!((r[0][0] - cos(0.3)).abs() < 1e-15);
        assert!((r[1][0] - sin(0.3)).abs() < 1e-15);
        let w = [0.2, -0.5, 0.9];
        assert!(orthogonality_defect(&exp(w)) < 1e-14);
        let back = vee(&hat(w));
        assert_eq!(back, w);
    }

    #[test]
    fn orthonormalize_repairs_drift() {
        let mut r = exp([0.1, 0.2, 0.3]);
        r[0][1] += 1e-3;
        r[2][2] -= 2e-3;
        let q = orthonormalize(&r);
        assert!(orthogonality_defect(&q) < 1e-14);
    }
}
