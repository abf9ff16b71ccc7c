//! Vector, quaternion and rotation-matrix algebra shared by every solver.
//!
//! Quaternions are scalar-first with the Hamilton product; frames are
//! right-handed and Y-up.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Tolerance for approximate comparisons in algorithm guards.
pub const GEOM_EPS: f64 = 1e-6;

const UNIT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or zero when the input is zero.
    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            Vec3::ZERO
        }
    }

    pub fn try_normalized(self, eps: f64) -> Option<Vec3> {
        let n = self.norm();
        (n > eps).then(|| self / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOL
    }

    pub fn abs_max(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quat {
    pub w: f64,
    pub v: Vec3,
}

impl From<[f64; 4]> for Quat {
    fn from(a: [f64; 4]) -> Self {
        Quat::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        [q.w, q.v.x, q.v.y, q.v.z]
    }
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        v: Vec3::ZERO,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat {
            w,
            v: Vec3::new(x, y, z),
        }
    }

    /// Rotation by `angle` about `axis`; the axis is normalised and a zero
    /// axis yields the identity.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        match axis.try_normalized(0.0) {
            Some(a) => {
                let (s, c) = (angle / 2.0).sin_cos();
                Quat { w: c, v: a * s }
            }
            None => Quat::IDENTITY,
        }
    }

    pub fn conjugate(self) -> Quat {
        Quat {
            w: self.w,
            v: -self.v,
        }
    }

    pub fn inverse(self) -> Quat {
        let n2 = self.norm_squared();
        let c = self.conjugate();
        Quat {
            w: c.w / n2,
            v: c.v / n2,
        }
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.v.dot(o.v)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn normalized(self) -> Quat {
        let n = self.norm();
        Quat {
            w: self.w / n,
            v: self.v / n,
        }
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.v.is_finite()
    }

    /// Euclidean distance between the 4-vectors.
    pub fn distance(self, o: Quat) -> f64 {
        ((self.w - o.w).powi(2) + (self.v - o.v).norm_squared()).sqrt()
    }

    pub fn rotate(self, p: Vec3) -> Vec3 {
        // v' = p + 2w(v×p) + 2v×(v×p)
        let t = self.v.cross(p) * 2.0;
        p + t * self.w + self.v.cross(t)
    }

    pub fn to_mat(self) -> RotMat3 {
        RotMat3::from_quat(self)
    }

    /// The k-th column of the rotation matrix (0 = x, 1 = y, 2 = z).
    pub fn axis(self, k: usize) -> Vec3 {
        let e = match k {
            0 => Vec3::X,
            1 => Vec3::Y,
            _ => Vec3::Z,
        };
        self.rotate(e)
    }

    pub fn x_axis(self) -> Vec3 {
        self.axis(0)
    }

    pub fn y_axis(self) -> Vec3 {
        self.axis(1)
    }

    pub fn z_axis(self) -> Vec3 {
        self.axis(2)
    }

    /// Signed rotation angle about `axis`, wrapped to (−π, π].
    ///
    /// Exact when the quaternion rotates about `axis`; otherwise this is the
    /// swing-twist twist angle.
    pub fn angle_about(self, axis: Vec3) -> f64 {
        let a = axis.normalized();
        wrap_pi(2.0 * self.v.dot(a).atan2(self.w))
    }

    pub fn is_identity(self, eps: f64) -> bool {
        self.v.norm() <= eps
    }
}

impl Mul for Quat {
    type Output = Quat;
    fn mul(self, o: Quat) -> Quat {
        Quat {
            w: self.w * o.w - self.v.dot(o.v),
            v: o.v * self.w + self.v * o.w + self.v.cross(o.v),
        }
    }
}

impl Neg for Quat {
    type Output = Quat;
    fn neg(self) -> Quat {
        Quat {
            w: -self.w,
            v: -self.v,
        }
    }
}

/// Row-major 3×3 rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotMat3 {
    pub m: [[f64; 3]; 3],
}

impl RotMat3 {
    pub const IDENTITY: RotMat3 = RotMat3 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_quat(q: Quat) -> RotMat3 {
        let q = q.normalized();
        let (w, x, y, z) = (q.w, q.v.x, q.v.y, q.v.z);
        RotMat3 {
            m: [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                ],
                [
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                ],
                [
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ],
        }
    }

    pub fn from_columns(x: Vec3, y: Vec3, z: Vec3) -> RotMat3 {
        RotMat3 {
            m: [[x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z]],
        }
    }

    pub fn col(&self, k: usize) -> Vec3 {
        Vec3::new(self.m[0][k], self.m[1][k], self.m[2][k])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let r = |i: usize| self.m[i][0] * v.x + self.m[i][1] * v.y + self.m[i][2] * v.z;
        Vec3::new(r(0), r(1), r(2))
    }

    pub fn mul_mat(&self, o: &RotMat3) -> RotMat3 {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        RotMat3 { m }
    }

    pub fn transpose(&self) -> RotMat3 {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.m[j][i];
            }
        }
        RotMat3 { m }
    }

    pub fn det(&self) -> f64 {
        self.col(0).dot(self.col(1).cross(self.col(2)))
    }

    pub fn max_abs_diff(&self, o: &RotMat3) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                d = d.max((self.m[i][j] - o.m[i][j]).abs());
            }
        }
        d
    }

    /// Unit quaternion with non-negative scalar part.
    pub fn to_quat(&self) -> Quat {
        let m = &self.m;
        let tr = m[0][0] + m[1][1] + m[2][2];
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            Quat::new(
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Quat::new(
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Quat::new(
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Quat::new(
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            )
        };
        let q = q.normalized();
        if q.w < 0.0 {
            -q
        } else {
            q
        }
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_pi(theta: f64) -> f64 {
    let mut t = theta - TAU * (theta / TAU).round();
    if t <= -PI {
        t += TAU;
    } else if t > PI {
        t -= TAU;
    }
    t
}

/// Rounds to a fixed number of decimal places.
pub fn round_at(x: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (x * f).round() / f
}

/// Rotation about a unit axis.
pub fn qaa(axis: Vec3, angle: f64) -> Result<Quat> {
    if !axis.is_finite() || !axis.is_unit() {
        return Err(invalid(format!("rotation axis {axis:?} is not unit length")));
    }
    if !angle.is_finite() {
        return Err(invalid("rotation angle is not finite"));
    }
    Ok(Quat::from_axis_angle(axis, angle))
}

pub fn rot_v_q(v: Vec3, q: Quat) -> Vec3 {
    q.rotate(v)
}

/// The rotation `r` with `r·q1 = q2`.
pub fn q_diff(q1: Quat, q2: Quat) -> Quat {
    (q2 * q1.conjugate()).normalized()
}

/// Minimal-arc rotation taking `v1` onto `v2`.
pub fn v_diff_as_q(v1: Vec3, v2: Vec3) -> Result<Quat> {
    let a = v1
        .try_normalized(0.0)
        .ok_or_else(|| invalid("zero-length vector"))?;
    let b = v2
        .try_normalized(0.0)
        .ok_or_else(|| invalid("zero-length vector"))?;
    Ok(min_arc(a, b))
}

pub(crate) fn min_arc(a: Vec3, b: Vec3) -> Quat {
    let d = a.dot(b);
    let c = a.cross(b);
    if c.norm() <= GEOM_EPS * GEOM_EPS && d < 0.0 {
        // antiparallel: half turn about the axis least aligned with `a`
        let helper = least_aligned_axis(a);
        let axis = project_onto_plane(helper, a).normalized();
        return Quat::from_axis_angle(axis, PI);
    }
    Quat { w: 1.0 + d, v: c }.normalized()
}

fn least_aligned_axis(a: Vec3) -> Vec3 {
    let (ax, ay, az) = (a.x.abs(), a.y.abs(), a.z.abs());
    if ax <= ay && ax <= az {
        Vec3::X
    } else if ay <= az {
        Vec3::Y
    } else {
        Vec3::Z
    }
}

/// Angle between two vectors; signed about `reference` when given.
pub fn vec_angle(v1: Vec3, v2: Vec3, reference: Option<Vec3>) -> Result<f64> {
    if v1.norm() == 0.0 || v2.norm() == 0.0 {
        return Err(invalid("zero-length vector in angle"));
    }
    Ok(match reference {
        Some(r) => signed_angle(v1, v2, r),
        None => unsigned_angle(v1, v2),
    })
}

pub(crate) fn unsigned_angle(a: Vec3, b: Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Signed angle from `a` to `b`, negative when `r·(a×b) < 0`.
/// Degenerate inputs give 0.
pub(crate) fn signed_angle(a: Vec3, b: Vec3, r: Vec3) -> f64 {
    let c = a.cross(b);
    let t = c.norm().atan2(a.dot(b));
    if r.dot(c) < 0.0 {
        -t
    } else {
        t
    }
}

/// Component of `v` orthogonal to `n`; `n` need not be normalised.
pub fn project_onto_plane(v: Vec3, n: Vec3) -> Vec3 {
    match n.try_normalized(0.0) {
        Some(u) => v - u * v.dot(u),
        None => v,
    }
}

/// Flips the sign of `q` so its vector part points along `axis`.
pub fn epa(q: Quat, axis: Vec3) -> Quat {
    if axis.dot(q.v) < 0.0 {
        -q
    } else {
        q
    }
}

/// Splits `q` into yaw about Ŷ, pitch about `pitch_axis` and roll about Ŷ
/// with `q ≈ yaw·pitch·roll`. Exact when the pitch axis is orthogonal to Ŷ.
pub fn ypr_decompose(q: Quat, pitch_axis: Vec3) -> Result<(Quat, Quat, Quat)> {
    let x = pitch_axis
        .try_normalized(0.0)
        .ok_or_else(|| invalid("zero pitch axis"))?;
    if x.cross(Vec3::Y).norm() <= GEOM_EPS {
        return Err(invalid("pitch axis parallel to Y"));
    }
    Ok(ypr_unchecked(q.normalized(), x))
}

pub(crate) fn ypr_unchecked(q: Quat, x: Vec3) -> (Quat, Quat, Quat) {
    let y = Vec3::Y;
    let yq = q.rotate(y);
    let xq = q.rotate(x);
    let mut n = y.cross(yq);
    let (qy, qp, qr);
    if n.norm() <= GEOM_EPS {
        if yq.dot(y) > 0.0 {
            qy = Quat::IDENTITY;
            qp = Quat::IDENTITY;
            qr = Quat::from_axis_angle(y, q.angle_about(y));
        } else {
            qy = Quat::IDENTITY;
            qp = Quat::from_axis_angle(x, -PI);
            qr = Quat::from_axis_angle(y, signed_angle(x, xq, yq));
        }
    } else {
        if n.dot(x) < 0.0 {
            n = -n;
        }
        let nn = n.normalized();
        qy = Quat::from_axis_angle(y, signed_angle(x, nn, y));
        qp = Quat::from_axis_angle(x, signed_angle(y, yq, nn));
        qr = Quat::from_axis_angle(y, signed_angle(nn, xq, yq));
    }
    (epa(qy, y), epa(qp, x), epa(qr, y))
}

/// Scales `w` down so that its Euclidean norm does not exceed `d`.
pub fn clamp_mag(w: &mut [f64], d: f64) {
    let n = w.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > d {
        let s = d / n;
        w.iter_mut().for_each(|a| *a *= s);
    }
}

/// Scales `w` down so that its largest component magnitude does not exceed `gamma`.
pub fn clamp_max_abs(w: &mut [f64], gamma: f64) {
    let m = w.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if m > gamma {
        let s = gamma / m;
        w.iter_mut().for_each(|a| *a *= s);
    }
}
