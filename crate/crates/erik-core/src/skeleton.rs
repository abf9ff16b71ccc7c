//! Serial-chain joint model: links with precomputed latitude tables,
//! forward kinematics and the posture/solution containers.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Quat, Vec3, GEOM_EPS};

/// Default latitude table resolution.
pub const DEFAULT_LALUT_STEP: f64 = PI / 180.0;

/// User-facing link description, as stored in skeleton files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub segment: Vec3,
    pub rotation_axis: Vec3,
    pub min_theta: f64,
    pub max_theta: f64,
}

/// Latitude-to-angle lookup tables, one per hemisphere of the
/// perpendicular auxiliary axis.
#[derive(Clone, Debug, Default)]
pub struct Lalut {
    pub positive: Vec<(f64, f64)>,
    pub negative: Vec<(f64, f64)>,
    pub step: f64,
}

impl Lalut {
    fn table(&self, sign: f64) -> &[(f64, f64)] {
        let (own, other) = if sign < 0.0 {
            (&self.negative, &self.positive)
        } else {
            (&self.positive, &self.negative)
        };
        if own.is_empty() {
            other
        } else {
            own
        }
    }

    /// Linear interpolation between the entries bracketing `lat` in the
    /// table selected by `sign`. Returns the bracket as well.
    fn lookup(&self, lat: f64, sign: f64) -> (f64, Option<(usize, &[(f64, f64)])>) {
        let t = self.table(sign);
        match t.len() {
            0 => (0.0, None),
            1 => (t[0].1, None),
            n => {
                if lat <= t[0].0 {
                    return (t[0].1, None);
                }
                if lat >= t[n - 1].0 {
                    return (t[n - 1].1, None);
                }
                let i = t.partition_point(|e| e.0 <= lat).clamp(1, n - 1) - 1;
                let (l0, a0) = t[i];
                let (l1, a1) = t[i + 1];
                if (a1 - a0).abs() > 2.5 * self.step {
                    // sweeps folding over themselves are not interpolated
                    let a = if lat - l0 <= l1 - lat { a0 } else { a1 };
                    return (a, None);
                }
                let f = if l1 > l0 { (lat - l0) / (l1 - l0) } else { 0.0 };
                (a0 + f * (a1 - a0), Some((i, t)))
            }
        }
    }

    pub fn query(&self, lat: f64, sign: f64) -> f64 {
        self.lookup(lat, sign).0
    }
}

#[derive(Clone, Debug)]
pub struct Link {
    /// 1-based position from the root.
    pub index: usize,
    pub segment: Vec3,
    pub rotation_axis: Vec3,
    pub min_theta: f64,
    pub max_theta: f64,
    pub oa: Vec3,
    pub poa: Vec3,
    pub lalut: Lalut,
    pub bottom_lat: f64,
    pub top_lat: f64,
    pub is_twister: bool,
    pub is_end_point: bool,
}

fn parallel(a: Vec3, b: Vec3) -> bool {
    a.normalized().cross(b.normalized()).norm() <= GEOM_EPS
}

/// Auxiliary orthogonal axis and perpendicular axis for a rotation axis
/// and segment, with fallbacks for parallel configurations.
pub fn init_joint_frames(axis: Vec3, segment: Vec3) -> (Vec3, Vec3) {
    let r = axis.normalized();
    let s = segment.normalized();
    let oa = if s != Vec3::ZERO && !parallel(r, s) {
        r.cross(s)
    } else if (s.dot(Vec3::X).abs() - 1.0).abs() <= GEOM_EPS {
        r.cross(Vec3::Y)
    } else {
        r.cross(Vec3::Z)
    };
    let poa = if !parallel(r, Vec3::Y) {
        r.cross(Vec3::Y)
    } else if r.dot(Vec3::X).abs() <= GEOM_EPS {
        Vec3::X
    } else {
        Vec3::Z
    };
    (oa.normalized(), poa.normalized())
}

impl Link {
    pub fn new(index: usize, spec: &LinkSpec, step: f64) -> Result<Link> {
        let LinkSpec {
            segment,
            rotation_axis,
            min_theta,
            max_theta,
        } = *spec;
        if !(segment.is_finite() && rotation_axis.is_finite()) {
            return Err(Error::InvalidModel(format!("link {index}: non-finite vector")));
        }
        if !rotation_axis.is_unit() {
            return Err(Error::InvalidModel(format!(
                "link {index}: rotation axis must be unit length"
            )));
        }
        if !(min_theta <= 0.0 && 0.0 <= max_theta) {
            return Err(Error::InvalidModel(format!(
                "link {index}: limits must satisfy min <= 0 <= max"
            )));
        }
        if max_theta - min_theta > TAU + 1e-12 {
            return Err(Error::InvalidModel(format!(
                "link {index}: limit range exceeds 2π"
            )));
        }
        if !(step > 0.0) {
            return Err(Error::InvalidArgument("LALUT step must be positive".into()));
        }
        let dir = segment.try_normalized(0.0).unwrap_or(Vec3::Y);
        let is_twister = parallel(rotation_axis, dir);
        let (oa, poa) = init_joint_frames(rotation_axis, dir);
        let mut link = Link {
            index,
            segment,
            rotation_axis,
            min_theta,
            max_theta,
            oa,
            poa,
            lalut: Lalut::default(),
            bottom_lat: 0.0,
            top_lat: 1.0,
            is_twister,
            is_end_point: false,
        };
        link.build_lalut(step);
        Ok(link)
    }

    /// Unit direction of the segment, Ŷ for a zero-length end segment.
    pub fn segment_dir(&self) -> Vec3 {
        self.segment.try_normalized(0.0).unwrap_or(Vec3::Y)
    }

    pub fn local(&self, theta: f64) -> Quat {
        Quat::from_axis_angle(self.rotation_axis, theta)
    }

    /// Latitude of a local direction and the hemisphere sign given by the
    /// perpendicular auxiliary axis.
    pub fn latitude(&self, t: Vec3) -> (f64, f64) {
        let u = t.normalized();
        let lat = (u.dot(Vec3::Y) + 1.0) / 2.0;
        let sign = if u.dot(self.poa) < 0.0 { -1.0 } else { 1.0 };
        (lat, sign)
    }

    /// Latitude clamped to the range this joint can produce.
    pub fn target_latitude(&self, t: Vec3) -> (f64, f64) {
        let (lat, sign) = self.latitude(t);
        (lat.clamp(self.bottom_lat, self.top_lat), sign)
    }

    pub fn build_lalut(&mut self, step: f64) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let range = self.max_theta - self.min_theta;
        let n = (range / step).ceil().max(0.0) as usize;
        let dir = self.segment_dir();
        let mut bottom = f64::INFINITY;
        let mut top = f64::NEG_INFINITY;
        for i in 0..=n {
            let a = if i == n {
                self.max_theta
            } else {
                self.min_theta + step * i as f64
            };
            let u = self.local(a).rotate(dir);
            let lat = (u.dot(Vec3::Y) + 1.0) / 2.0;
            let mut side = u.dot(self.poa);
            if side.abs() <= GEOM_EPS && (i == 0 || i == n) && n > 0 {
                // a pole on the range boundary belongs to the hemisphere
                // its neighbour sweeps through
                let inward = if i == 0 { step } else { -step };
                side = self.local(a + inward / 2.0).rotate(dir).dot(self.poa);
            }
            bottom = bottom.min(lat);
            top = top.max(lat);
            if side >= -GEOM_EPS {
                pos.push((lat, a));
            }
            if side <= GEOM_EPS {
                neg.push((lat, a));
            }
        }
        self.lalut = Lalut {
            positive: sorted_table(pos),
            negative: sorted_table(neg),
            step,
        };
        self.bottom_lat = bottom;
        self.top_lat = top;
    }

    pub fn query_lalut(&self, lat: f64, sign: f64) -> f64 {
        self.lalut
            .query(lat.clamp(self.bottom_lat, self.top_lat), sign)
    }

    /// Lookup refined inside the bracketing table interval by solving the
    /// exact latitude equation of the joint.
    pub fn query_lalut_exact(&self, lat: f64, sign: f64) -> f64 {
        let lat = lat.clamp(self.bottom_lat, self.top_lat);
        let (approx, bracket) = self.lalut.lookup(lat, sign);
        let Some((i, t)) = bracket else {
            return approx;
        };
        let (a0, a1) = (t[i].1, t[i + 1].1);
        let (lo, hi) = if a0 <= a1 { (a0, a1) } else { (a1, a0) };
        // u(a)·Ŷ = c + p cos a + q sin a for a rotation about the unit axis
        let s = self.segment_dir();
        let r = self.rotation_axis;
        let c = s.dot(r) * r.dot(Vec3::Y);
        let p = s.dot(Vec3::Y) - c;
        let q = r.cross(s).dot(Vec3::Y);
        let amp = p.hypot(q);
        if amp <= 1e-12 {
            return approx;
        }
        let rhs = ((2.0 * lat - 1.0 - c) / amp).clamp(-1.0, 1.0);
        let phase = q.atan2(p);
        let delta = rhs.acos();
        let slack = 1e-9;
        let mut best = approx;
        let mut best_d = f64::INFINITY;
        for base in [phase + delta, phase - delta] {
            let k = ((approx - base) / TAU).round();
            let cand = base + k * TAU;
            if cand >= lo - slack && cand <= hi + slack {
                let d = (cand - approx).abs();
                if d < best_d {
                    best_d = d;
                    best = cand.clamp(lo, hi);
                }
            }
        }
        best
    }

    pub fn safe_angle(&self, theta: f64, cycle: bool) -> f64 {
        let t = if cycle {
            cycle_angle(theta)
        } else {
            theta
        };
        t.max(self.min_theta).min(self.max_theta)
    }

    /// Cyclic twist that, beyond a limit, reflects to the half-turn
    /// equivalent when the joint is not the end-point.
    pub fn safe_twist(&self, theta: f64) -> f64 {
        let wrapped = cycle_angle(theta);
        let mut out = self.safe_angle(theta, true);
        let beta = (wrapped - out) % PI;
        if beta.abs() > 1e-12 && !self.is_end_point {
            if wrapped <= self.min_theta {
                out = -self.min_theta + beta;
            } else if wrapped >= self.max_theta {
                out = -self.max_theta + beta;
            }
            out = self.safe_angle(out, false);
        }
        out
    }

    /// Swing angle that brings the segment to the latitude of a local
    /// target direction. Uses the table lookup.
    pub fn local_swing(&self, t_local: Vec3) -> f64 {
        let (lat, sign) = self.target_latitude(t_local);
        self.safe_angle(self.query_lalut(lat, sign), false)
    }

    /// As [`Link::local_swing`] with the exact bracket refinement.
    pub fn local_swing_exact(&self, t_local: Vec3) -> f64 {
        let (lat, sign) = self.target_latitude(t_local);
        self.safe_angle(self.query_lalut_exact(lat, sign), false)
    }

    pub fn within_limits(&self, theta: f64) -> bool {
        theta >= self.min_theta - 1e-12 && theta <= self.max_theta + 1e-12
    }
}

/// 2π·(θ/2π − round(θ/2π)), evaluated without cancellation.
fn cycle_angle(theta: f64) -> f64 {
    theta - TAU * (theta / TAU).round()
}

fn sorted_table(mut t: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    t.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.abs().total_cmp(&b.1.abs())));
    t.dedup_by(|b, a| (b.0 - a.0).abs() <= 1e-12);
    t
}

#[derive(Clone, Debug)]
pub struct Skeleton {
    pub name: String,
    pub links: Vec<Link>,
}

impl Skeleton {
    pub fn new(name: impl Into<String>, specs: &[LinkSpec]) -> Result<Skeleton> {
        Skeleton::with_step(name, specs, DEFAULT_LALUT_STEP)
    }

    pub fn with_step(name: impl Into<String>, specs: &[LinkSpec], step: f64) -> Result<Skeleton> {
        if specs.is_empty() {
            return Err(Error::InvalidModel("skeleton has no links".into()));
        }
        let n = specs.len();
        let mut links = Vec::with_capacity(n);
        for (i, s) in specs.iter().enumerate() {
            if i + 1 < n && s.segment.norm() == 0.0 {
                return Err(Error::InvalidModel(format!(
                    "link {}: zero-length segment before the end-point",
                    i + 1
                )));
            }
            let mut link = Link::new(i + 1, s, step)?;
            link.is_end_point = i + 1 == n;
            links.push(link);
        }
        Ok(Skeleton {
            name: name.into(),
            links,
        })
    }

    pub fn specs(&self) -> Vec<LinkSpec> {
        self.links
            .iter()
            .map(|l| LinkSpec {
                segment: l.segment,
                rotation_axis: l.rotation_axis,
                min_theta: l.min_theta,
                max_theta: l.max_theta,
            })
            .collect()
    }

    pub fn n_dofs(&self) -> usize {
        self.links.len()
    }

    pub fn ee(&self) -> usize {
        self.links.len() - 1
    }

    pub fn is_ee(&self, k: usize) -> bool {
        k + 1 == self.links.len()
    }

    /// Σ αⁱ over non-twister joints, with i the 1-based joint index.
    pub fn posture_norm(&self, aggravation: f64) -> f64 {
        self.links
            .iter()
            .filter(|l| !l.is_twister)
            .map(|l| aggravation.powi(l.index as i32))
            .sum()
    }

    /// Axis used as pitch reference for joint `k`.
    pub fn pitch_ra(&self, k: usize) -> Vec3 {
        let l = &self.links[k];
        if !l.is_twister {
            return l.rotation_axis;
        }
        let other = if k == 0 {
            self.links.get(1)
        } else {
            self.links.get(k - 1)
        };
        match other {
            Some(o) if !parallel(o.rotation_axis, Vec3::Y) => o.rotation_axis,
            _ => l.oa,
        }
    }

    pub fn angles_within_limits(&self, angles: &[f64]) -> bool {
        angles.len() == self.links.len()
            && self
                .links
                .iter()
                .zip(angles)
                .all(|(l, &a)| l.within_limits(a))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointState {
    pub theta: f64,
    pub basis: Quat,
    pub local: Quat,
    pub omega: Quat,
    pub pos: Vec3,
    pub dir: Vec3,
}

impl Default for JointState {
    fn default() -> Self {
        JointState {
            theta: 0.0,
            basis: Quat::IDENTITY,
            local: Quat::IDENTITY,
            omega: Quat::IDENTITY,
            pos: Vec3::ZERO,
            dir: Vec3::Y,
        }
    }
}

impl JointState {
    fn refresh(&mut self, link: &Link) {
        self.local = link.local(self.theta);
        self.omega = self.basis * self.local;
        self.dir = self.omega.rotate(link.segment_dir());
    }
}

/// Joint-space configuration of a chain with cached world frames; used for
/// both postures and solutions.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub joints: Vec<JointState>,
    pub superpoint: JointState,
}

pub type Posture = Pose;

impl Pose {
    pub fn zero(skel: &Skeleton) -> Pose {
        let mut p = Pose {
            joints: vec![JointState::default(); skel.n_dofs()],
            superpoint: JointState::default(),
        };
        p.apply_fk(skel, 0);
        p
    }

    /// Pose with the given angles; limits are not enforced.
    pub fn from_angles(skel: &Skeleton, angles: &[f64]) -> Result<Pose> {
        if angles.len() != skel.n_dofs() {
            return Err(Error::InvalidArgument(format!(
                "expected {} angles, got {}",
                skel.n_dofs(),
                angles.len()
            )));
        }
        let mut p = Pose::zero(skel);
        for (j, &a) in p.joints.iter_mut().zip(angles) {
            j.theta = a;
        }
        p.apply_fk(skel, 0);
        Ok(p)
    }

    pub fn angles(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.theta).collect()
    }

    pub fn ee(&self) -> &JointState {
        self.joints.last().expect("non-empty chain")
    }

    /// Position of joint `k`, where `k == n` names the superpoint.
    pub fn pos(&self, k: usize) -> Vec3 {
        if k == self.joints.len() {
            self.superpoint.pos
        } else {
            self.joints[k].pos
        }
    }

    /// Forward kinematics from `start`. The root is reset to the world
    /// frame; any other start joint keeps its basis and position.
    pub fn apply_fk(&mut self, skel: &Skeleton, start: usize) {
        if start == 0 {
            self.joints[0].basis = Quat::IDENTITY;
            self.joints[0].pos = Vec3::ZERO;
        }
        self.propagate_from(skel, start);
    }

    /// Forward kinematics below `start`, keeping its basis and position.
    pub fn propagate_from(&mut self, skel: &Skeleton, start: usize) {
        self.joints[start].refresh(&skel.links[start]);
        for k in start + 1..self.joints.len() {
            self.set_frame_from_parent(skel, k);
        }
        self.refresh_superpoint(skel);
    }

    pub fn refresh_joint(&mut self, skel: &Skeleton, k: usize) {
        self.joints[k].refresh(&skel.links[k]);
    }

    /// Basis and position from the parent, then refresh cached frames.
    pub fn set_frame_from_parent(&mut self, skel: &Skeleton, k: usize) {
        if k == 0 {
            self.joints[0].basis = Quat::IDENTITY;
            self.joints[0].pos = Vec3::ZERO;
        } else {
            let parent = self.joints[k - 1];
            let basis = parent.omega;
            self.joints[k].basis = basis;
            self.joints[k].pos = parent.pos + basis.rotate(skel.links[k - 1].segment);
        }
        self.joints[k].refresh(&skel.links[k]);
    }

    pub fn refresh_superpoint(&mut self, skel: &Skeleton) {
        let ee = *self.ee();
        let link = &skel.links[skel.ee()];
        self.superpoint = JointState {
            theta: 0.0,
            basis: ee.omega,
            local: Quat::IDENTITY,
            omega: ee.omega,
            pos: ee.pos + ee.omega.rotate(link.segment),
            dir: ee.dir,
        };
    }

    pub fn set_theta(&mut self, skel: &Skeleton, k: usize, theta: f64) {
        self.joints[k].theta = theta;
        self.refresh_joint(skel, k);
    }

    pub fn set_basis(&mut self, skel: &Skeleton, k: usize, basis: Quat) {
        self.joints[k].basis = basis;
        self.refresh_joint(skel, k);
    }

    pub fn within_limits(&self, skel: &Skeleton) -> bool {
        skel.angles_within_limits(&self.angles())
    }

    /// Moves joints resting on a limit inward by `delta` when room allows.
    pub fn avoid_joint_edges(&mut self, skel: &Skeleton, delta: f64) {
        for k in 0..self.joints.len() {
            let t = avoid_joint_edge(&skel.links[k], self.joints[k].theta, delta);
            self.joints[k].theta = t;
        }
        self.apply_fk(skel, 0);
    }
}

pub fn avoid_joint_edge(link: &Link, theta: f64, delta: f64) -> f64 {
    if (theta - link.min_theta).abs() <= GEOM_EPS && theta + delta <= link.max_theta {
        theta + delta
    } else if (theta - link.max_theta).abs() <= GEOM_EPS && theta - delta >= link.min_theta {
        theta - delta
    } else {
        theta
    }
}

/// A pose whose angles respect the joint limits, with its cached error.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub pose: Pose,
    pub error: Option<f64>,
}

impl Solution {
    pub fn empty(skel: &Skeleton) -> Solution {
        Solution {
            pose: Pose::zero(skel),
            error: None,
        }
    }

    pub fn from_pose(pose: Pose) -> Solution {
        Solution { pose, error: None }
    }

    pub fn angles(&self) -> Vec<f64> {
        self.pose.angles()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn link(axis: Vec3, seg: Vec3, lim: f64) -> Link {
        Link::new(
            1,
            &LinkSpec {
                segment: seg,
                rotation_axis: axis,
                min_theta: -lim,
                max_theta: lim,
            },
            DEFAULT_LALUT_STEP,
        )
        .unwrap()
    }

    #[test]
    fn frames_for_pitch_and_twist() {
        let (oa, poa) = init_joint_frames(Vec3::X, Vec3::Y);
        assert_eq!(oa, Vec3::Z);
        assert_eq!(poa, Vec3::Z);
        let (_, poa) = init_joint_frames(Vec3::Y, Vec3::Y);
        assert_eq!(poa, Vec3::X);
        let (oa, _) = init_joint_frames(Vec3::X, Vec3::X);
        assert_eq!(oa, Vec3::X.cross(Vec3::Y));
    }

    #[test]
    fn latitude_poles() {
        let l = link(Vec3::X, Vec3::Y, FRAC_PI_2);
        assert_eq!(l.latitude(-Vec3::Y).0, 0.0);
        assert_eq!(l.latitude(Vec3::Y).0, 1.0);
        assert_eq!(l.latitude(Vec3::X).0, 0.5);
    }

    #[test]
    fn degenerate_range_table() {
        let l = link(Vec3::X, Vec3::Y, 0.0);
        assert_eq!(l.lalut.positive, vec![(1.0, 0.0)]);
        assert_eq!(l.query_lalut(0.3, -1.0), 0.0);
    }

    #[test]
    fn twister_table_collapses() {
        let l = link(Vec3::Y, Vec3::Y, PI);
        assert!(l.is_twister);
        assert_eq!(l.lalut.positive.len(), 1);
        assert!((l.lalut.positive[0].0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_hit_and_clamp() {
        let l = link(Vec3::X, Vec3::Y, FRAC_PI_2);
        let (lat, a) = l.lalut.positive[10];
        assert_eq!(l.query_lalut(lat, 1.0), a);
        assert_eq!(l.query_lalut(2.0, 1.0), 0.0);
    }

    #[test]
    fn exact_query_inverts_latitude() {
        let l = link(Vec3::X, Vec3::Y, FRAC_PI_2);
        for a in [-1.5, -0.7, -0.004, 0.002, 0.3, 1.2] {
            let u = l.local(a).rotate(Vec3::Y);
            let (lat, sign) = l.latitude(u);
            assert!((l.query_lalut_exact(lat, sign) - a).abs() < 1e-9, "{a}");
        }
    }

    #[test]
    fn safe_angle_examples() {
        let l = link(Vec3::X, Vec3::Y, FRAC_PI_2);
        assert_eq!(l.safe_angle(0.3, false), 0.3);
        assert!((l.safe_angle(TAU + 0.1, true) - 0.1).abs() < 1e-12);
        assert_eq!(l.safe_angle(2.0, false), FRAC_PI_2);
    }

    #[test]
    fn safe_twist_reflects_off_limits() {
        let mut l = link(Vec3::Y, Vec3::Y, FRAC_PI_2);
        assert_eq!(l.safe_twist(0.4), 0.4);
        let t = FRAC_PI_2 + 0.3;
        assert!((l.safe_twist(t) - (-FRAC_PI_2 + 0.3)).abs() < 1e-12);
        assert!((l.safe_twist(-t) - (FRAC_PI_2 - 0.3)).abs() < 1e-12);
        l.is_end_point = true;
        assert_eq!(l.safe_twist(t), FRAC_PI_2);
    }

    #[test]
    fn single_z_joint_fk() {
        let skel = Skeleton::new(
            "z",
            &[LinkSpec {
                segment: Vec3::Y,
                rotation_axis: Vec3::Z,
                min_theta: -PI,
                max_theta: PI,
            }],
        )
        .unwrap();
        let p = Pose::from_angles(&skel, &[FRAC_PI_2]).unwrap();
        assert!((p.superpoint.pos - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn avoid_edges() {
        let l = link(Vec3::X, Vec3::Y, 1.0);
        assert_eq!(avoid_joint_edge(&l, 0.2, 0.1), 0.2);
        assert_eq!(avoid_joint_edge(&l, 1.0, 0.1), 0.9);
        assert_eq!(avoid_joint_edge(&l, -1.0, 0.1), -0.9);
        let z = link(Vec3::X, Vec3::Y, 0.0);
        assert_eq!(avoid_joint_edge(&z, 0.0, 0.1), 0.0);
    }

    #[test]
    fn posture_norm_sums_powers() {
        let spec = |axis| LinkSpec {
            segment: Vec3::Y,
            rotation_axis: axis,
            min_theta: -1.0,
            max_theta: 1.0,
        };
        let skel = Skeleton::new("t", &[spec(Vec3::Y), spec(Vec3::X), spec(Vec3::Z), spec(Vec3::Y)]).unwrap();
        assert_eq!(skel.posture_norm(2.0), 12.0);
        assert_eq!(skel.posture_norm(1.0), 2.0);
    }
}
