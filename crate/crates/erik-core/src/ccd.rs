//! Cyclic coordinate descent and its backward (root-first) variants for
//! direction targets.

use serde::{Deserialize, Serialize};

use crate::geom::{project_onto_plane, round_at, signed_angle, Quat, RotMat3, Vec3, GEOM_EPS};
use crate::skeleton::{Pose, Skeleton};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcdConfig {
    pub max_iterations: usize,
    pub precision: f64,
    pub stall_precision: f64,
    pub round_decimals: u32,
}

impl Default for CcdConfig {
    fn default() -> Self {
        CcdConfig {
            max_iterations: 20,
            precision: 1e-3,
            stall_precision: 1e-5,
            round_decimals: 3,
        }
    }
}

impl CcdConfig {
    fn round(&self, x: f64) -> f64 {
        round_at(x, self.round_decimals as i32)
    }
}

/// Iteration count and the per-iteration direction error of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CcdTrace {
    pub iterations: usize,
    pub errors: Vec<f64>,
}

/// Direction acceptance test: rounded half-cosine distance against the
/// configured precision.
pub fn ccd_test(t: Vec3, ee: Vec3, cfg: &CcdConfig) -> (bool, f64) {
    let e = cfg.round(-(t.dot(ee) - 1.0) / 2.0);
    (e <= cfg.precision, e)
}

/// Twist about Ω's Ŷ column that aligns Ω with τ, measured on whichever
/// of the X or Z columns is better conditioned.
pub fn bw_twist(tau_m: &RotMat3, omega_m: &RotMat3) -> f64 {
    let oy = omega_m.col(1);
    let d_zy = tau_m.col(2).dot(oy);
    let d_xy = tau_m.col(0).dot(oy);
    let col = if (d_zy.abs() - 1.0).abs() <= GEOM_EPS || d_xy.abs() < d_zy.abs() {
        0
    } else {
        2
    };
    signed_angle(omega_m.col(col), project_onto_plane(tau_m.col(col), oy), oy)
}

/// Adds the end-point twist correction, when the end-point twists.
pub(crate) fn correct_ee_twist(theta: &mut Pose, tau: Quat, skel: &Skeleton) {
    let ee = skel.ee();
    let link = &skel.links[ee];
    if !link.is_twister {
        return;
    }
    let delta = bw_twist(&tau.to_mat(), &theta.joints[ee].omega.to_mat());
    let t = link.safe_angle(theta.joints[ee].theta + delta, true);
    theta.set_theta(skel, ee, t);
    theta.refresh_superpoint(skel);
}

fn nonzero(v: Vec3) -> bool {
    v.norm() > 1e-12
}

/// Rotates the posture in Cartesian space, root first, so its end-point
/// direction approaches `tau_dir`. Joint limits are not enforced.
pub fn bwcd_posture(psi: &Pose, tau_dir: Vec3, cfg: &CcdConfig, skel: &Skeleton) -> (Pose, CcdTrace) {
    let mut p = psi.clone();
    let mut trace = CcdTrace::default();
    let ee = skel.ee();
    let ee_dir = |p: &Pose| p.superpoint.basis.rotate(skel.links[ee].segment_dir());
    for i in 1..=cfg.max_iterations {
        trace.iterations = i;
        for k in 0..skel.n_dofs() {
            let pd = ee_dir(&p);
            if ccd_test(tau_dir, pd, cfg).0 {
                trace.errors.push(ccd_test(tau_dir, pd, cfg).1);
                return (p, trace);
            }
            let r = p.joints[k].basis.rotate(skel.links[k].rotation_axis);
            let pdp = project_onto_plane(pd, r);
            let tdp = project_onto_plane(tau_dir, r);
            if !(nonzero(pdp) && nonzero(tdp)) {
                continue;
            }
            let alpha = signed_angle(pdp, tdp, r);
            if cfg.round(alpha.abs()) <= 0.0 {
                continue;
            }
            let q = crate::geom::epa(Quat::from_axis_angle(r, alpha), skel.links[k].rotation_axis);
            rotate_tail(&mut p, skel, k, q, alpha);
        }
        let (ok, e) = ccd_test(tau_dir, ee_dir(&p), cfg);
        trace.errors.push(e);
        if ok {
            return (p, trace);
        }
    }
    (p, trace)
}

/// Inner loop of the posture warp: the bases of every descendant of `k`
/// are rotated by `q` and positions re-accumulated from `k`.
fn rotate_tail(p: &mut Pose, skel: &Skeleton, k: usize, q: Quat, alpha: f64) {
    let n = skel.n_dofs();
    p.joints[k].theta += alpha;
    p.refresh_joint(skel, k);
    let mut pos = p.joints[k].pos;
    for j in k..n {
        p.joints[j].pos = pos;
        if j + 1 < n {
            let b = q * p.joints[j + 1].basis;
            p.joints[j + 1].basis = b;
            p.refresh_joint(skel, j + 1);
            pos += b.rotate(skel.links[j].segment);
        } else {
            p.refresh_superpoint(skel);
        }
    }
}

/// Root-first angular sweeps with joint limits enforced, followed by the
/// end-point twist correction on every exit.
pub fn bwcd_solution(theta: &Pose, tau: Quat, cfg: &CcdConfig, skel: &Skeleton) -> (Pose, CcdTrace) {
    let mut s = theta.clone();
    let mut trace = CcdTrace::default();
    let td = tau.y_axis();
    let finish = |mut s: Pose, trace: CcdTrace| {
        correct_ee_twist(&mut s, tau, skel);
        (s, trace)
    };
    for i in 1..=cfg.max_iterations {
        trace.iterations = i;
        let mut eod = s.ee().dir;
        for k in 0..skel.n_dofs() {
            let (ok, e) = ccd_test(td, eod, cfg);
            if ok {
                trace.errors.push(e);
                return finish(s, trace);
            }
            let r = s.joints[k].omega.rotate(skel.links[k].rotation_axis);
            let top = project_onto_plane(td, r);
            let eop = project_onto_plane(eod, r);
            if nonzero(top) && nonzero(eop) {
                let link = &skel.links[k];
                let t = link.safe_angle(s.joints[k].theta + signed_angle(eop, top, r), true);
                s.joints[k].theta = t;
                s.apply_fk(skel, k);
                eod = s.ee().dir;
            }
        }
        let (ok, e) = ccd_test(td, eod, cfg);
        trace.errors.push(e);
        if ok {
            return finish(s, trace);
        }
    }
    finish(s, trace)
}

/// End-point-first CCD with stall detection.
pub fn ccd(
    theta: &Pose,
    tau: Quat,
    cfg: &CcdConfig,
    skel: &Skeleton,
    avoid_edges: Option<f64>,
) -> (Pose, CcdTrace) {
    let mut s = theta.clone();
    let mut trace = CcdTrace::default();
    let td = tau.y_axis();
    let mut ed = s.ee().dir;
    let mut eps = 10000.0;
    let finish = |mut s: Pose, trace: CcdTrace| {
        correct_ee_twist(&mut s, tau, skel);
        (s, trace)
    };
    for i in 1..=cfg.max_iterations {
        trace.iterations = i;
        let last = eps;
        for k in (0..skel.n_dofs()).rev() {
            let (ok, e) = ccd_test(td, ed, cfg);
            if ok {
                trace.errors.push(e);
                return finish(s, trace);
            }
            let r = s.joints[k].basis.rotate(skel.links[k].rotation_axis);
            let tdp = project_onto_plane(td, r);
            let edp = project_onto_plane(ed, r);
            if nonzero(tdp) && nonzero(edp) {
                let link = &skel.links[k];
                let t = link.safe_angle(s.joints[k].theta + signed_angle(edp, tdp, r), true);
                s.joints[k].theta = t;
                if let Some(delta) = avoid_edges {
                    s.avoid_joint_edges(skel, delta);
                }
                s.apply_fk(skel, k);
                ed = s.ee().dir;
            }
        }
        let (ok, e) = ccd_test(td, ed, cfg);
        eps = e;
        trace.errors.push(e);
        if ok || (eps - last).abs() <= cfg.stall_precision {
            return finish(s, trace);
        }
    }
    finish(s, trace)
}
