//! The ERIK pipeline: a forward sweep from the end-point to the root that
//! shapes the chain after the posture, a backward sweep that re-derives a
//! limit-compliant solution from the root, and the fallbacks used when the
//! two stop making progress.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::ccd::{bw_twist, bwcd_posture, bwcd_solution, ccd, CcdConfig};
use crate::error::{invalid, Result};
use crate::geom::{epa, project_onto_plane, signed_angle, ypr_unchecked, Quat, Vec3, GEOM_EPS};
use crate::metrics::{combined_error, ErrorWeights};
use crate::skeleton::{avoid_joint_edge, Pose, Posture, Skeleton, Solution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErikHyperparams {
    pub weights: ErrorWeights,
    pub max_erik_iterations: usize,
    pub ccd: CcdConfig,
    pub disturbance: f64,
    pub ext_symmetric_endpoint: bool,
    pub ext_avoid_edges: bool,
    pub ext_nonconv_offset: bool,
    pub ext_nonconv_ccd: bool,
    pub nonconv_window: usize,
    /// Magnitude of a random jitter added to the offset trick, 0 to disable.
    pub offset_jitter: f64,
    pub seed: u64,
}

impl Default for ErikHyperparams {
    fn default() -> Self {
        ErikHyperparams {
            weights: ErrorWeights::default(),
            max_erik_iterations: 12,
            ccd: CcdConfig::default(),
            disturbance: PI / 90.0,
            ext_symmetric_endpoint: true,
            ext_avoid_edges: true,
            ext_nonconv_offset: true,
            ext_nonconv_ccd: true,
            nonconv_window: 4,
            offset_jitter: 0.0,
            seed: 0,
        }
    }
}

impl ErikHyperparams {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.max_erik_iterations == 0 {
            return Err(invalid("max_erik_iterations must be at least 1"));
        }
        if self.nonconv_window == 0 {
            return Err(invalid("nonconv_window must be at least 1"));
        }
        if !(self.disturbance >= 0.0) || !(self.offset_jitter >= 0.0) {
            return Err(invalid("disturbance and jitter must be non-negative"));
        }
        if self.ccd.max_iterations == 0 {
            return Err(invalid("ccd max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Target orientation, target posture and an optional earlier solution.
#[derive(Clone, Debug)]
pub struct ErikParams<'a> {
    pub tau: Quat,
    pub psi: &'a Posture,
    pub previous: Option<&'a Solution>,
}

impl<'a> ErikParams<'a> {
    pub fn new(tau: Quat, psi: &'a Posture) -> Self {
        ErikParams {
            tau,
            psi,
            previous: None,
        }
    }

    fn validate(&self, skel: &Skeleton) -> Result<()> {
        if !self.tau.is_finite() || (self.tau.norm() - 1.0).abs() > 1e-6 {
            return Err(invalid("target orientation must be a unit quaternion"));
        }
        if self.psi.joints.len() != skel.n_dofs() {
            return Err(invalid("posture chain length does not match the skeleton"));
        }
        if let Some(p) = self.previous {
            if p.pose.joints.len() != skel.n_dofs() {
                return Err(invalid("previous solution chain length does not match the skeleton"));
            }
        }
        Ok(())
    }
}

/// Working state of one solve.
#[derive(Clone, Debug)]
pub struct ErikAux {
    pub tau: Quat,
    pub psi: Posture,
    pub theta: Solution,
    pub best: Solution,
    pub previous: Solution,
    pub error_history: Vec<f64>,
    pub tried_nonconv_offset: bool,
}

/// Which stage produced the returned solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitPath {
    Sweeps,
    Bwcd,
    CcdFromCurrent,
    CcdFromEmpty,
    BestEffort,
}

#[derive(Clone, Debug)]
pub struct ErikOutcome {
    pub solution: Solution,
    pub iterations: usize,
    pub converged: bool,
    pub path: ExitPath,
}

impl ErikOutcome {
    pub fn error(&self) -> f64 {
        self.solution.error.unwrap_or(f64::INFINITY)
    }
}

fn score(theta: &Pose, tau: Quat, psi: &Pose, skel: &Skeleton, hp: &ErikHyperparams) -> f64 {
    combined_error(theta, tau, psi, skel, &hp.weights, hp.ext_symmetric_endpoint)
        .unwrap_or(f64::INFINITY)
}

pub fn initialize_solution(skel: &Skeleton, tau: Quat, psi: &Posture, hp: &ErikHyperparams) -> ErikAux {
    // The working target stays τ even for a twisting end-point: every later
    // stage aligns the end-point with it, so shifting it by the posture's
    // end twist would leave that twist as orientation error.
    let mut empty = Solution::empty(skel);
    empty.error = Some(score(&empty.pose, tau, psi, skel, hp));
    ErikAux {
        tau,
        psi: psi.clone(),
        theta: empty.clone(),
        best: empty.clone(),
        previous: empty,
        error_history: Vec::new(),
        tried_nonconv_offset: false,
    }
}

fn near_zero(v: Vec3) -> bool {
    v.norm() <= GEOM_EPS
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= GEOM_EPS
}

/// Right-multiplies every ancestor basis of `k` by `q`.
pub fn propagate_roll_down(q: Quat, k: usize, theta: &mut Pose, skel: &Skeleton) {
    for j in (0..k).rev() {
        let b = theta.joints[j].basis * q;
        theta.set_basis(skel, j, b);
    }
}

/// Right-multiplies every descendant basis of `k` by `q`, negating the
/// angles of non-twisting descendants when `flip` is set.
pub fn propagate_roll_up(q: Quat, k: usize, theta: &mut Pose, skel: &Skeleton, flip: bool) {
    for j in k + 1..skel.n_dofs() {
        let b = theta.joints[j].basis * q;
        theta.joints[j].basis = b;
        if flip && !skel.links[j].is_twister {
            theta.joints[j].theta = -theta.joints[j].theta;
        }
        theta.refresh_joint(skel, j);
    }
}

fn basis_y(theta: &Pose, k: usize) -> Vec3 {
    theta.joints[k].basis.y_axis()
}

fn half_turn_reduce(a: f64) -> f64 {
    if a > FRAC_PI_2 {
        a - PI
    } else if a <= -FRAC_PI_2 {
        a + PI
    } else {
        a
    }
}

/// Signed angle between the projections of `a` and `b` on the plane
/// orthogonal to `n`.
fn plane_angle(a: Vec3, b: Vec3, n: Vec3) -> f64 {
    signed_angle(project_onto_plane(a, n), project_onto_plane(b, n), n)
}

pub fn forward_phase(
    skel: &Skeleton,
    k: usize,
    tau: Quat,
    psi: &Posture,
    theta: &mut Pose,
    hp: &ErikHyperparams,
) {
    let link = &skel.links[k];
    let is_ee = skel.is_ee(k);
    if is_ee {
        theta.joints[k].pos = psi.joints[k].pos;
    }

    if k > 0 {
        let s = theta.joints[k].basis.rotate(link.segment_dir());
        let target = psi.pos(k) - psi.pos(k - 1);
        if let (Some(a), Some(b)) = (s.try_normalized(GEOM_EPS), target.try_normalized(GEOM_EPS)) {
            let b = crate::geom::min_arc(a, b) * theta.joints[k].basis;
            theta.set_basis(skel, k, b);
        }
        let pra = skel.pitch_ra(k);
        let rp = psi.joints[k].basis.rotate(pra);
        let rs = theta.joints[k].basis.rotate(pra);
        let jd = basis_y(theta, k);
        let a = plane_angle(rs, rp, jd);
        let b = theta.joints[k].basis * Quat::from_axis_angle(Vec3::Y, a);
        theta.set_basis(skel, k, b);
    }

    if !link.is_twister {
        reference_roll(skel, k, psi, theta);
    }

    if !is_ee {
        let child = &skel.links[k + 1];
        let a = if child.is_twister {
            link.rotation_axis
        } else {
            child.rotation_axis
        };
        let r = theta.joints[k].basis.rotate(a);
        let rc = theta.joints[k + 1].basis.rotate(a);
        let jd = theta.joints[k + 1].basis.y_axis();
        if child.is_twister && rc.dot(r) < 0.0 {
            propagate_roll_up(Quat::from_axis_angle(Vec3::Y, PI), k, theta, skel, true);
        } else {
            let pc = project_onto_plane(rc, jd);
            let pr = project_onto_plane(r, jd);
            if !near_zero(pc) && !near_zero(pr) {
                let a = half_turn_reduce(signed_angle(pc, pr, jd));
                if a != 0.0 {
                    let flip = near(a.abs(), PI);
                    propagate_roll_up(Quat::from_axis_angle(Vec3::Y, a), k, theta, skel, flip);
                }
            }
        }
    }

    let local_target = theta.joints[k].basis.conjugate() * tau;
    let (qy, _qp, mut qr) = ypr_unchecked(local_target.normalized(), skel.pitch_ra(k));
    let yaw = qy.angle_about(Vec3::Y);
    let mut roll = qr.angle_about(Vec3::Y);
    if is_ee && roll > FRAC_PI_2 {
        roll = PI - roll;
        qr = Quat::from_axis_angle(Vec3::Y, roll);
    } else if is_ee && roll < -FRAC_PI_2 {
        roll = -PI - roll;
        qr = Quat::from_axis_angle(Vec3::Y, roll);
    }
    if link.is_twister {
        let t = link.safe_twist(yaw + roll);
        theta.set_theta(skel, k, t);
    } else {
        let t_local = theta.joints[k].basis.conjugate().rotate(tau.y_axis());
        let t = link.local_swing_exact(t_local);
        theta.set_theta(skel, k, t);
        if !qr.is_identity(1e-12) {
            propagate_roll_down(qr, k, theta, skel);
        }
    }
    finish_forward(skel, k, theta, hp);
}

/// Rolls the ancestors of a non-twisting joint so the nearest bend of the
/// posture defines its rotation plane.
fn reference_roll(skel: &Skeleton, k: usize, psi: &Posture, theta: &mut Pose) {
    let n_links = skel.n_dofs();
    let mut s = psi.pos(k + 1) - psi.pos(k);
    let mut rp = Vec3::ZERO;
    let mut n = Some(k);
    let mut m = k;
    let mut flipped = false;
    while near_zero(rp) {
        let Some(cur) = n else { break };
        m = cur;
        let p = if cur == 0 {
            skel.links[0].segment
        } else {
            psi.pos(cur) - psi.pos(cur - 1)
        };
        rp = match (p.try_normalized(0.0), s.try_normalized(0.0)) {
            (Some(a), Some(b)) => a.cross(b),
            _ => Vec3::ZERO,
        };
        if cur == 0 && !flipped {
            if k + 2 <= n_links {
                s = psi.pos(k + 2) - psi.pos(k + 1);
            }
            flipped = true;
            n = if cur + 1 < n_links { Some(cur + 1) } else { None };
        } else {
            s = p;
            n = cur.checked_sub(1);
        }
    }
    let pra = skel.pitch_ra(m);
    let s = if m == 0 {
        pra
    } else {
        theta.joints[m - 1].basis.rotate(pra)
    };
    let p = theta.joints[k].basis.rotate(pra);
    if (p.dot(rp) < 0.0) != (rp.dot(s) < 0.0) {
        rp = -rp;
    }
    let jd = theta.joints[m].dir;
    let a = plane_angle(s, rp, jd);
    if a != 0.0 {
        propagate_roll_down(Quat::from_axis_angle(Vec3::Y, a), k, theta, skel);
    }
}

pub fn finish_forward(skel: &Skeleton, k: usize, theta: &mut Pose, hp: &ErikHyperparams) {
    let link = &skel.links[k];
    if hp.ext_avoid_edges {
        let t = avoid_joint_edge(link, theta.joints[k].theta, hp.disturbance);
        theta.set_theta(skel, k, t);
    }
    if !skel.is_ee(k) {
        let child_basis = theta.joints[k + 1].basis;
        let b = epa(child_basis * theta.joints[k].local.conjugate(), link.rotation_axis).normalized();
        theta.joints[k].basis = b;
        theta.joints[k].pos = theta.joints[k + 1].pos - child_basis.rotate(link.segment);
        theta.propagate_from(skel, k);
    }
}

/// Rolls the child basis about the child direction so its reference column
/// lines up with the matching column of joint `k`.
pub fn backward_child_roll(skel: &Skeleton, k: usize, theta: &mut Pose) {
    let c = k + 1;
    let cb = theta.joints[c].basis;
    let kb = theta.joints[k].basis;
    if cb.rotate(skel.links[c].rotation_axis).dot(kb.y_axis()).abs() <= GEOM_EPS {
        return;
    }
    let cd = theta.joints[c].dir;
    let cm = cb.to_mat();
    let km = kb.to_mat();
    let jd = theta.joints[k].dir;
    let mut axis = 1;
    let cy = cm.col(1).dot(cd);
    let kd = jd.dot(cd);
    if near(cy.abs(), 1.0) || near(kd.abs(), 1.0) {
        let cz = cm.col(2).dot(cd);
        axis = if near(cz.abs(), 1.0) || cm.col(0).dot(jd).abs() <= GEOM_EPS {
            0
        } else {
            2
        };
    }
    let cv = cm.col(axis);
    let pv = km.col(axis);
    let cp = project_onto_plane(cv, cd);
    let pp = project_onto_plane(pv, cd);
    let a = signed_angle(cp, pp, cd);
    let a2 = signed_angle(cp, pp, -cd);
    let q = Quat::from_axis_angle(cd, a) * cb;
    let q2 = Quat::from_axis_angle(cd, a2) * cb;
    let nb = if q.axis(axis).dot(pv) < q2.axis(axis).dot(pv) {
        q2
    } else {
        q
    };
    theta.set_basis(skel, c, nb);
}

pub fn backward_phase(skel: &Skeleton, k: usize, tau: Quat, theta: &mut Pose, hp: &ErikHyperparams) {
    let link = &skel.links[k];
    let is_ee = skel.is_ee(k);
    theta.set_frame_from_parent(skel, k);
    if link.is_twister {
        if !is_ee {
            backward_child_roll(skel, k, theta);
        }
        let tau = if is_ee { tau } else { theta.joints[k + 1].basis };
        let omega_m = theta.joints[k].omega.to_mat();
        let cur = theta.joints[k].theta;
        let mut t = bw_twist(&tau.to_mat(), &omega_m) + cur;
        if is_ee && hp.ext_symmetric_endpoint {
            let flipped = tau * Quat::from_axis_angle(Vec3::Y, PI);
            let t2 = bw_twist(&flipped.to_mat(), &omega_m) + cur;
            if t2.abs() < t.abs() {
                t = t2;
            }
        }
        theta.set_theta(skel, k, link.safe_twist(t));
    } else {
        let tau = if is_ee { tau } else { theta.joints[k + 1].basis };
        let basis = theta.joints[k].basis;
        let q = basis.conjugate() * tau;
        let (lat, sign) = link.target_latitude(q.y_axis());
        let mut t = link.safe_angle(link.query_lalut_exact(lat, sign), false);
        if !is_ee {
            let mut t2 = link.safe_angle(link.query_lalut_exact(lat, -sign), false);
            let seg_dir = |a: f64| (basis * link.local(a)).rotate(link.segment_dir());
            let mut s = seg_dir(t);
            let mut s2 = seg_dir(t2);
            let d = theta.joints[k + 1].omega.rotate(link.segment_dir());
            if s2.dot(d) > s.dot(d) {
                std::mem::swap(&mut t, &mut t2);
                std::mem::swap(&mut s, &mut s2);
            }
            let d = tau.rotate(link.segment_dir());
            if s2.dot(d) > s.dot(d) {
                t = t2;
            }
        }
        theta.set_theta(skel, k, t);
        if k > 0 && skel.links[k - 1].is_twister {
            parent_twist_compensation(skel, k, tau, theta);
        }
    }
    finish_backward(skel, k, theta);
}

fn parent_twist_compensation(skel: &Skeleton, k: usize, tau: Quat, theta: &mut Pose) {
    let link = &skel.links[k];
    let parent = &skel.links[k - 1];
    let mut rt = tau.rotate(link.rotation_axis);
    let mut rk = theta.joints[k].basis.rotate(link.rotation_axis);
    let rp = theta.joints[k - 1].basis.rotate(parent.rotation_axis);
    if near(rt.dot(rp).abs(), 1.0) || near(rk.dot(rp).abs(), 1.0) {
        rt = tau.rotate(link.oa);
        rk = theta.joints[k].basis.rotate(link.oa);
    }
    let mut p = project_onto_plane(rt, rp);
    if !skel.is_ee(k) {
        let cd = theta.joints[k + 1].dir;
        let q = Quat::from_axis_angle(cd, signed_angle(rt, p, cd));
        p = project_onto_plane((q * tau).rotate(link.rotation_axis), rp);
    }
    let pk = project_onto_plane(rk, rp);
    if near_zero(pk) || near_zero(p) {
        return;
    }
    // an axis and its opposite span the same plane; the swing sign is
    // already settled by the latitude candidates
    let mut gamma = signed_angle(pk, p, rp);
    if gamma > FRAC_PI_2 {
        gamma -= PI;
    } else if gamma <= -FRAC_PI_2 {
        gamma += PI;
    }
    let t = parent.safe_angle(theta.joints[k - 1].theta + gamma, true);
    theta.set_theta(skel, k - 1, t);
    theta.set_frame_from_parent(skel, k);
}

pub fn finish_backward(skel: &Skeleton, k: usize, theta: &mut Pose) {
    if k > 0 && skel.links[k - 1].is_twister {
        finish_backward(skel, k - 1, theta);
    }
    theta.set_frame_from_parent(skel, k);
}

/// Scores the current candidate against the original parameters and keeps
/// track of the best one.
pub fn solution_ok(aux: &mut ErikAux, params: &ErikParams, skel: &Skeleton, hp: &ErikHyperparams) -> bool {
    let e = score(&aux.theta.pose, params.tau, params.psi, skel, hp);
    aux.theta.error = Some(e);
    aux.error_history.push(e);
    if e <= aux.best.error.unwrap_or(f64::INFINITY) {
        aux.best = aux.theta.clone();
    }
    e <= hp.weights.threshold
}

/// Stall or cycle in the recorded errors over the trailing window.
pub fn nonconvergence_detected(history: &[f64], window: usize, precision: f64) -> bool {
    if history.len() < window + 1 {
        return false;
    }
    let split = history.len() - window;
    let before = history[..split].iter().copied().fold(f64::INFINITY, f64::min);
    let recent = history[split..].iter().copied().fold(f64::INFINITY, f64::min);
    if before - recent <= precision {
        return true;
    }
    let tail = &history[split - 1..];
    for i in 0..tail.len() {
        for j in i + 2..tail.len() {
            if (tail[i] - tail[j]).abs() <= precision {
                return true;
            }
        }
    }
    false
}

fn offset_rotation(theta: &Pose, skel: &Skeleton, k: usize, delta: f64) -> Quat {
    let link = &skel.links[k];
    let t = theta.joints[k].theta;
    let axis = theta.joints[k].basis.rotate(link.rotation_axis);
    let d = if (t - link.min_theta).abs() > (t - link.max_theta).abs() {
        delta
    } else {
        -delta
    };
    Quat::from_axis_angle(axis, d)
}

/// Nudges the working target by a small rotation about the root joint
/// axis and that of its child.
pub fn nonconv_offset_trick(aux: &mut ErikAux, skel: &Skeleton, hp: &ErikHyperparams, rng: &mut ChaCha8Rng) {
    let mut delta = hp.disturbance;
    if hp.offset_jitter > 0.0 {
        delta += rng.random_range(-hp.offset_jitter..=hp.offset_jitter);
        delta = delta.clamp(0.0, 2.0 * hp.disturbance.max(hp.offset_jitter));
    }
    let pose = &aux.theta.pose;
    let mut off = offset_rotation(pose, skel, 0, delta);
    if skel.n_dofs() > 1 {
        off = offset_rotation(pose, skel, 1, delta) * off;
    }
    aux.tau = (off * aux.tau).normalized();
    aux.tried_nonconv_offset = true;
}

pub fn select_best(aux: &ErikAux) -> Solution {
    let cur = aux.theta.error.unwrap_or(f64::INFINITY);
    let best = aux.best.error.unwrap_or(f64::INFINITY);
    if cur <= best {
        aux.theta.clone()
    } else {
        aux.best.clone()
    }
}

/// One forward sweep followed by one backward sweep.
pub fn erik_iteration(skel: &Skeleton, aux: &mut ErikAux, hp: &ErikHyperparams) {
    let n = skel.n_dofs();
    let pose = &mut aux.theta.pose;
    for k in (0..n).rev() {
        let tau = if skel.is_ee(k) {
            aux.tau
        } else {
            pose.joints[k + 1].basis
        };
        forward_phase(skel, k, tau, &aux.psi, pose, hp);
    }
    for k in 0..n {
        backward_phase(skel, k, aux.tau, pose, hp);
    }
    pose.apply_fk(skel, 0);
    aux.theta.error = None;
}

pub fn calculate_erik(skel: &Skeleton, params: &ErikParams, hp: &ErikHyperparams) -> Result<ErikOutcome> {
    params.validate(skel)?;
    hp.validate()?;
    let mut aux = initialize_solution(skel, params.tau, params.psi, hp);
    if let Some(prev) = params.previous {
        let mut p = prev.clone();
        p.pose.apply_fk(skel, 0);
        if p.pose.within_limits(skel) {
            let e = score(&p.pose, params.tau, params.psi, skel, hp);
            p.error = Some(e);
            if e <= aux.best.error.unwrap_or(f64::INFINITY) {
                aux.best = p.clone();
            }
            aux.previous = p;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let (warped, _) = bwcd_posture(&aux.psi, aux.tau.y_axis(), &hp.ccd, skel);
    aux.psi = warped;
    if hp.ext_avoid_edges {
        aux.psi.avoid_joint_edges(skel, hp.disturbance);
    }
    let edges = hp.ext_avoid_edges.then_some(hp.disturbance);
    let done = |aux: &ErikAux, i: usize, path: ExitPath, converged: bool| ErikOutcome {
        solution: if converged { aux.theta.clone() } else { select_best(aux) },
        iterations: i,
        converged,
        path,
    };

    for i in 1..=hp.max_erik_iterations {
        erik_iteration(skel, &mut aux, hp);
        if solution_ok(&mut aux, params, skel, hp) {
            return Ok(done(&aux, i, ExitPath::Sweeps, true));
        }
        let (s, _) = bwcd_solution(&aux.theta.pose, aux.tau, &hp.ccd, skel);
        aux.theta = Solution::from_pose(s);
        if solution_ok(&mut aux, params, skel, hp) {
            return Ok(done(&aux, i, ExitPath::Bwcd, true));
        }
        if nonconvergence_detected(&aux.error_history, hp.nonconv_window, hp.ccd.stall_precision) {
            if hp.ext_nonconv_offset && !aux.tried_nonconv_offset {
                nonconv_offset_trick(&mut aux, skel, hp, &mut rng);
                continue;
            } else if hp.ext_nonconv_ccd {
                let (s, _) = ccd(&aux.theta.pose, aux.tau, &hp.ccd, skel, edges);
                aux.theta = Solution::from_pose(s);
                if solution_ok(&mut aux, params, skel, hp) {
                    return Ok(done(&aux, i, ExitPath::CcdFromCurrent, true));
                }
                let (s, _) = ccd(&Pose::zero(skel), aux.tau, &hp.ccd, skel, edges);
                aux.theta = Solution::from_pose(s);
                if solution_ok(&mut aux, params, skel, hp) {
                    return Ok(done(&aux, i, ExitPath::CcdFromEmpty, true));
                }
            }
            return Ok(finish_best(&aux, i));
        }
    }
    Ok(finish_best(&aux, hp.max_erik_iterations))
}

fn finish_best(aux: &ErikAux, iterations: usize) -> ErikOutcome {
    let solution = select_best(aux);
    ErikOutcome {
        converged: false,
        solution,
        iterations,
        path: ExitPath::BestEffort,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::catalog;
    use crate::skeleton::LinkSpec;

    fn chain(axes: &[Vec3], lim: f64) -> Skeleton {
        let specs: Vec<_> = axes
            .iter()
            .map(|&a| LinkSpec {
                segment: Vec3::Y,
                rotation_axis: a,
                min_theta: -lim,
                max_theta: lim,
            })
            .collect();
        Skeleton::new("t", &specs).unwrap()
    }

    fn max_basis_diff(a: &Pose, b: &Pose) -> f64 {
        a.joints
            .iter()
            .zip(&b.joints)
            .map(|(x, y)| x.basis.to_mat().max_abs_diff(&y.basis.to_mat()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn initialize_keeps_target_and_scores_empty() {
        let hp = ErikHyperparams::default();
        let skel = chain(&[Vec3::Y, Vec3::X, Vec3::Z], FRAC_PI_2);
        let psi = Pose::from_angles(&skel, &[0.2, 0.3, -0.4]).unwrap();
        let tau = Quat::from_axis_angle(Vec3::new(1.0, 0.2, 0.0), 0.7);
        let aux = initialize_solution(&skel, tau, &psi, &hp);
        assert_eq!(aux.tau, tau);
        let expect = combined_error(&Pose::zero(&skel), tau, &psi, &skel, &hp.weights, true).unwrap();
        assert_eq!(aux.theta.error, Some(expect));
        assert_eq!(aux.best.error, Some(expect));

        let c = catalog('C').unwrap();
        let psi = Pose::from_angles(&c, &[0.0, 0.2, 0.1, 0.3, 0.9]).unwrap();
        assert_eq!(initialize_solution(&c, tau, &psi, &hp).tau, tau);
    }

    #[test]
    fn roll_down_inverts() {
        let skel = chain(&[Vec3::Y, Vec3::X, Vec3::Z, Vec3::X], FRAC_PI_2);
        let orig = Pose::from_angles(&skel, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut p = orig.clone();
        propagate_roll_down(Quat::IDENTITY, 3, &mut p, &skel);
        assert_eq!(p, orig);
        let q = Quat::from_axis_angle(Vec3::Y, 0.7);
        propagate_roll_down(q, 3, &mut p, &skel);
        assert!(max_basis_diff(&p, &orig) > 0.1);
        assert_eq!(p.joints[3].basis, orig.joints[3].basis);
        propagate_roll_down(q.conjugate(), 3, &mut p, &skel);
        assert!(max_basis_diff(&p, &orig) < 1e-12);
    }

    #[test]
    fn roll_up_flip_preserves_direction() {
        let skel = chain(&[Vec3::X, Vec3::X], FRAC_PI_2);
        let orig = Pose::from_angles(&skel, &[0.3, 0.5]).unwrap();
        let mut p = orig.clone();
        propagate_roll_up(Quat::from_axis_angle(Vec3::Y, PI), 0, &mut p, &skel, true);
        assert_eq!(p.joints[1].theta, -0.5);
        assert!((p.joints[1].dir - orig.joints[1].dir).norm() < 1e-12);

        let tw = chain(&[Vec3::X, Vec3::Y, Vec3::Y], FRAC_PI_2);
        let mut p = Pose::from_angles(&tw, &[0.3, 0.4, 0.5]).unwrap();
        propagate_roll_up(Quat::from_axis_angle(Vec3::Y, PI), 0, &mut p, &tw, true);
        assert_eq!(&p.angles()[1..], &[0.4, 0.5]);
    }

    #[test]
    fn nonconvergence_rules() {
        let dec: Vec<f64> = (0..10).map(|i| 1.0 - 0.05 * i as f64).collect();
        assert!(!nonconvergence_detected(&dec, 4, 1e-5));
        assert!(nonconvergence_detected(&[0.3; 5], 4, 1e-5));
        assert!(!nonconvergence_detected(&[0.3; 4], 4, 1e-5));
        let cyc = [0.9, 0.5, 0.3, 0.6, 0.3, 0.6];
        assert!(nonconvergence_detected(&cyc, 4, 1e-5));
    }

    #[test]
    fn offset_trick_bounds() {
        let skel = catalog('C').unwrap();
        let psi = Pose::from_angles(&skel, &[0.2, 0.4, -0.1, 0.3, 0.0]).unwrap();
        let tau = Quat::from_axis_angle(Vec3::new(0.3, 1.0, 0.2), 1.2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut hp = ErikHyperparams {
            disturbance: 0.0,
            ..Default::default()
        };
        let mut aux = initialize_solution(&skel, tau, &psi, &hp);
        aux.theta.pose = psi.clone();
        nonconv_offset_trick(&mut aux, &skel, &hp, &mut rng);
        assert!(aux.tau.distance(tau) < 1e-15 && aux.tried_nonconv_offset);

        hp.disturbance = PI / 90.0;
        let mut aux = initialize_solution(&skel, tau, &psi, &hp);
        aux.theta.pose = psi;
        nonconv_offset_trick(&mut aux, &skel, &hp, &mut rng);
        let rel = aux.tau * tau.conjugate();
        let angle = 2.0 * rel.v.norm().atan2(rel.w.abs());
        assert!(angle > 0.0 && angle <= 2.0 * hp.disturbance + 1e-12);
    }

    #[test]
    fn centred_joint_takes_negative_offset() {
        let skel = chain(&[Vec3::Y, Vec3::X], FRAC_PI_2);
        let p = Pose::zero(&skel);
        let q = offset_rotation(&p, &skel, 1, 0.1);
        assert!((q.angle_about(Vec3::X) + 0.1).abs() < 1e-12);
    }

    #[test]
    fn acceptance_uses_inclusive_threshold() {
        let skel = chain(&[Vec3::Y, Vec3::X], FRAC_PI_2);
        let psi = Pose::zero(&skel);
        let tau = Quat::IDENTITY;
        let params = ErikParams::new(tau, &psi);
        let mut hp = ErikHyperparams::default();
        let mut aux = initialize_solution(&skel, tau, &psi, &hp);
        aux.theta.pose = Pose::from_angles(&skel, &[0.0, 0.3]).unwrap();
        let e = score(&aux.theta.pose, tau, &psi, &skel, &hp);
        hp.weights.threshold = e;
        assert!(solution_ok(&mut aux, &params, &skel, &hp));
        hp.weights.threshold = e * 0.999;
        assert!(!solution_ok(&mut aux, &params, &skel, &hp));
        assert_eq!(aux.error_history, vec![e, e]);
    }

    #[test]
    fn straight_posture_reference_roll_terminates() {
        let skel = chain(&[Vec3::X, Vec3::Z, Vec3::Y], FRAC_PI_2);
        let psi = Pose::zero(&skel);
        let mut theta = Pose::zero(&skel);
        let hp = ErikHyperparams::default();
        for k in (0..3).rev() {
            let tau = if k == 2 { Quat::IDENTITY } else { theta.joints[k + 1].basis };
            forward_phase(&skel, k, tau, &psi, &mut theta, &hp);
        }
        assert!(theta.angles().iter().all(|a| a.is_finite()));
    }

    #[test]
    fn consistent_solution_survives_backward_sweep() {
        let skel = catalog('C').unwrap();
        let pose = Pose::from_angles(&skel, &[0.3, -0.5, 0.4, 0.7, 0.0]).unwrap();
        let mut theta = pose.clone();
        let hp = ErikHyperparams::default();
        for k in 0..skel.n_dofs() {
            backward_phase(&skel, k, pose.ee().omega, &mut theta, &hp);
        }
        for (a, b) in theta.angles().iter().zip(pose.angles()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn parent_twist_absorbs_rotation() {
        let skel = chain(&[Vec3::Y, Vec3::X], FRAC_PI_2);
        let gamma = 0.35;
        let target = Pose::from_angles(&skel, &[gamma, 0.6]).unwrap();
        let mut theta = Pose::from_angles(&skel, &[0.0, 0.6]).unwrap();
        theta.set_frame_from_parent(&skel, 1);
        parent_twist_compensation(&skel, 1, target.ee().omega, &mut theta);
        assert!((theta.joints[0].theta - gamma).abs() < 1e-9);
    }

    #[test]
    fn child_roll_removes_constructed_roll() {
        let skel = chain(&[Vec3::Y, Vec3::X, Vec3::X], FRAC_PI_2);
        let mut p = Pose::from_angles(&skel, &[0.0, 0.5, 0.2]).unwrap();
        let tilted = Quat::from_axis_angle(Vec3::Z, 0.4);
        p.set_basis(&skel, 1, tilted);
        let aligned = {
            let mut a = p.clone();
            backward_child_roll(&skel, 0, &mut a);
            a
        };
        let cd = p.joints[1].dir;
        let rolled = Quat::from_axis_angle(cd, FRAC_PI_2) * p.joints[1].basis;
        p.set_basis(&skel, 1, rolled);
        backward_child_roll(&skel, 0, &mut p);
        let d = p.joints[1].basis.to_mat().max_abs_diff(&aligned.joints[1].basis.to_mat());
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn fixed_point_on_catalog_c() {
        let skel = catalog('C').unwrap();
        let angles = [0.4, -0.9, 0.6, 1.1, 0.7];
        let psi = Pose::from_angles(&skel, &angles).unwrap();
        let out = calculate_erik(&skel, &ErikParams::new(psi.ee().omega, &psi), &ErikHyperparams::default()).unwrap();
        assert!(out.converged && out.error() < 1e-9);
        for (a, b) in out.solution.angles().iter().zip(angles) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_mismatched_posture() {
        let skel = catalog('C').unwrap();
        let other = catalog('A').unwrap();
        let psi = Pose::zero(&other);
        let r = calculate_erik(&skel, &ErikParams::new(Quat::IDENTITY, &psi), &ErikHyperparams::default());
        assert!(r.is_err());
    }
}
