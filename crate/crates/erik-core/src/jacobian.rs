//! Jacobian-based IK: matrix assembly for quaternion skeletons and DH
//! chains, inversion strategies, priority composition and the iterative
//! solver loop used by the DLS baselines.

use nalgebra::{DMatrix, DVector, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geom::{clamp_mag, clamp_max_abs, Quat, RotMat3, Vec3};
use crate::skeleton::{Pose, Skeleton};

pub type Mat = DMatrix<f64>;
pub type Col = DVector<f64>;

/// Singular values below `RANK_CUTOFF · σ₁` count as zero.
pub const RANK_CUTOFF: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;

/// World-frame joint axes and origins plus the end-effector frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainFrames {
    pub axes: Vec<Vec3>,
    pub origins: Vec<Vec3>,
    pub ee_pos: Vec3,
    pub ee_rot: Quat,
}

/// Anything whose forward kinematics yields revolute joint frames.
pub trait KinematicChain {
    fn n_joints(&self) -> usize;
    fn frames(&self, thetas: &[f64]) -> Result<ChainFrames>;
    /// Projects angles onto the joint limits, if the chain has any.
    fn clamp(&self, _thetas: &mut [f64]) {}
}

impl KinematicChain for Skeleton {
    fn n_joints(&self) -> usize {
        self.n_dofs()
    }

    fn frames(&self, thetas: &[f64]) -> Result<ChainFrames> {
        let p = Pose::from_angles(self, thetas)?;
        Ok(frames_of_pose(self, &p))
    }

    fn clamp(&self, thetas: &mut [f64]) {
        for (t, l) in thetas.iter_mut().zip(&self.links) {
            *t = t.clamp(l.min_theta, l.max_theta);
        }
    }
}

pub fn frames_of_pose(skel: &Skeleton, p: &Pose) -> ChainFrames {
    ChainFrames {
        axes: p
            .joints
            .iter()
            .zip(&skel.links)
            .map(|(j, l)| j.omega.rotate(l.rotation_axis))
            .collect(),
        origins: p.joints.iter().map(|j| j.pos).collect(),
        ee_pos: p.superpoint.pos,
        ee_rot: p.ee().omega,
    }
}

/// Classic Denavit-Hartenberg row; the joint variable adds to `theta_offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhLink {
    pub theta_offset: f64,
    pub alpha: f64,
    pub a: f64,
    pub d: f64,
}

impl DhLink {
    pub const fn new(theta_offset: f64, alpha: f64, a: f64, d: f64) -> Self {
        DhLink { theta_offset, alpha, a, d }
    }

    /// Rz(θ)·Tz(d)·Tx(a)·Rx(α).
    pub fn transform(&self, theta: f64) -> Matrix4<f64> {
        let (st, ct) = (self.theta_offset + theta).sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        Matrix4::new(
            ct, -st * ca, st * sa, self.a * ct, //
            st, ct * ca, -ct * sa, self.a * st, //
            0.0, sa, ca, self.d, //
            0.0, 0.0, 0.0, 1.0,
        )
    }
}

/// DH rows of the five-joint arm used for the DLS comparison.
pub fn skeleton_c_dh() -> Vec<DhLink> {
    use std::f64::consts::FRAC_PI_2 as H;
    vec![
        DhLink::new(0.0, H, 0.0, 10.0),
        DhLink::new(H, 0.0, 30.0, 0.0),
        DhLink::new(0.0, H, 30.0, 0.0),
        DhLink::new(H, H, 0.0, 0.0),
        DhLink::new(H, 0.0, 0.0, 40.0),
    ]
}

/// Base-to-link transforms T₀¹ … T₀ⁿ.
pub fn dh_forward(links: &[DhLink], thetas: &[f64]) -> Result<Vec<Matrix4<f64>>> {
    if links.is_empty() {
        return Err(invalid("DH chain is empty"));
    }
    if thetas.len() != links.len() {
        return Err(invalid(format!("expected {} angles, got {}", links.len(), thetas.len())));
    }
    let mut t = Matrix4::identity();
    Ok(links
        .iter()
        .zip(thetas)
        .map(|(l, &th)| {
            t *= l.transform(th);
            t
        })
        .collect())
}

fn column3(m: &Matrix4<f64>, c: usize) -> Vec3 {
    Vec3::new(m[(0, c)], m[(1, c)], m[(2, c)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhChain {
    pub links: Vec<DhLink>,
    /// Optional (min, max) per joint variable.
    #[serde(default)]
    pub limits: Option<Vec<(f64, f64)>>,
}

impl KinematicChain for DhChain {
    fn n_joints(&self) -> usize {
        self.links.len()
    }

    fn frames(&self, thetas: &[f64]) -> Result<ChainFrames> {
        let ts = dh_forward(&self.links, thetas)?;
        let mut axes = vec![Vec3::Z];
        let mut origins = vec![Vec3::ZERO];
        for t in &ts[..ts.len() - 1] {
            axes.push(column3(t, 2));
            origins.push(column3(t, 3));
        }
        let last = ts.last().expect("non-empty chain");
        Ok(ChainFrames {
            axes,
            origins,
            ee_pos: column3(last, 3),
            ee_rot: RotMat3::from_columns(column3(last, 0), column3(last, 1), column3(last, 2)).to_quat(),
        })
    }

    fn clamp(&self, thetas: &mut [f64]) {
        if let Some(lims) = &self.limits {
            for (t, &(lo, hi)) in thetas.iter_mut().zip(lims) {
                *t = t.clamp(lo, hi);
            }
        }
    }
}

/// Task variables for the end-effector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JacobianTask {
    Position(Vec3),
    /// Planar reach: X and Y only.
    PositionXy(f64, f64),
    Orientation(Quat),
    Full(Vec3, Quat),
}

/// Vector part of the rotation taking `current` to `target`, on the short arc.
pub fn orientation_task_error(target: Quat, current: Quat) -> Vec3 {
    let q = target * current.inverse();
    if q.w < 0.0 {
        -q.v
    } else {
        q.v
    }
}

impl JacobianTask {
    pub fn dimension(&self) -> usize {
        match self {
            JacobianTask::PositionXy(..) => 2,
            JacobianTask::Position(_) | JacobianTask::Orientation(_) => 3,
            JacobianTask::Full(..) => 6,
        }
    }

    /// Target minus current task state.
    pub fn error(&self, f: &ChainFrames) -> Col {
        let p = f.ee_pos;
        match *self {
            JacobianTask::Position(t) => vec3_col(t - p),
            JacobianTask::PositionXy(x, y) => Col::from_vec(vec![x - p.x, y - p.y]),
            JacobianTask::Orientation(q) => vec3_col(orientation_task_error(q, f.ee_rot)),
            JacobianTask::Full(t, q) => {
                let (a, b) = (t - p, orientation_task_error(q, f.ee_rot));
                Col::from_vec(vec![a.x, a.y, a.z, b.x, b.y, b.z])
            }
        }
    }
}

fn vec3_col(v: Vec3) -> Col {
    Col::from_vec(vec![v.x, v.y, v.z])
}

pub fn jacobian_from_frames(f: &ChainFrames, task: &JacobianTask) -> Mat {
    let n = f.axes.len();
    let mut j = Mat::zeros(task.dimension(), n);
    for (c, (&a, &o)) in f.axes.iter().zip(&f.origins).enumerate() {
        let lin = a.cross(f.ee_pos - o);
        let rows: Vec<f64> = match task {
            JacobianTask::Position(_) => vec![lin.x, lin.y, lin.z],
            JacobianTask::PositionXy(..) => vec![lin.x, lin.y],
            JacobianTask::Orientation(_) => vec![a.x, a.y, a.z],
            JacobianTask::Full(..) => vec![lin.x, lin.y, lin.z, a.x, a.y, a.z],
        };
        for (r, v) in rows.into_iter().enumerate() {
            j[(r, c)] = v;
        }
    }
    j
}

pub fn assemble_jacobian<C: KinematicChain + ?Sized>(chain: &C, thetas: &[f64], task: &JacobianTask) -> Result<Mat> {
    Ok(jacobian_from_frames(&chain.frames(thetas)?, task))
}

/// J = U·diag(d)·Vᵀ with U m×m, V n×n and `d` of length min(m, n).
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: Mat,
    pub d: Vec<f64>,
    pub v: Mat,
    pub rank: usize,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> Mat {
        let (m, n) = (self.u.nrows(), self.v.nrows());
        let mut s = Mat::zeros(m, n);
        for (i, &x) in self.d.iter().enumerate() {
            s[(i, i)] = x;
        }
        &self.u * s * self.v.transpose()
    }

    /// Smallest of the min(m, n) singular values; 0 for an empty matrix.
    pub fn sigma_min(&self) -> f64 {
        self.d.last().copied().unwrap_or(0.0)
    }
}

pub fn svd(j: &Mat) -> Result<SvdFactors> {
    if j.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    if j.nrows() >= j.ncols() {
        jacobi_tall(j)
    } else {
        let f = jacobi_tall(&j.transpose())?;
        Ok(SvdFactors {
            u: f.v,
            d: f.d,
            v: f.u,
            rank: f.rank,
        })
    }
}

/// One-sided (Hestenes) Jacobi on a matrix with at least as many rows as
/// columns.
fn jacobi_tall(a: &Mat) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = Mat::identity(n, n);
    let mut converged = n < 2;
    // columns this small relative to the matrix are numerically zero
    let negligible = 1e-32 * a.norm_squared();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if alpha.min(beta) <= negligible || gamma.abs() <= 1e-14 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("Jacobi SVD did not converge".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|i| w.column(i).norm()).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let d: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let top = d.first().copied().unwrap_or(0.0);

    let mut u = Mat::zeros(m, m);
    let mut vs = Mat::zeros(n, n);
    let mut filled = 0;
    for (k, &i) in order.iter().enumerate() {
        vs.set_column(k, &v.column(i));
        if d[k] > 1e-14 * top && d[k] > 0.0 {
            u.set_column(k, &(w.column(i) / d[k]));
            filled = k + 1;
        }
    }
    complete_basis(&mut u, filled);
    let rank = d.iter().filter(|&&s| top > 0.0 && s > RANK_CUTOFF * top).count();
    Ok(SvdFactors { u, d, v: vs, rank })
}

fn rotate_columns(m: &mut Mat, p: usize, q: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let (a, b) = (m[(r, p)], m[(r, q)]);
        m[(r, p)] = c * a - s * b;
        m[(r, q)] = s * a + c * b;
    }
}

/// Fills columns `filled..` of a square matrix with an orthonormal
/// complement of the first `filled` columns.
fn complete_basis(u: &mut Mat, filled: usize) {
    let m = u.nrows();
    for k in filled..m {
        let mut best: Option<Col> = None;
        for e in 0..m {
            let mut c = Col::zeros(m);
            c[e] = 1.0;
            for _ in 0..2 {
                for j in 0..k {
                    let proj = u.column(j).dot(&c);
                    c -= u.column(j) * proj;
                }
            }
            if best.as_ref().is_none_or(|b| c.norm() > b.norm()) {
                best = Some(c);
            }
        }
        let c = best.expect("m > 0");
        u.set_column(k, &(&c / c.norm()));
    }
}

/// Σ σᵢ/(σᵢ² + λ²)·vᵢuᵢᵀ. With λ = 0 this is the rank-truncated
/// pseudoinverse.
pub fn damped_pinv(f: &SvdFactors, lambda: f64) -> Mat {
    let floor = if lambda == 0.0 {
        RANK_CUTOFF * f.d.first().copied().unwrap_or(0.0)
    } else {
        0.0
    };
    damped_pinv_above(f, lambda, floor)
}

/// As [`damped_pinv`], skipping singular values at or below `floor`.
fn damped_pinv_above(f: &SvdFactors, lambda: f64, floor: f64) -> Mat {
    let (m, n) = (f.u.nrows(), f.v.nrows());
    let mut out = Mat::zeros(n, m);
    for (i, &s) in f.d.iter().enumerate() {
        if s <= floor || s == 0.0 {
            continue;
        }
        let g = s / (s * s + lambda * lambda);
        out += f.v.column(i) * f.u.column(i).transpose() * g;
    }
    out
}

pub fn pinv(j: &Mat) -> Result<Mat> {
    Ok(damped_pinv(&svd(j)?, 0.0))
}

/// P = I − J†J.
pub fn null_projector(j: &Mat) -> Result<Mat> {
    let n = j.ncols();
    Ok(Mat::identity(n, n) - pinv(j)? * j)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMethod {
    /// Scaled transpose; `None` picks the step that minimises the linearised
    /// residual along Jᵀe.
    Transpose { alpha: Option<f64> },
    Pseudoinverse,
    Dls { lambda: f64 },
    DlsSvd { lambda: f64 },
    Sdls { gamma_max: f64 },
}

fn check_dims(j: &Mat, e: &Col) -> Result<()> {
    if j.nrows() != e.len() {
        return Err(invalid(format!(
            "Jacobian has {} rows but the task vector has {}",
            j.nrows(),
            e.len()
        )));
    }
    Ok(())
}

pub fn solve_step(j: &Mat, e: &Col, method: StepMethod) -> Result<Col> {
    check_dims(j, e)?;
    match method {
        StepMethod::Transpose { alpha } => {
            let jt_e = j.transpose() * e;
            let a = alpha.unwrap_or_else(|| {
                let jjt_e = j * &jt_e;
                let den = jjt_e.norm_squared();
                if den > 0.0 {
                    e.dot(&jjt_e) / den
                } else {
                    0.0
                }
            });
            Ok(jt_e * a)
        }
        StepMethod::Pseudoinverse => Ok(pinv(j)? * e),
        StepMethod::Dls { lambda } => {
            let m = j.nrows();
            let a = j * j.transpose() + Mat::identity(m, m) * (lambda * lambda);
            match a.lu().solve(e) {
                Some(y) if y.iter().all(|x| x.is_finite()) => Ok(j.transpose() * y),
                _ => Ok(pinv(j)? * e),
            }
        }
        StepMethod::DlsSvd { lambda } => Ok(damped_pinv(&svd(j)?, lambda) * e),
        StepMethod::Sdls { gamma_max } => sdls_step(j, e, gamma_max),
    }
}

/// Selectively damped step. Task rows are grouped into 3-row blocks when
/// the task dimension allows, otherwise treated one row at a time.
fn sdls_step(j: &Mat, e: &Col, gamma_max: f64) -> Result<Col> {
    let (m, n) = j.shape();
    let block = if m % 3 == 0 { 3 } else { 1 };
    let blocks = m / block;
    let f = svd(j)?;
    // ρ[ℓ][j]: magnitude of the ℓ-th block of column j
    let rho: Vec<Vec<f64>> = (0..blocks)
        .map(|l| (0..n).map(|c| j.view((l * block, c), (block, 1)).norm()).collect())
        .collect();
    let mut total = vec![0.0; n];
    for i in 0..f.rank {
        let s = f.d[i];
        let ui = f.u.column(i);
        let vi = f.v.column(i);
        let alpha = ui.dot(e);
        let big_n: f64 = (0..blocks).map(|l| ui.rows(l * block, block).norm()).sum();
        let big_m: f64 = (0..blocks)
            .map(|l| (0..n).map(|c| vi[c].abs() * rho[l][c]).sum::<f64>() / s)
            .sum();
        let gamma = if big_m > 0.0 { (big_n / big_m).min(1.0) } else { 1.0 } * gamma_max;
        let mut phi: Vec<f64> = vi.iter().map(|x| x * alpha / s).collect();
        clamp_max_abs(&mut phi, gamma);
        for (t, p) in total.iter_mut().zip(phi) {
            *t += p;
        }
    }
    clamp_max_abs(&mut total, gamma_max);
    Ok(Col::from_vec(total))
}

/// Adaptive damping from the smallest singular value and the task error.
pub fn maciejewski_damping(sigma_min: f64, e_norm: f64, b_max: f64) -> f64 {
    let d = e_norm / b_max;
    if sigma_min <= d / 2.0 {
        d / 2.0
    } else if sigma_min <= d {
        (sigma_min * (d - sigma_min)).sqrt()
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Damping {
    Constant(f64),
    Maciejewski { b_max: f64 },
}

impl Damping {
    pub fn lambda(&self, sigma_min: f64, e_norm: f64) -> f64 {
        match *self {
            Damping::Constant(l) => l,
            Damping::Maciejewski { b_max } => maciejewski_damping(sigma_min, e_norm, b_max),
        }
    }
}

impl Default for Damping {
    fn default() -> Self {
        Damping::Maciejewski { b_max: 1.0 }
    }
}

/// Damped step for a single task, damping chosen from J's spectrum.
pub fn dls_step(j: &Mat, e: &Col, damping: Damping) -> Result<Col> {
    check_dims(j, e)?;
    let f = svd(j)?;
    Ok(damped_pinv(&f, damping.lambda(f.sigma_min(), e.norm())) * e)
}

/// Damped step on a projected Jacobian. Singular values are cut relative to
/// the unprojected task's scale, so a projection that annihilates the task
/// yields no step instead of amplified round-off.
fn projected_dls_step(a: &Mat, e: &Col, damping: Damping, scale: f64) -> Result<Col> {
    let f = svd(a)?;
    let floor = RANK_CUTOFF * scale;
    let live = f.d.iter().filter(|&&s| s > floor).count();
    let sigma_min = if live < f.d.len() { 0.0 } else { f.sigma_min() };
    Ok(damped_pinv_above(&f, damping.lambda(sigma_min, e.norm()), floor) * e)
}

/// One level of a prioritised stack.
#[derive(Clone, Debug)]
pub struct PriorityTask {
    pub jacobian: Mat,
    pub error: Col,
    pub damping: Damping,
}

/// p-level recursion: each level acts inside the null space of all the
/// levels above it on what they left unsolved.
pub fn multi_priority_dls(tasks: &[PriorityTask]) -> Result<Col> {
    let n = tasks.first().map(|t| t.jacobian.ncols()).ok_or_else(|| invalid("no tasks"))?;
    let mut dtheta = Col::zeros(n);
    let mut stacked: Option<Mat> = None;
    for t in tasks {
        check_dims(&t.jacobian, &t.error)?;
        if t.jacobian.ncols() != n {
            return Err(invalid("task Jacobians disagree on the joint count"));
        }
        let resid = &t.error - &t.jacobian * &dtheta;
        dtheta += match &stacked {
            None => dls_step(&t.jacobian, &resid, t.damping)?,
            Some(s) => {
                let a = &t.jacobian * null_projector(s)?;
                projected_dls_step(&a, &resid, t.damping, t.jacobian.norm())?
            }
        };
        stacked = Some(match stacked {
            None => t.jacobian.clone(),
            Some(s) => {
                let top = s.nrows();
                let mut m = s.insert_rows(top, t.jacobian.nrows(), 0.0);
                m.rows_mut(top, t.jacobian.nrows()).copy_from(&t.jacobian);
                m
            }
        });
    }
    Ok(dtheta)
}

pub fn two_priority_dls(j1: &Mat, e1: &Col, j2: &Mat, e2: &Col, d1: Damping, d2: Damping) -> Result<Col> {
    multi_priority_dls(&[
        PriorityTask {
            jacobian: j1.clone(),
            error: e1.clone(),
            damping: d1,
        },
        PriorityTask {
            jacobian: j2.clone(),
            error: e2.clone(),
            damping: d2,
        },
    ])
}

/// J†e + P·z.
pub fn pinv_with_secondary(j: &Mat, e: &Col, z: &Col) -> Result<Col> {
    check_dims(j, e)?;
    Ok(pinv(j)? * e + null_projector(j)? * z)
}

/// Undamped secondary step with z = (J₂P)†(e₂ − J₂J₁†e₁).
pub fn projected_secondary(j1: &Mat, e1: &Col, j2: &Mat, e2: &Col) -> Result<Col> {
    check_dims(j2, e2)?;
    let primary = pinv(j1)? * e1;
    let p = null_projector(j1)?;
    let z = pinv(&(j2 * &p))? * (e2 - j2 * &primary);
    pinv_with_secondary(j1, e1, &z)
}

/// How the posture term enters a two-task step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondaryRule {
    #[default]
    DampedPriority,
    ProjectedPinv,
}

/// Inversion used by each iteration.
#[derive(Clone, Debug, PartialEq)]
pub enum Inverse {
    Step(StepMethod),
    Damped(Damping),
    /// Primary task plus a joint-space posture goal. J₂ is the identity with
    /// masked-out rows zeroed; e₂ = J₂(posture − θ).
    Posture {
        primary: Damping,
        secondary: Damping,
        posture: Vec<f64>,
        mask: Vec<bool>,
        rule: SecondaryRule,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IterativeConfig {
    pub max_iterations: usize,
    pub error_tolerance: f64,
    pub d_max: f64,
    pub enforce_limits: bool,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        IterativeConfig {
            max_iterations: 100,
            error_tolerance: 1e-6,
            d_max: 1.0,
            enforce_limits: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterTrace {
    pub iterations: usize,
    /// ‖e‖ after clamping, one entry per tested state.
    pub errors: Vec<f64>,
    pub best_error: f64,
}

fn step_for(j: &Mat, e: &Col, inverse: &Inverse, theta: &[f64]) -> Result<Col> {
    match inverse {
        Inverse::Step(m) => solve_step(j, e, *m),
        Inverse::Damped(d) => dls_step(j, e, *d),
        Inverse::Posture {
            primary,
            secondary,
            posture,
            mask,
            rule,
        } => {
            let n = theta.len();
            if posture.len() != n || mask.len() != n {
                return Err(invalid("posture goal length differs from the joint count"));
            }
            let j2 = Mat::from_fn(n, n, |r, c| if r == c && mask[r] { 1.0 } else { 0.0 });
            let e2 = Col::from_fn(n, |r, _| if mask[r] { posture[r] - theta[r] } else { 0.0 });
            match rule {
                SecondaryRule::DampedPriority => two_priority_dls(j, e, &j2, &e2, *primary, *secondary),
                SecondaryRule::ProjectedPinv => projected_secondary(j, e, &j2, &e2),
            }
        }
    }
}

/// Iterates steps from `theta0`, tracking the best cumulative state by
/// clamped task error, and returns it.
pub fn iterative_solve<C: KinematicChain + ?Sized>(
    chain: &C,
    theta0: &[f64],
    task: &JacobianTask,
    inverse: &Inverse,
    cfg: &IterativeConfig,
) -> Result<(Vec<f64>, IterTrace)> {
    if theta0.len() != chain.n_joints() {
        return Err(invalid("initial angles do not match the chain"));
    }
    let mut theta = theta0.to_vec();
    let mut best = theta.clone();
    let mut trace = IterTrace {
        best_error: f64::MAX,
        ..IterTrace::default()
    };
    let mut frames = chain.frames(&theta)?;
    for it in 1..=cfg.max_iterations {
        trace.iterations = it;
        let mut e: Vec<f64> = task.error(&frames).iter().copied().collect();
        clamp_mag(&mut e, cfg.d_max);
        let e = Col::from_vec(e);
        let norm = e.norm();
        trace.errors.push(norm);
        if norm <= trace.best_error {
            trace.best_error = norm;
            best.clone_from(&theta);
        }
        if norm <= cfg.error_tolerance {
            break;
        }
        let j = jacobian_from_frames(&frames, task);
        let step = step_for(&j, &e, inverse, &theta)?;
        for (t, s) in theta.iter_mut().zip(step.iter()) {
            *t += s;
        }
        if cfg.enforce_limits {
            chain.clamp(&mut theta);
        }
        frames = chain.frames(&theta)?;
    }
    Ok((best, trace))
}

/// Joint-space posture mask: twisting root and end-point are left free.
pub fn posture_mask(skel: &Skeleton) -> Vec<bool> {
    let n = skel.n_dofs();
    skel.links
        .iter()
        .enumerate()
        .map(|(k, l)| !((k == 0 || k + 1 == n) && l.is_twister))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DlsConfig {
    pub iterative: IterativeConfig,
    pub b_max: f64,
    pub use_posture: bool,
}

impl Default for DlsConfig {
    fn default() -> Self {
        DlsConfig {
            iterative: IterativeConfig::default(),
            b_max: 1.0,
            use_posture: true,
        }
    }
}

impl DlsConfig {
    pub fn with_iterations(max_iterations: usize, use_posture: bool) -> Self {
        let mut c = DlsConfig::default();
        c.iterative.max_iterations = max_iterations;
        c.use_posture = use_posture;
        c
    }
}

/// Orientation-priority DLS with Maciejewski damping, optionally with the
/// posture goal in the primary task's null space. Starts from zero angles.
pub fn solve_dls(skel: &Skeleton, tau: Quat, psi: &Pose, cfg: &DlsConfig) -> Result<(Pose, IterTrace)> {
    let damping = Damping::Maciejewski { b_max: cfg.b_max };
    let inverse = if cfg.use_posture {
        Inverse::Posture {
            primary: damping,
            secondary: damping,
            posture: psi.angles(),
            mask: posture_mask(skel),
            rule: SecondaryRule::DampedPriority,
        }
    } else {
        Inverse::Damped(damping)
    };
    let zero = vec![0.0; skel.n_dofs()];
    let (theta, trace) = iterative_solve(skel, &zero, &JacobianTask::Orientation(tau), &inverse, &cfg.iterative)?;
    Ok((Pose::from_angles(skel, &theta)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::catalog;
    use nalgebra::Vector4;

    fn mat(rows: usize, cols: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(rows, cols, v)
    }

    #[test]
    fn single_revolute_translation_column() {
        let chain = DhChain {
            links: vec![DhLink::new(0.0, 0.0, 2.0, 0.0)],
            limits: None,
        };
        let j = assemble_jacobian(&chain, &[0.0], &JacobianTask::Position(Vec3::ZERO)).unwrap();
        assert!((j.column(0) - Col::from_vec(vec![0.0, 2.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn rotation_columns_are_world_axes() {
        let skel = catalog('E').unwrap();
        let th = [0.2, -0.4, 0.7, 0.1, -0.3];
        let p = Pose::from_angles(&skel, &th).unwrap();
        let j = assemble_jacobian(&skel, &th, &JacobianTask::Orientation(Quat::IDENTITY)).unwrap();
        for k in 0..5 {
            let a = p.joints[k].basis.rotate(skel.links[k].rotation_axis);
            assert!((j.column(k) - vec3_col(a)).norm() < 1e-12);
        }
    }

    #[test]
    fn planar_dh_link() {
        let l = [DhLink::new(0.0, 0.0, 3.0, 0.0)];
        let t = dh_forward(&l, &[0.6]).unwrap();
        assert!((column3(&t[0], 3) - Vec3::new(3.0 * 0.6f64.cos(), 3.0 * 0.6f64.sin(), 0.0)).norm() < 1e-12);
        let z = dh_forward(&[DhLink::new(0.0, 0.0, 0.0, 0.0); 3], &[0.0; 3]).unwrap();
        assert!(z.iter().all(|m| *m == Matrix4::identity()));
        assert!(dh_forward(&[], &[]).is_err());
    }

    #[test]
    fn skeleton_c_dh_reach() {
        let rows = skeleton_c_dh();
        let t = dh_forward(&rows, &[0.0; 5]).unwrap();
        // direct composition of the five homogeneous transforms
        let mut ee = Vector4::new(0.0, 0.0, 0.0, 1.0);
        for l in rows.iter().rev() {
            ee = l.transform(0.0) * ee;
        }
        let p = column3(&t[4], 3);
        assert!((p - Vec3::new(ee.x, ee.y, ee.z)).norm() < 1e-12);
        assert!((p.norm() - 110.0).abs() < 1e-9);
    }

    #[test]
    fn svd_examples() {
        let d = mat(3, 3, &[0.0, 0.0, 0.0, 0.0, -5.0, 0.0, 0.0, 0.0, 2.0]);
        let f = svd(&d).unwrap();
        assert_eq!(f.d, vec![5.0, 2.0, 0.0]);
        assert_eq!(f.rank, 2);
        let outer = Col::from_vec(vec![1.0, 2.0]) * Col::from_vec(vec![3.0, -1.0, 0.5]).transpose();
        let f = svd(&outer).unwrap();
        assert_eq!(f.rank, 1);
        assert!((f.reconstruct() - &outer).norm() < 1e-12);
        let wide = mat(2, 4, &[1.0, 2.0, 0.0, -1.0, 0.5, 0.0, 3.0, 1.0]);
        let f = svd(&wide).unwrap();
        assert!((f.reconstruct() - &wide).norm() < 1e-12);
        assert!((f.u.transpose() * &f.u - Mat::identity(2, 2)).norm() < 1e-12);
        assert!((f.v.transpose() * &f.v - Mat::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn zero_error_gives_zero_step() {
        let j = mat(3, 4, &[1.0, 0.2, 0.0, 0.5, 0.0, 1.0, 0.3, 0.0, 0.4, 0.0, 1.0, 0.1]);
        let e = Col::zeros(3);
        for m in [
            StepMethod::Transpose { alpha: None },
            StepMethod::Transpose { alpha: Some(0.5) },
            StepMethod::Pseudoinverse,
            StepMethod::Dls { lambda: 0.3 },
            StepMethod::DlsSvd { lambda: 0.3 },
            StepMethod::Sdls { gamma_max: 0.785 },
        ] {
            assert_eq!(solve_step(&j, &e, m).unwrap().norm(), 0.0);
        }
        assert!(solve_step(&j, &Col::zeros(2), StepMethod::Pseudoinverse).is_err());
    }

    #[test]
    fn undamped_dls_inverts_square_system() {
        let j = mat(3, 3, &[2.0, 1.0, 0.0, 0.0, 1.0, -1.0, 1.0, 0.0, 3.0]);
        let e = Col::from_vec(vec![1.0, -2.0, 0.5]);
        let want = j.clone().try_inverse().unwrap() * &e;
        for m in [StepMethod::Dls { lambda: 0.0 }, StepMethod::DlsSvd { lambda: 0.0 }, StepMethod::Pseudoinverse] {
            assert!((solve_step(&j, &e, m).unwrap() - &want).norm() < 1e-8);
        }
    }

    #[test]
    fn maciejewski_branches() {
        assert_eq!(maciejewski_damping(1.0, 0.5, 1.0), 0.0);
        assert_eq!(maciejewski_damping(0.1, 0.5, 1.0), 0.25);
        let d = 0.8;
        let s = 0.75 * d;
        assert_eq!(maciejewski_damping(s, d, 1.0), (s * (d - s)).sqrt());
    }

    #[test]
    fn secondary_vanishes_for_square_primary() {
        let j1 = mat(3, 3, &[2.0, 1.0, 0.0, 0.0, 1.0, -1.0, 1.0, 0.0, 3.0]);
        let e1 = Col::from_vec(vec![0.1, 0.2, -0.1]);
        let j2 = Mat::identity(3, 3);
        let e2 = Col::from_vec(vec![1.0, -1.0, 2.0]);
        let d = Damping::Constant(0.0);
        let a = two_priority_dls(&j1, &e1, &j2, &e2, d, d).unwrap();
        let b = dls_step(&j1, &e1, d).unwrap();
        assert!((a - b).norm() < 1e-9);
        let a = two_priority_dls(&j1, &e1, &j2, &Col::zeros(3), Damping::Constant(0.2), d).unwrap();
        let b = dls_step(&j1, &e1, Damping::Constant(0.2)).unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn fixed_target_returns_start() {
        let skel = catalog('C').unwrap();
        let th = [0.3, 0.2, -0.5, 0.4, 0.1];
        let tau = Pose::from_angles(&skel, &th).unwrap().ee().omega;
        let inv = Inverse::Damped(Damping::default());
        let (out, trace) =
            iterative_solve(&skel, &th, &JacobianTask::Orientation(tau), &inv, &IterativeConfig::default()).unwrap();
        assert_eq!(out, th.to_vec());
        assert_eq!(trace.iterations, 1);
    }

    #[test]
    fn planar_two_link_reach() {
        let chain = DhChain {
            links: vec![DhLink::new(0.0, 0.0, 1.0, 0.0), DhLink::new(0.0, 0.0, 1.0, 0.0)],
            limits: None,
        };
        // a reachable point, solved by the law of cosines for the oracle
        let (x, y): (f64, f64) = (1.2, 0.7);
        let c2 = (x * x + y * y - 2.0) / 2.0;
        assert!(c2.abs() < 1.0);
        let cfg = IterativeConfig {
            error_tolerance: 1e-8,
            ..IterativeConfig::default()
        };
        let (th, trace) = iterative_solve(
            &chain,
            &[0.3, 0.5],
            &JacobianTask::PositionXy(x, y),
            &Inverse::Step(StepMethod::Pseudoinverse),
            &cfg,
        )
        .unwrap();
        assert!(trace.iterations < 100);
        assert!((th[1].cos() - c2).abs() < 1e-6);
        let f = chain.frames(&th).unwrap();
        assert!((f.ee_pos.x - x).abs() < 1e-6 && (f.ee_pos.y - y).abs() < 1e-6);
    }

    #[test]
    fn dls_on_skeleton_c_respects_limits_and_reduces_error() {
        let skel = catalog('C').unwrap();
        let psi = Pose::from_angles(&skel, &[0.0, 0.4, 0.6, -0.3, 0.0]).unwrap();
        let tau = Pose::from_angles(&skel, &[0.5, -0.7, 0.9, 1.0, 0.2]).unwrap().ee().omega;
        for posture in [true, false] {
            let (p, trace) = solve_dls(&skel, tau, &psi, &DlsConfig::with_iterations(100, posture)).unwrap();
            assert!(p.within_limits(&skel));
            assert!(trace.best_error <= trace.errors[0]);
            assert!(trace.best_error < trace.errors[0] / 2.0);
            if !posture {
                assert!(trace.best_error < 1e-6);
            }
        }
    }
}
