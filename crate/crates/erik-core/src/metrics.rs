//! Orientation and posture error measures and their weighted combination.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geom::{Quat, Vec3};
use crate::skeleton::{Pose, Skeleton};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErrorWeights {
    pub orientation_weight: f64,
    pub posture_weight: f64,
    pub threshold: f64,
    pub aggravation: f64,
}

impl Default for ErrorWeights {
    fn default() -> Self {
        ErrorWeights {
            orientation_weight: 1.0,
            posture_weight: 0.2,
            threshold: 0.04,
            aggravation: 1.0,
        }
    }
}

impl ErrorWeights {
    pub fn validate(&self) -> Result<()> {
        if self.orientation_weight < 0.0 || self.posture_weight < 0.0 {
            return Err(invalid("error weights must be non-negative"));
        }
        if self.orientation_weight == 0.0 && self.posture_weight == 0.0 {
            return Err(invalid("error weights must not both be zero"));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(invalid("threshold must lie in (0, 1]"));
        }
        if !(self.aggravation >= 1.0) {
            return Err(invalid("aggravation must be at least 1"));
        }
        Ok(())
    }
}

fn quat_distance(tau: Quat, omega: Quat) -> f64 {
    tau.distance(omega).min(tau.distance(-omega)) / std::f64::consts::SQRT_2
}

/// Distance between end-point and target orientations in [0, 1]. With
/// `symmetric_ee` the end-point flipped half a turn about its own Ŷ counts
/// as equivalent.
pub fn orientation_error(ee_omega: Quat, tau: Quat, symmetric_ee: bool) -> f64 {
    let z = quat_distance(tau, ee_omega);
    if symmetric_ee {
        let flipped = Quat::from_axis_angle(ee_omega.y_axis(), std::f64::consts::PI) * ee_omega;
        z.min(quat_distance(tau, flipped))
    } else {
        z
    }
}

fn segment_dir(p: &Pose, k: usize) -> Vec3 {
    (p.pos(k + 1) - p.pos(k))
        .try_normalized(1e-12)
        .unwrap_or(p.joints[k].dir)
}

/// Shape difference between a solution and a posture, weighted towards the
/// end-point and normalised to [0, 1].
pub fn posture_error(theta: &Pose, psi: &Pose, skel: &Skeleton, aggravation: f64) -> Result<f64> {
    let n = skel.n_dofs();
    if theta.joints.len() != n || psi.joints.len() != n {
        return Err(invalid("chain length mismatch in posture error"));
    }
    let norm = skel.posture_norm(aggravation);
    if norm == 0.0 {
        return Ok(0.0);
    }
    let root = skel.links[0].segment_dir();
    let (mut s, mut t) = (root, root);
    let mut sum = 0.0;
    for (k, link) in skel.links.iter().enumerate() {
        if link.is_twister {
            continue;
        }
        let u = segment_dir(theta, k);
        let v = segment_dir(psi, k);
        let d_su = 1.0 - (1.0 + s.dot(u)) / 2.0;
        let d_tv = 1.0 - (1.0 + t.dot(v)) / 2.0;
        sum += aggravation.powi(link.index as i32) * (d_tv - d_su).abs();
        s = u;
        t = v;
    }
    Ok(sum / norm)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorBreakdown {
    pub combined: f64,
    pub orientation: f64,
    pub posture: f64,
}

pub fn error_breakdown(
    theta: &Pose,
    tau: Quat,
    psi: &Pose,
    skel: &Skeleton,
    weights: &ErrorWeights,
    symmetric_ee: bool,
) -> Result<ErrorBreakdown> {
    let orientation = orientation_error(theta.ee().omega, tau, symmetric_ee);
    let posture = posture_error(theta, psi, skel, weights.aggravation)?;
    Ok(ErrorBreakdown {
        combined: weights.orientation_weight * orientation + weights.posture_weight * posture,
        orientation,
        posture,
    })
}

pub fn combined_error(
    theta: &Pose,
    tau: Quat,
    psi: &Pose,
    skel: &Skeleton,
    weights: &ErrorWeights,
    symmetric_ee: bool,
) -> Result<f64> {
    error_breakdown(theta, tau, psi, skel, weights, symmetric_ee).map(|e| e.combined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::LinkSpec;
    use std::f64::consts::PI;

    #[test]
    fn orientation_double_cover() {
        let q = Quat::from_axis_angle(Vec3::new(1.0, 2.0, 0.5), 0.8);
        assert_eq!(orientation_error(q, q, false), 0.0);
        assert!(orientation_error(-q, q, false) < 1e-15);
    }

    #[test]
    fn symmetric_flip_is_free() {
        let tau = Quat::from_axis_angle(Vec3::new(1.0, 0.0, 0.5), 0.8);
        let omega = Quat::from_axis_angle(tau.y_axis(), PI) * tau;
        assert!(orientation_error(omega, tau, false) > 0.5);
        assert!(orientation_error(omega, tau, true) < 1e-12);
    }

    #[test]
    fn posture_error_zero_for_identical_and_all_twisters() {
        let spec = LinkSpec {
            segment: Vec3::Y,
            rotation_axis: Vec3::Y,
            min_theta: -PI,
            max_theta: PI,
        };
        let skel = Skeleton::new("t", &[spec.clone(), spec]).unwrap();
        let a = Pose::from_angles(&skel, &[0.3, 0.2]).unwrap();
        let b = Pose::zero(&skel);
        assert_eq!(posture_error(&a, &b, &skel, 1.0).unwrap(), 0.0);
    }
}
