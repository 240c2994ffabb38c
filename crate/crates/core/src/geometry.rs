//! Joint geometry and the kinematic maps between task, joint and tendon space.
//!
//! Orientation is parameterised by roll `phi` and pitch `theta` with yaw fixed
//! at zero, composed as `R = Ry(theta) * Rx(phi)`. The manipulator points
//! along `-z` at rest, so the end effector sits at `R * (0, 0, -l_m)`.
//!
//! Tendon coordinates `q_i` are residual lengths: a channel shortens its `q`
//! by contracting, so `q_i = 2 q_t - contraction_i`. With the closed forms used
//! here the `phi`-labelled pair acts along the projected `x'` axis (pitch) and
//! the `theta`-labelled pair along `y'` (roll).

use std::f64::consts::FRAC_PI_2;
use std::ops::{Index, IndexMut};

use nalgebra::{Matrix3, Matrix4x2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pitch magnitude above which Euler extraction is flagged as near gimbal lock.
pub const GIMBAL_WARNING_RAD: f64 = 85.0 * std::f64::consts::PI / 180.0;

/// Central finite-difference step for [`tendon_jacobian`].
pub const JACOBIAN_STEP_RAD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    /// Ball radius (mm).
    pub r_s_mm: f64,
    /// Radial distance from the joint centre to the tendon attachment (mm).
    pub r_t_mm: f64,
    /// Half of the maximum actuator displacement (mm).
    pub q_t_mm: f64,
    /// Manipulator length (mm).
    pub l_m_mm: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            r_s_mm: 4.0,
            r_t_mm: 5.0,
            q_t_mm: 3.75,
            l_m_mm: 100.0,
        }
    }
}

impl GeometryParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.r_s_mm, self.r_t_mm, self.q_t_mm, self.l_m_mm];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::domain("geometry parameters must be finite and positive"));
        }
        if self.q_t_mm > self.r_t_mm {
            return Err(Error::domain("q_t must not exceed r_t"));
        }
        if self.l_m_mm <= self.r_t_mm {
            return Err(Error::domain("manipulator length must exceed r_t"));
        }
        Ok(())
    }

    /// Ratio that maps task-space x/y onto the attachment projection.
    pub fn projection_scale(&self) -> f64 {
        self.r_t_mm / self.l_m_mm
    }
}

/// Tendon channel, in the canonical vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Phi1 = 0,
    Phi2 = 1,
    Theta1 = 2,
    Theta2 = 3,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Phi1, Channel::Phi2, Channel::Theta1, Channel::Theta2];

    /// The channel pulling against this one.
    pub fn antagonist(self) -> Channel {
        match self {
            Channel::Phi1 => Channel::Phi2,
            Channel::Phi2 => Channel::Phi1,
            Channel::Theta1 => Channel::Theta2,
            Channel::Theta2 => Channel::Theta1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Channel::Phi1 => "phi1",
            Channel::Phi2 => "phi2",
            Channel::Theta1 => "theta1",
            Channel::Theta2 => "theta2",
        }
    }
}

/// Four tendon-space coordinates (mm), ordered (phi1, phi2, theta1, theta2).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TendonVector(pub [f64; 4]);

impl TendonVector {
    pub fn splat(v: f64) -> Self {
        Self([v; 4])
    }

    pub fn as_array(&self) -> &[f64; 4] {
        &self.0
    }
}

impl Index<Channel> for TendonVector {
    type Output = f64;
    fn index(&self, c: Channel) -> &f64 {
        &self.0[c as usize]
    }
}

impl IndexMut<Channel> for TendonVector {
    fn index_mut(&mut self, c: Channel) -> &mut f64 {
        &mut self.0[c as usize]
    }
}

impl std::ops::Sub for TendonVector {
    type Output = TendonVector;
    fn sub(self, rhs: Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i] - rhs.0[i]))
    }
}

/// Output of the task-to-tendon map together with its saturation flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TendonMapping {
    pub q: TendonVector,
    /// Set when the projected point lay outside the reachable disc and was
    /// pulled back onto its boundary.
    pub saturated: bool,
}

/// Manipulator orientation. Yaw is identically zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointPose {
    rotation: Matrix3<f64>,
    phi: f64,
    theta: f64,
}

impl JointPose {
    pub fn rest() -> Self {
        Self {
            rotation: Matrix3::identity(),
            phi: 0.0,
            theta: 0.0,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// Builds `Ry(theta) * Rx(phi)`.
pub fn rotation_from_euler(phi: f64, theta: f64) -> Result<JointPose> {
    if !(phi.abs() < FRAC_PI_2 && theta.abs() < FRAC_PI_2) {
        return Err(Error::domain(format!(
            "euler angles (phi = {phi}, theta = {theta}) outside (-pi/2, pi/2)"
        )));
    }
    Ok(JointPose {
        rotation: rotation_matrix(phi, theta),
        phi,
        theta,
    })
}

fn rotation_matrix(phi: f64, theta: f64) -> Matrix3<f64> {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    Matrix3::new(
        ct, st * sp, st * cp, //
        0.0, cp, -sp, //
        -st, ct * sp, ct * cp,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub phi: f64,
    pub theta: f64,
    /// `|theta|` exceeds [`GIMBAL_WARNING_RAD`]; roll is poorly conditioned.
    pub near_gimbal: bool,
}

pub fn euler_from_rotation(r: &Matrix3<f64>) -> EulerAngles {
    let (r31, r32, r33) = (r[(2, 0)], r[(2, 1)], r[(2, 2)]);
    let phi = r32.atan2(r33);
    let theta = (-r31).atan2((r32 * r32 + r33 * r33).sqrt());
    EulerAngles {
        phi,
        theta,
        near_gimbal: theta.abs() > GIMBAL_WARNING_RAD,
    }
}

/// `R * (0, 0, -l_m)`.
pub fn end_effector_position(pose: &JointPose, l_m: f64) -> Vector3<f64> {
    pose.rotation * Vector3::new(0.0, 0.0, -l_m)
}

/// x/y components of the tendon attachment point `R * (0, 0, -r_t)`.
pub fn attachment_projection(pose: &JointPose, r_t: f64) -> (f64, f64) {
    let p = pose.rotation * Vector3::new(0.0, 0.0, -r_t);
    (p.x, p.y)
}

/// Same as [`attachment_projection`] without building a pose; valid for any angles.
pub fn projection_from_angles(phi: f64, theta: f64, r_t: f64) -> (f64, f64) {
    let (sp, cp) = phi.sin_cos();
    (-r_t * theta.sin() * cp, r_t * sp)
}

/// The four closed forms without any reachability clamp.
pub fn tendon_lengths(x: f64, y: f64, q_t: f64) -> TendonVector {
    TendonVector([
        (q_t - x).hypot(y),
        (q_t + x).hypot(y),
        x.hypot(q_t - y),
        x.hypot(q_t + y),
    ])
}

/// Maps a projected attachment point to tendon space, clamping points outside
/// the reachable disc `x^2 + y^2 <= q_t^2` onto its boundary.
pub fn task_to_tendon(x: f64, y: f64, q_t: f64) -> TendonMapping {
    let r2 = x * x + y * y;
    if r2 > q_t * q_t {
        let s = q_t / r2.sqrt();
        TendonMapping {
            q: tendon_lengths(x * s, y * s, q_t),
            saturated: true,
        }
    } else {
        TendonMapping {
            q: tendon_lengths(x, y, q_t),
            saturated: false,
        }
    }
}

/// Maps a task-space point on (or near) the sphere of radius `l_m` to tendon space.
pub fn tendon_reference(x_r: &Vector3<f64>, params: &GeometryParams) -> Result<TendonMapping> {
    let norm = x_r.norm();
    if !norm.is_finite() || (norm - params.l_m_mm).abs() > 0.01 * params.l_m_mm {
        return Err(Error::domain(format!(
            "task point at radius {norm} mm is off the {} mm sphere",
            params.l_m_mm
        )));
    }
    let s = params.projection_scale();
    Ok(task_to_tendon(x_r.x * s, x_r.y * s, params.q_t_mm))
}

/// Tendon coordinates of the unclamped geometry at the given joint angles.
pub fn tendons_at(phi: f64, theta: f64, params: &GeometryParams) -> TendonVector {
    let (x, y) = projection_from_angles(phi, theta, params.r_t_mm);
    tendon_lengths(x, y, params.q_t_mm)
}

/// `dq_i / d(phi, theta)` (mm/rad) by central differences.
pub fn tendon_jacobian(phi: f64, theta: f64, params: &GeometryParams) -> Matrix4x2<f64> {
    tendon_jacobian_with_step(phi, theta, params, JACOBIAN_STEP_RAD)
}

pub fn tendon_jacobian_with_step(
    phi: f64,
    theta: f64,
    params: &GeometryParams,
    h: f64,
) -> Matrix4x2<f64> {
    let dphi = tendons_at(phi + h, theta, params) - tendons_at(phi - h, theta, params);
    let dtheta = tendons_at(phi, theta + h, params) - tendons_at(phi, theta - h, params);
    let mut j = Matrix4x2::zeros();
    for i in 0..4 {
        j[(i, 0)] = dphi.0[i] / (2.0 * h);
        j[(i, 1)] = dtheta.0[i] / (2.0 * h);
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn identity_at_zero() {
        let pose = rotation_from_euler(0.0, 0.0).unwrap();
        assert_eq!(*pose.rotation(), Matrix3::identity());
    }

    #[test]
    fn pure_roll_entries() {
        let pose = rotation_from_euler(PI / 6.0, 0.0).unwrap();
        assert_abs_diff_eq!(pose.rotation()[(2, 1)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pose.rotation()[(2, 2)], 0.8660254037844386, epsilon = 1e-15);
        let e = euler_from_rotation(pose.rotation());
        assert_abs_diff_eq!(e.phi, PI / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.theta, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn round_trip_example() {
        let pose = rotation_from_euler(0.3, -0.2).unwrap();
        let e = euler_from_rotation(pose.rotation());
        assert_abs_diff_eq!(e.phi, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(e.theta, -0.2, epsilon = 1e-12);
        assert!(!e.near_gimbal);
    }

    #[test]
    fn out_of_range_angles_rejected() {
        assert!(rotation_from_euler(FRAC_PI_2, 0.0).is_err());
        assert!(rotation_from_euler(0.0, -2.0).is_err());
        assert!(rotation_from_euler(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn gimbal_flag() {
        let pose = rotation_from_euler(0.1, 86f64.to_radians()).unwrap();
        assert!(euler_from_rotation(pose.rotation()).near_gimbal);
    }

    #[test]
    fn end_effector_examples() {
        let p = end_effector_position(&JointPose::rest(), 100.0);
        assert_eq!(p, Vector3::new(0.0, 0.0, -100.0));
        // Rx(90 deg) is outside the open Euler domain, so build it directly.
        let quarter = JointPose {
            rotation: rotation_matrix(FRAC_PI_2, 0.0),
            phi: FRAC_PI_2,
            theta: 0.0,
        };
        let p = end_effector_position(&quarter, 100.0);
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, 0.0, epsilon = 1e-12);
        let p = end_effector_position(&rotation_from_euler(0.2, 0.1).unwrap(), 100.0);
        assert_abs_diff_eq!(p.norm(), 100.0, epsilon = 1e-9);
    }

    #[test]
    fn projection_of_pure_pitch() {
        // x' = -r_t sin(theta); pitching by -asin(0.75) reaches x' = q_t.
        let theta = -(0.75f64).asin();
        let pose = rotation_from_euler(0.0, theta).unwrap();
        let (x, y) = attachment_projection(&pose, 5.0);
        assert_abs_diff_eq!(x, 3.75, epsilon = 1e-12);
        assert_abs_diff_eq!(y, 0.0, epsilon = 1e-12);
        assert_eq!(attachment_projection(&JointPose::rest(), 5.0), (0.0, -0.0));
    }

    #[test]
    fn projection_paths_agree() {
        let pose = rotation_from_euler(0.4, -0.7).unwrap();
        let (a, b) = attachment_projection(&pose, 5.0);
        let (c, d) = projection_from_angles(0.4, -0.7, 5.0);
        assert_abs_diff_eq!(a, c, epsilon = 1e-15);
        assert_abs_diff_eq!(b, d, epsilon = 1e-15);
    }

    #[test]
    fn task_to_tendon_center_is_exact() {
        let m = task_to_tendon(0.0, 0.0, 3.75);
        assert_eq!(m.q, TendonVector::splat(3.75));
        assert!(!m.saturated);
    }

    #[test]
    fn task_to_tendon_corners() {
        // Hand evaluation: sqrt(3.75^2 + 3.75^2) = 3.75 * sqrt(2) = 5.303300858899107
        let d = 3.75 * 2f64.sqrt();
        let m = task_to_tendon(3.75, 0.0, 3.75);
        let expect = [0.0, 7.5, d, d];
        for (got, want) in m.q.0.iter().zip(expect) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
        let m = task_to_tendon(0.0, -3.75, 3.75);
        let expect = [d, d, 7.5, 0.0];
        for (got, want) in m.q.0.iter().zip(expect) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
        assert!(!m.saturated);
    }

    #[test]
    fn task_to_tendon_clamps_outside_disc() {
        let m = task_to_tendon(6.0, 8.0, 3.75);
        assert!(m.saturated);
        let on_edge = task_to_tendon(0.6 * 3.75, 0.8 * 3.75, 3.75);
        for i in 0..4 {
            assert_abs_diff_eq!(m.q.0[i], on_edge.q.0[i], epsilon = 1e-12);
            assert!(m.q.0[i] >= 0.0 && m.q.0[i] <= 7.5 + 1e-12);
        }
    }

    #[test]
    fn tendon_reference_examples() {
        let g = GeometryParams::default();
        let m = tendon_reference(&Vector3::new(0.0, 0.0, -100.0), &g).unwrap();
        assert_eq!(m.q, TendonVector::splat(3.75));

        let z = -(100.0f64 * 100.0 - 60.0 * 60.0).sqrt();
        let m = tendon_reference(&Vector3::new(60.0, 0.0, z), &g).unwrap();
        let direct = task_to_tendon(3.0, 0.0, 3.75);
        for i in 0..4 {
            assert_abs_diff_eq!(m.q.0[i], direct.q.0[i], epsilon = 1e-12);
        }

        let pose = rotation_from_euler(0.25, -0.15).unwrap();
        let x = end_effector_position(&pose, g.l_m_mm);
        let (px, py) = attachment_projection(&pose, g.r_t_mm);
        let a = tendon_reference(&x, &g).unwrap();
        let b = task_to_tendon(px, py, g.q_t_mm);
        for i in 0..4 {
            assert_abs_diff_eq!(a.q.0[i], b.q.0[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn tendon_reference_rejects_off_sphere() {
        let g = GeometryParams::default();
        assert!(tendon_reference(&Vector3::new(0.0, 0.0, -102.0), &g).is_err());
        assert!(tendon_reference(&Vector3::new(0.0, 0.0, -100.9), &g).is_ok());
    }

    #[test]
    fn jacobian_symmetry_at_center() {
        let g = GeometryParams::default();
        let j = tendon_jacobian(0.0, 0.0, &g);
        // The theta-pair moves with roll, the phi-pair with pitch.
        assert_abs_diff_eq!(j[(0, 1)], -j[(1, 1)], epsilon = 1e-6);
        assert_abs_diff_eq!(j[(2, 0)], -j[(3, 0)], epsilon = 1e-6);
        assert!(j[(0, 1)].abs() > 1.0);
        assert_abs_diff_eq!(j[(0, 0)], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(j[(2, 1)], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn jacobian_step_refinement() {
        let g = GeometryParams::default();
        for &(phi, theta) in &[(0.2, -0.3), (-0.4, 0.1), (0.05, 0.6)] {
            let a = tendon_jacobian_with_step(phi, theta, &g, 1e-6);
            let b = tendon_jacobian_with_step(phi, theta, &g, 1e-7);
            for i in 0..4 {
                for k in 0..2 {
                    let scale = a[(i, k)].abs().max(1e-3);
                    assert!(((a[(i, k)] - b[(i, k)]) / scale).abs() < 1e-4);
                    assert!(a[(i, k)].is_finite());
                }
            }
        }
    }

    #[test]
    fn geometry_validation() {
        assert!(GeometryParams::default().validate().is_ok());
        let bad = GeometryParams {
            q_t_mm: 6.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = GeometryParams {
            l_m_mm: 4.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
