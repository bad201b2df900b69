//! Yaw/pitch/roll conventions.
//!
//! Rotations are composed intrinsically as `R = Ry(yaw) * Rx(pitch) * Rz(roll)`,
//! with y the vertical image axis (pointing down), x to the right and z along
//! the optical axis. `R` maps head-frame coordinates into the camera frame.

use nalgebra::{Matrix3, Rotation3, Vector3};

use super::PoseError;

/// Distance from ±π/2 pitch at which yaw and roll are reported as non-unique.
pub const GIMBAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    /// Set when pitch is at ±π/2; roll is then fixed at zero.
    pub gimbal_lock: bool,
}

pub fn rotation_from_euler(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw);
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), pitch);
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), roll);
    (ry * rx * rz).into_inner()
}

pub fn euler_from_rotation(r: &Matrix3<f64>) -> Result<EulerAngles, PoseError> {
    let orth_err = (r.transpose() * r - Matrix3::identity()).amax();
    let det = r.determinant();
    if !(orth_err <= 1e-6 && (det - 1.0).abs() <= 1e-6) {
        return Err(PoseError::NotARotation);
    }
    // R[1][2] = -sin(pitch); R[1][0], R[1][1] = cos(pitch)·(sin, cos)(roll)
    let cos_pitch = r[(1, 0)].hypot(r[(1, 1)]);
    let pitch = (-r[(1, 2)]).atan2(cos_pitch);
    if (pitch.abs() - std::f64::consts::FRAC_PI_2).abs() < GIMBAL_TOLERANCE {
        // with roll = 0: R[0][0] = cos(yaw), R[2][0] = -sin(yaw)
        let yaw = (-r[(2, 0)]).atan2(r[(0, 0)]);
        return Ok(EulerAngles {
            yaw,
            pitch,
            roll: 0.0,
            gimbal_lock: true,
        });
    }
    let yaw = r[(0, 2)].atan2(r[(2, 2)]);
    let roll = r[(1, 0)].atan2(r[(1, 1)]);
    Ok(EulerAngles {
        yaw,
        pitch,
        roll,
        gimbal_lock: false,
    })
}

/// Rodrigues exponential of an axis-angle vector.
pub(crate) fn exp_so3(w: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*w).into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

    #[test]
    fn identity_decomposes_to_zero() {
        let e = euler_from_rotation(&Matrix3::identity()).unwrap();
        assert_eq!((e.yaw, e.pitch, e.roll), (0.0, 0.0, 0.0));
        assert!(!e.gimbal_lock);
    }

    #[test]
    fn pure_yaw() {
        let r = Rotation3::from_axis_angle(&Vector3::y_axis(), FRAC_PI_6).into_inner();
        let e = euler_from_rotation(&r).unwrap();
        assert!((e.yaw - FRAC_PI_6).abs() < 1e-9);
        assert!(e.pitch.abs() < 1e-12 && e.roll.abs() < 1e-12);
    }

    #[test]
    fn composition_order() {
        let r = rotation_from_euler(0.3, -0.2, 0.1);
        let e = euler_from_rotation(&r).unwrap();
        assert!((e.yaw - 0.3).abs() < 1e-12);
        assert!((e.pitch + 0.2).abs() < 1e-12);
        assert!((e.roll - 0.1).abs() < 1e-12);
    }

    #[test]
    fn random_rotations_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            // uniform on SO(3) via normalized Gaussian quaternion
            let q = loop {
                let v: [f64; 4] = [
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                ];
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-6 {
                    break nalgebra::Quaternion::new(v[0] / n, v[1] / n, v[2] / n, v[3] / n);
                }
            };
            let r = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
            let e = euler_from_rotation(&r).unwrap();
            assert!(!e.gimbal_lock);
            let back = rotation_from_euler(e.yaw, e.pitch, e.roll);
            assert!((back - r).amax() < 1e-9, "{}", (back - r).amax());
        }
    }

    #[test]
    fn gimbal_lock_flagged() {
        let r = rotation_from_euler(0.4, FRAC_PI_2, 0.0);
        let e = euler_from_rotation(&r).unwrap();
        assert!(e.gimbal_lock);
        assert_eq!(e.roll, 0.0);
        assert!((e.yaw - 0.4).abs() < 1e-9);
        let back = rotation_from_euler(e.yaw, e.pitch, e.roll);
        assert!((back - r).amax() < 1e-9);
    }

    #[test]
    fn rejects_non_rotation() {
        let mut r = Matrix3::identity();
        r[(0, 0)] = -1.0;
        assert!(matches!(euler_from_rotation(&r), Err(PoseError::NotARotation)));
        assert!(euler_from_rotation(&(Matrix3::identity() * 2.0)).is_err());
    }

    #[test]
    fn reconstructed_rotation_is_orthonormal() {
        let r = rotation_from_euler(2.9, -0.7, 1.3);
        assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }
}
