//! Head-pose estimation from 21 facial landmarks and the yaw gate.
//!
//! The pipeline is EPnP for an initial pose followed by a damped Gauss–Newton
//! refinement of the reprojection error. Only yaw feeds the gate; pitch and
//! roll are reported for completeness.

mod epnp;
mod gate;
mod model;
mod refine;
mod rotation;

use nalgebra::{Matrix3, Vector2, Vector3};
use thiserror::Error;

pub use epnp::solve_epnp;
pub use gate::{yaw_coefficient, GateMode};
pub use model::{
    CameraIntrinsics, FaceModel3D, LandmarkSet, AFLW_LABELS, MIN_VISIBLE, MIRROR, NUM_LANDMARKS,
};
pub use refine::{refine_pose, refine_pose_with, RefineOptions};
pub use rotation::{euler_from_rotation, rotation_from_euler, EulerAngles, GIMBAL_TOLERANCE};

/// Smallest-to-largest singular value ratio below which a point set is
/// treated as degenerate.
pub const DEGENERACY_RATIO: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("expected 21 landmarks, got {0}")]
    LandmarkCount(usize),
    #[error("need at least 6 visible landmarks, got {0}")]
    InsufficientLandmarks(usize),
    #[error("degenerate landmark configuration")]
    DegenerateConfiguration,
    #[error("model points {0} and {1} coincide")]
    CoincidentModelPoints(usize, usize),
    #[error("non-finite coordinate in input")]
    NonFiniteInput,
    #[error("camera intrinsics must have positive finite focal lengths")]
    InvalidIntrinsics,
    #[error("matrix is not a proper rotation")]
    NotARotation,
    #[error("non-finite reprojection residual")]
    NonFiniteResidual,
}

/// Head rotation and translation relative to the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadPose {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    /// Head origin in the camera frame, millimeters.
    pub translation: Vector3<f64>,
    /// Root-mean-square reprojection error over visible landmarks, pixels.
    pub reprojection_rmse: f64,
}

impl HeadPose {
    pub fn new(yaw: f64, pitch: f64, roll: f64, translation: Vector3<f64>) -> Self {
        Self {
            yaw,
            pitch,
            roll,
            translation,
            reprojection_rmse: 0.0,
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_from_euler(self.yaw, self.pitch, self.roll)
    }

    pub(crate) fn from_rt(r: &Matrix3<f64>, t: Vector3<f64>, rmse: f64) -> Result<Self, PoseError> {
        let e = euler_from_rotation(r)?;
        Ok(Self {
            yaw: e.yaw,
            pitch: e.pitch,
            roll: e.roll,
            translation: t,
            reprojection_rmse: rmse,
        })
    }
}

/// Projects every model point at the given pose.
pub fn project_model(model: &FaceModel3D, pose: &HeadPose, cam: &CameraIntrinsics) -> Vec<Vector2<f64>> {
    let r = pose.rotation();
    model
        .points()
        .iter()
        .map(|p| cam.project(&(r * p + pose.translation)))
        .collect()
}

/// Visible model/image point pairs.
pub(crate) struct Correspondences {
    pub world: Vec<Vector3<f64>>,
    pub image: Vec<Vector2<f64>>,
}

impl Correspondences {
    pub fn visible(model: &FaceModel3D, lms: &LandmarkSet) -> Result<Self, PoseError> {
        let mut world = Vec::with_capacity(NUM_LANDMARKS);
        let mut image = Vec::with_capacity(NUM_LANDMARKS);
        for ((p, q), vis) in model
            .points()
            .iter()
            .zip(lms.points())
            .zip(lms.visibility())
        {
            if *vis {
                world.push(*p);
                image.push(*q);
            }
        }
        if world.len() < MIN_VISIBLE {
            return Err(PoseError::InsufficientLandmarks(world.len()));
        }
        Ok(Self { world, image })
    }

    pub fn rmse(&self, r: &Matrix3<f64>, t: &Vector3<f64>, cam: &CameraIntrinsics) -> f64 {
        let sq: f64 = self
            .world
            .iter()
            .zip(&self.image)
            .map(|(p, q)| (cam.project(&(r * p + t)) - q).norm_squared())
            .sum();
        (sq / self.world.len() as f64).sqrt()
    }
}

/// EPnP followed by refinement.
pub fn estimate_pose(
    model: &FaceModel3D,
    lms: &LandmarkSet,
    cam: &CameraIntrinsics,
) -> Result<HeadPose, PoseError> {
    let init = solve_epnp(model, lms, cam)?;
    refine_pose(model, lms, cam, &init)
}
