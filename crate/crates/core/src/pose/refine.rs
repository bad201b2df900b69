//! Reprojection-error refinement over a 6-parameter pose.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use super::rotation::exp_so3;
use super::{CameraIntrinsics, Correspondences, FaceModel3D, HeadPose, LandmarkSet, PoseError};

type Mat6 = SMatrix<f64, 6, 6>;
type Vec6 = SVector<f64, 6>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    pub max_iterations: usize,
    /// Stop once the parameter update is shorter than this.
    pub step_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            step_tolerance: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

/// Levenberg-damped Gauss–Newton on the sum of squared pixel residuals.
///
/// The rotation is updated multiplicatively through an axis-angle increment,
/// the translation additively. A step is only kept if it lowers the cost, so
/// the result never reprojects worse than `init`.
pub fn refine_pose(
    model: &FaceModel3D,
    lms: &LandmarkSet,
    cam: &CameraIntrinsics,
    init: &HeadPose,
) -> Result<HeadPose, PoseError> {
    refine_pose_with(model, lms, cam, init, &RefineOptions::default())
}

pub fn refine_pose_with(
    model: &FaceModel3D,
    lms: &LandmarkSet,
    cam: &CameraIntrinsics,
    init: &HeadPose,
    opts: &RefineOptions,
) -> Result<HeadPose, PoseError> {
    let corr = Correspondences::visible(model, lms)?;
    let init_r = init.rotation();
    let init_t = init.translation;
    let init_cost = cost(&corr, &init_r, &init_t, cam);
    if !init_cost.is_finite() {
        return Err(PoseError::NonFiniteResidual);
    }

    let mut r = init_r;
    let mut t = init_t;
    let mut current = init_cost;
    let (h0, _) = normal_equations(&corr, &r, &t, cam);
    let mut lambda = opts.initial_damping * (0..6).map(|i| h0[(i, i)]).fold(0.0, f64::max).max(1e-12);

    for _ in 0..opts.max_iterations {
        let (h, g) = normal_equations(&corr, &r, &t, cam);
        if !(h.iter().all(|x| x.is_finite()) && g.iter().all(|x| x.is_finite())) {
            return Err(PoseError::NonFiniteResidual);
        }
        let damped = h + Mat6::identity() * lambda;
        let Some(step) = damped.cholesky().map(|c| c.solve(&(-g))) else {
            lambda *= 10.0;
            continue;
        };
        if step.norm() < opts.step_tolerance {
            break;
        }
        let dw = Vector3::new(step[0], step[1], step[2]);
        let dt = Vector3::new(step[3], step[4], step[5]);
        let r_new = exp_so3(&dw) * r;
        let t_new = t + dt;
        let candidate = cost(&corr, &r_new, &t_new, cam);
        if candidate.is_nan() {
            return Err(PoseError::NonFiniteResidual);
        }
        if candidate < current {
            r = r_new;
            t = t_new;
            current = candidate;
            lambda = (lambda / 10.0).max(1e-15);
        } else {
            lambda *= 10.0;
            if !lambda.is_finite() {
                break;
            }
        }
    }

    let out = HeadPose::from_rt(&r, t, 0.0)?;
    // Euler round trip can nudge the cost at the last ulp; fall back to init then.
    let out_rmse = corr.rmse(&out.rotation(), &out.translation, cam);
    let init_rmse = corr.rmse(&init_r, &init_t, cam);
    if !out_rmse.is_finite() {
        return Err(PoseError::NonFiniteResidual);
    }
    if out_rmse > init_rmse {
        return Ok(HeadPose {
            reprojection_rmse: init_rmse,
            ..*init
        });
    }
    Ok(HeadPose {
        reprojection_rmse: out_rmse,
        ..out
    })
}

fn cost(corr: &Correspondences, r: &Matrix3<f64>, t: &Vector3<f64>, cam: &CameraIntrinsics) -> f64 {
    corr.world
        .iter()
        .zip(&corr.image)
        .map(|(p, q)| (cam.project(&(r * p + t)) - q).norm_squared())
        .sum()
}

/// `JᵀJ` and `Jᵀr` for residuals `project(R·X + t) − q`.
fn normal_equations(
    corr: &Correspondences,
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
    cam: &CameraIntrinsics,
) -> (Mat6, Vec6) {
    let mut h = Mat6::zeros();
    let mut g = Vec6::zeros();
    for (p, q) in corr.world.iter().zip(&corr.image) {
        let rp = r * p;
        let pc = rp + t;
        let inv_z = 1.0 / pc.z;
        let uv = cam.project(&pc);
        let res = uv - q;
        // d(u, v)/d(camera point)
        let du = Vector3::new(cam.fx * inv_z, 0.0, -cam.fx * pc.x * inv_z * inv_z);
        let dv = Vector3::new(0.0, cam.fy * inv_z, -cam.fy * pc.y * inv_z * inv_z);
        // d(camera point)/d(rotation increment) = -[R·X]×, so row·(-[a]×) = a × row
        for (d, e) in [(du, res.x), (dv, res.y)] {
            let rot = rp.cross(&d);
            let row = Vec6::new(rot.x, rot.y, rot.z, d.x, d.y, d.z);
            h += row * row.transpose();
            g += row * e;
        }
    }
    (h, g)
}
