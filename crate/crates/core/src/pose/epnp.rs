//! EPnP: every model point is written as a barycentric combination of four
//! control points, whose camera-frame coordinates lie in the null space of a
//! 2n×12 linear system.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};

use super::model::centered_singular_ratio;
use super::{CameraIntrinsics, Correspondences, FaceModel3D, HeadPose, LandmarkSet, PoseError};
use super::DEGENERACY_RATIO;

const GAUSS_NEWTON_STEPS: usize = 10;

// Control-point index pairs, in the order of the rows of L and rho.
const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

type L6x10 = SMatrix<f64, 6, 10>;
type Rho = SVector<f64, 6>;

struct Candidate {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    rmse: f64,
}

/// Closed-form initial head pose.
pub fn solve_epnp(
    model: &FaceModel3D,
    lms: &LandmarkSet,
    cam: &CameraIntrinsics,
) -> Result<HeadPose, PoseError> {
    let corr = Correspondences::visible(model, lms)?;
    if centered_singular_ratio(&corr.world) < DEGENERACY_RATIO {
        return Err(PoseError::DegenerateConfiguration);
    }

    let controls = control_points(&corr.world);
    let alphas = barycentric(&corr.world, &controls)?;
    let m = build_system(&alphas, &corr, cam);

    let eig = (m.transpose() * &m).symmetric_eigen();
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    // null-space candidates, smallest eigenvalue first
    let kernel: [SVector<f64, 12>; 4] =
        std::array::from_fn(|i| SVector::<f64, 12>::from_iterator(eig.eigenvectors.column(order[i]).iter().copied()));

    let l = l_6x10(&kernel);
    let rho = rho(&controls);

    let inits = [
        betas_approx_1(&l, &rho),
        betas_approx_2(&l, &rho),
        betas_approx_3(&l, &rho),
    ];

    let mut best: Option<Candidate> = None;
    for init in inits.into_iter().flatten() {
        let betas = gauss_newton(&l, &rho, init);
        let Some(cand) = pose_from_betas(&betas, &kernel, &controls, &alphas, &corr, cam) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| cand.rmse < b.rmse) {
            best = Some(cand);
        }
    }
    let best = best.ok_or(PoseError::DegenerateConfiguration)?;
    HeadPose::from_rt(&best.rotation, best.translation, best.rmse)
}

/// Centroid plus the principal directions scaled by their standard deviation.
fn control_points(world: &[Vector3<f64>]) -> [Vector3<f64>; 4] {
    let n = world.len() as f64;
    let c0 = world.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let mut scatter = Matrix3::zeros();
    for p in world {
        let d = p - c0;
        scatter += d * d.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let mut ctrl = [c0; 4];
    for k in 0..3 {
        let scale = (eig.eigenvalues[k].max(0.0) / n).sqrt();
        ctrl[k + 1] = c0 + eig.eigenvectors.column(k) * scale;
    }
    ctrl
}

fn barycentric(world: &[Vector3<f64>], ctrl: &[Vector3<f64>; 4]) -> Result<Vec<[f64; 4]>, PoseError> {
    let basis = Matrix3::from_columns(&[ctrl[1] - ctrl[0], ctrl[2] - ctrl[0], ctrl[3] - ctrl[0]]);
    let inv = basis.try_inverse().ok_or(PoseError::DegenerateConfiguration)?;
    Ok(world
        .iter()
        .map(|p| {
            let a = inv * (p - ctrl[0]);
            [1.0 - a.x - a.y - a.z, a.x, a.y, a.z]
        })
        .collect())
}

fn build_system(alphas: &[[f64; 4]], corr: &Correspondences, cam: &CameraIntrinsics) -> DMatrix<f64> {
    let n = alphas.len();
    let mut m = DMatrix::zeros(2 * n, 12);
    for (i, (a, uv)) in alphas.iter().zip(&corr.image).enumerate() {
        for j in 0..4 {
            m[(2 * i, 3 * j)] = a[j] * cam.fx;
            m[(2 * i, 3 * j + 2)] = a[j] * (cam.cx - uv.x);
            m[(2 * i + 1, 3 * j + 1)] = a[j] * cam.fy;
            m[(2 * i + 1, 3 * j + 2)] = a[j] * (cam.cy - uv.y);
        }
    }
    m
}

fn ctrl_of(v: &SVector<f64, 12>, j: usize) -> Vector3<f64> {
    Vector3::new(v[3 * j], v[3 * j + 1], v[3 * j + 2])
}

// Columns: b11 b12 b22 b13 b23 b33 b14 b24 b34 b44
fn l_6x10(kernel: &[SVector<f64, 12>; 4]) -> L6x10 {
    let mut l = L6x10::zeros();
    for (row, &(a, b)) in PAIRS.iter().enumerate() {
        let dv: [Vector3<f64>; 4] = std::array::from_fn(|i| ctrl_of(&kernel[i], a) - ctrl_of(&kernel[i], b));
        l[(row, 0)] = dv[0].dot(&dv[0]);
        l[(row, 1)] = 2.0 * dv[0].dot(&dv[1]);
        l[(row, 2)] = dv[1].dot(&dv[1]);
        l[(row, 3)] = 2.0 * dv[0].dot(&dv[2]);
        l[(row, 4)] = 2.0 * dv[1].dot(&dv[2]);
        l[(row, 5)] = dv[2].dot(&dv[2]);
        l[(row, 6)] = 2.0 * dv[0].dot(&dv[3]);
        l[(row, 7)] = 2.0 * dv[1].dot(&dv[3]);
        l[(row, 8)] = 2.0 * dv[2].dot(&dv[3]);
        l[(row, 9)] = dv[3].dot(&dv[3]);
    }
    l
}

fn rho(ctrl: &[Vector3<f64>; 4]) -> Rho {
    Rho::from_iterator(PAIRS.iter().map(|&(a, b)| (ctrl[a] - ctrl[b]).norm_squared()))
}

fn least_squares(a: DMatrix<f64>, b: &Rho) -> Option<DVector<f64>> {
    let b = DVector::from_iterator(6, b.iter().copied());
    a.svd(true, true).solve(&b, 1e-14).ok()
}

fn sub_columns(l: &L6x10, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(6, cols.len(), |r, c| l[(r, cols[c])])
}

// One dominant null vector: solve for b11 b12 b13 b14.
fn betas_approx_1(l: &L6x10, rho: &Rho) -> Option<[f64; 4]> {
    let b4 = least_squares(sub_columns(l, &[0, 1, 3, 6]), rho)?;
    let (b0, sign) = if b4[0] < 0.0 {
        ((-b4[0]).sqrt(), -1.0)
    } else {
        (b4[0].sqrt(), 1.0)
    };
    if b0 == 0.0 {
        return None;
    }
    Some([b0, sign * b4[1] / b0, sign * b4[2] / b0, sign * b4[3] / b0])
}

// Two null vectors: b11 b12 b22.
fn betas_approx_2(l: &L6x10, rho: &Rho) -> Option<[f64; 4]> {
    let b3 = least_squares(sub_columns(l, &[0, 1, 2]), rho)?;
    let (mut b0, b1) = two_from_squares(b3[0], b3[2]);
    if b3[1] < 0.0 {
        b0 = -b0;
    }
    Some([b0, b1, 0.0, 0.0])
}

// Three null vectors: b11 b12 b22 b13 b23.
fn betas_approx_3(l: &L6x10, rho: &Rho) -> Option<[f64; 4]> {
    let b5 = least_squares(sub_columns(l, &[0, 1, 2, 3, 4]), rho)?;
    let (mut b0, b1) = two_from_squares(b5[0], b5[2]);
    if b5[1] < 0.0 {
        b0 = -b0;
    }
    let b2 = if b0 != 0.0 { b5[3] / b0 } else { 0.0 };
    Some([b0, b1, b2, 0.0])
}

fn two_from_squares(b11: f64, b22: f64) -> (f64, f64) {
    if b11 < 0.0 {
        ((-b11).sqrt(), if b22 < 0.0 { (-b22).sqrt() } else { 0.0 })
    } else {
        (b11.sqrt(), if b22 > 0.0 { b22.sqrt() } else { 0.0 })
    }
}

fn quadratic_terms(b: &[f64; 4]) -> SVector<f64, 10> {
    SVector::<f64, 10>::from_column_slice(&[
        b[0] * b[0],
        b[0] * b[1],
        b[1] * b[1],
        b[0] * b[2],
        b[1] * b[2],
        b[2] * b[2],
        b[0] * b[3],
        b[1] * b[3],
        b[2] * b[3],
        b[3] * b[3],
    ])
}

fn gauss_newton(l: &L6x10, rho: &Rho, mut b: [f64; 4]) -> [f64; 4] {
    for _ in 0..GAUSS_NEWTON_STEPS {
        let mut jac = DMatrix::zeros(6, 4);
        let mut res = Rho::zeros();
        let q = quadratic_terms(&b);
        for r in 0..6 {
            let row = l.row(r);
            jac[(r, 0)] = 2.0 * row[0] * b[0] + row[1] * b[1] + row[3] * b[2] + row[6] * b[3];
            jac[(r, 1)] = row[1] * b[0] + 2.0 * row[2] * b[1] + row[4] * b[2] + row[7] * b[3];
            jac[(r, 2)] = row[3] * b[0] + row[4] * b[1] + 2.0 * row[5] * b[2] + row[8] * b[3];
            jac[(r, 3)] = row[6] * b[0] + row[7] * b[1] + row[8] * b[2] + 2.0 * row[9] * b[3];
            res[r] = rho[r] - row.dot(&q.transpose());
        }
        let Some(step) = least_squares(jac, &res) else {
            break;
        };
        for k in 0..4 {
            b[k] += step[k];
        }
    }
    b
}

fn pose_from_betas(
    betas: &[f64; 4],
    kernel: &[SVector<f64, 12>; 4],
    ctrl_world: &[Vector3<f64>; 4],
    alphas: &[[f64; 4]],
    corr: &Correspondences,
    cam: &CameraIntrinsics,
) -> Option<Candidate> {
    let combined: SVector<f64, 12> = (0..4).fold(SVector::zeros(), |acc, i| acc + kernel[i] * betas[i]);
    let mut ctrl_cam: [Vector3<f64>; 4] = std::array::from_fn(|j| ctrl_of(&combined, j));

    // the null space fixes the solution only up to sign: put the face in front
    let mean_depth: f64 = alphas
        .iter()
        .map(|a| (0..4).map(|j| a[j] * ctrl_cam[j].z).sum::<f64>())
        .sum();
    if mean_depth < 0.0 {
        ctrl_cam.iter_mut().for_each(|c| *c = -*c);
    }

    let (rotation, translation) = procrustes(ctrl_world, &ctrl_cam)?;
    let rmse = corr.rmse(&rotation, &translation, cam);
    rmse.is_finite().then_some(Candidate {
        rotation,
        translation,
        rmse,
    })
}

/// Rigid transform taking `src` onto `dst` in the least-squares sense.
fn procrustes(src: &[Vector3<f64>; 4], dst: &[Vector3<f64>; 4]) -> Option<(Matrix3<f64>, Vector3<f64>)> {
    let cs = src.iter().sum::<Vector3<f64>>() / 4.0;
    let cd = dst.iter().sum::<Vector3<f64>>() / 4.0;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (d - cd) * (s - cs).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    let t = cd - r * cs;
    (r.iter().all(|x| x.is_finite()) && t.iter().all(|x| x.is_finite())).then_some((r, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{project_model, rotation_from_euler, NUM_LANDMARKS};
    use nalgebra::Vector2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::for_image(1000.0, 1000.0).unwrap()
    }

    fn landmarks(pose: &HeadPose) -> LandmarkSet {
        let model = FaceModel3D::builtin();
        LandmarkSet::new("t", project_model(&model, pose, &cam()), None).unwrap()
    }

    #[test]
    fn frontal_identity() {
        let truth = HeadPose::new(0.0, 0.0, 0.0, Vector3::new(0.0, 0.0, 1000.0));
        let est = solve_epnp(&FaceModel3D::builtin(), &landmarks(&truth), &cam()).unwrap();
        assert!(est.yaw.abs() < 1e-6);
        assert!((est.translation - truth.translation).norm() < 1e-6);
        assert!(est.reprojection_rmse < 1e-6);
    }

    #[test]
    fn yaw_thirty_degrees() {
        let yaw = 30f64.to_radians();
        let truth = HeadPose::new(yaw, 0.0, 0.0, Vector3::new(0.0, 0.0, 1000.0));
        let est = solve_epnp(&FaceModel3D::builtin(), &landmarks(&truth), &cam()).unwrap();
        assert!((est.yaw - yaw).abs() < 1e-4, "{}", est.yaw - yaw);
        assert!((est.rotation() - rotation_from_euler(yaw, 0.0, 0.0)).amax() < 1e-6);
    }

    #[test]
    fn noisy_seventy_five_degrees_median() {
        let yaw = 75f64.to_radians();
        let truth = HeadPose::new(yaw, 0.0, 0.0, Vector3::new(0.0, 0.0, 1000.0));
        let clean = project_model(&FaceModel3D::builtin(), &truth, &cam());
        let mut rng = ChaCha8Rng::seed_from_u64(75);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut errs: Vec<f64> = (0..100)
            .map(|_| {
                let pts = clean
                    .iter()
                    .map(|p| p + Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng)))
                    .collect();
                let lms = LandmarkSet::new("n", pts, None).unwrap();
                let est = solve_epnp(&FaceModel3D::builtin(), &lms, &cam()).unwrap();
                (est.yaw - yaw).abs()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        assert!(errs[50] < 3f64.to_radians(), "median {}", errs[50].to_degrees());
    }

    #[test]
    fn visibility_subset() {
        let truth = HeadPose::new(0.6, 0.1, -0.05, Vector3::new(20.0, -10.0, 900.0));
        let pts = project_model(&FaceModel3D::builtin(), &truth, &cam());
        let mut vis = vec![true; NUM_LANDMARKS];
        for i in [0, 6, 7, 8, 12] {
            vis[i] = false;
        }
        let lms = LandmarkSet::new("v", pts, Some(vis)).unwrap();
        let est = solve_epnp(&FaceModel3D::builtin(), &lms, &cam()).unwrap();
        assert!((est.yaw - truth.yaw).abs() < 1e-6);
    }

    #[test]
    fn collinear_model_points_degenerate() {
        let line: Vec<_> = (0..NUM_LANDMARKS)
            .map(|i| Vector3::new(0.0, i as f64 * 5.0, -50.0))
            .collect();
        let model = FaceModel3D::from_points_unchecked(line);
        let truth = HeadPose::new(0.0, 0.0, 0.0, Vector3::new(0.0, 0.0, 1000.0));
        let lms = landmarks(&truth);
        assert!(matches!(
            solve_epnp(&model, &lms, &cam()),
            Err(PoseError::DegenerateConfiguration)
        ));
    }
}
