//! Face model, landmark and camera types.

use nalgebra::{Matrix3, Vector2, Vector3};

use super::PoseError;

/// Number of landmarks in the AFLW annotation scheme.
pub const NUM_LANDMARKS: usize = 21;

/// Minimum number of visible landmarks accepted by the solvers.
pub const MIN_VISIBLE: usize = 6;

/// AFLW landmark labels, indexed by position (label `i + 1` lives at index `i`).
pub const AFLW_LABELS: [&str; NUM_LANDMARKS] = [
    "left_brow_outer",
    "left_brow_center",
    "left_brow_inner",
    "right_brow_inner",
    "right_brow_center",
    "right_brow_outer",
    "left_eye_outer",
    "left_eye_center",
    "left_eye_inner",
    "right_eye_inner",
    "right_eye_center",
    "right_eye_outer",
    "left_ear",
    "nose_left",
    "nose_tip",
    "nose_right",
    "right_ear",
    "mouth_left",
    "mouth_center",
    "mouth_right",
    "chin",
];

/// Left/right counterparts (zero-based). Midline landmarks map to themselves.
pub const MIRROR: [usize; NUM_LANDMARKS] = [
    5, 4, 3, 2, 1, 0, 11, 10, 9, 8, 7, 6, 16, 15, 14, 13, 12, 19, 18, 17, 20,
];

// Head frame: x to the image right, y down, z away from the camera when the
// face looks straight into it. Units are millimeters, origin at head center.
const BUILTIN_POINTS: [[f64; 3]; NUM_LANDMARKS] = [
    [-52.0, -55.0, -78.0],
    [-33.0, -62.0, -92.0],
    [-13.0, -57.0, -98.0],
    [13.0, -57.0, -98.0],
    [33.0, -62.0, -92.0],
    [52.0, -55.0, -78.0],
    [-45.0, -38.0, -80.0],
    [-30.0, -38.0, -88.0],
    [-15.0, -37.0, -90.0],
    [15.0, -37.0, -90.0],
    [30.0, -38.0, -88.0],
    [45.0, -38.0, -80.0],
    [-75.0, -15.0, 0.0],
    [-17.0, 8.0, -94.0],
    [0.0, 4.0, -114.0],
    [17.0, 8.0, -94.0],
    [75.0, -15.0, 0.0],
    [-26.0, 38.0, -88.0],
    [0.0, 36.0, -98.0],
    [26.0, 38.0, -88.0],
    [0.0, 86.0, -86.0],
];

/// A rigid 21-point 3D face model in the head coordinate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceModel3D {
    points: Vec<Vector3<f64>>,
    landmark_ids: Vec<u32>,
}

impl FaceModel3D {
    /// The built-in anthropometric model.
    pub fn builtin() -> Self {
        Self {
            points: BUILTIN_POINTS
                .iter()
                .map(|p| Vector3::new(p[0], p[1], p[2]))
                .collect(),
            landmark_ids: (1..=NUM_LANDMARKS as u32).collect(),
        }
    }

    /// Builds a model from points ordered by AFLW label (1..=21).
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self, PoseError> {
        if points.len() != NUM_LANDMARKS {
            return Err(PoseError::LandmarkCount(points.len()));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(PoseError::NonFiniteInput);
        }
        for i in 0..NUM_LANDMARKS {
            for j in (i + 1)..NUM_LANDMARKS {
                if (points[i] - points[j]).norm() < 1e-9 {
                    return Err(PoseError::CoincidentModelPoints(i + 1, j + 1));
                }
            }
        }
        let model = Self {
            points,
            landmark_ids: (1..=NUM_LANDMARKS as u32).collect(),
        };
        if model.planarity_ratio() < super::DEGENERACY_RATIO {
            return Err(PoseError::DegenerateConfiguration);
        }
        Ok(model)
    }

    #[cfg(test)]
    pub(crate) fn from_points_unchecked(points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            landmark_ids: (1..=NUM_LANDMARKS as u32).collect(),
        }
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn landmark_ids(&self) -> &[u32] {
        &self.landmark_ids
    }

    /// Ratio of smallest to largest singular value of the centered points.
    /// Near zero means the model is planar or collinear.
    pub fn planarity_ratio(&self) -> f64 {
        centered_singular_ratio(&self.points)
    }

    /// Largest deviation from exact bilateral symmetry about the x = 0 plane.
    pub fn symmetry_error(&self) -> f64 {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let q = self.points[MIRROR[i]];
                Vector3::new(p.x + q.x, p.y - q.y, p.z - q.z).amax()
            })
            .fold(0.0, f64::max)
    }
}

impl Default for FaceModel3D {
    fn default() -> Self {
        Self::builtin()
    }
}

pub(crate) fn centered_singular_ratio(points: &[Vector3<f64>]) -> f64 {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let c = p - centroid;
        scatter += c * c.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min().max(0.0);
    if max <= 0.0 {
        return 0.0;
    }
    // singular values of the centered matrix are square roots of the scatter eigenvalues
    (min / max).sqrt()
}

/// 21 labeled image points for one face.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub image_id: String,
    points: Vec<Vector2<f64>>,
    visibility: Vec<bool>,
}

impl LandmarkSet {
    pub fn new(
        image_id: impl Into<String>,
        points: Vec<Vector2<f64>>,
        visibility: Option<Vec<bool>>,
    ) -> Result<Self, PoseError> {
        if points.len() != NUM_LANDMARKS {
            return Err(PoseError::LandmarkCount(points.len()));
        }
        let visibility = visibility.unwrap_or_else(|| vec![true; NUM_LANDMARKS]);
        if visibility.len() != NUM_LANDMARKS {
            return Err(PoseError::LandmarkCount(visibility.len()));
        }
        if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(PoseError::NonFiniteInput);
        }
        let visible = visibility.iter().filter(|v| **v).count();
        if visible < MIN_VISIBLE {
            return Err(PoseError::InsufficientLandmarks(visible));
        }
        Ok(Self {
            image_id: image_id.into(),
            points,
            visibility,
        })
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    pub fn visibility(&self) -> &[bool] {
        &self.visibility
    }

    pub fn visible_count(&self) -> usize {
        self.visibility.iter().filter(|v| **v).count()
    }
}

/// Pinhole intrinsics without distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, PoseError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(PoseError::InvalidIntrinsics);
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(PoseError::InvalidIntrinsics);
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Focal length equal to the image width, principal point at the center.
    pub fn for_image(width: f64, height: f64) -> Result<Self, PoseError> {
        Self::new(width, width, width / 2.0, height / 2.0)
    }

    /// Projects a camera-frame point to pixels.
    pub fn project(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        )
    }
}
