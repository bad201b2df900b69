//! Synthetic worlds with a known answer: frontal embeddings per subject,
//! profile embeddings produced by a recorded yaw-scaled perturbation, and
//! landmarks projected from the face model at recorded poses.

mod pairs;

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::block::affine;
use crate::embedding::Embedding;
use crate::pose::{project_model, yaw_coefficient, CameraIntrinsics, FaceModel3D, GateMode, HeadPose, LandmarkSet};

pub use pairs::{make_pairs, PairCounts, PairRequest, SynthPairs};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("need at least {needed} subjects, have {available}")]
    InsufficientSubjects { needed: usize, available: usize },
    #[error("subject `{subject}` cannot supply {needed} distinct {kind} pairs")]
    InsufficientImages {
        subject: String,
        needed: usize,
        kind: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum YawDistribution {
    /// Uniform on (−90°, 90°).
    #[default]
    Uniform,
    /// With probability `share` a Gaussian around 0 with `sd` radians
    /// (clamped to ±90°), otherwise uniform.
    FrontalBiased { share: f64, sd: f64 },
}

impl YawDistribution {
    pub fn frontal_heavy() -> Self {
        YawDistribution::FrontalBiased {
            share: 0.7,
            sd: 30f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PerturbationKind {
    /// `P(x) = s·(A·x + b)`
    #[default]
    Linear,
    /// `P(x) = s·(B·tanh(A·x + a) + b)`
    NonlinearMlp,
    /// `P(x) = s·(A·x + b)` with `A·A = 0` and `A·b = 0`, so the affine
    /// residual `-(A·y + b)` undoes it exactly at every yaw. Ignores `attenuation`.
    Nilpotent,
}

/// Knobs of the generating map `P(x) = s·(A·x + b)` (or its MLP variant).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationShape {
    /// Spectral scale of the random part of `A` relative to the unit-norm input.
    pub gain: f64,
    /// `A` has `-attenuation` added on its diagonal, fading identity with yaw.
    pub attenuation: f64,
    /// Norm of the shared offset `b`.
    pub shift: f64,
}

impl Default for PerturbationShape {
    fn default() -> Self {
        Self {
            gain: 0.5,
            attenuation: 0.75,
            shift: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_subjects: usize,
    pub images_per_subject: usize,
    pub embedding_dim: usize,
    pub yaw_distribution: YawDistribution,
    pub perturbation: PerturbationKind,
    pub perturbation_scale: f64,
    /// Shape of the generating map, see [`PerturbationShape`].
    pub shape: PerturbationShape,
    /// Norm of the isotropic embedding noise; `None` means `perturbation_scale / 10`.
    pub embedding_noise: Option<f64>,
    pub landmark_noise_px: f64,
    /// Gate shape that scales the perturbation with yaw.
    pub generator_gate: GateMode,
    pub image_width: f64,
    pub image_height: f64,
    /// Largest absolute pitch and roll drawn, radians.
    pub max_pitch: f64,
    pub max_roll: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_subjects: 100,
            images_per_subject: 10,
            embedding_dim: 64,
            yaw_distribution: YawDistribution::Uniform,
            perturbation: PerturbationKind::Linear,
            perturbation_scale: 1.0,
            shape: PerturbationShape::default(),
            embedding_noise: None,
            landmark_noise_px: 0.0,
            generator_gate: GateMode::Nonlinear,
            image_width: 1000.0,
            image_height: 1000.0,
            max_pitch: 10f64.to_radians(),
            max_roll: 10f64.to_radians(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.into()));
        if self.num_subjects == 0 || self.images_per_subject == 0 || self.embedding_dim == 0 {
            return bad("counts must be positive");
        }
        if !(self.perturbation_scale >= 0.0 && self.perturbation_scale.is_finite()) {
            return bad("perturbation scale must be non-negative");
        }
        let sh = &self.shape;
        if ![sh.gain, sh.attenuation, sh.shift].iter().all(|v| v.is_finite() && *v >= 0.0) {
            return bad("perturbation shape values must be non-negative");
        }
        if let YawDistribution::FrontalBiased { share, sd } = self.yaw_distribution {
            if !((0.0..=1.0).contains(&share) && sd >= 0.0 && sd.is_finite()) {
                return bad("frontal share must lie in [0, 1] and its spread be non-negative");
            }
        }
        if self.embedding_noise.is_some_and(|n| !(n >= 0.0 && n.is_finite())) {
            return bad("embedding noise must be non-negative");
        }
        if !(self.landmark_noise_px >= 0.0 && self.landmark_noise_px.is_finite()) {
            return bad("landmark noise must be non-negative");
        }
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return bad("image size must be positive");
        }
        if !(self.max_pitch.abs() < FRAC_PI_2 && self.max_roll.abs() < FRAC_PI_2) {
            return bad("pitch and roll ranges must stay below 90 degrees");
        }
        Ok(())
    }

    pub fn noise_norm(&self) -> f64 {
        self.embedding_noise.unwrap_or(self.perturbation_scale / 10.0)
    }

    pub fn camera(&self) -> CameraIntrinsics {
        CameraIntrinsics::for_image(self.image_width, self.image_height).expect("validated image size")
    }

    /// `key=value` lines describing the config.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "num_subjects={}", self.num_subjects);
        let _ = writeln!(s, "images_per_subject={}", self.images_per_subject);
        let _ = writeln!(s, "embedding_dim={}", self.embedding_dim);
        let _ = writeln!(s, "yaw_distribution={:?}", self.yaw_distribution);
        let _ = writeln!(s, "perturbation={:?}", self.perturbation);
        let _ = writeln!(s, "perturbation_scale={}", self.perturbation_scale);
        let _ = writeln!(s, "shape_gain={}", self.shape.gain);
        let _ = writeln!(s, "shape_attenuation={}", self.shape.attenuation);
        let _ = writeln!(s, "shape_shift={}", self.shape.shift);
        let _ = writeln!(s, "embedding_noise={}", self.noise_norm());
        let _ = writeln!(s, "landmark_noise_px={}", self.landmark_noise_px);
        let _ = writeln!(s, "generator_gate={}", self.generator_gate);
        let _ = writeln!(s, "image_width={}", self.image_width);
        let _ = writeln!(s, "image_height={}", self.image_height);
        let _ = writeln!(s, "max_pitch_rad={}", self.max_pitch);
        let _ = writeln!(s, "max_roll_rad={}", self.max_roll);
        let _ = writeln!(s, "seed={}", self.seed);
        s
    }
}

/// The frozen generating perturbation.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    Linear {
        scale: f64,
        a: Vec<f64>,
        b: Vec<f64>,
    },
    NonlinearMlp {
        scale: f64,
        a: Vec<f64>,
        a_bias: Vec<f64>,
        b: Vec<f64>,
        b_bias: Vec<f64>,
    },
}

impl Perturbation {
    fn draw(kind: PerturbationKind, shape: PerturbationShape, scale: f64, d: usize, rng: &mut ChaCha8Rng) -> Self {
        let gauss = |rng: &mut ChaCha8Rng, n: usize, sd: f64| -> Vec<f64> {
            (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let sd = shape.gain / (d as f64).sqrt();
        let mut a = gauss(rng, d * d, sd);
        let mut b = gauss(rng, d, 1.0);
        let n = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        b.iter_mut().for_each(|v| *v *= shape.shift / n);
        match kind {
            PerturbationKind::Linear => {
                for k in 0..d {
                    a[k * d + k] -= shape.attenuation;
                }
                Perturbation::Linear { scale, a, b }
            }
            PerturbationKind::Nilpotent => {
                let half = d / 2;
                let mut a = vec![0.0; d * d];
                let mut b = vec![0.0; d];
                for v in &mut b[half..] {
                    *v = rng.sample(StandardNormal);
                }
                let n = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                b.iter_mut().for_each(|v| *v *= shape.shift / n);
                if half > 0 {
                    let sd = shape.gain / (half as f64).sqrt();
                    for r in half..d {
                        for c in 0..half {
                            a[r * d + c] = sd * rng.sample::<f64, _>(StandardNormal);
                        }
                    }
                }
                Perturbation::Linear { scale, a, b }
            }
            PerturbationKind::NonlinearMlp => Perturbation::NonlinearMlp {
                scale,
                a: gauss(rng, d * d, 2.0 / (d as f64).sqrt()),
                a_bias: gauss(rng, d, 0.1),
                b: a,
                b_bias: b,
            },
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Perturbation::Linear { scale, a, b } => affine(a, b, x).into_iter().map(|v| scale * v).collect(),
            Perturbation::NonlinearMlp {
                scale,
                a,
                a_bias,
                b,
                b_bias,
            } => {
                let hidden: Vec<f64> = affine(a, a_bias, x).into_iter().map(f64::tanh).collect();
                affine(b, b_bias, &hidden).into_iter().map(|v| scale * v).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSubject {
    pub id: String,
    pub frontal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage {
    pub id: String,
    pub subject: usize,
    pub pose: HeadPose,
    pub embedding: Vec<f64>,
    /// Isotropic noise added on top of the perturbation.
    pub noise: Vec<f64>,
    pub landmarks: LandmarkSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub perturbation: Perturbation,
    pub subjects: Vec<SynthSubject>,
    pub images: Vec<SynthImage>,
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset, SynthError> {
    config.validate()?;
    let d = config.embedding_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let perturbation = Perturbation::draw(config.perturbation, config.shape, config.perturbation_scale, d, &mut rng);

    let subjects: Vec<SynthSubject> = (0..config.num_subjects)
        .map(|s| {
            let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            SynthSubject {
                id: format!("s{s:03}"),
                frontal: v.into_iter().map(|x| x / n).collect(),
            }
        })
        .collect();

    let model = FaceModel3D::builtin();
    let cam = config.camera();
    let noise_sd = config.noise_norm() / (d as f64).sqrt();
    let px_noise = Normal::new(0.0, config.landmark_noise_px.max(0.0)).expect("non-negative sd");

    let mut images = Vec::with_capacity(config.num_subjects * config.images_per_subject);
    for (s, subject) in subjects.iter().enumerate() {
        let shift = perturbation.apply(&subject.frontal);
        for i in 0..config.images_per_subject {
            let yaw = match config.yaw_distribution {
                YawDistribution::Uniform => rng.random_range(-FRAC_PI_2..FRAC_PI_2),
                YawDistribution::FrontalBiased { share, sd } => {
                    if rng.random::<f64>() < share {
                        (sd * rng.sample::<f64, _>(StandardNormal)).clamp(-FRAC_PI_2, FRAC_PI_2)
                    } else {
                        rng.random_range(-FRAC_PI_2..FRAC_PI_2)
                    }
                }
            };
            let pitch = symmetric(&mut rng, config.max_pitch);
            let roll = symmetric(&mut rng, config.max_roll);
            let translation = Vector3::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(800.0..1200.0),
            );
            let pose = HeadPose::new(yaw, pitch, roll, translation);

            let g = yaw_coefficient(yaw, config.generator_gate);
            let noise: Vec<f64> = (0..d).map(|_| noise_sd * rng.sample::<f64, _>(StandardNormal)).collect();
            let embedding = (0..d)
                .map(|k| subject.frontal[k] + g * shift[k] + noise[k])
                .collect();

            let mut points = project_model(&model, &pose, &cam);
            if config.landmark_noise_px > 0.0 {
                for p in &mut points {
                    *p += Vector2::new(px_noise.sample(&mut rng), px_noise.sample(&mut rng));
                }
            }
            let id = format!("{}_i{i:02}", subject.id);
            let landmarks = LandmarkSet::new(id.clone(), points, None).expect("21 finite projected points");
            images.push(SynthImage {
                id,
                subject: s,
                pose,
                embedding,
                noise,
                landmarks,
            });
        }
    }
    Ok(SynthDataset {
        config: config.clone(),
        perturbation,
        subjects,
        images,
    })
}

fn symmetric(rng: &mut ChaCha8Rng, max: f64) -> f64 {
    if max > 0.0 {
        rng.random_range(-max..max)
    } else {
        0.0
    }
}

impl SynthDataset {
    pub fn frontal_id(&self, subject: usize) -> String {
        format!("{}_frontal", self.subjects[subject].id)
    }

    /// Image embedding carrying its true yaw.
    pub fn image_embedding(&self, image: &SynthImage) -> Embedding {
        Embedding::new(image.embedding.clone())
            .with_id(image.id.clone())
            .with_subject(self.subjects[image.subject].id.clone())
            .with_yaw(image.pose.yaw)
    }

    pub fn frontal_embedding(&self, subject: usize) -> Embedding {
        Embedding::new(self.subjects[subject].frontal.clone())
            .with_id(self.frontal_id(subject))
            .with_subject(self.subjects[subject].id.clone())
            .with_yaw(0.0)
    }

    /// All image embeddings followed by the canonical frontal of each subject.
    pub fn embeddings(&self) -> Vec<Embedding> {
        self.images
            .iter()
            .map(|im| self.image_embedding(im))
            .chain((0..self.subjects.len()).map(|s| self.frontal_embedding(s)))
            .collect()
    }

    /// Largest deviation between a stored profile embedding and the one
    /// regenerated from the recorded perturbation, yaw and noise.
    pub fn consistency_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for im in &self.images {
            let f = &self.subjects[im.subject].frontal;
            let shift = self.perturbation.apply(f);
            let g = yaw_coefficient(im.pose.yaw, self.config.generator_gate);
            for k in 0..f.len() {
                let want = f[k] + g * shift[k] + im.noise[k];
                worst = worst.max((want - im.embedding[k]).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::estimate_pose;

    fn small() -> SynthConfig {
        SynthConfig {
            num_subjects: 6,
            images_per_subject: 5,
            embedding_dim: 8,
            seed: 4,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn zero_scale_leaves_frontals_untouched() {
        let ds = generate(&SynthConfig {
            perturbation_scale: 0.0,
            ..small()
        })
        .unwrap();
        for im in &ds.images {
            assert_eq!(im.embedding, ds.subjects[im.subject].frontal);
        }
    }

    #[test]
    fn frontal_images_within_noise_floor() {
        let cfg = SynthConfig {
            yaw_distribution: YawDistribution::frontal_heavy(),
            num_subjects: 30,
            ..small()
        };
        let ds = generate(&cfg).unwrap();
        let noise = cfg.noise_norm();
        for im in &ds.images {
            let f = &ds.subjects[im.subject].frontal;
            let shift_norm = ds.perturbation.apply(f).iter().map(|v| v * v).sum::<f64>().sqrt();
            let noise_norm = im.noise.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dist = f.iter().zip(&im.embedding).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            // triangle inequality on f + g·P(f) + n
            let g = yaw_coefficient(im.pose.yaw, GateMode::Nonlinear);
            assert!(dist <= g * shift_norm + noise_norm + 1e-12);
            if im.pose.yaw == 0.0 {
                assert!(g < 0.27);
            }
        }
        assert!(noise > 0.0);
    }

    #[test]
    fn reproducible() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthConfig { seed: 5, ..small() }).unwrap();
        assert_ne!(a.images[0].embedding, c.images[0].embedding);
    }

    #[test]
    fn records_are_consistent() {
        for kind in [PerturbationKind::Linear, PerturbationKind::NonlinearMlp] {
            let ds = generate(&SynthConfig {
                perturbation: kind,
                ..small()
            })
            .unwrap();
            assert_eq!(ds.consistency_error(), 0.0);
            for s in &ds.subjects {
                let n = s.frontal.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_landmarks_give_true_yaw() {
        let ds = generate(&small()).unwrap();
        let model = FaceModel3D::builtin();
        let cam = ds.config.camera();
        for im in &ds.images {
            let est = estimate_pose(&model, &im.landmarks, &cam).unwrap();
            assert!((est.yaw - im.pose.yaw).abs() < 1e-4, "{} vs {}", est.yaw, im.pose.yaw);
        }
    }

    #[test]
    fn nilpotent_map_has_an_exact_affine_inverse() {
        use crate::block::{dream_forward, Arch, DreamParams};
        let ds = generate(&SynthConfig {
            perturbation: PerturbationKind::Nilpotent,
            embedding_noise: Some(0.0),
            ..small()
        })
        .unwrap();
        let Perturbation::Linear { a, b, .. } = &ds.perturbation else {
            panic!("nilpotent maps are stored as linear")
        };
        let d = ds.config.embedding_dim;
        let mut block = DreamParams::zeros(Arch::OneFc, d, 0);
        block.w2 = a.iter().map(|v| -v).collect();
        block.b2 = b.iter().map(|v| -v).collect();
        for im in &ds.images {
            let e = ds.image_embedding(im);
            let fixed = dream_forward(&block, &e, yaw_coefficient(im.pose.yaw, GateMode::Nonlinear)).unwrap();
            let f = &ds.subjects[im.subject].frontal;
            for (x, y) in fixed.values.iter().zip(f) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_config() {
        assert!(generate(&SynthConfig {
            num_subjects: 0,
            ..small()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            perturbation_scale: -1.0,
            ..small()
        })
        .is_err());
    }
}
