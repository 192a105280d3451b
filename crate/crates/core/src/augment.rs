//! Shape and observation augmentation in the canonical frame: parabolic
//! axis scaling (A1), laptop hinge articulation (A2), the linear box
//! stretching baseline, and observed-cloud perturbations with consistent
//! pose relabeling.

use nalgebra::{Rotation3, Unit, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Category, Pose9D};

/// Sampling ranges for the augmentation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentRanges {
    /// Upper scale bound, sampled uniformly (default [1.0, 1.3]).
    pub gamma_max: [f64; 2],
    /// Lower scale bound, sampled uniformly (default [0.7, 1.0]).
    pub gamma_min: [f64; 2],
    /// Uniform scale of the non-selected axes (default [0.8, 1.2]).
    pub gamma: [f64; 2],
    /// Hinge angle range in degrees for A2 (default [-30, 30]).
    pub hinge_deg: [f64; 2],
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            gamma_max: [1.0, 1.3],
            gamma_min: [0.7, 1.0],
            gamma: [0.8, 1.2],
            hinge_deg: [-30.0, 30.0],
        }
    }
}

/// Sampled augmentation parameters. `axis` is the non-linearly scaled axis
/// (the symmetry axis, or the lens axis for camera); `hinge_angle` only
/// applies to A2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentParams {
    pub gamma_max: f64,
    pub gamma_min: f64,
    pub gamma: f64,
    pub axis: usize,
    pub hinge_angle: f64,
    pub seed: u64,
}

impl AugmentParams {
    /// Draws parameters for a category from the given ranges, deterministic
    /// in the seed.
    pub fn sample(category: Category, ranges: &AugmentRanges, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gamma_max = rng.gen_range(ranges.gamma_max[0]..=ranges.gamma_max[1]);
        let gamma_min = rng.gen_range(ranges.gamma_min[0]..=ranges.gamma_min[1]);
        let gamma = rng.gen_range(ranges.gamma[0]..=ranges.gamma[1]);
        let hinge_angle =
            rng.gen_range(ranges.hinge_deg[0].to_radians()..=ranges.hinge_deg[1].to_radians());
        Self {
            gamma_max,
            gamma_min,
            gamma,
            axis: category.a1_axis(),
            hinge_angle,
            seed,
        }
    }

    /// Parameters that leave every point unchanged.
    pub fn identity(axis: usize) -> Self {
        Self {
            gamma_max: 1.0,
            gamma_min: 1.0,
            gamma: 1.0,
            axis,
            hinge_angle: 0.0,
            seed: 0,
        }
    }
}

/// Truncated parabolic scale profile along the selected axis:
/// `gamma_min + 4 (gamma_max - gamma_min) p*^2`. The vertex sits at the
/// axis midpoint (`p* = 0`) and both box extremes (`p* = +-0.5`) reach
/// `gamma_max` exactly.
pub fn scale_profile(p_star: f64, params: &AugmentParams) -> f64 {
    params.gamma_min + 4.0 * (params.gamma_max - params.gamma_min) * p_star * p_star
}

/// Non-linear axis scaling: the selected-axis coordinate of every point is
/// scaled by the profile evaluated at its own projection, the other two
/// axes uniformly by `gamma`. Points are expected in the canonical frame
/// with the selected-axis coordinate in [-0.5, 0.5].
pub fn augment_a1(points: &[Vector3<f64>], params: &AugmentParams) -> Vec<Vector3<f64>> {
    let axis = params.axis;
    points
        .iter()
        .map(|p| {
            let mut out = Vector3::zeros();
            for c in 0..3 {
                let scale = if c == axis { scale_profile(p[axis], params) } else { params.gamma };
                out[c] = scale * p[c];
            }
            out
        })
        .collect()
}

/// Linear per-axis stretching of the bounding box; A1 degenerates to this
/// exactly when `gamma_min == gamma_max`.
pub fn augment_linear(points: &[Vector3<f64>], scales: &Vector3<f64>) -> Vec<Vector3<f64>> {
    points
        .iter()
        .map(|p| Vector3::new(scales.x * p.x, scales.y * p.y, scales.z * p.z))
        .collect()
}

/// Which rigid part of an articulated two-plane object a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneHalf {
    /// The movable plane, rotated about the hinge.
    Upper,
    /// The static plane.
    Lower,
}

/// Hinge line given by a point on the line and a unit direction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HingeLine {
    pub point: Vector3<f64>,
    pub axis: Vector3<f64>,
}

/// Hinge articulation for laptop-like objects: upper-plane points rotate by
/// `theta` about the hinge line, lower-plane points stay fixed, then the
/// per-axis scales apply to everything.
pub fn augment_a2(
    points: &[Vector3<f64>],
    labels: &[PlaneHalf],
    hinge: &HingeLine,
    theta: f64,
    scales: &Vector3<f64>,
) -> Result<Vec<Vector3<f64>>> {
    if labels.len() != points.len() {
        return Err(Error::UnlabeledPoints(format!(
            "{} labels for {} points",
            labels.len(),
            points.len()
        )));
    }
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(hinge.axis), theta);
    Ok(points
        .iter()
        .zip(labels)
        .map(|(p, half)| {
            let articulated = match half {
                PlaneHalf::Upper => hinge.point + rot * (p - hinge.point),
                PlaneHalf::Lower => *p,
            };
            Vector3::new(
                scales.x * articulated.x,
                scales.y * articulated.y,
                scales.z * articulated.z,
            )
        })
        .collect())
}

/// Observation perturbation settings. All defaults are off.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PerturbOptions {
    /// Standard deviation of per-component Gaussian point noise (m).
    pub noise_sigma: f64,
    /// Maximum rigid rotation jitter angle (rad).
    pub rot_jitter_rad: f64,
    /// Per-component uniform translation jitter bound (m).
    pub trans_jitter_m: f64,
}

impl Default for PerturbOptions {
    fn default() -> Self {
        Self { noise_sigma: 0.0, rot_jitter_rad: 0.0, trans_jitter_m: 0.0 }
    }
}

/// Perturbs an observed cloud with Gaussian noise and a random rigid jitter,
/// updating the pose label so the ground truth stays exact: the jitter maps
/// both the points and the pose, only the noise is unlabeled.
pub fn perturb_observation<R: Rng>(
    points: &[Vector3<f64>],
    pose: &Pose9D,
    opts: &PerturbOptions,
    rng: &mut R,
) -> (Vec<Vector3<f64>>, Pose9D) {
    let delta_rot = if opts.rot_jitter_rad > 0.0 {
        let axis: Vector3<f64> = {
            let v = Vector3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            if v.norm() == 0.0 {
                Vector3::x()
            } else {
                v.normalize()
            }
        };
        let angle = rng.gen_range(0.0..opts.rot_jitter_rad);
        *Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).matrix()
    } else {
        nalgebra::Matrix3::identity()
    };
    let delta_t = if opts.trans_jitter_m > 0.0 {
        Vector3::new(
            rng.gen_range(-opts.trans_jitter_m..opts.trans_jitter_m),
            rng.gen_range(-opts.trans_jitter_m..opts.trans_jitter_m),
            rng.gen_range(-opts.trans_jitter_m..opts.trans_jitter_m),
        )
    } else {
        Vector3::zeros()
    };

    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let mut q = delta_rot * p + delta_t;
        if opts.noise_sigma > 0.0 {
            for c in 0..3 {
                let z: f64 = rng.sample(StandardNormal);
                q[c] += opts.noise_sigma * z;
            }
        }
        out.push(q);
    }
    let new_pose = Pose9D::new(
        delta_rot * pose.rotation(),
        delta_rot * pose.translation() + delta_t,
        *pose.size(),
    )
    .expect("rigid jitter preserves pose validity");
    (out, new_pose)
}
