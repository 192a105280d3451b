//! Synthetic data: parametric canonical shapes per category, seeded
//! instance generation and depth-map back-projection.
//!
//! Canonical shapes are surface-sampled point sets, diagonal-normalized so
//! the box diagonal is exactly 1 (NOCS convention). A small set of anchor
//! points pins the analytic bounding box, so box-derived quantities are
//! exact rather than sampling-limited.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::augment::{HingeLine, PerturbOptions, PlaneHalf};
use crate::error::{Error, Result};
use crate::shape_prior::canonical_bbox;
use crate::types::{Category, Pose9D, SymmetryTag};

/// Pinhole intrinsics with a depth-unit scale (meters per depth unit).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub depth_scale: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, depth_scale: f64) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::DegenerateInput(format!(
                "focal lengths must be positive, got ({fx}, {fy})"
            )));
        }
        Ok(Self { fx, fy, cx, cy, depth_scale })
    }
}

/// Row-major depth image.
#[derive(Debug, Clone)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: format!("{} depth values", width * height),
                got: format!("{}", data.len()),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }
}

/// Back-projects masked pixels to camera-frame points:
/// `((u - cx) z / fx, (v - cy) z / fy, z)` with `z = depth * depth_scale`.
pub fn backproject(
    depth: &DepthMap,
    mask: &[bool],
    intrinsics: &CameraIntrinsics,
) -> Result<Vec<Vector3<f64>>> {
    if mask.len() != depth.data.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} mask entries", depth.data.len()),
            got: format!("{}", mask.len()),
        });
    }
    let mut points = Vec::new();
    for v in 0..depth.height {
        for u in 0..depth.width {
            if !mask[v * depth.width + u] {
                continue;
            }
            let d = depth.at(u, v);
            if !(d > 0.0) {
                return Err(Error::NonPositiveDepth { u, v, depth: d });
            }
            let z = d * intrinsics.depth_scale;
            points.push(Vector3::new(
                (u as f64 - intrinsics.cx) * z / intrinsics.fx,
                (v as f64 - intrinsics.cy) * z / intrinsics.fy,
                z,
            ));
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(points)
}

/// Canonical point set of one category, with the articulation metadata
/// needed by the laptop hinge augmentation.
#[derive(Debug, Clone)]
pub struct CanonicalShape {
    pub points: Vec<Vector3<f64>>,
    pub labels: Option<Vec<PlaneHalf>>,
    pub hinge: Option<HingeLine>,
}

/// Default laptop opening angle between base and lid, degrees.
pub const DEFAULT_LAPTOP_OPENING_DEG: f64 = 110.0;

// Shape sampling uses a fixed per-category stream, so the category prior is
// a constant independent of instance seeds.
fn prior_seed(category: Category) -> u64 {
    0x5052_1000 + category as u64
}

struct Patch {
    area: f64,
    sample: Box<dyn Fn(&mut ChaCha8Rng) -> Vector3<f64>>,
    label: PlaneHalf,
}

fn cylinder_patches(radius: f64, height: f64) -> Vec<Patch> {
    let h2 = height / 2.0;
    let lateral = Patch {
        area: 2.0 * std::f64::consts::PI * radius * height,
        sample: Box::new(move |rng| {
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let y = rng.gen_range(-h2..h2);
            Vector3::new(radius * phi.cos(), y, radius * phi.sin())
        }),
        label: PlaneHalf::Lower,
    };
    let cap = move |y: f64| Patch {
        area: std::f64::consts::PI * radius * radius,
        sample: Box::new(move |rng| {
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = radius * rng.gen_range(0.0..1.0f64).sqrt();
            Vector3::new(r * phi.cos(), y, r * phi.sin())
        }),
        label: PlaneHalf::Lower,
    };
    vec![lateral, cap(h2), cap(-h2)]
}

fn cylinder_anchors(radius: f64, height: f64) -> Vec<Vector3<f64>> {
    let h2 = height / 2.0;
    let mut anchors = Vec::new();
    for y in [h2, -h2] {
        anchors.push(Vector3::new(radius, y, 0.0));
        anchors.push(Vector3::new(-radius, y, 0.0));
        anchors.push(Vector3::new(0.0, y, radius));
        anchors.push(Vector3::new(0.0, y, -radius));
    }
    anchors
}

fn box_patches(extents: Vector3<f64>, center: Vector3<f64>, label: PlaneHalf) -> Vec<Patch> {
    let h = extents / 2.0;
    let mut patches = Vec::new();
    for axis in 0..3 {
        let (u_axis, v_axis) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let area = extents[u_axis] * extents[v_axis];
        for sign in [1.0, -1.0] {
            patches.push(Patch {
                area,
                sample: Box::new(move |rng: &mut ChaCha8Rng| {
                    let mut p = center;
                    p[axis] += sign * h[axis];
                    p[u_axis] += rng.gen_range(-h[u_axis]..h[u_axis]);
                    p[v_axis] += rng.gen_range(-h[v_axis]..h[v_axis]);
                    p
                }),
                label,
            });
        }
    }
    patches
}

fn box_corners(extents: Vector3<f64>, center: Vector3<f64>) -> Vec<Vector3<f64>> {
    let h = extents / 2.0;
    (0..8)
        .map(|i| {
            center
                + Vector3::new(
                    if i & 1 == 0 { -h.x } else { h.x },
                    if i & 2 == 0 { -h.y } else { h.y },
                    if i & 4 == 0 { -h.z } else { h.z },
                )
        })
        .collect()
}

fn hemisphere_patch(radius: f64) -> Patch {
    // Lower hemisphere shell (y <= 0); the y coordinate of a uniform sphere
    // sample is itself uniform.
    Patch {
        area: 2.0 * std::f64::consts::PI * radius * radius,
        sample: Box::new(move |rng| {
            let y = -radius * rng.gen_range(0.0..1.0f64);
            let ring = (radius * radius - y * y).max(0.0).sqrt();
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            Vector3::new(ring * phi.cos(), y, ring * phi.sin())
        }),
        label: PlaneHalf::Lower,
    }
}

fn raw_shape(category: Category, opening_deg: f64) -> (Vec<Patch>, Vec<Vector3<f64>>, Option<HingeLine>) {
    match category {
        Category::Bottle => {
            let (r, h) = (0.30, 1.0);
            (cylinder_patches(r, h), cylinder_anchors(r, h), None)
        }
        Category::Can => {
            let (r, h) = (0.40, 0.80);
            (cylinder_patches(r, h), cylinder_anchors(r, h), None)
        }
        Category::Bowl => {
            let (outer, inner) = (0.50, 0.44);
            let mut patches = vec![hemisphere_patch(outer), hemisphere_patch(inner)];
            // Flat rim annulus at y = 0 between the two shells.
            patches.push(Patch {
                area: std::f64::consts::PI * (outer * outer - inner * inner),
                sample: Box::new(move |rng| {
                    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                    let r = rng.gen_range(inner * inner..outer * outer).sqrt();
                    Vector3::new(r * phi.cos(), 0.0, r * phi.sin())
                }),
                label: PlaneHalf::Lower,
            });
            let anchors = vec![
                Vector3::new(outer, 0.0, 0.0),
                Vector3::new(-outer, 0.0, 0.0),
                Vector3::new(0.0, 0.0, outer),
                Vector3::new(0.0, 0.0, -outer),
                Vector3::new(0.0, -outer, 0.0),
            ];
            (patches, anchors, None)
        }
        Category::Camera => {
            let body = Vector3::new(0.70, 0.50, 0.35);
            let (lens_r, lens_len) = (0.14, 0.25);
            let mut patches = box_patches(body, Vector3::zeros(), PlaneHalf::Lower);
            let x0 = body.x / 2.0;
            patches.push(Patch {
                area: std::f64::consts::TAU * lens_r * lens_len,
                sample: Box::new(move |rng| {
                    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                    let x = rng.gen_range(x0..x0 + lens_len);
                    Vector3::new(x, lens_r * phi.sin(), lens_r * phi.cos())
                }),
                label: PlaneHalf::Lower,
            });
            patches.push(Patch {
                area: std::f64::consts::PI * lens_r * lens_r,
                sample: Box::new(move |rng| {
                    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                    let r = lens_r * rng.gen_range(0.0..1.0f64).sqrt();
                    Vector3::new(x0 + lens_len, r * phi.sin(), r * phi.cos())
                }),
                label: PlaneHalf::Lower,
            });
            let mut anchors = box_corners(body, Vector3::zeros());
            let tip = x0 + lens_len;
            anchors.push(Vector3::new(tip, lens_r, 0.0));
            anchors.push(Vector3::new(tip, -lens_r, 0.0));
            anchors.push(Vector3::new(tip, 0.0, lens_r));
            anchors.push(Vector3::new(tip, 0.0, -lens_r));
            (patches, anchors, None)
        }
        Category::Laptop => {
            let (len, thick, width) = (1.0, 0.04, 0.70);
            // Base slab below y = 0, hinge along z at its -x edge.
            let base_extents = Vector3::new(len, thick, width);
            let base_center = Vector3::new(0.0, -thick / 2.0, 0.0);
            let hinge_point = Vector3::new(-len / 2.0, 0.0, 0.0);
            let alpha = opening_deg.to_radians();
            let dir = Vector3::new(alpha.cos(), alpha.sin(), 0.0);
            let normal = Vector3::new(-alpha.sin(), alpha.cos(), 0.0);
            let lid_len = 0.65;

            let mut patches = box_patches(base_extents, base_center, PlaneHalf::Lower);
            // Lid: the two large faces of a thin slab hinged at -x.
            for w in [0.0, thick] {
                patches.push(Patch {
                    area: lid_len * width,
                    sample: Box::new(move |rng| {
                        let u = rng.gen_range(0.0..lid_len);
                        let z = rng.gen_range(-width / 2.0..width / 2.0);
                        hinge_point + u * dir + w * normal + Vector3::new(0.0, 0.0, z)
                    }),
                    label: PlaneHalf::Upper,
                });
            }
            let mut anchors = box_corners(base_extents, base_center);
            for u in [0.0, lid_len] {
                for w in [0.0, thick] {
                    for z in [-width / 2.0, width / 2.0] {
                        anchors.push(hinge_point + u * dir + w * normal + Vector3::new(0.0, 0.0, z));
                    }
                }
            }
            let hinge = HingeLine { point: hinge_point, axis: Vector3::z() };
            (patches, anchors, Some(hinge))
        }
        Category::Mug => {
            let (r, h) = (0.35, 0.80);
            let (ring_r, tube_r) = (0.20, 0.045);
            let mut patches = cylinder_patches(r, h);
            // Handle: half a torus in the xy-plane attached to the +x wall.
            patches.push(Patch {
                area: std::f64::consts::PI * ring_r * std::f64::consts::TAU * tube_r,
                sample: Box::new(move |rng| {
                    let phi = rng.gen_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
                    let psi = rng.gen_range(0.0..std::f64::consts::TAU);
                    let radial = Vector3::new(phi.cos(), phi.sin(), 0.0);
                    let path = Vector3::new(r, 0.0, 0.0) + ring_r * radial;
                    path + tube_r * (psi.cos() * radial + psi.sin() * Vector3::z())
                }),
                label: PlaneHalf::Lower,
            });
            let mut anchors = cylinder_anchors(r, h);
            anchors.push(Vector3::new(r + ring_r + tube_r, 0.0, 0.0));
            (patches, anchors, None)
        }
    }
}

/// Surface-samples the canonical shape of a category with `m` points,
/// centers it and normalizes by the bounding-box diagonal. Deterministic:
/// the sampling stream is fixed per category.
pub fn canonical_shape(category: Category, m: usize, opening_deg: f64) -> Result<CanonicalShape> {
    let (patches, anchors, hinge) = raw_shape(category, opening_deg);
    if m < anchors.len() {
        return Err(Error::DegenerateInput(format!(
            "{category} needs at least {} points for its anchor set, got {m}",
            anchors.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(prior_seed(category));
    let total_area: f64 = patches.iter().map(|p| p.area).sum();

    let mut points = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for a in &anchors {
        points.push(*a);
        // Anchors on the lid are exactly the points reached by the lid
        // patches; everything else belongs to the static body.
        labels.push(PlaneHalf::Lower);
    }
    if category == Category::Laptop {
        // The 8 lid corner anchors follow the 8 base corners.
        for label in labels.iter_mut().skip(8) {
            *label = PlaneHalf::Upper;
        }
    }
    while points.len() < m {
        let mut pick = rng.gen_range(0.0..total_area);
        let mut chosen = patches.len() - 1;
        for (i, patch) in patches.iter().enumerate() {
            if pick < patch.area {
                chosen = i;
                break;
            }
            pick -= patch.area;
        }
        points.push((patches[chosen].sample)(&mut rng));
        labels.push(patches[chosen].label);
    }

    // Center and diagonal-normalize; anchors make the box analytic-exact.
    let (size, center) = canonical_bbox(&points)?;
    let diag = size.norm();
    for p in &mut points {
        *p = (*p - center) / diag;
    }
    let hinge = hinge.map(|h| HingeLine { point: (h.point - center) / diag, axis: h.axis });

    let labels = (category == Category::Laptop).then_some(labels);
    Ok(CanonicalShape { points, labels, hinge })
}

/// Sampling bounds for random poses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseSampler {
    pub diag_m: [f64; 2],
    pub translation_xy_m: [f64; 2],
    pub translation_z_m: [f64; 2],
}

impl Default for PoseSampler {
    fn default() -> Self {
        let pose = crate::config::PoseConfig::default();
        Self {
            diag_m: pose.diag_m,
            translation_xy_m: pose.translation_xy_m,
            translation_z_m: pose.translation_z_m,
        }
    }
}

impl PoseSampler {
    /// Uniform rotation, bounded translation, and a metric size scaling the
    /// unit-diagonal NOCS box size by a random diagonal length.
    pub fn sample<R: Rng>(&self, nocs_size: &Vector3<f64>, rng: &mut R) -> Pose9D {
        let rotation = random_rotation(rng);
        let diag = rng.gen_range(self.diag_m[0]..=self.diag_m[1]);
        let translation = Vector3::new(
            rng.gen_range(self.translation_xy_m[0]..=self.translation_xy_m[1]),
            rng.gen_range(self.translation_xy_m[0]..=self.translation_xy_m[1]),
            rng.gen_range(self.translation_z_m[0]..=self.translation_z_m[1]),
        );
        Pose9D::new(rotation, translation, diag * nocs_size)
            .expect("sampled pose parameters are valid")
    }
}

/// Uniform random rotation (normalized quaternion of four normal deviates).
pub fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    let q = nalgebra::Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    *nalgebra::UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix()
}

/// Random rotation whose angle is at most `max_angle_rad`.
pub fn random_rotation_within<R: Rng>(max_angle_rad: f64, rng: &mut R) -> Matrix3<f64> {
    let v: Vector3<f64> = Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    let axis = if v.norm() == 0.0 { Vector3::x() } else { v.normalize() };
    let angle = rng.gen_range(0.0..=max_angle_rad);
    *Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).matrix()
}

/// Generation settings for a synthetic instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceParams {
    /// Observed cloud size.
    pub n_points: usize,
    /// Canonical model size.
    pub m_points: usize,
    /// Per-axis scale variation range applied to the category prior.
    pub axis_scale: [f64; 2],
    /// Laptop opening angle in degrees.
    pub laptop_opening_deg: f64,
    pub pose: PoseSampler,
    /// Observation perturbations, applied with consistent pose relabeling.
    pub perturb: PerturbOptions,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self {
            n_points: 1024,
            m_points: 1024,
            axis_scale: [1.0, 1.0],
            laptop_opening_deg: DEFAULT_LAPTOP_OPENING_DEG,
            pose: PoseSampler::default(),
            perturb: PerturbOptions::default(),
        }
    }
}

/// One synthetic observation: canonical model, ground-truth pose and the
/// observed camera-frame cloud, all reproducible from the seed.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub category: Category,
    pub seed: u64,
    pub sym: SymmetryTag,
    pub pose: Pose9D,
    /// Canonical model points in NOCS (diagonal-normalized).
    pub canonical_model: Vec<Vector3<f64>>,
    /// Observed camera-frame cloud.
    pub observed: Vec<Vector3<f64>>,
    /// Index of the canonical point each observed point was sampled from.
    pub correspondence: Vec<usize>,
    /// Upper/lower part labels per canonical point (laptop only).
    pub labels: Option<Vec<PlaneHalf>>,
    /// Hinge line in NOCS (laptop only).
    pub hinge: Option<HingeLine>,
}

impl SyntheticInstance {
    /// Exact NOCS coordinates of the observed points (before perturbation).
    pub fn observed_nocs(&self) -> Vec<crate::types::NocsCoord> {
        self.correspondence
            .iter()
            .map(|&i| crate::types::NocsCoord(self.canonical_model[i]))
            .collect()
    }
}

/// Generates a synthetic instance: the category prior scaled per axis by a
/// seeded random factor, renormalized, posed with a random valid pose and
/// observed through that pose. Bitwise deterministic per seed.
pub fn generate_instance(
    category: Category,
    params: &InstanceParams,
    seed: u64,
) -> Result<SyntheticInstance> {
    let shape = canonical_shape(category, params.m_points, params.laptop_opening_deg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Instance variation: per-axis stretch of the prior, then renormalize.
    let scale = Vector3::new(
        rng.gen_range(params.axis_scale[0]..=params.axis_scale[1]),
        rng.gen_range(params.axis_scale[0]..=params.axis_scale[1]),
        rng.gen_range(params.axis_scale[0]..=params.axis_scale[1]),
    );
    let mut model: Vec<Vector3<f64>> = shape
        .points
        .iter()
        .map(|p| Vector3::new(scale.x * p.x, scale.y * p.y, scale.z * p.z))
        .collect();
    let (size, center) = canonical_bbox(&model)?;
    let diag = size.norm();
    for p in &mut model {
        *p = (*p - center) / diag;
    }
    let hinge = shape.hinge.map(|h| HingeLine {
        point: (Vector3::new(scale.x * h.point.x, scale.y * h.point.y, scale.z * h.point.z) - center) / diag,
        axis: h.axis,
    });

    let (nocs_size, _) = canonical_bbox(&model)?;
    let pose = params.pose.sample(&nocs_size, &mut rng);

    let correspondence: Vec<usize> = if params.n_points == params.m_points {
        (0..params.m_points).collect()
    } else {
        (0..params.n_points).map(|_| rng.gen_range(0..params.m_points)).collect()
    };
    let diag_m = pose.diagonal();
    let observed: Vec<Vector3<f64>> = correspondence
        .iter()
        .map(|&i| pose.rotation() * (diag_m * model[i]) + pose.translation())
        .collect();

    let (observed, pose) =
        crate::augment::perturb_observation(&observed, &pose, &params.perturb, &mut rng);

    Ok(SyntheticInstance {
        category,
        seed,
        sym: SymmetryTag::default_for(category),
        pose,
        canonical_model: model,
        observed,
        correspondence,
        labels: shape.labels,
        hinge,
    })
}
