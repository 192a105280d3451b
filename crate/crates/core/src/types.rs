//! Core pose and coordinate types shared by every module.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the orthonormality and determinant checks on rotations.
pub const ROTATION_TOL: f64 = 1e-9;

/// Full 9DoF pose: rotation, metric translation and metric size.
///
/// The rotation columns are the directed normals of the object bounding-box
/// faces; `size` holds the full edge lengths in meters. Serialization goes
/// through explicit file schemas so that deserialized poses are validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose9D {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    size: Vector3<f64>,
}

impl Pose9D {
    /// Builds a pose, checking orthonormality (`R^T R = I`, `det R = +1`
    /// within 1e-9) and strictly positive size components.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>, size: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if ortho_err > ROTATION_TOL {
            return Err(Error::DegenerateInput(format!(
                "rotation not orthonormal, |R^T R - I| = {ortho_err:.3e}"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::DegenerateInput(format!(
                "rotation determinant {det} is not +1"
            )));
        }
        if size.iter().any(|&s| s <= 0.0) {
            return Err(Error::DegenerateInput(format!(
                "size components must be strictly positive, got {size:?}"
            )));
        }
        Ok(Self { rotation, translation, size })
    }

    /// Identity rotation, zero translation, given size.
    pub fn from_size(size: Vector3<f64>) -> Result<Self> {
        Self::new(Matrix3::identity(), Vector3::zeros(), size)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn size(&self) -> &Vector3<f64> {
        &self.size
    }

    /// Rotation column for an axis index (0 = x, 1 = y, 2 = z).
    pub fn axis(&self, axis: usize) -> Vector3<f64> {
        self.rotation.column(axis).into_owned()
    }

    /// Diagonal length of the bounding box, `sqrt(sx^2 + sy^2 + sz^2)`.
    pub fn diagonal(&self) -> f64 {
        self.size.norm()
    }
}

/// Oriented bounding box; a derived view of [`Pose9D`] used by IoU and
/// projection math. `extents` are full edge lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub extents: Vector3<f64>,
}

impl OrientedBox {
    pub fn new(center: Vector3<f64>, rotation: Matrix3<f64>, extents: Vector3<f64>) -> Self {
        Self { center, rotation, extents }
    }

    /// Exact box volume.
    pub fn volume(&self) -> f64 {
        self.extents.x * self.extents.y * self.extents.z
    }

    /// The eight corner points in world coordinates.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let h = self.extents * 0.5;
        let mut out = [Vector3::zeros(); 8];
        for (i, corner) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -h.x } else { h.x };
            let sy = if i & 2 == 0 { -h.y } else { h.y };
            let sz = if i & 4 == 0 { -h.z } else { h.z };
            *corner = self.center + self.rotation * Vector3::new(sx, sy, sz);
        }
        out
    }

    /// True when `p` lies inside or on the box surface.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let local = self.rotation.transpose() * (p - self.center);
        local.x.abs() <= self.extents.x * 0.5
            && local.y.abs() <= self.extents.y * 0.5
            && local.z.abs() <= self.extents.z * 0.5
    }
}

impl From<&Pose9D> for OrientedBox {
    fn from(pose: &Pose9D) -> Self {
        Self {
            center: *pose.translation(),
            rotation: *pose.rotation(),
            extents: *pose.size(),
        }
    }
}

impl TryFrom<&OrientedBox> for Pose9D {
    type Error = Error;

    fn try_from(b: &OrientedBox) -> Result<Self> {
        Pose9D::new(b.rotation, b.center, b.extents)
    }
}

/// Coordinate in normalized object space. The space is normalized by the
/// bounding-box diagonal, so points of the object lie inside the ball of
/// radius 0.5 and each component lies in [-0.5, 0.5].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NocsCoord(pub Vector3<f64>);

impl NocsCoord {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }

    /// Whether the coordinate lies inside the diagonal-normalized bounds
    /// (`|c_i| <= 0.5` per component, with `tol` slack).
    pub fn in_bounds(&self, tol: f64) -> bool {
        self.0.iter().all(|c| c.abs() <= 0.5 + tol)
    }
}

impl From<Vector3<f64>> for NocsCoord {
    fn from(v: Vector3<f64>) -> Self {
        Self(v)
    }
}

/// Two predicted bounding-box plane normals with per-axis uncertainties,
/// the input of rotation calibration.
#[derive(Debug, Clone)]
pub struct RotationEstimate {
    rx: Vector3<f64>,
    ry: Vector3<f64>,
    ux: f64,
    uy: f64,
}

impl RotationEstimate {
    /// Validates unit length of both axes (within 1e-9), non-parallelism and
    /// non-negative uncertainties.
    pub fn new(rx: Vector3<f64>, ry: Vector3<f64>, ux: f64, uy: f64) -> Result<Self> {
        for (name, v) in [("rx", &rx), ("ry", &ry)] {
            if (v.norm() - 1.0).abs() > ROTATION_TOL {
                return Err(Error::DegenerateInput(format!(
                    "{name} must be unit length, |{name}| = {}",
                    v.norm()
                )));
            }
        }
        if rx.dot(&ry).abs() >= 1.0 - ROTATION_TOL {
            return Err(Error::DegenerateInput(
                "rx and ry are parallel; plane of rotation is undefined".into(),
            ));
        }
        if ux < 0.0 || uy < 0.0 {
            return Err(Error::DegenerateInput(format!(
                "uncertainties must be non-negative, got ({ux}, {uy})"
            )));
        }
        Ok(Self { rx, ry, ux, uy })
    }

    pub fn rx(&self) -> &Vector3<f64> {
        &self.rx
    }

    pub fn ry(&self) -> &Vector3<f64> {
        &self.ry
    }

    pub fn ux(&self) -> f64 {
        self.ux
    }

    pub fn uy(&self) -> f64 {
        self.uy
    }
}

/// Axis-aligned bounding box, used by the canonical-box math and IoU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    /// Tight box around a non-empty point set.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Option<Aabb> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Aabb { min: first, max: first };
        for p in it {
            b.min = b.min.inf(p);
            b.max = b.max.sup(p);
        }
        Some(b)
    }

    pub fn size(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn volume(&self) -> f64 {
        let s = self.size();
        s.x.max(0.0) * s.y.max(0.0) * s.z.max(0.0)
    }

    /// Intersection box; `None` when the boxes do not overlap.
    pub fn intersection(&self, other: &Aabb) -> Option<Aabb> {
        let min = self.min.sup(&other.min);
        let max = self.max.inf(&other.max);
        (min.x <= max.x && min.y <= max.y && min.z <= max.z).then_some(Aabb { min, max })
    }

    /// Smallest box covering both operands.
    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }
}

/// Object categories of the synthetic harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Bottle,
    Bowl,
    Camera,
    Can,
    Laptop,
    Mug,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Bottle,
        Category::Bowl,
        Category::Camera,
        Category::Can,
        Category::Laptop,
        Category::Mug,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Category::Bottle => "bottle",
            Category::Bowl => "bowl",
            Category::Camera => "camera",
            Category::Can => "can",
            Category::Laptop => "laptop",
            Category::Mug => "mug",
        }
    }

    /// Default symmetry assignment: bottle, bowl and can are rotationally
    /// symmetric about their y axis; camera, laptop and mug are not (the mug
    /// handle breaks the symmetry).
    pub fn default_symmetry(&self) -> SymmetryKind {
        match self {
            Category::Bottle | Category::Bowl | Category::Can => SymmetryKind::AxialY,
            Category::Camera | Category::Laptop | Category::Mug => SymmetryKind::None,
        }
    }

    /// Axis stretched non-linearly by A1 augmentation: the symmetry axis for
    /// bottle/can/bowl/mug, the lens axis (x) for camera.
    pub fn a1_axis(&self) -> usize {
        match self {
            Category::Camera => 0,
            _ => 1,
        }
    }
}

impl std::str::FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bottle" => Ok(Category::Bottle),
            "bowl" => Ok(Category::Bowl),
            "camera" => Ok(Category::Camera),
            "can" => Ok(Category::Can),
            "laptop" => Ok(Category::Laptop),
            "mug" => Ok(Category::Mug),
            other => Err(Error::UnknownCategory(other.into())),
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Symmetry class of a category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryKind {
    /// No rotational symmetry; all six box faces are unambiguous.
    None,
    /// Rotational symmetry about the canonical y axis; only the y faces are
    /// ambiguity-free.
    AxialY,
}

/// Category label plus its symmetry class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetryTag {
    pub category: Category,
    pub kind: SymmetryKind,
}

impl SymmetryTag {
    pub fn new(category: Category, kind: SymmetryKind) -> Self {
        Self { category, kind }
    }

    /// Tag with the category's default symmetry assignment.
    pub fn default_for(category: Category) -> Self {
        Self::new(category, category.default_symmetry())
    }
}
