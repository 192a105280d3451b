//! Displacement fields from observed points to bounding-box faces.
//!
//! A point's displacement to a face is stored as a signed scalar magnitude;
//! the direction is implied by the pose rotation (`sign * R * n_axis`).
//! Camera-space fields, their NOCS counterparts, prior-driven hypotheses and
//! residual fields all live here, together with a least-squares decoder that
//! recovers the full 9DoF pose from a field.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::closest_rotation;
use crate::types::{NocsCoord, Pose9D, SymmetryKind, SymmetryTag};

/// Version stamp written into every serialized field file.
pub const FIELD_SCHEMA_VERSION: u32 = 1;

/// One of the six directed bounding-box faces.
///
/// The canonical order, used for every per-face array and serialized mask,
/// is `x+ x- y+ y- z+ z-`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceId {
    XPos,
    XNeg,
    YPos,
    YNeg,
    ZPos,
    ZNeg,
}

impl FaceId {
    pub const ALL: [FaceId; 6] = [
        FaceId::XPos,
        FaceId::XNeg,
        FaceId::YPos,
        FaceId::YNeg,
        FaceId::ZPos,
        FaceId::ZNeg,
    ];

    /// Axis index: 0 = x, 1 = y, 2 = z.
    pub fn axis(&self) -> usize {
        match self {
            FaceId::XPos | FaceId::XNeg => 0,
            FaceId::YPos | FaceId::YNeg => 1,
            FaceId::ZPos | FaceId::ZNeg => 2,
        }
    }

    /// +1 for positive faces, -1 for negative faces.
    pub fn sign(&self) -> f64 {
        match self {
            FaceId::XPos | FaceId::YPos | FaceId::ZPos => 1.0,
            _ => -1.0,
        }
    }

    /// Position in the canonical face order.
    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn positive(axis: usize) -> FaceId {
        Self::ALL[axis * 2]
    }

    pub fn negative(axis: usize) -> FaceId {
        Self::ALL[axis * 2 + 1]
    }

    /// Face normal in the canonical (object) frame.
    pub fn canonical_normal(&self) -> Vector3<f64> {
        let mut n = Vector3::zeros();
        n[self.axis()] = self.sign();
        n
    }
}

/// Validity mask over the six faces, in canonical face order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceMask(pub [bool; 6]);

impl FaceMask {
    pub fn all() -> Self {
        FaceMask([true; 6])
    }

    pub fn none() -> Self {
        FaceMask([false; 6])
    }

    pub fn contains(&self, face: FaceId) -> bool {
        self.0[face.index()]
    }

    pub fn is_full(&self) -> bool {
        self.0.iter().all(|&b| b)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Iterator over the valid faces in canonical order.
    pub fn faces(&self) -> impl Iterator<Item = FaceId> + '_ {
        FaceId::ALL.into_iter().filter(move |f| self.contains(*f))
    }
}

/// The set of ambiguity-free faces for a symmetry class: all six when there
/// is no symmetry, only `y+`/`y-` for axial-y symmetric categories.
pub fn valid_faces(sym: &SymmetryTag) -> FaceMask {
    match sym.kind {
        SymmetryKind::None => FaceMask::all(),
        SymmetryKind::AxialY => {
            let mut m = FaceMask::none();
            m.0[FaceId::YPos.index()] = true;
            m.0[FaceId::YNeg.index()] = true;
            m
        }
    }
}

/// Per-face signed scalars for a single point in NOCS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceScalars {
    pub values: [f64; 6],
    pub mask: FaceMask,
}

impl FaceScalars {
    pub fn get(&self, face: FaceId) -> Option<f64> {
        self.mask.contains(face).then(|| self.values[face.index()])
    }
}

/// Per-face camera-frame displacement vectors for a single point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceVectors {
    pub values: [Vector3<f64>; 6],
    pub mask: FaceMask,
}

impl FaceVectors {
    pub fn get(&self, face: FaceId) -> Option<Vector3<f64>> {
        self.mask.contains(face).then(|| self.values[face.index()])
    }
}

/// Camera-space displacement field from observed points to bounding-box
/// faces: a signed scalar per point and face, with the direction implied by
/// the stored rotation. Masked-out faces hold zeros and are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionField {
    n_points: usize,
    mask: FaceMask,
    rotation: Matrix3<f64>,
    scalars: Vec<f64>,
}

impl ProjectionField {
    /// Builds a field from raw row-major scalars (`n_points * 6`, point-major
    /// in canonical face order).
    pub fn from_scalars(
        n_points: usize,
        mask: FaceMask,
        rotation: Matrix3<f64>,
        scalars: Vec<f64>,
    ) -> Result<Self> {
        if scalars.len() != n_points * 6 {
            return Err(Error::ShapeMismatch {
                expected: format!("{} scalars", n_points * 6),
                got: format!("{}", scalars.len()),
            });
        }
        Ok(Self { n_points, mask, rotation, scalars })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn mask(&self) -> &FaceMask {
        &self.mask
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn scalars(&self) -> &[f64] {
        &self.scalars
    }

    /// Signed magnitude for a point/face pair; `None` when the face is masked.
    pub fn scalar(&self, point: usize, face: FaceId) -> Option<f64> {
        self.mask.contains(face).then(|| self.scalars[point * 6 + face.index()])
    }

    /// Directed face normal in the camera frame: `sign * R * n_axis`.
    pub fn direction(&self, face: FaceId) -> Vector3<f64> {
        face.sign() * self.rotation.column(face.axis()).into_owned()
    }

    /// Displacement vector `scalar * sign * r_axis` for a point/face pair.
    pub fn vector(&self, point: usize, face: FaceId) -> Option<Vector3<f64>> {
        self.scalar(point, face).map(|s| s * self.direction(face))
    }

    /// Per-point view of all six faces.
    pub fn point_vectors(&self, point: usize) -> FaceVectors {
        let mut values = [Vector3::zeros(); 6];
        for face in self.mask.faces() {
            values[face.index()] = self.vector(point, face).unwrap();
        }
        FaceVectors { values, mask: self.mask }
    }

    /// Expands the compact scalar representation into raw vectors.
    pub fn to_vector_field(&self) -> VectorField {
        let mut vectors = vec![Vector3::zeros(); self.n_points * 6];
        for i in 0..self.n_points {
            for face in self.mask.faces() {
                vectors[i * 6 + face.index()] = self.vector(i, face).unwrap();
            }
        }
        VectorField { n_points: self.n_points, mask: self.mask, vectors }
    }

    /// Mean vector norm over valid point/face entries.
    pub fn mean_norm(&self) -> f64 {
        mean_over_valid(self.n_points, &self.mask, |i, f| {
            self.scalar(i, f).unwrap().abs()
        })
    }
}

/// Raw per-point, per-face displacement vectors. This is the decoder's input
/// representation; unlike [`ProjectionField`] the vectors are free and may
/// carry noise that is not aligned with any face normal.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    n_points: usize,
    mask: FaceMask,
    vectors: Vec<Vector3<f64>>,
}

impl VectorField {
    pub fn from_vectors(n_points: usize, mask: FaceMask, vectors: Vec<Vector3<f64>>) -> Result<Self> {
        if vectors.len() != n_points * 6 {
            return Err(Error::ShapeMismatch {
                expected: format!("{} vectors", n_points * 6),
                got: format!("{}", vectors.len()),
            });
        }
        Ok(Self { n_points, mask, vectors })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn mask(&self) -> &FaceMask {
        &self.mask
    }

    pub fn vector(&self, point: usize, face: FaceId) -> Option<Vector3<f64>> {
        self.mask.contains(face).then(|| self.vectors[point * 6 + face.index()])
    }

    /// Raw entries (`n_points * 6`, point-major); masked faces hold zeros.
    pub fn vectors(&self) -> &[Vector3<f64>] {
        &self.vectors
    }

    /// Adds independent zero-mean Gaussian noise to every valid entry.
    pub fn with_noise<R: rand::Rng>(&self, sigma: f64, rng: &mut R) -> VectorField {
        use rand_distr::StandardNormal;
        let mut out = self.clone();
        for i in 0..self.n_points {
            for face in self.mask.faces() {
                let idx = i * 6 + face.index();
                for c in 0..3 {
                    let z: f64 = rng.sample(StandardNormal);
                    out.vectors[idx][c] += sigma * z;
                }
            }
        }
        out
    }

    /// Mean vector norm over valid point/face entries.
    pub fn mean_norm(&self) -> f64 {
        mean_over_valid(self.n_points, &self.mask, |i, f| {
            self.vector(i, f).unwrap().norm()
        })
    }
}

/// Residual field: ground-truth displacement minus hypothesis displacement,
/// per point and valid face.
#[derive(Debug, Clone, PartialEq)]
pub struct SprvField {
    n_points: usize,
    mask: FaceMask,
    residuals: Vec<Vector3<f64>>,
}

impl SprvField {
    pub fn from_residuals(n_points: usize, mask: FaceMask, residuals: Vec<Vector3<f64>>) -> Result<Self> {
        if residuals.len() != n_points * 6 {
            return Err(Error::ShapeMismatch {
                expected: format!("{} residuals", n_points * 6),
                got: format!("{}", residuals.len()),
            });
        }
        Ok(Self { n_points, mask, residuals })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn mask(&self) -> &FaceMask {
        &self.mask
    }

    pub fn residual(&self, point: usize, face: FaceId) -> Option<Vector3<f64>> {
        self.mask.contains(face).then(|| self.residuals[point * 6 + face.index()])
    }

    /// Raw entries (`n_points * 6`, point-major); masked faces hold zeros.
    pub fn residuals(&self) -> &[Vector3<f64>] {
        &self.residuals
    }

    /// Reconstructs the field the residuals correct toward:
    /// `hypothesis + residual` per valid entry.
    pub fn apply_to(&self, hypothesis: &ProjectionField) -> Result<VectorField> {
        check_compatible(self.n_points, &self.mask, hypothesis.n_points(), hypothesis.mask())?;
        let mut vectors = vec![Vector3::zeros(); self.n_points * 6];
        for i in 0..self.n_points {
            for face in self.mask.faces() {
                vectors[i * 6 + face.index()] =
                    hypothesis.vector(i, face).unwrap() + self.residual(i, face).unwrap();
            }
        }
        Ok(VectorField { n_points: self.n_points, mask: self.mask, vectors })
    }

    /// Mean residual norm over valid entries.
    pub fn mean_norm(&self) -> f64 {
        mean_over_valid(self.n_points, &self.mask, |i, f| {
            self.residual(i, f).unwrap().norm()
        })
    }
}

fn mean_over_valid(n: usize, mask: &FaceMask, f: impl Fn(usize, FaceId) -> f64) -> f64 {
    let count = n * mask.count();
    if count == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for face in mask.faces() {
            sum += f(i, face);
        }
    }
    sum / count as f64
}

fn check_compatible(n_a: usize, mask_a: &FaceMask, n_b: usize, mask_b: &FaceMask) -> Result<()> {
    if n_a != n_b {
        return Err(Error::MaskMismatch(format!(
            "point counts differ: {n_a} vs {n_b}"
        )));
    }
    if mask_a != mask_b {
        return Err(Error::MaskMismatch(format!(
            "face masks differ: {:?} vs {:?}",
            mask_a.0, mask_b.0
        )));
    }
    Ok(())
}

/// Encodes camera-frame points into their displacement field under a pose:
/// for face `(axis, sign)` the scalar is `s_axis/2 - sign * <r_axis, P - t>`
/// and the vector form is `scalar * sign * r_axis`. Faces that are ambiguous
/// under the symmetry tag are masked out.
pub fn encode_dvpb(points: &[Vector3<f64>], pose: &Pose9D, sym: &SymmetryTag) -> ProjectionField {
    let mask = valid_faces(sym);
    let mut scalars = vec![0.0; points.len() * 6];
    for (i, p) in points.iter().enumerate() {
        let local = p - pose.translation();
        for face in mask.faces() {
            let axis = face.axis();
            let proj = pose.axis(axis).dot(&local);
            scalars[i * 6 + face.index()] = pose.size()[axis] * 0.5 - face.sign() * proj;
        }
    }
    ProjectionField {
        n_points: points.len(),
        mask,
        rotation: *pose.rotation(),
        scalars,
    }
}

/// Displacement scalars of a NOCS coordinate to the faces of a canonical
/// box of size `model_size`: `s_axis/2 - sign * coord_axis` per valid face.
pub fn encode_dvpb_nocs(coord: &NocsCoord, model_size: &Vector3<f64>, sym: &SymmetryTag) -> FaceScalars {
    let mask = valid_faces(sym);
    let mut values = [0.0; 6];
    for face in mask.faces() {
        let axis = face.axis();
        values[face.index()] = model_size[axis] * 0.5 - face.sign() * coord.0[axis];
    }
    FaceScalars { values, mask }
}

/// Transforms per-face NOCS scalars into camera-frame hypothesis vectors:
/// `L * scalar * sign * r_axis` per valid face.
pub fn hypothesize_dvpb(nocs: &FaceScalars, diagonal: f64, rotation: &Matrix3<f64>) -> FaceVectors {
    let mut values = [Vector3::zeros(); 6];
    for face in nocs.mask.faces() {
        let dir = face.sign() * rotation.column(face.axis()).into_owned();
        values[face.index()] = diagonal * nocs.values[face.index()] * dir;
    }
    FaceVectors { values, mask: nocs.mask }
}

/// Builds the full hypothesis field for a batch of NOCS coordinates. The
/// diagonal and rotation typically come from the category mean size and a
/// rotation prediction; passing the ground-truth values reproduces the
/// ground-truth field exactly when the coordinates are exact.
pub fn hypothesize_field(
    coords: &[NocsCoord],
    model_size: &Vector3<f64>,
    diagonal: f64,
    rotation: &Matrix3<f64>,
    sym: &SymmetryTag,
) -> ProjectionField {
    let mask = valid_faces(sym);
    let mut scalars = vec![0.0; coords.len() * 6];
    for (i, coord) in coords.iter().enumerate() {
        let nocs = encode_dvpb_nocs(coord, model_size, sym);
        for face in mask.faces() {
            scalars[i * 6 + face.index()] = diagonal * nocs.values[face.index()];
        }
    }
    ProjectionField {
        n_points: coords.len(),
        mask,
        rotation: *rotation,
        scalars,
    }
}

/// Entrywise residual `ground truth - hypothesis` over the shared mask.
pub fn compute_sprv(gt: &ProjectionField, hyp: &ProjectionField) -> Result<SprvField> {
    check_compatible(gt.n_points(), gt.mask(), hyp.n_points(), hyp.mask())?;
    let mut residuals = vec![Vector3::zeros(); gt.n_points() * 6];
    for i in 0..gt.n_points() {
        for face in gt.mask().faces() {
            residuals[i * 6 + face.index()] =
                gt.vector(i, face).unwrap() - hyp.vector(i, face).unwrap();
        }
    }
    Ok(SprvField { n_points: gt.n_points(), mask: *gt.mask(), residuals })
}

/// Recovers the 9DoF pose that produced a displacement field.
///
/// Per axis the face direction is estimated as the mean vector of the face
/// with the larger aggregate magnitude (sign-corrected), the size is the
/// averaged face-pair sum `m+ + m-`, and `<r_axis, t>` follows from
/// `<r_axis, P> - (m- - m+)/2`. The rotation is the nearest orthonormal
/// matrix to the three estimated directions and the translation solves the
/// three projection equations.
pub fn decode_pose(field: &ProjectionField, points: &[Vector3<f64>], sym: &SymmetryTag) -> Result<Pose9D> {
    if sym.kind != SymmetryKind::None {
        return Err(Error::SymmetryUnsupported(format!("{:?}", sym.kind)));
    }
    decode_vector_field(&field.to_vector_field(), points)
}

/// [`decode_pose`] over raw vectors; accepts noisy fields whose entries are
/// no longer exactly aligned with the face normals.
pub fn decode_vector_field(field: &VectorField, points: &[Vector3<f64>]) -> Result<Pose9D> {
    let n = field.n_points();
    if !field.mask().is_full() {
        return Err(Error::MaskMismatch(
            "pose decoding requires all six faces valid".into(),
        ));
    }
    if n < 3 {
        return Err(Error::DegenerateField(format!(
            "need at least 3 points to decode, got {n}"
        )));
    }
    if points.len() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} points"),
            got: format!("{}", points.len()),
        });
    }
    if field.vectors.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
        return Err(Error::DegenerateField("non-finite vector entries".into()));
    }

    // Axis directions from the face with the larger aggregate magnitude.
    let mut dirs = [Vector3::zeros(); 3];
    for (axis, dir) in dirs.iter_mut().enumerate() {
        let pos = FaceId::positive(axis);
        let neg = FaceId::negative(axis);
        let agg_pos: f64 = (0..n).map(|i| field.vector(i, pos).unwrap().norm()).sum();
        let agg_neg: f64 = (0..n).map(|i| field.vector(i, neg).unwrap().norm()).sum();
        if agg_pos.max(agg_neg) <= n as f64 * 1e-12 {
            return Err(Error::DegenerateField(format!(
                "axis {axis} has all near-zero vectors"
            )));
        }
        let (face, flip) = if agg_pos >= agg_neg { (pos, 1.0) } else { (neg, -1.0) };
        let mean: Vector3<f64> =
            (0..n).map(|i| field.vector(i, face).unwrap()).sum::<Vector3<f64>>() / n as f64;
        let norm = mean.norm();
        if norm <= 1e-15 {
            return Err(Error::DegenerateField(format!(
                "axis {axis} direction cancels out"
            )));
        }
        *dir = flip * mean / norm;
    }

    // Sizes and translation projections from per-point magnitudes.
    let mut size = Vector3::zeros();
    let mut tau = Vector3::zeros();
    for axis in 0..3 {
        let r = dirs[axis];
        let pos = FaceId::positive(axis);
        let neg = FaceId::negative(axis);
        let mut size_sum = 0.0;
        let mut tau_sum = 0.0;
        for (i, p) in points.iter().enumerate() {
            let m_pos = field.vector(i, pos).unwrap().dot(&r);
            let m_neg = -field.vector(i, neg).unwrap().dot(&r);
            size_sum += m_pos + m_neg;
            let u = (m_neg - m_pos) * 0.5;
            tau_sum += p.dot(&r) - u;
        }
        size[axis] = size_sum / n as f64;
        tau[axis] = tau_sum / n as f64;
    }
    if size.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::DegenerateField(format!(
            "decoded size is not positive: {size:?}"
        )));
    }

    let raw = Matrix3::from_columns(&dirs);
    let rotation = closest_rotation(&raw)
        .map_err(|_| Error::DegenerateField("axis directions are coplanar".into()))?;
    let translation = raw
        .transpose()
        .lu()
        .solve(&tau)
        .ok_or_else(|| Error::DegenerateField("translation system is singular".into()))?;

    Pose9D::new(rotation, translation, size)
        .map_err(|e| Error::DegenerateField(format!("decoded pose invalid: {e}")))
}

/// Serialized form of projection, vector and residual fields.
///
/// All arrays are row-major and point-major in canonical face order
/// (`x+ x- y+ y- z+ z-`): `scalars[i*6 + f]` for `dvpb`, and
/// `vectors[(i*6 + f)*3 + c]` with component `c` in `x y z` order for the
/// vector kinds. `rotation` is the 3x3 pose rotation, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldFile {
    Dvpb {
        schema_version: u32,
        n_points: usize,
        face_mask: [bool; 6],
        rotation: Vec<f64>,
        scalars: Vec<f64>,
    },
    DvpbVectors {
        schema_version: u32,
        n_points: usize,
        face_mask: [bool; 6],
        vectors: Vec<f64>,
    },
    Sprv {
        schema_version: u32,
        n_points: usize,
        face_mask: [bool; 6],
        vectors: Vec<f64>,
    },
}

fn flatten_vectors(vectors: &[Vector3<f64>]) -> Vec<f64> {
    vectors.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
}

fn unflatten_vectors(flat: &[f64], n_points: usize) -> Result<Vec<Vector3<f64>>> {
    if flat.len() != n_points * 6 * 3 {
        return Err(Error::Parse(format!(
            "expected {} vector components, got {}",
            n_points * 6 * 3,
            flat.len()
        )));
    }
    Ok(flat
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0], c[1], c[2]))
        .collect())
}

impl From<&ProjectionField> for FieldFile {
    fn from(field: &ProjectionField) -> Self {
        FieldFile::Dvpb {
            schema_version: FIELD_SCHEMA_VERSION,
            n_points: field.n_points(),
            face_mask: field.mask().0,
            rotation: field.rotation().transpose().as_slice().to_vec(),
            scalars: field.scalars().to_vec(),
        }
    }
}

impl From<&VectorField> for FieldFile {
    fn from(field: &VectorField) -> Self {
        FieldFile::DvpbVectors {
            schema_version: FIELD_SCHEMA_VERSION,
            n_points: field.n_points(),
            face_mask: field.mask().0,
            vectors: flatten_vectors(&field.vectors),
        }
    }
}

impl From<&SprvField> for FieldFile {
    fn from(field: &SprvField) -> Self {
        FieldFile::Sprv {
            schema_version: FIELD_SCHEMA_VERSION,
            n_points: field.n_points(),
            face_mask: field.mask().0,
            vectors: flatten_vectors(&field.residuals),
        }
    }
}

impl FieldFile {
    /// Decodes a `dvpb` entry back into a [`ProjectionField`].
    pub fn to_projection_field(&self) -> Result<ProjectionField> {
        match self {
            FieldFile::Dvpb { n_points, face_mask, rotation, scalars, .. } => {
                if rotation.len() != 9 {
                    return Err(Error::Parse(format!(
                        "rotation must have 9 entries, got {}",
                        rotation.len()
                    )));
                }
                let rot = Matrix3::from_row_slice(rotation);
                ProjectionField::from_scalars(*n_points, FaceMask(*face_mask), rot, scalars.clone())
            }
            _ => Err(Error::Parse("field file is not of kind `dvpb`".into())),
        }
    }

    /// Decodes any displacement kind into raw vectors (the decoder's input).
    pub fn to_vector_field(&self) -> Result<VectorField> {
        match self {
            FieldFile::Dvpb { .. } => Ok(self.to_projection_field()?.to_vector_field()),
            FieldFile::DvpbVectors { n_points, face_mask, vectors, .. } => {
                VectorField::from_vectors(*n_points, FaceMask(*face_mask), unflatten_vectors(vectors, *n_points)?)
            }
            FieldFile::Sprv { .. } => Err(Error::Parse("field file holds residuals, not displacements".into())),
        }
    }

    /// Decodes an `sprv` entry back into a [`SprvField`].
    pub fn to_sprv_field(&self) -> Result<SprvField> {
        match self {
            FieldFile::Sprv { n_points, face_mask, vectors, .. } => {
                SprvField::from_residuals(*n_points, FaceMask(*face_mask), unflatten_vectors(vectors, *n_points)?)
            }
            _ => Err(Error::Parse("field file is not of kind `sprv`".into())),
        }
    }
}
