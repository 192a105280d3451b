//! Shape-prior adaptation math: deformation of a category mean shape,
//! point assignment onto the reconstructed model, and canonical-box
//! extraction in NOCS.

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::io;
use crate::types::{Aabb, Category, NocsCoord};

/// Row-sum tolerance for assignment matrices.
pub const ROW_SUM_TOL: f64 = 1e-6;

/// Category mean shape (`prior`), its per-point deformation field and the
/// row-normalized assignment matrix mapping observed points onto the
/// reconstructed model.
#[derive(Debug, Clone)]
pub struct ShapePriorModel {
    prior: Vec<Vector3<f64>>,
    deformation: Vec<Vector3<f64>>,
    assignment: DMatrix<f64>,
}

impl ShapePriorModel {
    /// Validates shapes, non-negative assignment entries and row sums.
    pub fn new(
        prior: Vec<Vector3<f64>>,
        deformation: Vec<Vector3<f64>>,
        assignment: DMatrix<f64>,
    ) -> Result<Self> {
        if prior.len() != deformation.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} deformation rows", prior.len()),
                got: format!("{}", deformation.len()),
            });
        }
        if assignment.ncols() != prior.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("assignment with {} columns", prior.len()),
                got: format!("{}", assignment.ncols()),
            });
        }
        validate_assignment(&assignment)?;
        Ok(Self { prior, deformation, assignment })
    }

    pub fn prior(&self) -> &[Vector3<f64>] {
        &self.prior
    }

    pub fn deformation(&self) -> &[Vector3<f64>] {
        &self.deformation
    }

    pub fn assignment(&self) -> &DMatrix<f64> {
        &self.assignment
    }

    /// Deformed model `prior + deformation`.
    pub fn model(&self) -> Vec<Vector3<f64>> {
        reconstruct_model(&self.prior, &self.deformation).expect("shapes validated on construction")
    }

    /// NOCS coordinates of the observed points, `assignment * model`.
    pub fn coords(&self) -> Vec<NocsCoord> {
        assign_coords(&self.assignment, &self.model()).expect("assignment validated on construction")
    }
}

fn validate_assignment(assignment: &DMatrix<f64>) -> Result<()> {
    for r in 0..assignment.nrows() {
        let mut sum = 0.0;
        for c in 0..assignment.ncols() {
            let v = assignment[(r, c)];
            if v < 0.0 {
                return Err(Error::RowNotNormalized { row: r, sum: v });
            }
            sum += v;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::RowNotNormalized { row: r, sum });
        }
    }
    Ok(())
}

/// Elementwise sum of prior and deformation field.
pub fn reconstruct_model(prior: &[Vector3<f64>], deformation: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>> {
    if prior.len() != deformation.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} deformation rows", prior.len()),
            got: format!("{}", deformation.len()),
        });
    }
    Ok(prior.iter().zip(deformation).map(|(p, d)| p + d).collect())
}

/// Matrix product `assignment * model`; every output point is a convex
/// combination of model points.
pub fn assign_coords(assignment: &DMatrix<f64>, model: &[Vector3<f64>]) -> Result<Vec<NocsCoord>> {
    if assignment.ncols() != model.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("assignment with {} columns", model.len()),
            got: format!("{}", assignment.ncols()),
        });
    }
    let mut coords = Vec::with_capacity(assignment.nrows());
    for r in 0..assignment.nrows() {
        let mut sum = 0.0;
        let mut acc = Vector3::zeros();
        for (c, m) in model.iter().enumerate() {
            let w = assignment[(r, c)];
            sum += w;
            acc += w * m;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::RowNotNormalized { row: r, sum });
        }
        coords.push(NocsCoord(acc));
    }
    Ok(coords)
}

/// Per-axis extent and midpoint of a model point set in NOCS, taken from the
/// outermost points along each axis.
pub fn canonical_bbox(model: &[Vector3<f64>]) -> Result<(Vector3<f64>, Vector3<f64>)> {
    if model.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "canonical box needs at least 2 points, got {}",
            model.len()
        )));
    }
    let aabb = Aabb::from_points(model).expect("nonempty");
    let size = aabb.size();
    for axis in 0..3 {
        if size[axis] < 1e-9 {
            return Err(Error::DegenerateModel { axis, extent: size[axis] });
        }
    }
    Ok((size, aabb.center()))
}

/// Outcome of the shared bounding-box verification. Slack entries are the
/// per-axis margins (coord box inside model box); all non-negative means
/// containment holds.
#[derive(Debug, Clone, Copy)]
pub struct BboxCheck {
    pub contained: bool,
    pub lower_slack: Vector3<f64>,
    pub upper_slack: Vector3<f64>,
}

/// Verifies that the assigned coordinates stay inside the model's box
/// (convex combinations can only shrink extents). `coords` must equal
/// `assignment * model`; the assignment is used to re-derive the product in
/// debug builds.
pub fn shared_bbox_check(
    model: &[Vector3<f64>],
    coords: &[NocsCoord],
    assignment: &DMatrix<f64>,
) -> BboxCheck {
    debug_assert!(
        assign_coords(assignment, model)
            .map(|rec| {
                rec.iter()
                    .zip(coords)
                    .all(|(a, b)| (a.0 - b.0).norm() <= 1e-9)
            })
            .unwrap_or(false),
        "coords do not match assignment * model"
    );
    let model_box = Aabb::from_points(model).expect("model is nonempty");
    let coord_box =
        Aabb::from_points(coords.iter().map(|c| &c.0)).expect("coords are nonempty");
    let lower_slack = coord_box.min - model_box.min;
    let upper_slack = model_box.max - coord_box.max;
    // The slack of an exact convex combination can dip a few ulps below zero
    // from summation rounding; treat that as contained.
    let tol = 1e-12 * model_box.size().amax().max(1.0);
    let contained = lower_slack.iter().chain(upper_slack.iter()).all(|&s| s >= -tol);
    BboxCheck { contained, lower_slack, upper_slack }
}

/// One-hot assignment matrix from an observed-to-model index map.
pub fn one_hot_assignment(correspondence: &[usize], m: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(correspondence.len(), m);
    for (r, &c) in correspondence.iter().enumerate() {
        a[(r, c)] = 1.0;
    }
    a
}

/// Random deformation field with row norms capped at `max_row_norm`
/// (fixture convention: 0.05).
pub fn random_deformation<R: rand::Rng>(
    m: usize,
    max_row_norm: f64,
    rng: &mut R,
) -> Vec<Vector3<f64>> {
    use rand_distr::StandardNormal;
    (0..m)
        .map(|_| {
            let dir = Vector3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            let norm = dir.norm();
            if norm == 0.0 {
                return Vector3::zeros();
            }
            let len: f64 = rng.gen_range(0.0..max_row_norm);
            dir * (len / norm)
        })
        .collect()
}

/// Bundled mean-shape prior for a category (1024 NOCS points, ascii PLY).
pub fn bundled_prior(category: Category) -> Result<Vec<Vector3<f64>>> {
    let bytes: &[u8] = match category {
        Category::Bottle => include_bytes!("../fixtures/priors/bottle.ply"),
        Category::Bowl => include_bytes!("../fixtures/priors/bowl.ply"),
        Category::Camera => include_bytes!("../fixtures/priors/camera.ply"),
        Category::Can => include_bytes!("../fixtures/priors/can.ply"),
        Category::Laptop => include_bytes!("../fixtures/priors/laptop.ply"),
        Category::Mug => include_bytes!("../fixtures/priors/mug.ply"),
    };
    io::read_ply(bytes)
}
