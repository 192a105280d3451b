//! Similarity registration, rotation calibration and NOCS transforms.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::types::{NocsCoord, Pose9D, RotationEstimate};

/// Result of the similarity solve: `y ~ scale * rotation * x + translation`.
#[derive(Debug, Clone)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    /// Applies the transform to a point.
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }

    /// Sum of squared residuals against a correspondence set.
    pub fn residual_sq(&self, source: &[Vector3<f64>], target: &[Vector3<f64>]) -> f64 {
        source
            .iter()
            .zip(target)
            .map(|(x, y)| (self.apply(x) - y).norm_squared())
            .sum()
    }
}

/// Least-squares similarity transform between corresponding point sets,
/// minimizing `sum ||s R x_i + t - y_i||^2`.
///
/// Reflections are corrected by flipping the singular direction of the
/// smallest singular value, so the returned rotation always has `det = +1`.
pub fn umeyama(source: &[Vector3<f64>], target: &[Vector3<f64>]) -> Result<Similarity> {
    if source.len() != target.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} target points", source.len()),
            got: format!("{}", target.len()),
        });
    }
    if source.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "similarity solve needs at least 3 correspondences, got {}",
            source.len()
        )));
    }
    let n = source.len() as f64;
    let mu_x: Vector3<f64> = source.iter().sum::<Vector3<f64>>() / n;
    let mu_y: Vector3<f64> = target.iter().sum::<Vector3<f64>>() / n;

    let mut cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for (x, y) in source.iter().zip(target) {
        let dx = x - mu_x;
        let dy = y - mu_y;
        cov += dy * dx.transpose();
        var_x += dx.norm_squared();
    }
    cov /= n;
    var_x /= n;

    let svd = cov.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::DegenerateInput("svd failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::DegenerateInput("svd failed".into()))?;
    let d = svd.singular_values;
    // Singular values come back sorted descending; collinear sources leave
    // the second one at zero and the in-line rotation unconstrained.
    if d[1] <= 1e-12 * d[0].max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateInput(
            "centered source has rank < 2 (collinear or coincident points)".into(),
        ));
    }

    let flip = (u.determinant() * v_t.determinant()) < 0.0;
    let sign = if flip { -1.0 } else { 1.0 };
    let mut s_mat = Matrix3::identity();
    s_mat[(2, 2)] = sign;

    let rotation = u * s_mat * v_t;
    let scale = (d[0] + d[1] + sign * d[2]) / var_x;
    let translation = mu_y - scale * (rotation * mu_x);

    Ok(Similarity { scale, rotation, translation })
}

/// Orthogonalizes two predicted plane normals inside their common plane,
/// splitting the correction angle in proportion `ux : uy` so the less
/// certain axis moves more, and completes the triad with a cross product.
pub fn calibrate_rotation(est: &RotationEstimate) -> Result<Matrix3<f64>> {
    let rx = *est.rx();
    let ry = *est.ry();

    // In-plane basis: e1 along rx, e2 the component of ry orthogonal to rx.
    let e1 = rx;
    let mut e2 = ry - ry.dot(&rx) * rx;
    let e2_norm = e2.norm();
    if e2_norm < 1e-12 {
        return Err(Error::DegenerateInput("rx and ry are parallel".into()));
    }
    e2 /= e2_norm;

    let phi = ry.dot(&rx).clamp(-1.0, 1.0).acos();
    let delta = std::f64::consts::FRAC_PI_2 - phi;
    let usum = est.ux() + est.uy();
    let wx = if usum > 0.0 { est.ux() / usum } else { 0.5 };
    let wy = if usum > 0.0 { est.uy() / usum } else { 0.5 };

    // rx sits at angle 0, ry at angle phi; move them to a 90 degree split.
    let theta_x = -delta * wx;
    let theta_y = phi + delta * wy;
    let rx_cal = theta_x.cos() * e1 + theta_x.sin() * e2;
    let ry_cal = theta_y.cos() * e1 + theta_y.sin() * e2;
    let rz_cal = rx_cal.cross(&ry_cal);

    Ok(Matrix3::from_columns(&[rx_cal, ry_cal, rz_cal]))
}

/// Maps a camera-frame point into normalized object coordinates:
/// `R^T (P - t) / L` with `L` the bounding-box diagonal.
pub fn camera_to_nocs(p: &Vector3<f64>, pose: &Pose9D) -> NocsCoord {
    let local = pose.rotation().transpose() * (p - pose.translation());
    NocsCoord(local / pose.diagonal())
}

/// Exact inverse of [`camera_to_nocs`].
pub fn nocs_to_camera(c: &NocsCoord, pose: &Pose9D) -> Vector3<f64> {
    pose.rotation() * (c.0 * pose.diagonal()) + pose.translation()
}

/// Nearest rotation in Frobenius norm via SVD with determinant correction.
pub fn closest_rotation(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::DegenerateInput("svd failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::DegenerateInput("svd failed".into()))?;
    if svd.singular_values[2] <= 1e-12 * svd.singular_values[0].max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateInput("matrix is singular".into()));
    }
    let mut s = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s[(2, 2)] = -1.0;
    }
    Ok(u * s * v_t)
}

/// Recovers a translation from its residual against the observed-cloud mean.
pub fn translation_from_residual(residual: &Vector3<f64>, cloud_mean: &Vector3<f64>) -> Vector3<f64> {
    residual + cloud_mean
}

/// Recovers a metric size from its residual against the category mean size.
pub fn size_from_residual(residual: &Vector3<f64>, mean_size: &Vector3<f64>) -> Vector3<f64> {
    residual + mean_size
}
