//! Scalar loss functions: the Laplacian-uncertainty residual loss with its
//! small-displacement regularizer, the pose/field consistency term, the
//! weighted total, and finite-difference validation of the analytic
//! gradients.
//!
//! Per entry the data term is `sqrt(2)/sigma * |r - r_gt| + ln sigma` with
//! the l1 vector norm, one sigma per face shared across points. Sums follow
//! the written equations; the mean reduction divides by the number of valid
//! point/face entries so values are invariant in the point count.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::bbox::{FaceMask, SprvField, VectorField};
use crate::error::{Error, Result};

/// How per-entry contributions are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Plain double sum over points and valid faces.
    Sum,
    /// Sum divided by the number of valid point/face entries.
    Mean,
}

/// One Laplacian scale parameter per face, shared across points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceSigmas(pub [f64; 6]);

impl FaceSigmas {
    pub fn uniform(sigma: f64) -> Self {
        FaceSigmas([sigma; 6])
    }

    fn validate(&self, mask: &FaceMask) -> Result<()> {
        for face in mask.faces() {
            let v = self.0[face.index()];
            if !(v > 0.0) {
                return Err(Error::NonPositiveSigma { face: face.index(), value: v });
            }
        }
        Ok(())
    }
}

/// Balancing weights of the total loss and the residual regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda0: 0.01, lambda1: 8.0, lambda2: 10.0, lambda3: 3.0, lambda4: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda0", self.lambda0),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ] {
            if !(v >= 0.0) {
                return Err(Error::ConfigError {
                    key: format!("weights.{name}"),
                    message: format!("must be non-negative, got {v}"),
                });
            }
        }
        Ok(())
    }
}

fn l1(v: &Vector3<f64>) -> f64 {
    v.x.abs() + v.y.abs() + v.z.abs()
}

fn entry_count(n_points: usize, mask: &FaceMask) -> usize {
    n_points * mask.count()
}

fn check_sprv_pair(pred: &SprvField, gt: &SprvField) -> Result<()> {
    if pred.n_points() != gt.n_points() || pred.mask() != gt.mask() {
        return Err(Error::MaskMismatch(format!(
            "pred ({} pts, {:?}) vs gt ({} pts, {:?})",
            pred.n_points(),
            pred.mask().0,
            gt.n_points(),
            gt.mask().0
        )));
    }
    Ok(())
}

/// Laplacian-uncertainty residual loss: supervised data term plus
/// `lambda0` times the small-displacement regularizer.
pub fn sprv_loss(
    pred: &SprvField,
    gt: &SprvField,
    sigma_data: &FaceSigmas,
    sigma_reg: &FaceSigmas,
    lambda0: f64,
    reduction: Reduction,
) -> Result<f64> {
    Ok(sprv_loss_with_grad(pred, gt, sigma_data, sigma_reg, lambda0, reduction)?.0)
}

/// Gradients of [`sprv_loss`] with respect to the predicted residual
/// entries and both sigma sets.
#[derive(Debug, Clone)]
pub struct SprvLossGrad {
    /// Per predicted entry (`n_points * 6`, point-major); zero on masked faces.
    pub d_pred: Vec<Vector3<f64>>,
    pub d_sigma_data: [f64; 6],
    pub d_sigma_reg: [f64; 6],
}

/// [`sprv_loss`] together with its analytic gradients.
pub fn sprv_loss_with_grad(
    pred: &SprvField,
    gt: &SprvField,
    sigma_data: &FaceSigmas,
    sigma_reg: &FaceSigmas,
    lambda0: f64,
    reduction: Reduction,
) -> Result<(f64, SprvLossGrad)> {
    check_sprv_pair(pred, gt)?;
    let mask = *pred.mask();
    sigma_data.validate(&mask)?;
    if lambda0 != 0.0 {
        sigma_reg.validate(&mask)?;
    }

    let n = pred.n_points();
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut loss = 0.0;
    let mut grad = SprvLossGrad {
        d_pred: vec![Vector3::zeros(); n * 6],
        d_sigma_data: [0.0; 6],
        d_sigma_reg: [0.0; 6],
    };

    for i in 0..n {
        for face in mask.faces() {
            let j = face.index();
            let p = pred.residual(i, face).unwrap();
            let g = gt.residual(i, face).unwrap();
            let diff = p - g;
            let sd = sigma_data.0[j];
            loss += sqrt2 / sd * l1(&diff) + sd.ln();
            grad.d_sigma_data[j] += -sqrt2 * l1(&diff) / (sd * sd) + 1.0 / sd;
            let mut dp = Vector3::zeros();
            for c in 0..3 {
                dp[c] = sqrt2 / sd * diff[c].signum();
            }
            if lambda0 != 0.0 {
                let sr = sigma_reg.0[j];
                loss += lambda0 * (sqrt2 / sr * l1(&p) + sr.ln());
                grad.d_sigma_reg[j] += lambda0 * (-sqrt2 * l1(&p) / (sr * sr) + 1.0 / sr);
                for c in 0..3 {
                    dp[c] += lambda0 * sqrt2 / sr * p[c].signum();
                }
            }
            grad.d_pred[i * 6 + j] = dp;
        }
    }

    if reduction == Reduction::Mean {
        let count = entry_count(n, &mask).max(1) as f64;
        loss /= count;
        for v in &mut grad.d_pred {
            *v /= count;
        }
        for j in 0..6 {
            grad.d_sigma_data[j] /= count;
            grad.d_sigma_reg[j] /= count;
        }
    }
    Ok((loss, grad))
}

/// Geometric consistency between two displacement fields: the summed l1
/// distance over valid entries. The first operand is typically the field
/// re-encoded from the pose prediction, the second the hypothesis plus
/// predicted residuals.
pub fn consistency_loss(
    from_pose: &VectorField,
    from_sprv: &VectorField,
    reduction: Reduction,
) -> Result<f64> {
    Ok(consistency_loss_with_grad(from_pose, from_sprv, reduction)?.0)
}

/// [`consistency_loss`] with the gradient w.r.t. the first operand's
/// entries (the second operand's gradient is its negation).
pub fn consistency_loss_with_grad(
    from_pose: &VectorField,
    from_sprv: &VectorField,
    reduction: Reduction,
) -> Result<(f64, Vec<Vector3<f64>>)> {
    if from_pose.n_points() != from_sprv.n_points() || from_pose.mask() != from_sprv.mask() {
        return Err(Error::MaskMismatch(format!(
            "fields differ: {} pts {:?} vs {} pts {:?}",
            from_pose.n_points(),
            from_pose.mask().0,
            from_sprv.n_points(),
            from_sprv.mask().0
        )));
    }
    let n = from_pose.n_points();
    let mask = *from_pose.mask();
    let mut loss = 0.0;
    let mut grad = vec![Vector3::zeros(); n * 6];
    for i in 0..n {
        for face in mask.faces() {
            let a = from_pose.vector(i, face).unwrap();
            let b = from_sprv.vector(i, face).unwrap();
            let diff = a - b;
            loss += l1(&diff);
            let mut d = Vector3::zeros();
            for c in 0..3 {
                d[c] = diff[c].signum();
            }
            grad[i * 6 + face.index()] = d;
        }
    }
    if reduction == Reduction::Mean {
        let count = entry_count(n, &mask).max(1) as f64;
        loss /= count;
        for v in &mut grad {
            *v /= count;
        }
    }
    Ok((loss, grad))
}

/// Weighted total of the four branch losses:
/// `lambda1 * pose + lambda2 * shape + lambda3 * sprv + lambda4 * con`.
/// The pose and shape terms are externally computed opaque scalars.
pub fn total_loss(
    loss_pose: f64,
    loss_shape: f64,
    loss_sprv: f64,
    loss_con: f64,
    weights: &LossWeights,
) -> Result<f64> {
    for (name, v) in [
        ("pose", loss_pose),
        ("shape", loss_shape),
        ("sprv", loss_sprv),
        ("consistency", loss_con),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} loss component: {v}")));
        }
    }
    let total = weights.lambda1 * loss_pose
        + weights.lambda2 * loss_shape
        + weights.lambda3 * loss_sprv
        + weights.lambda4 * loss_con;
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("total loss: {total}")));
    }
    Ok(total)
}

/// Stationary scale of the per-entry Laplacian data term for a fixed
/// residual magnitude `a`: the minimizer of `sqrt(2) a / sigma + ln sigma`.
pub fn sigma_stationary_point(residual_l1: f64) -> f64 {
    std::f64::consts::SQRT_2 * residual_l1
}

fn kink_guard(values: impl Iterator<Item = f64>, eps: f64) -> Result<()> {
    for (index, v) in values.enumerate() {
        if v.abs() <= 10.0 * eps {
            return Err(Error::KinkProximity { index, value: v.abs() });
        }
    }
    Ok(())
}

fn rel_err(numeric: f64, analytic: f64) -> f64 {
    (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8)
}

fn perturbed_sprv(field: &SprvField, flat: usize, component: usize, delta: f64) -> SprvField {
    let mut residuals = field.residuals().to_vec();
    residuals[flat][component] += delta;
    SprvField::from_residuals(field.n_points(), *field.mask(), residuals)
        .expect("same shape as source field")
}

/// Central-difference validation of the [`sprv_loss`] gradients. Returns
/// the maximum relative error over predicted entries and both sigma sets;
/// refuses evaluation points within `10 * eps` of an l1 kink.
#[allow(clippy::too_many_arguments)]
pub fn check_sprv_loss_gradients(
    pred: &SprvField,
    gt: &SprvField,
    sigma_data: &FaceSigmas,
    sigma_reg: &FaceSigmas,
    lambda0: f64,
    reduction: Reduction,
    eps: f64,
) -> Result<f64> {
    check_sprv_pair(pred, gt)?;
    let mask = *pred.mask();
    let n = pred.n_points();

    let diffs = (0..n).flat_map(|i| {
        mask.faces().flat_map(move |face| {
            let d = pred.residual(i, face).unwrap() - gt.residual(i, face).unwrap();
            [d.x, d.y, d.z]
        })
    });
    kink_guard(diffs, eps)?;
    if lambda0 != 0.0 {
        let preds = (0..n).flat_map(|i| {
            mask.faces().flat_map(move |face| {
                let p = pred.residual(i, face).unwrap();
                [p.x, p.y, p.z]
            })
        });
        kink_guard(preds, eps)?;
    }

    let (_, grad) = sprv_loss_with_grad(pred, gt, sigma_data, sigma_reg, lambda0, reduction)?;
    let eval = |p: &SprvField, sd: &FaceSigmas, sr: &FaceSigmas| -> Result<f64> {
        sprv_loss(p, gt, sd, sr, lambda0, reduction)
    };

    let mut max_err: f64 = 0.0;
    for i in 0..n {
        for face in mask.faces() {
            let flat = i * 6 + face.index();
            for c in 0..3 {
                let hi = eval(&perturbed_sprv(pred, flat, c, eps), sigma_data, sigma_reg)?;
                let lo = eval(&perturbed_sprv(pred, flat, c, -eps), sigma_data, sigma_reg)?;
                let numeric = (hi - lo) / (2.0 * eps);
                max_err = max_err.max(rel_err(numeric, grad.d_pred[flat][c]));
            }
        }
    }
    for face in mask.faces() {
        let j = face.index();
        let mut hi_s = *sigma_data;
        hi_s.0[j] += eps;
        let mut lo_s = *sigma_data;
        lo_s.0[j] -= eps;
        let numeric = (eval(pred, &hi_s, sigma_reg)? - eval(pred, &lo_s, sigma_reg)?) / (2.0 * eps);
        max_err = max_err.max(rel_err(numeric, grad.d_sigma_data[j]));

        if lambda0 != 0.0 {
            let mut hi_r = *sigma_reg;
            hi_r.0[j] += eps;
            let mut lo_r = *sigma_reg;
            lo_r.0[j] -= eps;
            let numeric =
                (eval(pred, sigma_data, &hi_r)? - eval(pred, sigma_data, &lo_r)?) / (2.0 * eps);
            max_err = max_err.max(rel_err(numeric, grad.d_sigma_reg[j]));
        }
    }
    Ok(max_err)
}

/// Central-difference validation of the [`consistency_loss`] gradient
/// w.r.t. the first operand. Same kink guard as the residual loss.
pub fn check_consistency_gradients(
    from_pose: &VectorField,
    from_sprv: &VectorField,
    reduction: Reduction,
    eps: f64,
) -> Result<f64> {
    let n = from_pose.n_points();
    let mask = *from_pose.mask();
    let diffs = (0..n).flat_map(|i| {
        mask.faces().flat_map(move |face| {
            let d = from_pose.vector(i, face).unwrap() - from_sprv.vector(i, face).unwrap();
            [d.x, d.y, d.z]
        })
    });
    kink_guard(diffs, eps)?;

    let (_, grad) = consistency_loss_with_grad(from_pose, from_sprv, reduction)?;
    let mut max_err: f64 = 0.0;
    for i in 0..n {
        for face in mask.faces() {
            let flat = i * 6 + face.index();
            for c in 0..3 {
                let perturb = |delta: f64| -> Result<f64> {
                    let mut vectors = from_pose.vectors().to_vec();
                    vectors[flat][c] += delta;
                    let field = VectorField::from_vectors(n, mask, vectors)?;
                    consistency_loss(&field, from_sprv, reduction)
                };
                let numeric = (perturb(eps)? - perturb(-eps)?) / (2.0 * eps);
                max_err = max_err.max(rel_err(numeric, grad[flat][c]));
            }
        }
    }
    Ok(max_err)
}
