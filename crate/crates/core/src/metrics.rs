//! Evaluation metrics: oriented-box 3D IoU, symmetry-aware rotation error,
//! threshold precision metrics and precision sweeps.
//!
//! Internal units are meters; reported translation errors are centimeters
//! to match the usual threshold conventions.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Aabb, OrientedBox, Pose9D, SymmetryKind, SymmetryTag};

/// Default lattice resolution per axis for sampled IoU.
pub const DEFAULT_IOU_RESOLUTION: usize = 50;

/// Errors of one pose prediction against its ground truth.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoseError {
    /// Geodesic rotation error in degrees, in [0, 180].
    pub rotation_deg: f64,
    /// Euclidean translation error in centimeters.
    pub translation_cm: f64,
    /// Oriented-box IoU in [0, 1].
    pub iou: f64,
}

/// Deterministic sampled IoU of two oriented boxes.
///
/// The box volumes enter exactly; only the intersection volume is estimated,
/// on a `resolution^3` lattice of cell centers spanning the intersection of
/// the two axis-aligned hulls. The lattice is shared between both operands,
/// so `iou(a, b) == iou(b, a)` bitwise, and identical boxes return exactly 1.
pub fn box_iou_3d(a: &OrientedBox, b: &OrientedBox, resolution: usize) -> f64 {
    if a == b {
        return 1.0;
    }
    let aabb_a = Aabb::from_points(a.corners().iter()).expect("eight corners");
    let aabb_b = Aabb::from_points(b.corners().iter()).expect("eight corners");
    let Some(window) = aabb_a.intersection(&aabb_b) else {
        return 0.0;
    };
    let res = resolution.max(1);
    let step = window.size() / res as f64;
    let mut hits = 0usize;
    for ix in 0..res {
        let x = window.min.x + (ix as f64 + 0.5) * step.x;
        for iy in 0..res {
            let y = window.min.y + (iy as f64 + 0.5) * step.y;
            for iz in 0..res {
                let z = window.min.z + (iz as f64 + 0.5) * step.z;
                let p = Vector3::new(x, y, z);
                if a.contains(&p) && b.contains(&p) {
                    hits += 1;
                }
            }
        }
    }
    let inter = hits as f64 / (res * res * res) as f64 * window.volume();
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Closed-form IoU for boxes that share the axis-aligned frame (both
/// rotations within `1e-9` of identity). Returns `None` otherwise.
pub fn axis_aligned_iou(a: &OrientedBox, b: &OrientedBox) -> Option<f64> {
    let near_identity =
        |r: &Matrix3<f64>| (r - Matrix3::identity()).abs().max() <= 1e-9;
    if !near_identity(&a.rotation) || !near_identity(&b.rotation) {
        return None;
    }
    let mut inter = 1.0;
    for c in 0..3 {
        let lo = (a.center[c] - a.extents[c] * 0.5).max(b.center[c] - b.extents[c] * 0.5);
        let hi = (a.center[c] + a.extents[c] * 0.5).min(b.center[c] + b.extents[c] * 0.5);
        inter *= (hi - lo).max(0.0);
    }
    let union = a.volume() + b.volume() - inter;
    Some(if union > 0.0 { inter / union } else { 0.0 })
}

/// Rotation error in degrees. Without symmetry this is the geodesic angle
/// `arccos((tr(Ra^T Rb) - 1) / 2)`; for axial-y categories it is the angle
/// between the two y columns, the minimum over the symmetry orbit.
///
/// Both branches go through `atan2(sin, cos)` rather than `acos`, which is
/// well conditioned near zero and returns exactly 0 for identical inputs.
pub fn rotation_error(ra: &Matrix3<f64>, rb: &Matrix3<f64>, sym: &SymmetryTag) -> f64 {
    match sym.kind {
        SymmetryKind::None => {
            let q = ra.transpose() * rb;
            let cos = (q.trace() - 1.0) / 2.0;
            // 2 sin(theta) is the norm of the skew part of q.
            let sin = 0.5
                * ((q[(2, 1)] - q[(1, 2)]).powi(2)
                    + (q[(0, 2)] - q[(2, 0)]).powi(2)
                    + (q[(1, 0)] - q[(0, 1)]).powi(2))
                .sqrt();
            sin.atan2(cos).to_degrees()
        }
        SymmetryKind::AxialY => {
            let ya = ra.column(1).into_owned();
            let yb = rb.column(1).into_owned();
            ya.cross(&yb).norm().atan2(ya.dot(&yb)).to_degrees()
        }
    }
}

/// Full error triple of a prediction against ground truth.
pub fn pose_error(pred: &Pose9D, gt: &Pose9D, sym: &SymmetryTag, iou_resolution: usize) -> PoseError {
    PoseError {
        rotation_deg: rotation_error(pred.rotation(), gt.rotation(), sym),
        translation_cm: (pred.translation() - gt.translation()).norm() * 100.0,
        iou: box_iou_3d(&OrientedBox::from(pred), &OrientedBox::from(gt), iou_resolution),
    }
}

/// Fraction of predictions with rotation error below `rot_deg` and
/// translation error below `trans_cm`.
pub fn threshold_metric(errors: &[PoseError], rot_deg: f64, trans_cm: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptyInput("threshold metric over no errors".into()));
    }
    let hits = errors
        .iter()
        .filter(|e| e.rotation_deg < rot_deg && e.translation_cm < trans_cm)
        .count();
    Ok(hits as f64 / errors.len() as f64)
}

/// Fraction of predictions with IoU above the threshold.
pub fn iou_metric(errors: &[PoseError], iou_thresh: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptyInput("iou metric over no errors".into()));
    }
    let hits = errors.iter().filter(|e| e.iou > iou_thresh).count();
    Ok(hits as f64 / errors.len() as f64)
}

/// Quantity swept by [`map_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Iou,
    Rotation,
    Translation,
}

/// Threshold/precision pairs, monotone non-decreasing in sequence order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub thresholds: Vec<f64>,
    pub precisions: Vec<f64>,
}

impl Curve {
    /// CSV with a `threshold,precision` header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,precision\n");
        for (t, p) in self.thresholds.iter().zip(&self.precisions) {
            out.push_str(&format!("{t},{p}\n"));
        }
        out
    }
}

/// Precision at each grid threshold. Rotation and translation sweeps count
/// `error < tau` over an ascending grid; IoU sweeps count `iou > tau` and
/// emit the grid descending, so every returned curve is monotone
/// non-decreasing.
pub fn map_sweep(errors: &[PoseError], axis: SweepAxis, grid: &[f64]) -> Result<Curve> {
    if errors.is_empty() {
        return Err(Error::EmptyInput("sweep over no errors".into()));
    }
    if grid.is_empty() {
        return Err(Error::EmptyInput("sweep over an empty grid".into()));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::DegenerateInput("sweep grid must be sorted ascending".into()));
    }
    let n = errors.len() as f64;
    match axis {
        SweepAxis::Rotation | SweepAxis::Translation => {
            let value = |e: &PoseError| match axis {
                SweepAxis::Rotation => e.rotation_deg,
                _ => e.translation_cm,
            };
            let precisions = grid
                .iter()
                .map(|&t| errors.iter().filter(|e| value(e) < t).count() as f64 / n)
                .collect();
            Ok(Curve { thresholds: grid.to_vec(), precisions })
        }
        SweepAxis::Iou => {
            let thresholds: Vec<f64> = grid.iter().rev().copied().collect();
            let precisions = thresholds
                .iter()
                .map(|&t| errors.iter().filter(|e| e.iou > t).count() as f64 / n)
                .collect();
            Ok(Curve { thresholds, precisions })
        }
    }
}

/// Precision summary at the standard working points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSet {
    #[serde(rename = "iou_50")]
    pub iou50: f64,
    #[serde(rename = "iou_75")]
    pub iou75: f64,
    #[serde(rename = "5deg_2cm")]
    pub deg5_cm2: f64,
    #[serde(rename = "5deg_5cm")]
    pub deg5_cm5: f64,
    #[serde(rename = "10deg_2cm")]
    pub deg10_cm2: f64,
    #[serde(rename = "10deg_5cm")]
    pub deg10_cm5: f64,
}

impl PrecisionSet {
    fn from_errors(errors: &[PoseError]) -> Result<Self> {
        Ok(Self {
            iou50: iou_metric(errors, 0.5)?,
            iou75: iou_metric(errors, 0.75)?,
            deg5_cm2: threshold_metric(errors, 5.0, 2.0)?,
            deg5_cm5: threshold_metric(errors, 5.0, 5.0)?,
            deg10_cm2: threshold_metric(errors, 10.0, 2.0)?,
            deg10_cm5: threshold_metric(errors, 10.0, 5.0)?,
        })
    }

    fn mean_of(sets: &[PrecisionSet]) -> PrecisionSet {
        let n = sets.len().max(1) as f64;
        let sum = |f: fn(&PrecisionSet) -> f64| sets.iter().map(f).sum::<f64>() / n;
        PrecisionSet {
            iou50: sum(|s| s.iou50),
            iou75: sum(|s| s.iou75),
            deg5_cm2: sum(|s| s.deg5_cm2),
            deg5_cm5: sum(|s| s.deg5_cm5),
            deg10_cm2: sum(|s| s.deg10_cm2),
            deg10_cm5: sum(|s| s.deg10_cm5),
        }
    }
}

/// Sweep grids used when building a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrids {
    /// Rotation thresholds in degrees, ascending.
    pub rotation_deg: Vec<f64>,
    /// Translation thresholds in centimeters, ascending.
    pub translation_cm: Vec<f64>,
    /// IoU thresholds, ascending (emitted descending).
    pub iou: Vec<f64>,
}

impl Default for SweepGrids {
    fn default() -> Self {
        Self {
            rotation_deg: (1..=60).map(|d| d as f64).collect(),
            translation_cm: (1..=20).map(|c| c as f64 * 0.5).collect(),
            // IoU precision uses a strict `>`, so the grid stays below 1.
            iou: (1..=19).map(|i| i as f64 * 0.05).collect(),
        }
    }
}

/// Per-category and mean precision at the standard working points plus
/// sweep curves on the pooled errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub per_category: BTreeMap<String, PrecisionSet>,
    pub mean: PrecisionSet,
    pub sweeps: BTreeMap<String, Curve>,
}

impl MetricReport {
    /// Builds a report from per-category error lists. The mean row is the
    /// macro average over categories.
    pub fn from_errors(
        errors: &BTreeMap<String, Vec<PoseError>>,
        grids: &SweepGrids,
    ) -> Result<Self> {
        if errors.is_empty() || errors.values().all(|v| v.is_empty()) {
            return Err(Error::EmptyInput("metric report over no errors".into()));
        }
        let mut per_category = BTreeMap::new();
        let mut sets = Vec::new();
        let mut pooled = Vec::new();
        for (category, errs) in errors {
            if errs.is_empty() {
                continue;
            }
            let set = PrecisionSet::from_errors(errs)?;
            per_category.insert(category.clone(), set);
            sets.push(set);
            pooled.extend_from_slice(errs);
        }
        let mut sweeps = BTreeMap::new();
        sweeps.insert(
            "rotation_deg".to_string(),
            map_sweep(&pooled, SweepAxis::Rotation, &grids.rotation_deg)?,
        );
        sweeps.insert(
            "translation_cm".to_string(),
            map_sweep(&pooled, SweepAxis::Translation, &grids.translation_cm)?,
        );
        sweeps.insert("iou".to_string(), map_sweep(&pooled, SweepAxis::Iou, &grids.iou)?);
        Ok(Self {
            schema_version: 1,
            per_category,
            mean: PrecisionSet::mean_of(&sets),
            sweeps,
        })
    }

    /// CSV table: one row per category plus the mean row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,iou_50,iou_75,5deg_2cm,5deg_5cm,10deg_2cm,10deg_5cm\n");
        let row = |name: &str, s: &PrecisionSet| {
            format!(
                "{name},{},{},{},{},{},{}\n",
                s.iou50, s.iou75, s.deg5_cm2, s.deg5_cm5, s.deg10_cm2, s.deg10_cm5
            )
        };
        for (name, set) in &self.per_category {
            out.push_str(&row(name, set));
        }
        out.push_str(&row("mean", &self.mean));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Category;
    use approx::assert_abs_diff_eq;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn aligned_box(center: [f64; 3], extents: [f64; 3]) -> OrientedBox {
        OrientedBox::new(
            Vector3::from(center),
            Matrix3::identity(),
            Vector3::from(extents),
        )
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        use rand_distr::StandardNormal;
        let q = nalgebra::Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        *nalgebra::UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix()
    }

    fn random_overlapping_pair(rng: &mut ChaCha8Rng) -> (OrientedBox, OrientedBox) {
        let a = aligned_box(
            [0.0, 0.0, 0.0],
            [
                rng.gen_range(0.4..1.5),
                rng.gen_range(0.4..1.5),
                rng.gen_range(0.4..1.5),
            ],
        );
        let b = aligned_box(
            [
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
            ],
            [
                rng.gen_range(0.4..1.5),
                rng.gen_range(0.4..1.5),
                rng.gen_range(0.4..1.5),
            ],
        );
        (a, b)
    }

    #[test]
    fn identical_boxes_give_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let b = OrientedBox::new(
            Vector3::new(0.2, -0.4, 1.0),
            random_rotation(&mut rng),
            Vector3::new(0.5, 0.3, 0.8),
        );
        assert_eq!(box_iou_3d(&b, &b.clone(), DEFAULT_IOU_RESOLUTION), 1.0);
    }

    #[test]
    fn disjoint_boxes_give_zero() {
        let a = aligned_box([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        let b = aligned_box([10.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        assert_eq!(box_iou_3d(&a, &b, DEFAULT_IOU_RESOLUTION), 0.0);
    }

    #[test]
    fn offset_unit_cubes_match_exact_third() {
        let a = aligned_box([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        let b = aligned_box([0.5, 0.0, 0.0], [1.0, 1.0, 1.0]);
        let exact = axis_aligned_iou(&a, &b).unwrap();
        assert_abs_diff_eq!(exact, 1.0 / 3.0, epsilon = 1e-15);
        let sampled = box_iou_3d(&a, &b, DEFAULT_IOU_RESOLUTION);
        assert!((sampled - exact).abs() < 0.01, "sampled {sampled}");
    }

    #[test]
    fn sampled_matches_analytic_on_random_aligned_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..100 {
            let (a, b) = random_overlapping_pair(&mut rng);
            let exact = axis_aligned_iou(&a, &b).unwrap();
            let sampled = box_iou_3d(&a, &b, DEFAULT_IOU_RESOLUTION);
            assert!(
                (sampled - exact).abs() < 0.01,
                "sampled {sampled} vs exact {exact}"
            );
        }
    }

    #[test]
    fn sampled_matches_analytic_under_common_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        for _ in 0..100 {
            let (a, b) = random_overlapping_pair(&mut rng);
            let exact = axis_aligned_iou(&a, &b).unwrap();
            let rot = random_rotation(&mut rng);
            let shift = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let spin = |x: &OrientedBox| OrientedBox::new(rot * x.center + shift, rot * x.rotation, x.extents);
            let sampled = box_iou_3d(&spin(&a), &spin(&b), DEFAULT_IOU_RESOLUTION);
            assert!(
                (sampled - exact).abs() < 0.01,
                "sampled {sampled} vs exact {exact}"
            );
        }
    }

    #[test]
    fn iou_is_symmetric_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        for _ in 0..50 {
            let rot_a = random_rotation(&mut rng);
            let rot_b = random_rotation(&mut rng);
            let a = OrientedBox::new(
                Vector3::new(rng.gen_range(-0.2..0.2), 0.0, 0.0),
                rot_a,
                Vector3::new(0.8, 0.6, 0.7),
            );
            let b = OrientedBox::new(
                Vector3::new(0.0, rng.gen_range(-0.2..0.2), 0.0),
                rot_b,
                Vector3::new(0.5, 0.9, 0.6),
            );
            let ab = box_iou_3d(&a, &b, 30);
            let ba = box_iou_3d(&b, &a, 30);
            assert_eq!(ab.to_bits(), ba.to_bits(), "asymmetric iou");
            assert!((0.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn rotation_error_zero_for_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let r = random_rotation(&mut rng);
        let sym = SymmetryTag::default_for(Category::Camera);
        assert_abs_diff_eq!(rotation_error(&r, &r, &sym), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn rotation_error_ignores_symmetry_orbit() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let r = random_rotation(&mut rng);
        let spun = r * *Rotation3::from_axis_angle(&Vector3::y_axis(), 77f64.to_radians()).matrix();
        let axial = SymmetryTag::default_for(Category::Can);
        assert_abs_diff_eq!(rotation_error(&r, &spun, &axial), 0.0, epsilon = 1e-9);
        // The full-orbit sweep stays at zero.
        for k in 0..36 {
            let theta = k as f64 * 10f64.to_radians();
            let spun = r * *Rotation3::from_axis_angle(&Vector3::y_axis(), theta).matrix();
            assert!(rotation_error(&r, &spun, &axial) < 1e-9);
        }
    }

    #[test]
    fn rotation_error_recovers_known_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let r = random_rotation(&mut rng);
        let spun = r * *Rotation3::from_axis_angle(&Vector3::x_axis(), 10f64.to_radians()).matrix();
        for sym in [
            SymmetryTag::default_for(Category::Camera),
            SymmetryTag::default_for(Category::Can),
        ] {
            assert_abs_diff_eq!(rotation_error(&r, &spun, &sym), 10.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn rotation_error_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for sym in [
            SymmetryTag::default_for(Category::Camera),
            SymmetryTag::default_for(Category::Can),
        ] {
            for _ in 0..200 {
                let a = random_rotation(&mut rng);
                let b = random_rotation(&mut rng);
                let c = random_rotation(&mut rng);
                let ab = rotation_error(&a, &b, &sym);
                let bc = rotation_error(&b, &c, &sym);
                let ac = rotation_error(&a, &c, &sym);
                assert!(ac <= ab + bc + 1e-6, "triangle violated: {ac} > {ab} + {bc}");
            }
        }
    }

    fn err(rot: f64, trans: f64, iou: f64) -> PoseError {
        PoseError { rotation_deg: rot, translation_cm: trans, iou }
    }

    #[test]
    fn threshold_metric_counts() {
        let zeros = vec![err(0.0, 0.0, 1.0); 5];
        assert_eq!(threshold_metric(&zeros, 5.0, 2.0).unwrap(), 1.0);
        let mixed = vec![err(4.0, 1.0, 0.9), err(6.0, 1.0, 0.9)];
        assert_eq!(threshold_metric(&mixed, 5.0, 2.0).unwrap(), 0.5);
        assert!(matches!(
            threshold_metric(&[], 5.0, 2.0),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn threshold_metric_monotone_in_thresholds() {
        let mut rng = ChaCha8Rng::seed_from_u64(68);
        let errors: Vec<PoseError> = (0..100)
            .map(|_| err(rng.gen_range(0.0..20.0), rng.gen_range(0.0..10.0), rng.gen_range(0.0..1.0)))
            .collect();
        let mut last = 0.0;
        for t in 1..=20 {
            let p = threshold_metric(&errors, t as f64, t as f64).unwrap();
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn sweep_perfect_prediction_is_constant_one() {
        let errors = vec![err(0.0, 0.0, 1.0)];
        let grids = SweepGrids::default();
        for (axis, grid) in [
            (SweepAxis::Rotation, &grids.rotation_deg),
            (SweepAxis::Translation, &grids.translation_cm),
            (SweepAxis::Iou, &grids.iou),
        ] {
            let curve = map_sweep(&errors, axis, grid).unwrap();
            assert!(curve.precisions.iter().all(|&p| p == 1.0), "{axis:?}");
        }
    }

    #[test]
    fn sweep_uniform_errors_hit_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(69);
        let errors: Vec<PoseError> = (0..10_000)
            .map(|_| err(rng.gen_range(0.0..10.0), 0.0, 1.0))
            .collect();
        let curve = map_sweep(&errors, SweepAxis::Rotation, &[5.0]).unwrap();
        assert!((curve.precisions[0] - 0.5).abs() < 0.02, "{}", curve.precisions[0]);
    }

    #[test]
    fn sweeps_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let errors: Vec<PoseError> = (0..500)
            .map(|_| {
                err(
                    rng.gen_range(0.0..30.0),
                    rng.gen_range(0.0..10.0),
                    rng.gen_range(0.0..1.0),
                )
            })
            .collect();
        let grids = SweepGrids::default();
        for (axis, grid) in [
            (SweepAxis::Rotation, &grids.rotation_deg),
            (SweepAxis::Translation, &grids.translation_cm),
            (SweepAxis::Iou, &grids.iou),
        ] {
            let curve = map_sweep(&errors, axis, grid).unwrap();
            for w in curve.precisions.windows(2) {
                assert!(w[1] >= w[0], "{axis:?} sweep not monotone");
            }
        }
        assert!(matches!(
            map_sweep(&errors, SweepAxis::Rotation, &[]),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            map_sweep(&errors, SweepAxis::Rotation, &[5.0, 1.0]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn report_builds_and_serializes() {
        let mut errors = BTreeMap::new();
        errors.insert("can".to_string(), vec![err(1.0, 0.5, 0.9), err(8.0, 3.0, 0.6)]);
        errors.insert("mug".to_string(), vec![err(2.0, 1.0, 0.8)]);
        let report = MetricReport::from_errors(&errors, &SweepGrids::default()).unwrap();
        assert_eq!(report.per_category.len(), 2);
        assert_abs_diff_eq!(report.per_category["can"].deg5_cm2, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(report.mean.deg5_cm2, 0.75, epsilon = 1e-12);

        let json = serde_json::to_string_pretty(&report).unwrap();
        let parsed: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.per_category["mug"], report.per_category["mug"]);

        let csv = report.to_csv();
        assert!(csv.starts_with("category,iou_50"));
        assert!(csv.contains("\nmean,"));
        let curve_csv = report.sweeps["rotation_deg"].to_csv();
        assert!(curve_csv.starts_with("threshold,precision\n"));
    }

    #[test]
    fn pose_error_composes_the_three_measures() {
        let gt = Pose9D::from_size(Vector3::new(0.4, 0.4, 0.4)).unwrap();
        let pred = Pose9D::new(
            *Rotation3::from_axis_angle(&Vector3::x_axis(), 5f64.to_radians()).matrix(),
            Vector3::new(0.01, 0.0, 0.0),
            Vector3::new(0.4, 0.4, 0.4),
        )
        .unwrap();
        let sym = SymmetryTag::default_for(Category::Camera);
        let e = pose_error(&pred, &gt, &sym, DEFAULT_IOU_RESOLUTION);
        assert_abs_diff_eq!(e.rotation_deg, 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e.translation_cm, 1.0, epsilon = 1e-9);
        assert!(e.iou > 0.8 && e.iou <= 1.0);
    }
}
