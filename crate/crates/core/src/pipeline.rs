//! End-to-end runs over a synthetic corpus: generation, optional
//! augmentation, ground-truth displacement fields, prior-driven hypotheses,
//! residuals, losses, pose decoding and metric reports.
//!
//! Everything is sequential and seeded, so a run with the same corpus and
//! pipeline spec produces byte-identical artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_a1, augment_a2, AugmentParams, AugmentRanges, PlaneHalf};
use crate::bbox::{
    compute_sprv, decode_vector_field, encode_dvpb, hypothesize_field, FieldFile, ProjectionField,
    SprvField,
};
use crate::config::{Config, HypothesisConfig, PriorMode};
use crate::error::{Error, Result};
use crate::io::{self, PlyFormat};
use crate::losses::{consistency_loss, sprv_loss, FaceSigmas, LossWeights, Reduction};
use crate::metrics::{pose_error, MetricReport, PoseError, SweepGrids};
use crate::shape_prior::{canonical_bbox, one_hot_assignment, shared_bbox_check};
use crate::synth::{canonical_shape, generate_instance, InstanceParams, SyntheticInstance};
use crate::types::{Category, Pose9D, SymmetryKind, SymmetryTag};

/// Manifest and report schema version.
pub const CORPUS_SCHEMA_VERSION: u32 = 1;

/// Seed-stream salts for the independent random decisions of a run.
const AUGMENT_SALT: u64 = 0xA1;
const ROTATION_NOISE_SALT: u64 = 0x12;
const FIELD_NOISE_SALT: u64 = 0xF1;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-stream seed derivation.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream))
}

/// What corpus to generate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub instances_per_category: usize,
    pub categories: Vec<Category>,
    pub params: InstanceParams,
    /// Per-category symmetry overrides applied to generated instances.
    pub symmetry: BTreeMap<Category, SymmetryKind>,
}

impl CorpusSpec {
    pub fn from_config(config: &Config) -> Self {
        let c = &config.corpus;
        Self {
            seed: c.seed,
            instances_per_category: c.instances_per_category,
            categories: c.categories.clone(),
            params: InstanceParams {
                n_points: c.n_points,
                m_points: c.m_points,
                axis_scale: c.axis_scale,
                laptop_opening_deg: c.laptop_opening_deg,
                pose: crate::synth::PoseSampler {
                    diag_m: config.pose.diag_m,
                    translation_xy_m: config.pose.translation_xy_m,
                    translation_z_m: config.pose.translation_z_m,
                },
                perturb: crate::augment::PerturbOptions {
                    noise_sigma: c.noise_sigma,
                    rot_jitter_rad: c.rot_jitter_deg.to_radians(),
                    trans_jitter_m: c.trans_jitter_m,
                },
            },
            symmetry: config.symmetry.clone(),
        }
    }
}

/// Shape augmentation applied on top of the generated corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentMode {
    None,
    /// Category-specific non-linear augmentation: parabolic axis scaling,
    /// hinge articulation for laptop.
    NonLinear,
    /// Linear per-axis box stretching.
    Linear,
}

/// How each instance is processed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub prior: PriorMode,
    /// Angular noise (degrees) on the hypothesis rotation.
    pub rotation_noise_deg: f64,
    /// Gaussian noise sigma (m) on the decoded field.
    pub dvpb_noise_sigma: f64,
    pub augment: AugmentMode,
    pub augment_ranges: AugmentRanges,
    pub weights: LossWeights,
    pub iou_resolution: usize,
    pub sweeps: SweepGrids,
    /// Write per-instance field dumps when an output directory is given.
    pub dump_fields: bool,
}

impl PipelineSpec {
    pub fn from_config(config: &Config) -> Self {
        let HypothesisConfig { prior, rotation_noise_deg, dvpb_noise_sigma } = config.hypothesis;
        Self {
            prior,
            rotation_noise_deg,
            dvpb_noise_sigma,
            augment: AugmentMode::None,
            augment_ranges: config.augment.clone(),
            weights: config.weights,
            iou_resolution: config.eval.iou_resolution,
            sweeps: config.eval.sweeps.clone(),
            dump_fields: false,
        }
    }
}

/// Generates the corpus of a spec, in a fixed category-major order.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<SyntheticInstance>> {
    let mut instances = Vec::with_capacity(spec.categories.len() * spec.instances_per_category);
    for (cat_idx, &category) in spec.categories.iter().enumerate() {
        for idx in 0..spec.instances_per_category {
            let stream = ((cat_idx as u64) << 32) | idx as u64;
            let seed = derive_seed(spec.seed, stream);
            let mut inst = generate_instance(category, &spec.params, seed)?;
            if let Some(kind) = spec.symmetry.get(&category) {
                inst.sym = SymmetryTag::new(category, *kind);
            }
            instances.push(inst);
        }
    }
    Ok(instances)
}

/// Category mean sizes over a corpus, the `S_M` of hypothesis scaling.
pub fn mean_sizes(instances: &[SyntheticInstance]) -> BTreeMap<Category, Vector3<f64>> {
    let mut sums: BTreeMap<Category, (Vector3<f64>, usize)> = BTreeMap::new();
    for inst in instances {
        let entry = sums.entry(inst.category).or_insert((Vector3::zeros(), 0));
        entry.0 += inst.pose.size();
        entry.1 += 1;
    }
    sums.into_iter().map(|(c, (sum, n))| (c, sum / n as f64)).collect()
}

/// Rebuilds an instance after a canonical-frame shape augmentation: the
/// model is deformed, renormalized, and the observed cloud plus pose size
/// are re-derived so supervision stays exact.
pub fn augment_instance(
    inst: &SyntheticInstance,
    mode: AugmentMode,
    ranges: &AugmentRanges,
    seed: u64,
) -> Result<SyntheticInstance> {
    if mode == AugmentMode::None {
        return Ok(inst.clone());
    }
    let params = AugmentParams::sample(inst.category, ranges, seed);
    let mut hinge = inst.hinge.clone();
    let deformed = match (mode, inst.category) {
        (AugmentMode::Linear, _) => {
            let scales = Vector3::new(params.gamma, params.gamma_max, params.gamma);
            crate::augment::augment_linear(&inst.canonical_model, &scales)
        }
        (AugmentMode::NonLinear, Category::Laptop) => {
            let labels = inst
                .labels
                .as_ref()
                .ok_or_else(|| Error::UnlabeledPoints("laptop instance without labels".into()))?;
            let h = inst
                .hinge
                .as_ref()
                .ok_or_else(|| Error::UnlabeledPoints("laptop instance without hinge".into()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5C));
            let scales = Vector3::new(
                rng.gen_range(ranges.gamma[0]..=ranges.gamma[1]),
                rng.gen_range(ranges.gamma[0]..=ranges.gamma[1]),
                rng.gen_range(ranges.gamma[0]..=ranges.gamma[1]),
            );
            hinge = Some(crate::augment::HingeLine {
                point: Vector3::new(
                    scales.x * h.point.x,
                    scales.y * h.point.y,
                    scales.z * h.point.z,
                ),
                axis: h.axis,
            });
            augment_a2(&inst.canonical_model, labels, h, params.hinge_angle, &scales)?
        }
        (AugmentMode::NonLinear, _) => augment_a1(&inst.canonical_model, &params),
        (AugmentMode::None, _) => unreachable!(),
    };

    let (size, center) = canonical_bbox(&deformed)?;
    let diag = size.norm();
    let model: Vec<Vector3<f64>> = deformed.iter().map(|p| (p - center) / diag).collect();
    let hinge = hinge.map(|h| crate::augment::HingeLine {
        point: (h.point - center) / diag,
        axis: h.axis,
    });

    // The metric object stretched by the same deformation: the old metric
    // diagonal scales by the deformed NOCS diagonal.
    let new_diag_m = inst.pose.diagonal() * diag;
    let (nocs_size, _) = canonical_bbox(&model)?;
    let pose = Pose9D::new(
        *inst.pose.rotation(),
        *inst.pose.translation(),
        new_diag_m * nocs_size,
    )?;
    let observed: Vec<Vector3<f64>> = inst
        .correspondence
        .iter()
        .map(|&i| pose.rotation() * (new_diag_m * model[i]) + pose.translation())
        .collect();

    Ok(SyntheticInstance {
        category: inst.category,
        seed: inst.seed,
        sym: inst.sym,
        pose,
        canonical_model: model,
        observed,
        correspondence: inst.correspondence.clone(),
        labels: inst.labels.clone(),
        hinge,
    })
}

/// Everything the pipeline measures for one instance.
#[derive(Debug, Clone)]
pub struct InstanceOutcome {
    pub category: Category,
    pub error: PoseError,
    pub size_err_m: f64,
    pub mean_dvpb_norm: f64,
    pub mean_sprv_norm: f64,
    pub sprv_loss: f64,
    pub consistency: f64,
    pub total_loss: f64,
}

/// Aggregated corpus statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStats {
    pub instances: usize,
    pub mean_dvpb_norm: f64,
    pub mean_sprv_norm: f64,
    pub mean_sprv_loss: f64,
    pub mean_consistency: f64,
    pub max_consistency: f64,
    pub median_rotation_deg: f64,
    pub median_translation_cm: f64,
    pub median_size_err_m: f64,
}

/// Full run artifact: metric report, corpus statistics and the per-category
/// mean sizes the hypotheses used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub metrics: MetricReport,
    pub stats: CorpusStats,
    pub mean_sizes: BTreeMap<Category, [f64; 3]>,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Ground-truth displacement field, prior-driven hypothesis field and the
/// residual field of one instance. The instance prior reproduces the ground
/// truth exactly; the category mean stands in for a deformed-prior
/// prediction, scaled by the corpus mean size.
pub fn instance_fields(
    inst: &SyntheticInstance,
    mean_size: &Vector3<f64>,
    prior: PriorMode,
    rotation_noise_deg: f64,
) -> Result<(ProjectionField, ProjectionField, SprvField)> {
    let gt_masked = encode_dvpb(&inst.observed, &inst.pose, &inst.sym);

    let prior_shape;
    let (coords, model_size, diag_hyp) = match prior {
        PriorMode::Instance => {
            let (size, _) = canonical_bbox(&inst.canonical_model)?;
            (inst.observed_nocs(), size, inst.pose.diagonal())
        }
        PriorMode::CategoryMean => {
            prior_shape = canonical_shape(
                inst.category,
                inst.canonical_model.len(),
                crate::synth::DEFAULT_LAPTOP_OPENING_DEG,
            )?;
            let (size, _) = canonical_bbox(&prior_shape.points)?;
            let coords = inst
                .correspondence
                .iter()
                .map(|&i| crate::types::NocsCoord(prior_shape.points[i]))
                .collect();
            (coords, size, mean_size.norm())
        }
    };
    let rotation_hyp: Matrix3<f64> = if rotation_noise_deg > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(inst.seed, ROTATION_NOISE_SALT));
        let delta = crate::synth::random_rotation_within(rotation_noise_deg.to_radians(), &mut rng);
        delta * inst.pose.rotation()
    } else {
        *inst.pose.rotation()
    };

    let hyp = hypothesize_field(&coords, &model_size, diag_hyp, &rotation_hyp, &inst.sym);
    let sprv = compute_sprv(&gt_masked, &hyp)?;
    Ok((gt_masked, hyp, sprv))
}

/// Processes one instance: ground-truth field, hypotheses from the chosen
/// prior, residuals, losses, decode and evaluation.
pub fn process_instance(
    inst: &SyntheticInstance,
    mean_size: &Vector3<f64>,
    spec: &PipelineSpec,
) -> Result<InstanceOutcome> {
    let full_tag = SymmetryTag::new(inst.category, SymmetryKind::None);
    let gt_full = encode_dvpb(&inst.observed, &inst.pose, &full_tag);
    let (gt_masked, hyp, sprv) =
        instance_fields(inst, mean_size, spec.prior, spec.rotation_noise_deg)?;

    // In a harness without a learned decoder the residual prediction is the
    // ground truth itself, so the data term vanishes and the regularizer
    // measures the residual magnitudes.
    let unit = FaceSigmas::uniform(1.0);
    let sprv_loss_value =
        sprv_loss(&sprv, &sprv, &unit, &unit, spec.weights.lambda0, Reduction::Mean)?;
    let reconstructed = sprv.apply_to(&hyp)?;
    let consistency =
        consistency_loss(&gt_masked.to_vector_field(), &reconstructed, Reduction::Mean)?;
    let total = crate::losses::total_loss(0.0, 0.0, sprv_loss_value, consistency, &spec.weights)?;

    // Decode from the full field, optionally perturbed.
    let mut vectors = gt_full.to_vector_field();
    if spec.dvpb_noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(inst.seed, FIELD_NOISE_SALT));
        vectors = vectors.with_noise(spec.dvpb_noise_sigma, &mut rng);
    }
    let decoded = decode_vector_field(&vectors, &inst.observed)?;
    let error = pose_error(&decoded, &inst.pose, &inst.sym, spec.iou_resolution);
    let size_err_m = (decoded.size() - inst.pose.size()).norm();

    Ok(InstanceOutcome {
        category: inst.category,
        error,
        size_err_m,
        mean_dvpb_norm: gt_masked.mean_norm(),
        mean_sprv_norm: sprv.mean_norm(),
        sprv_loss: sprv_loss_value,
        consistency,
        total_loss: total,
    })
}

/// Runs the full pipeline over a corpus spec. With an output directory the
/// report is written as `report.json` and `metrics.csv`, sweep curves as
/// `sweep_*.csv`, and per-instance dumps under `instances/` when enabled.
pub fn run_pipeline(
    corpus: &CorpusSpec,
    spec: &PipelineSpec,
    out_dir: Option<&Path>,
) -> Result<PipelineReport> {
    let mut instances = generate_corpus(corpus)?;
    if spec.augment != AugmentMode::None {
        for inst in &mut instances {
            let seed = derive_seed(inst.seed, AUGMENT_SALT);
            *inst = augment_instance(inst, spec.augment, &spec.augment_ranges, seed)?;
        }
    }
    let sizes = mean_sizes(&instances);

    let mut outcomes = Vec::with_capacity(instances.len());
    for inst in &instances {
        let mean_size = sizes.get(&inst.category).expect("category present");
        outcomes.push(process_instance(inst, mean_size, spec)?);
    }

    let mut errors: BTreeMap<String, Vec<PoseError>> = BTreeMap::new();
    for out in &outcomes {
        errors.entry(out.category.name().to_string()).or_default().push(out.error);
    }
    let metrics = MetricReport::from_errors(&errors, &spec.sweeps)?;

    let n = outcomes.len().max(1) as f64;
    let stats = CorpusStats {
        instances: outcomes.len(),
        mean_dvpb_norm: outcomes.iter().map(|o| o.mean_dvpb_norm).sum::<f64>() / n,
        mean_sprv_norm: outcomes.iter().map(|o| o.mean_sprv_norm).sum::<f64>() / n,
        mean_sprv_loss: outcomes.iter().map(|o| o.sprv_loss).sum::<f64>() / n,
        mean_consistency: outcomes.iter().map(|o| o.consistency).sum::<f64>() / n,
        max_consistency: outcomes.iter().map(|o| o.consistency).fold(0.0, f64::max),
        median_rotation_deg: median(&mut outcomes.iter().map(|o| o.error.rotation_deg).collect::<Vec<_>>()),
        median_translation_cm: median(&mut outcomes.iter().map(|o| o.error.translation_cm).collect::<Vec<_>>()),
        median_size_err_m: median(&mut outcomes.iter().map(|o| o.size_err_m).collect::<Vec<_>>()),
    };
    let report = PipelineReport {
        schema_version: CORPUS_SCHEMA_VERSION,
        metrics,
        stats,
        mean_sizes: sizes.iter().map(|(c, v)| (*c, [v.x, v.y, v.z])).collect(),
    };

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_vec_pretty(&report).expect("report is serializable"))?;
        std::fs::write(dir.join("metrics.csv"), report.metrics.to_csv())?;
        for (name, curve) in &report.metrics.sweeps {
            std::fs::write(dir.join(format!("sweep_{name}.csv")), curve.to_csv())?;
        }
        if spec.dump_fields {
            for inst in &instances {
                let id = instance_id(inst);
                let inst_dir = dir.join("instances").join(&id);
                std::fs::create_dir_all(&inst_dir)?;
                io::save_ply(&inst_dir.join("observed.ply"), &inst.observed, PlyFormat::Ascii)?;
                io::save_ply(&inst_dir.join("model.ply"), &inst.canonical_model, PlyFormat::Ascii)?;
                let gt = encode_dvpb(&inst.observed, &inst.pose, &inst.sym);
                write_json(&inst_dir.join("gt_field.json"), &FieldFile::from(&gt))?;
                write_json(&inst_dir.join("pose.json"), &PoseFile::from(&inst.pose))?;
            }
        }
    }
    Ok(report)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(value).expect("value is serializable"))?;
    Ok(())
}

fn instance_id(inst: &SyntheticInstance) -> String {
    format!("{}_{:016x}", inst.category, inst.seed)
}

/// Validated on-disk pose: row-major rotation, translation and size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoseFile {
    pub rotation: Vec<f64>,
    pub translation: [f64; 3],
    pub size: [f64; 3],
}

impl From<&Pose9D> for PoseFile {
    fn from(pose: &Pose9D) -> Self {
        Self {
            rotation: pose.rotation().transpose().as_slice().to_vec(),
            translation: [pose.translation().x, pose.translation().y, pose.translation().z],
            size: [pose.size().x, pose.size().y, pose.size().z],
        }
    }
}

impl PoseFile {
    pub fn to_pose(&self) -> Result<Pose9D> {
        if self.rotation.len() != 9 {
            return Err(Error::Parse(format!(
                "pose rotation must have 9 entries, got {}",
                self.rotation.len()
            )));
        }
        Pose9D::new(
            Matrix3::from_row_slice(&self.rotation),
            Vector3::from(self.translation),
            Vector3::from(self.size),
        )
    }
}

/// Per-instance JSON sidecar of a written corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub id: String,
    pub category: Category,
    pub seed: u64,
    pub symmetry: SymmetryKind,
    pub pose: PoseFile,
    pub correspondence: Vec<usize>,
    pub labels: Option<Vec<PlaneHalf>>,
    pub hinge: Option<crate::augment::HingeLine>,
}

/// Entry of the corpus manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub category: Category,
    pub seed: u64,
    pub symmetry: SymmetryKind,
    /// Relative paths: instance JSON, observed PLY, model PLY.
    pub instance: String,
    pub observed: String,
    pub model: String,
}

/// Corpus manifest with the pre-computed category mean sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub mean_sizes: BTreeMap<Category, [f64; 3]>,
    pub instances: Vec<ManifestEntry>,
}

/// Writes a corpus to disk: `manifest.json` plus per-instance directories
/// with observed/model point sets and a JSON sidecar.
pub fn write_corpus(
    dir: &Path,
    spec: &CorpusSpec,
    instances: &[SyntheticInstance],
    format: PlyFormat,
) -> Result<CorpusManifest> {
    std::fs::create_dir_all(dir)?;
    let sizes = mean_sizes(instances);
    let mut entries = Vec::with_capacity(instances.len());
    for inst in instances {
        let id = instance_id(inst);
        let rel = format!("instances/{id}");
        let inst_dir = dir.join(&rel);
        std::fs::create_dir_all(&inst_dir)?;
        io::save_ply(&inst_dir.join("observed.ply"), &inst.observed, format)?;
        io::save_ply(&inst_dir.join("model.ply"), &inst.canonical_model, format)?;
        let file = InstanceFile {
            schema_version: CORPUS_SCHEMA_VERSION,
            id: id.clone(),
            category: inst.category,
            seed: inst.seed,
            symmetry: inst.sym.kind,
            pose: PoseFile::from(&inst.pose),
            correspondence: inst.correspondence.clone(),
            labels: inst.labels.clone(),
            hinge: inst.hinge.clone(),
        };
        write_json(&inst_dir.join("instance.json"), &file)?;
        entries.push(ManifestEntry {
            id,
            category: inst.category,
            seed: inst.seed,
            symmetry: inst.sym.kind,
            instance: format!("{rel}/instance.json"),
            observed: format!("{rel}/observed.ply"),
            model: format!("{rel}/model.ply"),
        });
    }
    let manifest = CorpusManifest {
        schema_version: CORPUS_SCHEMA_VERSION,
        seed: spec.seed,
        mean_sizes: sizes.iter().map(|(c, v)| (*c, [v.x, v.y, v.z])).collect(),
        instances: entries,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// An instance read back from a written corpus.
#[derive(Debug, Clone)]
pub struct LoadedInstance {
    pub file: InstanceFile,
    pub pose: Pose9D,
    pub observed: Vec<Vector3<f64>>,
    pub model: Vec<Vector3<f64>>,
}

impl LoadedInstance {
    /// Rebuilds the in-memory instance form.
    pub fn to_instance(&self) -> SyntheticInstance {
        SyntheticInstance {
            category: self.file.category,
            seed: self.file.seed,
            sym: SymmetryTag::new(self.file.category, self.file.symmetry),
            pose: self.pose.clone(),
            canonical_model: self.model.clone(),
            observed: self.observed.clone(),
            correspondence: self.file.correspondence.clone(),
            labels: self.file.labels.clone(),
            hinge: self.file.hinge.clone(),
        }
    }
}

/// One prediction/ground-truth pose pair for evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosePair {
    pub id: String,
    pub category: Category,
    pub symmetry: SymmetryKind,
    pub pred: PoseFile,
    pub gt: PoseFile,
}

/// Known-correspondence evaluation input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairsFile {
    pub schema_version: u32,
    pub pairs: Vec<PosePair>,
}

/// Builds a metric report from prediction/ground-truth pose pairs.
pub fn evaluate_pairs(
    pairs: &PairsFile,
    iou_resolution: usize,
    grids: &SweepGrids,
) -> Result<MetricReport> {
    if pairs.pairs.is_empty() {
        return Err(Error::EmptyInput("no pose pairs to evaluate".into()));
    }
    let mut errors: BTreeMap<String, Vec<PoseError>> = BTreeMap::new();
    for pair in &pairs.pairs {
        let pred = pair.pred.to_pose()?;
        let gt = pair.gt.to_pose()?;
        let sym = SymmetryTag::new(pair.category, pair.symmetry);
        errors
            .entry(pair.category.name().to_string())
            .or_default()
            .push(pose_error(&pred, &gt, &sym, iou_resolution));
    }
    MetricReport::from_errors(&errors, grids)
}

/// Reads a corpus directory written by [`write_corpus`].
pub fn load_corpus(dir: &Path) -> Result<(CorpusManifest, Vec<LoadedInstance>)> {
    let manifest: CorpusManifest =
        serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)
            .map_err(|e| Error::Parse(format!("manifest.json: {e}")))?;
    if manifest.schema_version != CORPUS_SCHEMA_VERSION {
        return Err(Error::Parse(format!(
            "unsupported corpus schema version {}",
            manifest.schema_version
        )));
    }
    let mut instances = Vec::with_capacity(manifest.instances.len());
    for entry in &manifest.instances {
        let file: InstanceFile =
            serde_json::from_slice(&std::fs::read(dir.join(&entry.instance))?)
                .map_err(|e| Error::Parse(format!("{}: {e}", entry.instance)))?;
        let pose = file.pose.to_pose()?;
        let observed = io::load_ply(&dir.join(&entry.observed))?;
        let model = io::load_ply(&dir.join(&entry.model))?;
        instances.push(LoadedInstance { file, pose, observed, model });
    }
    Ok((manifest, instances))
}

/// Checks the shared-box assumption of the hypothesis path on an instance:
/// a one-hot assignment of observed points onto the model keeps the
/// coordinate box inside the model box.
pub fn verify_shared_bbox(inst: &SyntheticInstance) -> bool {
    let assignment = one_hot_assignment(&inst.correspondence, inst.canonical_model.len());
    let coords = inst.observed_nocs();
    shared_bbox_check(&inst.canonical_model, &coords, &assignment).contained
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_corpus(seed: u64, axis_scale: [f64; 2]) -> CorpusSpec {
        CorpusSpec {
            seed,
            instances_per_category: 2,
            categories: Category::ALL.to_vec(),
            params: InstanceParams {
                n_points: 128,
                m_points: 128,
                axis_scale,
                ..Default::default()
            },
            symmetry: BTreeMap::new(),
        }
    }

    fn exact_spec() -> PipelineSpec {
        PipelineSpec {
            prior: PriorMode::Instance,
            rotation_noise_deg: 0.0,
            dvpb_noise_sigma: 0.0,
            augment: AugmentMode::None,
            augment_ranges: AugmentRanges::default(),
            weights: LossWeights::default(),
            iou_resolution: 30,
            sweeps: SweepGrids::default(),
            dump_fields: false,
        }
    }

    #[test]
    fn exact_pipeline_closes() {
        let report = run_pipeline(&small_corpus(5, [1.0, 1.0]), &exact_spec(), None).unwrap();
        assert_eq!(report.stats.instances, 12);
        assert!(report.stats.mean_sprv_norm < 1e-9, "{}", report.stats.mean_sprv_norm);
        assert!(report.stats.max_consistency < 1e-9, "{}", report.stats.max_consistency);
        assert!(report.stats.mean_sprv_loss.abs() < 1e-9);
        assert_abs_diff_eq!(report.metrics.mean.deg5_cm2, 1.0, epsilon = 1e-12);
        assert!(report.stats.median_rotation_deg < 1e-5);
    }

    #[test]
    fn category_mean_prior_keeps_residuals_small() {
        let corpus = small_corpus(6, [0.8, 1.2]);
        let spec = PipelineSpec { prior: PriorMode::CategoryMean, ..exact_spec() };
        let report = run_pipeline(&corpus, &spec, None).unwrap();
        assert!(
            report.stats.mean_sprv_norm < report.stats.mean_dvpb_norm,
            "sprv {} vs dvpb {}",
            report.stats.mean_sprv_norm,
            report.stats.mean_dvpb_norm
        );
        assert!(report.stats.mean_sprv_norm > 0.0);
    }

    #[test]
    fn runs_are_deterministic() {
        let corpus = small_corpus(7, [0.8, 1.2]);
        let spec = PipelineSpec {
            prior: PriorMode::CategoryMean,
            dvpb_noise_sigma: 0.002,
            rotation_noise_deg: 3.0,
            ..exact_spec()
        };
        let a = run_pipeline(&corpus, &spec, None).unwrap();
        let b = run_pipeline(&corpus, &spec, None).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn augmented_runs_still_close() {
        // Re-derived labels keep the instance prior exact under augmentation.
        let corpus = small_corpus(8, [1.0, 1.0]);
        for mode in [AugmentMode::NonLinear, AugmentMode::Linear] {
            let spec = PipelineSpec { augment: mode, ..exact_spec() };
            let report = run_pipeline(&corpus, &spec, None).unwrap();
            assert!(report.stats.mean_sprv_norm < 1e-9, "{mode:?}");
            assert!(report.stats.max_consistency < 1e-9, "{mode:?}");
            assert!(report.stats.median_rotation_deg < 1e-5, "{mode:?}");
        }
    }

    #[test]
    fn shared_bbox_holds_on_generated_instances() {
        let corpus = small_corpus(9, [0.8, 1.2]);
        let instances = generate_corpus(&corpus).unwrap();
        for inst in &instances {
            assert!(verify_shared_bbox(inst), "{}", instance_id(inst));
        }
    }

    #[test]
    fn corpus_roundtrips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = small_corpus(10, [0.9, 1.1]);
        let instances = generate_corpus(&corpus).unwrap();
        let manifest = write_corpus(dir.path(), &corpus, &instances, PlyFormat::Ascii).unwrap();
        assert_eq!(manifest.instances.len(), instances.len());

        let (manifest2, loaded) = load_corpus(dir.path()).unwrap();
        assert_eq!(manifest2.instances.len(), manifest.instances.len());
        for (inst, back) in instances.iter().zip(&loaded) {
            assert_eq!(inst.observed, back.observed);
            assert_eq!(inst.canonical_model, back.model);
            assert_eq!(inst.pose, back.pose);
            assert_eq!(inst.correspondence, back.file.correspondence);
        }
    }

    #[test]
    fn pose_file_rejects_invalid_rotation() {
        let mut file = PoseFile {
            rotation: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            translation: [0.0; 3],
            size: [0.1, 0.1, 0.1],
        };
        assert!(file.to_pose().is_ok());
        file.rotation[0] = 2.0;
        assert!(file.to_pose().is_err());
    }

    #[test]
    fn derive_seed_is_stable_and_spread() {
        assert_eq!(derive_seed(1, 2), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 2), derive_seed(1, 3));
        assert_ne!(derive_seed(1, 2), derive_seed(2, 2));
    }

    fn noise_corpus() -> (CorpusSpec, PipelineSpec) {
        let corpus = CorpusSpec {
            seed: 2305,
            instances_per_category: 34,
            categories: Category::ALL.to_vec(),
            params: InstanceParams {
                n_points: 256,
                m_points: 256,
                axis_scale: [1.0, 1.0],
                ..Default::default()
            },
            symmetry: BTreeMap::new(),
        };
        let spec = PipelineSpec { dvpb_noise_sigma: 0.005, iou_resolution: 20, ..exact_spec() };
        (corpus, spec)
    }

    // Frozen medians from the Monte-Carlo oracle run below (204 instances,
    // sigma = 0.005 m): rotation 0.1964 deg, translation 0.0372 cm, size
    // 0.00065 m. Bounds carry 25% headroom; refresh via the ignored test.
    const NOISE_MEDIAN_ROTATION_DEG_BOUND: f64 = 0.25;
    const NOISE_MEDIAN_TRANSLATION_CM_BOUND: f64 = 0.047;
    const NOISE_MEDIAN_SIZE_ERR_M_BOUND: f64 = 0.00082;

    #[test]
    fn noisy_decode_medians_stay_within_regression_bounds() {
        let (corpus, spec) = noise_corpus();
        let report = run_pipeline(&corpus, &spec, None).unwrap();
        assert_eq!(report.stats.instances, 204);
        assert!(
            report.stats.median_rotation_deg < NOISE_MEDIAN_ROTATION_DEG_BOUND,
            "rotation median {}",
            report.stats.median_rotation_deg
        );
        assert!(
            report.stats.median_translation_cm < NOISE_MEDIAN_TRANSLATION_CM_BOUND,
            "translation median {}",
            report.stats.median_translation_cm
        );
        assert!(
            report.stats.median_size_err_m < NOISE_MEDIAN_SIZE_ERR_M_BOUND,
            "size median {}",
            report.stats.median_size_err_m
        );
    }

    #[test]
    #[ignore = "prints the Monte-Carlo medians used to refresh the regression bounds"]
    fn noisy_decode_medians_oracle() {
        let (corpus, spec) = noise_corpus();
        let report = run_pipeline(&corpus, &spec, None).unwrap();
        println!(
            "median rotation {} deg, translation {} cm, size {} m",
            report.stats.median_rotation_deg,
            report.stats.median_translation_cm,
            report.stats.median_size_err_m
        );
    }
}
