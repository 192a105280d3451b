//! Shared TOML configuration: category table, loss weights, augmentation
//! ranges, pose sampling bounds, evaluation settings and seeds.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentRanges;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::metrics::SweepGrids;
use crate::types::{Category, SymmetryKind, SymmetryTag};

/// Corpus generation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub seed: u64,
    pub instances_per_category: usize,
    pub categories: Vec<Category>,
    /// Observed cloud size per instance.
    pub n_points: usize,
    /// Canonical model size per instance.
    pub m_points: usize,
    /// Per-axis scale variation range applied to the category prior.
    pub axis_scale: [f64; 2],
    /// Laptop opening angle in degrees.
    pub laptop_opening_deg: f64,
    /// Gaussian noise sigma on observed points (m).
    pub noise_sigma: f64,
    /// Rigid rotation jitter bound (degrees) applied with label update.
    pub rot_jitter_deg: f64,
    /// Rigid translation jitter bound (m) applied with label update.
    pub trans_jitter_m: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            instances_per_category: 10,
            categories: Category::ALL.to_vec(),
            n_points: 1024,
            m_points: 1024,
            axis_scale: [1.0, 1.0],
            laptop_opening_deg: 110.0,
            noise_sigma: 0.0,
            rot_jitter_deg: 0.0,
            trans_jitter_m: 0.0,
        }
    }
}

/// Pose sampling bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseConfig {
    /// Metric bounding-box diagonal range (m).
    pub diag_m: [f64; 2],
    /// Uniform x/y translation range (m).
    pub translation_xy_m: [f64; 2],
    /// Uniform z translation range (m).
    pub translation_z_m: [f64; 2],
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self {
            diag_m: [0.15, 0.5],
            translation_xy_m: [-0.4, 0.4],
            translation_z_m: [0.8, 2.4],
        }
    }
}

/// Where the hypothesis inputs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMode {
    /// The instance's own canonical model; exact hypotheses.
    Instance,
    /// The undeformed category mean shape.
    CategoryMean,
}

/// Hypothesis-path settings: prior source, rotation source and field noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypothesisConfig {
    pub prior: PriorMode,
    /// Angular noise (degrees) applied to the rotation used in hypotheses,
    /// standing in for an imperfect rotation prediction. Zero keeps the
    /// ground-truth rotation.
    pub rotation_noise_deg: f64,
    /// Gaussian noise sigma (m) added to the ground-truth field before
    /// decoding.
    pub dvpb_noise_sigma: f64,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        Self { prior: PriorMode::Instance, rotation_noise_deg: 0.0, dvpb_noise_sigma: 0.0 }
    }
}

/// Evaluation settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_resolution: usize,
    pub sweeps: SweepGrids,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { iou_resolution: crate::metrics::DEFAULT_IOU_RESOLUTION, sweeps: SweepGrids::default() }
    }
}

/// Top-level configuration file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus: CorpusConfig,
    pub pose: PoseConfig,
    pub weights: LossWeights,
    pub augment: AugmentRanges,
    pub eval: EvalConfig,
    pub hypothesis: HypothesisConfig,
    /// Per-category symmetry overrides; unlisted categories use defaults.
    pub symmetry: BTreeMap<Category, SymmetryKind>,
}

impl Config {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Config> {
        let config: Config = toml::from_str(text).map_err(|e| Error::ConfigError {
            key: e.span().map(|s| format!("offset {}", s.start)).unwrap_or_else(|| "<root>".into()),
            message: e.message().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file from disk.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// Range and positivity checks, reporting the offending key.
    pub fn validate(&self) -> Result<()> {
        let check_range = |key: &str, range: [f64; 2]| -> Result<()> {
            if range[0] > range[1] || !range[0].is_finite() || !range[1].is_finite() {
                return Err(Error::ConfigError {
                    key: key.into(),
                    message: format!("invalid range [{}, {}]", range[0], range[1]),
                });
            }
            Ok(())
        };
        if self.corpus.n_points < 3 {
            return Err(Error::ConfigError {
                key: "corpus.n_points".into(),
                message: "need at least 3 observed points".into(),
            });
        }
        if self.corpus.m_points < 2 {
            return Err(Error::ConfigError {
                key: "corpus.m_points".into(),
                message: "need at least 2 model points".into(),
            });
        }
        if self.corpus.categories.is_empty() {
            return Err(Error::ConfigError {
                key: "corpus.categories".into(),
                message: "category list is empty".into(),
            });
        }
        check_range("corpus.axis_scale", self.corpus.axis_scale)?;
        if self.corpus.axis_scale[0] <= 0.0 {
            return Err(Error::ConfigError {
                key: "corpus.axis_scale".into(),
                message: "scales must be positive".into(),
            });
        }
        if self.corpus.noise_sigma < 0.0 {
            return Err(Error::ConfigError {
                key: "corpus.noise_sigma".into(),
                message: "sigma must be non-negative".into(),
            });
        }
        check_range("pose.diag_m", self.pose.diag_m)?;
        if self.pose.diag_m[0] <= 0.0 {
            return Err(Error::ConfigError {
                key: "pose.diag_m".into(),
                message: "diagonal must be positive".into(),
            });
        }
        check_range("pose.translation_xy_m", self.pose.translation_xy_m)?;
        check_range("pose.translation_z_m", self.pose.translation_z_m)?;
        self.weights.validate()?;
        check_range("augment.gamma_max", self.augment.gamma_max)?;
        check_range("augment.gamma_min", self.augment.gamma_min)?;
        check_range("augment.gamma", self.augment.gamma)?;
        check_range("augment.hinge_deg", self.augment.hinge_deg)?;
        if self.eval.iou_resolution == 0 {
            return Err(Error::ConfigError {
                key: "eval.iou_resolution".into(),
                message: "resolution must be at least 1".into(),
            });
        }
        if self.hypothesis.rotation_noise_deg < 0.0 {
            return Err(Error::ConfigError {
                key: "hypothesis.rotation_noise_deg".into(),
                message: "must be non-negative".into(),
            });
        }
        if self.hypothesis.dvpb_noise_sigma < 0.0 {
            return Err(Error::ConfigError {
                key: "hypothesis.dvpb_noise_sigma".into(),
                message: "must be non-negative".into(),
            });
        }
        Ok(())
    }

    /// Symmetry tag for a category, honoring overrides.
    pub fn symmetry_tag(&self, category: Category) -> SymmetryTag {
        match self.symmetry.get(&category) {
            Some(kind) => SymmetryTag::new(category, *kind),
            None => SymmetryTag::default_for(category),
        }
    }
}
