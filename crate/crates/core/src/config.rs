//! Experiment configuration and the model bundle written next to weights.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Model;
use crate::rng::RngState;
use crate::train::{FitOptions, OptimizerKind};
use crate::vision::{AugmentFlags, ClassMode, LabelMap, ValSplit};
use crate::zoo::{
    freeze_features, proposed_cnn, read_weights, replace_head, residual_style, vgg_style, write_atomic, write_weights, ModelSpec,
    ResidualProfile, VggProfile,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Proposed,
    VggStyle,
    ResidualStyle,
}

/// Size preset for the VGG-style and residual-style builders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Desk,
    Full,
}

fn default_input_size() -> usize {
    224
}
fn default_epochs() -> usize {
    70
}
fn default_batch_size() -> usize {
    128
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_width_scale() -> usize {
    1
}

/// A flat JSON object. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub data_root: PathBuf,
    #[serde(default)]
    pub class_mode: ClassMode,
    /// Explicit old-name to new-name relabelling (`"DROP"` removes a class).
    /// Takes precedence over `class_mode`.
    #[serde(default)]
    pub class_mapping: Option<BTreeMap<String, String>>,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub profile: Profile,
    /// Width multiplier of the proposed model.
    #[serde(default = "default_width_scale")]
    pub width_scale: usize,
    #[serde(default)]
    pub freeze_boundary: Option<String>,
    #[serde(default)]
    pub pretrained_weights: Option<PathBuf>,
    /// Images are converted to gray and resized to `input_size x input_size`.
    #[serde(default = "default_input_size")]
    pub input_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub val: ValSplit,
    #[serde(default)]
    pub augment: AugmentFlags,
    /// Multithreaded per-sample passes; results match the sequential run.
    #[serde(default)]
    pub parallel: bool,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// A config with every default applied.
    pub fn new(data_root: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed: 0,
            data_root: data_root.into(),
            class_mode: ClassMode::default(),
            class_mapping: None,
            model: ModelKind::default(),
            profile: Profile::default(),
            width_scale: default_width_scale(),
            freeze_boundary: None,
            pretrained_weights: None,
            input_size: default_input_size(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            optimizer: OptimizerKind::default(),
            val: ValSplit::default(),
            augment: AugmentFlags::default(),
            parallel: false,
            out_dir: out_dir.into(),
        }
    }

    /// Parses and validates. Relative paths are resolved against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.data_root);
        resolve(&mut cfg.out_dir);
        if let Some(p) = cfg.pretrained_weights.as_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("config: {m}")));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.input_size == 0 {
            return bad("input_size must be >= 1".into());
        }
        if self.width_scale == 0 {
            return bad("width_scale must be >= 1".into());
        }
        self.val.validate().or_else(|e| bad(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            learning_rate: self.learning_rate,
            parallel: self.parallel,
        }
    }

    /// The relabelling implied by `class_mapping` or else `class_mode`.
    pub fn mapping(&self) -> Option<BTreeMap<String, String>> {
        self.class_mapping.clone().or_else(|| self.class_mode.mapping())
    }

    pub fn model_spec(&self, classes: usize) -> Result<ModelSpec> {
        let input = [1, self.input_size, self.input_size];
        match (self.model, self.profile) {
            (ModelKind::Proposed, _) => proposed_cnn(input, classes, self.width_scale),
            (ModelKind::VggStyle, Profile::Desk) => vgg_style(input, classes, &VggProfile::desk()),
            (ModelKind::VggStyle, Profile::Full) => vgg_style(input, classes, &VggProfile::full()),
            (ModelKind::ResidualStyle, Profile::Desk) => residual_style(input, classes, &ResidualProfile::desk()),
            (ModelKind::ResidualStyle, Profile::Full) => residual_style(input, classes, &ResidualProfile::full()),
        }
    }

    /// A fresh model, or the pretrained one with a new head, then frozen up to
    /// `freeze_boundary` when set.
    pub fn build_model(&self, classes: usize, rng: &mut RngState) -> Result<(ModelSpec, Model)> {
        let (name, model) = match &self.pretrained_weights {
            None => {
                let spec = self.model_spec(classes)?;
                (spec.name.clone(), spec.build(rng)?)
            }
            Some(path) => {
                let (pretrained, meta) = load_bundle(path)?;
                let want = [1, self.input_size, self.input_size];
                if pretrained.input_dims() != want {
                    return Err(Error::build(
                        "input",
                        format!("pretrained input {:?} differs from configured {want:?}", pretrained.input_dims()),
                    ));
                }
                log::info!("transferring backbone of '{}' from {}", meta.spec.name, path.display());
                (meta.spec.name, replace_head(pretrained, classes, rng)?)
            }
        };
        let model = match &self.freeze_boundary {
            Some(b) => freeze_features(model, b)?,
            None => model,
        };
        Ok((ModelSpec::from_model(name, &model), model))
    }
}

/// Everything needed to rebuild a trained model apart from its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub spec: ModelSpec,
    pub labels: LabelMap,
    /// Relabelling applied to the training data, if any.
    pub mapping: Option<BTreeMap<String, String>>,
    pub input_size: usize,
}

/// `weights.nnwa` -> `weights.json`.
pub fn meta_path(weights: &Path) -> PathBuf {
    weights.with_extension("json")
}

/// Writes the weight archive and its JSON sidecar.
pub fn save_bundle(model: &Model, meta: &ModelMeta, weights: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::Serialize(e.to_string()))?;
    write_weights(model, weights)?;
    write_atomic(&meta_path(weights), json.as_bytes())
}

pub fn load_meta(weights: &Path) -> Result<ModelMeta> {
    let path = meta_path(weights);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

pub fn load_bundle(weights: &Path) -> Result<(Model, ModelMeta)> {
    let meta = load_meta(weights)?;
    let model = read_weights(weights, &meta.spec)?;
    Ok((model, meta))
}
