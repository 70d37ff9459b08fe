//! Run configuration: one JSON document with a section per pipeline stage.

use std::path::{Path, PathBuf};

use hhsae_core::data::{GeneratorConfig, DEFAULT_CLIP_QUANTILES};
use hhsae_core::evaluation::{ProbeConfig, Tier, DEFAULT_SPEC_TARGET};
use hhsae_core::model::ModelDims;
use hhsae_core::objective::LossWeights;
use hhsae_core::synthesis::DEFAULT_ALPHA_RANGE;
use hhsae_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed; every stage derives its streams from it.
    pub seed: u64,
    pub data: DataSection,
    pub generator: GeneratorSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub loss: LossWeights,
    pub discovery: DiscoverySection,
    pub synthesis: SynthesisSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: DataSection::default(),
            generator: GeneratorSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            loss: LossWeights::default(),
            discovery: DiscoverySection::default(),
            synthesis: SynthesisSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// External raw CSV for `preprocess`; split into the run directory.
    pub input: Option<PathBuf>,
    pub label_column: String,
    pub clip_quantiles: (f64, f64),
    pub log_features: Vec<String>,
    pub test_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            input: None,
            label_column: "label".into(),
            clip_quantiles: DEFAULT_CLIP_QUANTILES,
            log_features: Vec::new(),
            test_fraction: 0.2,
        }
    }
}

/// Planted-manifold parameters; the seed comes from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSection {
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub m: usize,
    pub n_motifs: usize,
    pub atoms_per_motif: usize,
    pub prevalence: f64,
    pub noise_std: f64,
    pub context_scale: f64,
    pub context_shift: f64,
    pub twin_motif: bool,
    pub distractor_ratio: f64,
    pub coef_range: (f64, f64),
}

impl Default for GeneratorSection {
    fn default() -> Self {
        let g = GeneratorConfig::default();
        GeneratorSection {
            n: g.n,
            d: g.d,
            r: g.r,
            m: g.m,
            n_motifs: g.n_motifs,
            atoms_per_motif: g.atoms_per_motif,
            prevalence: g.prevalence,
            noise_std: g.noise_std,
            context_scale: g.context_scale,
            context_shift: g.context_shift,
            twin_motif: g.twin_motif,
            distractor_ratio: g.distractor_ratio,
            coef_range: g.coef_range,
        }
    }
}

impl GeneratorSection {
    pub fn to_config(&self, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n: self.n,
            d: self.d,
            r: self.r,
            m: self.m,
            n_motifs: self.n_motifs,
            atoms_per_motif: self.atoms_per_motif,
            prevalence: self.prevalence,
            noise_std: self.noise_std,
            context_scale: self.context_scale,
            context_shift: self.context_shift,
            twin_motif: self.twin_motif,
            distractor_ratio: self.distractor_ratio,
            coef_range: self.coef_range,
            seed,
        }
    }
}

/// Layer widths; the input width is taken from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub d_dense: usize,
    pub d1: usize,
    pub k1: usize,
    pub d2: usize,
    pub k2: usize,
    pub dense_enabled: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = TrainConfig::default().dims;
        ModelSection {
            d_dense: d.d_dense,
            d1: d.d1,
            k1: d.k1,
            d2: d.d2,
            k2: d.k2,
            dense_enabled: d.dense_enabled,
        }
    }
}

impl ModelSection {
    pub fn dims(&self, input_dim: usize) -> ModelDims {
        ModelDims {
            input_dim,
            d_dense: self.d_dense,
            d1: self.d1,
            k1: self.k1,
            d2: self.d2,
            k2: self.k2,
            dense_enabled: self.dense_enabled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay_gamma: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            lr_decay_gamma: t.lr_decay_gamma,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
        }
    }
}

/// Which samples form the cohort for affinity and module metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortRule {
    Positives,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscoverySection {
    pub resolution: f64,
    pub theta_atom: f64,
    pub cohort: CohortRule,
    /// Atoms listed per semantic profile.
    pub top_n: usize,
}

impl Default for DiscoverySection {
    fn default() -> Self {
        DiscoverySection {
            resolution: 1.0,
            theta_atom: hhsae_core::discovery::DEFAULT_THETA_ATOM,
            cohort: CohortRule::Positives,
            top_n: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSection {
    /// Module to steer; `None` picks the module with the largest bias mass.
    pub module: Option<usize>,
    pub alpha_range: (f64, f64),
    /// Explicit sample count; otherwise `fraction_of_positives` of the
    /// training positives.
    pub n: Option<usize>,
    pub fraction_of_positives: f64,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        SynthesisSection {
            module: None,
            alpha_range: DEFAULT_ALPHA_RANGE,
            n: None,
            fraction_of_positives: 0.2,
        }
    }
}

/// Which split the probes are cross-validated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeSplit {
    All,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub folds: usize,
    pub runs: usize,
    pub spec_target: f64,
    pub tiers: Vec<Tier>,
    pub probe_split: ProbeSplit,
    pub probe: ProbeConfig,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            folds: 3,
            runs: 10,
            spec_target: DEFAULT_SPEC_TARGET,
            tiers: Tier::ALL.to_vec(),
            probe_split: ProbeSplit::All,
            probe: ProbeConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn train_config(&self, input_dim: usize) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            lr_decay_gamma: t.lr_decay_gamma,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            loss: self.loss,
            seed: self.seed,
            dims: self.model.dims(input_dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.data.clip_quantiles;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(CliError::config("data.clip_quantiles", "need 0 <= lo <= hi <= 1"));
        }
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return Err(CliError::config("data.test_fraction", "must lie in (0, 1)"));
        }
        // Input width is unknown here; the narrowest width the dense
        // bottleneck admits checks everything else.
        self.train_config(self.model.d_dense + 1)
            .validate()
            .map_err(|e| CliError::config("train", e.to_string()))?;
        if !(self.discovery.resolution > 0.0) {
            return Err(CliError::config("discovery.resolution", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.discovery.theta_atom) {
            return Err(CliError::config("discovery.theta_atom", "must lie in [0, 1)"));
        }
        let (a, b) = self.synthesis.alpha_range;
        if !(a <= b) {
            return Err(CliError::config("synthesis.alpha_range", "need lo <= hi"));
        }
        if !(self.synthesis.fraction_of_positives >= 0.0) {
            return Err(CliError::config("synthesis.fraction_of_positives", "must be non-negative"));
        }
        if self.eval.folds < 2 {
            return Err(CliError::config("eval.folds", "need at least 2 folds"));
        }
        if self.eval.runs == 0 {
            return Err(CliError::config("eval.runs", "need at least 1 run"));
        }
        if !(self.eval.spec_target > 0.0 && self.eval.spec_target <= 1.0) {
            return Err(CliError::config("eval.spec_target", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Sets `path` (dot separated) inside `root`, creating objects on the way.
/// The value is parsed as JSON, falling back to a plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(assignment, "override must look like key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::config(key, "empty path segment in override"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = match node {
            Value::Object(map) => map,
            _ => return Err(CliError::config(parts[..i].join("."), "cannot override inside a non-object")),
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("loop returns on the last segment")
}

/// Parses a config document, applies overrides, then validates.
pub fn parse_config(text: Option<&str>, overrides: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let mut root: Value = match text {
        Some(t) => serde_json::from_str(t).map_err(|e| CliError::config("<root>", e.to_string()))?,
        None => Value::Object(Default::default()),
    };
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let mut cfg: RunConfig = serde_path_to_error::deserialize(root).map_err(|e| {
        let path = e.path().to_string();
        CliError::config(path, e.into_inner().to_string())
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let text = match path {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?),
        None => None,
    };
    parse_config(text.as_deref(), overrides, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(parse_config(Some("{}"), &[], None).unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_apply_before_validation() {
        let c = parse_config(
            None,
            &["train.epochs=3".into(), "eval.tiers=[\"L0\",\"f1\"]".into(), "data.label_column=y".into()],
            Some(9),
        )
        .unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.eval.tiers, vec![Tier::L0, Tier::F1]);
        assert_eq!(c.data.label_column, "y");
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn unknown_key_is_named() {
        match parse_config(Some(r#"{"train": {"lrr": 1}}"#), &[], None) {
            Err(CliError::Config { key, message }) => {
                assert_eq!(key, "train.lrr");
                assert!(message.contains("lrr"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_value_is_rejected() {
        let err = parse_config(None, &["eval.folds=1".into()], None).unwrap_err();
        assert!(matches!(err, CliError::Config { ref key, .. } if key == "eval.folds"));
        assert!(parse_config(None, &["novalue".into()], None).is_err());
    }
}
