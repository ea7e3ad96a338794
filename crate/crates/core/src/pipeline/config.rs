//! Declarative run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::numeric::SdDivisor;
use crate::stats::{LmmMethod, Weighting};
use crate::style::{ManifoldConfig, NeighborQuery};
use crate::theme::JumpMetric;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub stories: Option<PathBuf>,
    pub continuations: Option<PathBuf>,
    pub theme_embeddings: Option<PathBuf>,
    pub style_embeddings: Option<PathBuf>,
    pub affect: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Metrics {
    pub theme: bool,
    pub affect: bool,
    pub style: bool,
    pub fixed_k: bool,
    pub manifold: bool,
    pub pca: bool,
    pub lmm: bool,
}

impl Default for Metrics {
    fn default() -> Self {
        Metrics {
            theme: true,
            affect: true,
            style: true,
            fixed_k: true,
            manifold: true,
            pca: true,
            lmm: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSettings {
    pub replicates: usize,
    pub level: f64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        BootstrapSettings {
            replicates: 2000,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThemeSettings {
    pub metric: JumpMetric,
    pub sd_divisor: SdDivisor,
}

impl Default for ThemeSettings {
    fn default() -> Self {
        ThemeSettings {
            metric: JumpMetric::L2,
            sd_divisor: SdDivisor::Sample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmdSettings {
    pub subsample_cap: usize,
    /// Sentence-bootstrap replicates for model-vs-human MMD.
    pub replicates: usize,
    /// Fixed kernel bandwidth; the median heuristic is used when absent.
    pub bandwidth: Option<f64>,
}

impl Default for MmdSettings {
    fn default() -> Self {
        MmdSettings {
            subsample_cap: 1000,
            replicates: 500,
            bandwidth: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedKSettings {
    pub k: usize,
    pub resamples: usize,
}

impl Default for FixedKSettings {
    fn default() -> Self {
        FixedKSettings { k: 8, resamples: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldSettings {
    pub pca_dims: usize,
    pub neighbor_k: usize,
    pub radius_quantile: f64,
    pub standardize: bool,
    pub query: NeighborQuery,
    /// Per-group sentence cap applied before the neighbor search.
    pub subsample_cap: usize,
}

impl Default for ManifoldSettings {
    fn default() -> Self {
        let m = ManifoldConfig::default();
        ManifoldSettings {
            pca_dims: m.pca_dims,
            neighbor_k: m.neighbor_k,
            radius_quantile: m.radius_quantile,
            standardize: m.standardize,
            query: m.query,
            subsample_cap: 2000,
        }
    }
}

impl ManifoldSettings {
    pub fn to_config(self) -> ManifoldConfig {
        ManifoldConfig {
            pca_dims: self.pca_dims,
            neighbor_k: self.neighbor_k,
            radius_quantile: self.radius_quantile,
            standardize: self.standardize,
            query: self.query,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LmmModel {
    StageContrast,
    GeneratedTrend,
    DomainCompression,
}

impl LmmModel {
    pub fn as_str(self) -> &'static str {
        match self {
            LmmModel::StageContrast => "stage_contrast",
            LmmModel::GeneratedTrend => "generated_trend",
            LmmModel::DomainCompression => "domain_compression",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmmSettings {
    pub models: Vec<LmmModel>,
    pub method: LmmMethod,
    pub length_covariate: bool,
    pub alpha: f64,
}

impl Default for LmmSettings {
    fn default() -> Self {
        LmmSettings {
            models: vec![
                LmmModel::StageContrast,
                LmmModel::GeneratedTrend,
                LmmModel::DomainCompression,
            ],
            method: LmmMethod::Ml,
            length_covariate: false,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaSettings {
    pub components: usize,
}

impl Default for PcaSettings {
    fn default() -> Self {
        PcaSettings { components: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    /// Sources in stage order; the first is the human reference.
    pub stage_order: Vec<String>,
    /// Sources compared by the cross-domain range reduction.
    pub endpoints: (String, String),
    pub weighting: Weighting,
    pub inputs: Inputs,
    pub metrics: Metrics,
    pub bootstrap: BootstrapSettings,
    pub theme: ThemeSettings,
    pub mmd: MmdSettings,
    pub fixed_k: FixedKSettings,
    pub manifold: ManifoldSettings,
    pub lmm: LmmSettings,
    pub pca: PcaSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output: PathBuf::from("report"),
            stage_order: ["Human", "Base", "SFT", "DPO", "RLVR"].map(String::from).to_vec(),
            endpoints: ("Human".into(), "RLVR".into()),
            weighting: Weighting::Continuation,
            inputs: Inputs::default(),
            metrics: Metrics::default(),
            bootstrap: BootstrapSettings::default(),
            theme: ThemeSettings::default(),
            mmd: MmdSettings::default(),
            fixed_k: FixedKSettings::default(),
            manifold: ManifoldSettings::default(),
            lmm: LmmSettings::default(),
            pca: PcaSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Read a config file. Relative input and output paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_relative(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        let i = &mut self.inputs;
        for p in [
            &mut i.stories,
            &mut i.continuations,
            &mut i.theme_embeddings,
            &mut i.style_embeddings,
            &mut i.affect,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output);
    }

    pub fn human(&self) -> &str {
        self.stage_order.first().map_or("Human", String::as_str)
    }

    /// Check that every enabled metric has its inputs and that settings are
    /// in range. Does not touch the filesystem.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let missing = |what: &str, metric: &str| {
            Err(PipelineError::Config(format!(
                "{metric} metrics are enabled but no {what} input is configured"
            )))
        };
        let i = &self.inputs;
        if i.stories.is_none() {
            return missing("stories", "all");
        }
        if i.continuations.is_none() {
            return missing("continuations", "all");
        }
        if self.metrics.theme && i.theme_embeddings.is_none() {
            return missing("theme_embeddings", "theme");
        }
        if self.metrics.affect && i.affect.is_none() {
            return missing("affect", "affect");
        }
        let style_on = self.metrics.style || self.metrics.fixed_k || self.metrics.manifold || self.metrics.pca;
        if style_on && i.style_embeddings.is_none() {
            return missing("style_embeddings", "style");
        }
        self.validate_settings()
    }

    /// Range checks on settings alone, for runs whose inputs are already in
    /// memory.
    pub fn validate_settings(&self) -> Result<(), PipelineError> {
        if self.stage_order.is_empty() {
            return Err(PipelineError::Config("stage_order is empty".into()));
        }
        if !(self.bootstrap.level > 0.0 && self.bootstrap.level < 1.0) {
            return Err(PipelineError::Config(format!(
                "bootstrap level {} is outside (0, 1)",
                self.bootstrap.level
            )));
        }
        if self.mmd.subsample_cap < 2 {
            return Err(PipelineError::Config("mmd.subsample_cap must be at least 2".into()));
        }
        if self.fixed_k.k == 0 || self.fixed_k.resamples == 0 {
            return Err(PipelineError::Config(
                "fixed_k.k and fixed_k.resamples must be positive".into(),
            ));
        }
        if self.manifold.neighbor_k == 0
            || !(self.manifold.radius_quantile > 0.0 && self.manifold.radius_quantile < 1.0)
        {
            return Err(PipelineError::Config("manifold settings out of range".into()));
        }
        if self.pca.components == 0 {
            return Err(PipelineError::Config("pca.components must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the effective configuration serialized as JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
