//! The run configuration: one TOML document with a section per module.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drl::ModelConfig;
use crate::sim::eval::{EvalConfig, SweepConfig};
use crate::sim::train::TrainConfig;
use crate::sim::{Scenario, SimConfig};
use crate::topology::{build_network, TopologyConfig};
use crate::workload::{default_catalog, Catalog, CatalogOverrides, SfcKind, SfcOverride, VnfKind, VnfOverride};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub size_limit: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig { size_limit: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadConfig {
    /// Multiplier on every bundle size.
    pub scale: f64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub vnf: BTreeMap<VnfKind, VnfOverride>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub sfc: BTreeMap<SfcKind, SfcOverride>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            scale: 1.0,
            vnf: BTreeMap::new(),
            sfc: BTreeMap::new(),
        }
    }
}

impl WorkloadConfig {
    pub fn catalog(&self) -> Result<Catalog, ConfigError> {
        let mut catalog = default_catalog();
        let overrides = CatalogOverrides {
            vnf: self.vnf.clone(),
            sfc: self.sfc.clone(),
        };
        catalog
            .apply(&overrides)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(catalog)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub topology: TopologyConfig,
    pub cluster: ClusterConfig,
    pub workload: WorkloadConfig,
    pub drl: ModelConfig,
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            topology: TopologyConfig::default(),
            cluster: ClusterConfig::default(),
            workload: WorkloadConfig::default(),
            drl: ModelConfig::default(),
            sim: SimConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        RunConfig::from_toml_str(&text)
    }

    /// The fully resolved document, defaults included. Parsing it back yields
    /// an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        build_network(&self.topology, self.seed).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.cluster.size_limit == 0 {
            return invalid("cluster.size_limit must be at least 1".into());
        }
        if !(self.workload.scale > 0.0) || !self.workload.scale.is_finite() {
            return invalid("workload.scale must be positive".into());
        }
        self.workload.catalog()?;
        self.drl.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.sim.clock().map_err(|e| ConfigError::Invalid(format!("sim: {e}")))?;
        self.train.validate().map_err(|e| ConfigError::Invalid(format!("train: {e}")))?;
        if self.eval.seeds == 0 || self.eval.episodes_per_seed == 0 {
            return invalid("eval.seeds and eval.episodes_per_seed must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.eval.epsilon) {
            return invalid("eval.epsilon must lie in [0, 1]".into());
        }
        let s = &self.sweep;
        if s.dc_counts.is_empty() || s.cluster_limits.is_empty() || s.scales.is_empty() {
            return invalid("sweep lists must be non-empty".into());
        }
        if s.dc_counts.iter().any(|&n| n < 2) {
            return invalid("sweep.dc_counts entries must be at least 2".into());
        }
        if s.cluster_limits.iter().any(|&l| l == 0) {
            return invalid("sweep.cluster_limits entries must be at least 1".into());
        }
        if s.scales.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return invalid("sweep.scales entries must be positive".into());
        }
        if !self.topology.dcs.is_empty() && s.dc_counts.iter().any(|&n| n != self.topology.dcs.len()) {
            return invalid("sweep.dc_counts conflicts with an explicit topology".into());
        }
        if self.output.formats.is_empty() {
            return invalid("output.formats must name at least one format".into());
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        Ok(Scenario {
            topology: self.topology.clone(),
            cluster_limit: self.cluster.size_limit,
            scale: self.workload.scale,
            catalog: self.workload.catalog()?,
            sim: self.sim.clone(),
        })
    }
}
