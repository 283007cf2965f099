//! Run configuration: one JSON file covering model, training, sampling, and
//! data paths, with every field defaulted so a bare toy run works.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attention::BlockConfig;
use crate::dataset::DatasetFilters;
use crate::error::{Error, Result};
use crate::layout::GridConfig;
use crate::model::{DecoderVariant, ModelConfig, PriorKind};
use crate::sample::SamplingConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub variant: DecoderVariant,
    pub prior: PriorKind,
    pub grid: GridConfig,
    pub block: BlockConfig,
    pub d_z: usize,
    pub max_elements: usize,
    pub filters: DatasetFilters,
    pub train: TrainConfig,
    pub sampling: SamplingConfig,
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: DecoderVariant::Ar,
            prior: PriorKind::Fixed,
            grid: GridConfig::default(),
            block: BlockConfig::default(),
            d_z: 512,
            max_elements: 100,
            filters: DatasetFilters::default(),
            train: TrainConfig::default(),
            sampling: SamplingConfig::default(),
            dataset: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            prior: self.prior,
            grid: self.grid,
            block: self.block,
            d_z: self.d_z,
            max_elements: self.max_elements,
        }
    }

    /// Collects every violated field instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        let mut take = |r: Result<()>| {
            if let Err(Error::InvalidConfig { violations: v }) = r {
                violations.extend(v);
            }
        };
        take(self.model_config().validate());
        take(self.train.validate());
        take(self.sampling.validate(self.max_elements));
        if self.filters.max_elements == 0 {
            violations.push("filters.max_elements must be >= 1".into());
        }
        if let Some(path) = &self.dataset {
            if !path.exists() {
                violations.push(format!("dataset path {} does not exist", path.display()));
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig { violations })
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Dataset(format!("cannot read config {}: {}", path.display(), e)))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip() {
        let cfg = RunConfig {
            variant: DecoderVariant::NonAr,
            prior: PriorKind::Learned,
            d_z: 64,
            seed: 7,
            ..RunConfig::default()
        };
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&cfg).unwrap());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"variant": "nonar", "seed": 3}"#).unwrap();
        assert_eq!(cfg.variant, DecoderVariant::NonAr);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.block.d_model, 512);
        assert_eq!(cfg.grid.h, 32);
    }

    #[test]
    fn validation_enumerates_all_violations() {
        let cfg = RunConfig {
            d_z: 0,
            block: BlockConfig {
                d_model: 10,
                n_heads: 3,
                ..BlockConfig::default()
            },
            sampling: SamplingConfig {
                temperature: -1.0,
                ..SamplingConfig::default()
            },
            dataset: Some(PathBuf::from("/definitely/not/here.jsonl")),
            ..RunConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        let text = err.to_string();
        assert!(text.contains("d_z"));
        assert!(text.contains("divisible"));
        assert!(text.contains("temperature"));
        assert!(text.contains("does not exist"));
    }
}
