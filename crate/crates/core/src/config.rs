//! Declarative run configuration (TOML). Unknown keys are rejected and every
//! run writes the fully-resolved document next to its outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ClaimFeature;
use crate::error::{Error, Result};
use crate::gbm::{CategoricalEncoding, GbmHyperparams, TreeSelection};
use crate::markov::ScoringMode;
use crate::synth::GenConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub ratio: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratio: 0.7, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkovConfig {
    /// Chain order of the features.
    pub features: Vec<ClaimFeature>,
    /// Bin count per numeric feature name; unlisted numeric features get 3.
    pub bins: BTreeMap<String, usize>,
    pub alpha: f64,
    pub threshold: f64,
    pub scoring: ScoringMode,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        MarkovConfig {
            features: ClaimFeature::MARKOV.to_vec(),
            bins: [("days_stayed".to_string(), 3), ("net_amount".to_string(), 3)].into(),
            alpha: 1.0,
            threshold: 0.5,
            scoring: ScoringMode::State,
        }
    }
}

impl MarkovConfig {
    pub fn bin_counts(&self) -> Result<BTreeMap<ClaimFeature, usize>> {
        self.bins
            .iter()
            .map(|(name, &k)| {
                let f: ClaimFeature = name.parse()?;
                if !f.is_numeric() {
                    return Err(Error::Config(format!("`{name}` is categorical and cannot be binned")));
                }
                if k < 1 {
                    return Err(Error::Config(format!("`{name}` needs at least one bin")));
                }
                Ok((f, k))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbmConfig {
    pub features: Vec<ClaimFeature>,
    pub encoding: CategoricalEncoding,
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub cv_folds: usize,
    pub min_leaf_count: usize,
    pub seed: u64,
    pub cross_validate: bool,
    pub tree_selection: TreeSelection,
    pub threshold: f64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        let hp = GbmHyperparams::default();
        GbmConfig {
            features: ClaimFeature::GBM.to_vec(),
            encoding: CategoricalEncoding::Ordinal,
            n_trees: hp.n_trees,
            max_depth: hp.max_depth,
            learning_rate: hp.learning_rate,
            cv_folds: hp.cv_folds,
            min_leaf_count: hp.min_leaf_count,
            seed: 7,
            cross_validate: true,
            tree_selection: TreeSelection::Best,
            threshold: 0.5,
        }
    }
}

impl GbmConfig {
    pub fn hyperparams(&self) -> GbmHyperparams {
        GbmHyperparams {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            learning_rate: self.learning_rate,
            cv_folds: self.cv_folds,
            min_leaf_count: self.min_leaf_count,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generate: GenConfig,
    pub split: SplitConfig,
    pub markov: MarkovConfig,
    pub gbm: GbmConfig,
}

impl RunConfig {
    /// Sets every seed in the document.
    pub fn set_seed(&mut self, seed: u64) {
        self.generate.seed = seed;
        self.split.seed = seed;
        self.gbm.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.generate.validate()?;
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return Err(Error::Config(format!("split ratio must be in (0, 1), got {}", self.split.ratio)));
        }
        if self.markov.features.is_empty() || self.gbm.features.is_empty() {
            return Err(Error::Config("feature lists must not be empty".into()));
        }
        if !(self.markov.alpha >= 0.0 && self.markov.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.markov.alpha)));
        }
        for t in [self.markov.threshold, self.gbm.threshold] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("threshold must be in [0, 1], got {t}")));
            }
        }
        self.markov.bin_counts()?;
        self.gbm.hyperparams().validate()?;
        if self.gbm.cross_validate && self.gbm.cv_folds < 2 {
            return Err(Error::Config("cv_folds must be at least 2".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}
