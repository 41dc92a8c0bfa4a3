use std::path::Path;

use latentforge::{GenerationConfig, PairSet, ToyWorldConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoverySettings {
    /// Labelled observables per class and attribute.
    pub per_class: usize,
    pub pairs: PairSet,
}

impl Default for DiscoverySettings {
    fn default() -> Self {
        Self { per_class: 500, pairs: PairSet::FromNeutral }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniquenessSettings {
    pub pair_cap: Option<usize>,
    /// Toy reference cohort, used when no `--ref` is given.
    pub ref_identities: usize,
    pub ref_samples_per_identity: usize,
}

impl Default for UniquenessSettings {
    fn default() -> Self {
        Self { pair_cap: Some(1_000_000), ref_identities: 64, ref_samples_per_identity: 5 }
    }
}

/// Everything `--config` can set. Sections and keys are all optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub toy: ToyWorldConfig,
    pub discovery: DiscoverySettings,
    pub generation: GenerationConfig,
    pub uniqueness: UniquenessSettings,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
