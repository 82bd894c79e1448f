//! Run configuration: one JSON document per run, hashed into every output
//! file. No environment-variable configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sheetlab::dynamics::EvolutionConfig;
use sheetlab::kernels::QuadratureSpec;
use sheetlab::oracles::OracleSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualSection {
    #[serde(default = "default_suite_size")]
    pub suite_size: usize,
    /// Principal-value scheme for the transport-form velocity; defaults to
    /// the state's natural scheme.
    #[serde(default)]
    pub quadrature: Option<QuadratureSpec>,
}

fn default_suite_size() -> usize {
    12
}

impl Default for ResidualSection {
    fn default() -> Self {
        ResidualSection {
            suite_size: default_suite_size(),
            quadrature: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularitySection {
    /// Exit with the hypothesis-violation code when the L2 norm diverges
    /// under refinement.
    #[serde(default)]
    pub strict: bool,
}

impl Default for RegularitySection {
    fn default() -> Self {
        RegularitySection { strict: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceSection {
    pub study: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial_data: Option<OracleSpec>,
    #[serde(default)]
    pub evolution: Option<EvolutionConfig>,
    #[serde(default)]
    pub residual: Option<ResidualSection>,
    #[serde(default)]
    pub regularity: Option<RegularitySection>,
    #[serde(default)]
    pub convergence: Option<ConvergenceSection>,
}

/// A parsed configuration plus the verbatim bytes it came from (echoed
/// into run metadata) and their hash (embedded in every output file).
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub raw: String,
    pub hash: String,
}

impl LoadedConfig {
    pub fn from_str(raw: &str) -> Result<Self, serde_json::Error> {
        let config: RunConfig = serde_json::from_str(raw)?;
        Ok(LoadedConfig {
            config,
            raw: raw.to_string(),
            hash: hash_bytes(raw.as_bytes()),
        })
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let raw = r#"{"seed": 3, "initial_data": {"kind": "flat_uniform", "period": 6.283185307179586, "gbar": 1.0, "n": 64}}"#;
        let lc = LoadedConfig::from_str(raw).unwrap();
        assert_eq!(lc.config.seed, 3);
        assert!(lc.config.initial_data.is_some());
        assert_eq!(lc.hash.len(), 64);
    }

    #[test]
    fn hash_is_stable_and_content_sensitive() {
        let a = LoadedConfig::from_str(r#"{"seed": 1}"#).unwrap();
        let b = LoadedConfig::from_str(r#"{"seed": 1}"#).unwrap();
        let c = LoadedConfig::from_str(r#"{"seed": 2}"#).unwrap();
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, c.hash);
    }
}
