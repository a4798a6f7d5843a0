use std::path::Path;

use serde::{Deserialize, Serialize};
use tdpa_core::dp::DpParams;
use tdpa_core::miner::{DistanceMetric, JitterParams, DEFAULT_K, DEFAULT_NEGATIVE_VIDEOS, DEFAULT_POSITIVES};
use tdpa_core::oracle::OracleKind;
use tdpa_core::short_term::ShortTermParams;
use tdpa_core::tracker::TdpaConfig;
use tdpa_core::tracklet::BuilderParams;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Tdpa,
    Argmax,
    ShortTerm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinerConfig {
    pub k: usize,
    pub negative_videos: usize,
    pub positives: usize,
    pub metric: DistanceMetric,
    pub jitter: JitterParams<f64>,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            k: DEFAULT_K,
            negative_videos: DEFAULT_NEGATIVE_VIDEOS,
            positives: DEFAULT_POSITIVES,
            metric: DistanceMetric::Euclidean,
            jitter: JitterParams::default(),
        }
    }
}

/// Everything tunable, as one JSON document. Missing sections take their
/// defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub mode: Mode,
    pub seed: u64,
    pub oracle: OracleKind<f64>,
    pub builder: BuilderParams<f64>,
    pub dp: DpParams<f64>,
    pub short_term: ShortTermParams<f64>,
    pub miner: MinerConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            mode: Mode::Tdpa,
            seed: 0,
            oracle: OracleKind::CosineEmbedding,
            builder: BuilderParams::default(),
            dp: DpParams::default(),
            short_term: ShortTermParams::default(),
            miner: MinerConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: EngineConfig =
            serde_json::from_str(text).map_err(|e| CliError::validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        self.oracle.validate()?;
        self.tdpa().validate()?;
        self.short_term.validate()?;
        self.miner.jitter.validate()?;
        Ok(())
    }

    pub fn tdpa(&self) -> TdpaConfig<f64> {
        TdpaConfig {
            builder: self.builder,
            dp: self.dp,
            seed: self.seed,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let d = EngineConfig::default();
        assert_eq!(EngineConfig::from_json(&d.to_json_pretty()).unwrap(), d);
        assert_eq!(EngineConfig::from_json("{}").unwrap(), d);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = EngineConfig::from_json(r#"{"builder": {"alpha": 0.5, "beta": 0.1, "gamma": 0.3, "gama": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("gama"), "{err}");
        let err = EngineConfig::from_json(r#"{"moed": "tdpa"}"#).unwrap_err();
        assert!(err.to_string().contains("moed"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn oracle_section_parses() {
        let cfg = EngineConfig::from_json(
            r#"{"mode": "argmax", "oracle": {"kind": "synthetic_identity", "same_id_mean": 1.0, "noise_sd": 0.1}}"#,
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Argmax);
        assert!(matches!(cfg.oracle, OracleKind::SyntheticIdentity(_)));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(EngineConfig::from_json(r#"{"dp": {"w_ff": 2.0, "w_loc": 1.0, "max_gap": 10}}"#).is_err());
    }
}
