use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tdtlab::corpus::SynthConfig;
use tdtlab::decode::DEFAULT_MAX_TOKENS_PER_FRAME;
use tdtlab::model::{ModelConfig, TrainConfig};

use crate::error::{CliError, CliResult};

/// The configuration shipped with the tool; used when `--config` is absent.
pub const BUNDLED_CONFIG: &str = include_str!("../configs/bundled.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub max_tokens_per_frame: usize,
}

impl Default for DecodeSection {
    fn default() -> Self {
        Self { max_tokens_per_frame: DEFAULT_MAX_TOKENS_PER_FRAME }
    }
}

/// Everything a run needs besides file paths.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthConfig,
    /// `vocab_size` is replaced by the size of the training vocabulary.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeSection,
    /// Write a checkpoint every this many updates; 0 writes only the final one.
    pub checkpoint_every: u64,
}

impl RunConfig {
    pub fn bundled() -> Self {
        toml::from_str(BUNDLED_CONFIG).expect("bundled config parses")
    }

    /// Reads TOML, or JSON when the file ends in `.json`. A JSON config echo
    /// written by a previous run is accepted as well.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(Self::bundled()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(e).context(format!("reading config {}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value = serde_json::from_str(&text).map_err(CliError::usage)?;
            let inner = match value.get("config") {
                Some(c) if value.get("invocation").is_some() => c.clone(),
                _ => value,
            };
            serde_json::from_value(inner).map_err(CliError::usage)
        } else {
            toml::from_str(&text).map_err(CliError::usage)
        };
        parsed.map_err(|e| e.context(format!("parsing config {}", path.display())))
    }
}

/// What was run, for the config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub command: String,
    pub args: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub invocation: Invocation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
}

/// Writes `<dir>/<command>.config.json`.
pub fn write_echo(dir: &Path, command: &str, args: &[(&str, String)], config: Option<&RunConfig>) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    let echo = ConfigEcho {
        invocation: Invocation {
            command: command.to_string(),
            args: args.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        },
        config: config.cloned(),
    };
    let text = serde_json::to_string_pretty(&echo).expect("echo serializes") + "\n";
    std::fs::write(dir.join(format!("{command}.config.json")), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_parses_and_validates() {
        let c = RunConfig::bundled();
        c.model.validate().unwrap();
        c.train.validate().unwrap();
        c.synth.validate().unwrap();
        assert_eq!(c.model.feature_dim, c.synth.feature_dim);
    }

    #[test]
    fn echo_is_a_valid_config() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig::bundled();
        write_echo(dir.path(), "train", &[("data_dir", "d".into())], Some(&c)).unwrap();
        let back = RunConfig::load(Some(&dir.path().join("train.config.json"))).unwrap();
        assert_eq!(back, c);
    }
}
