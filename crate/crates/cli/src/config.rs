//! TOML run and synthesis configs.

use std::path::{Path, PathBuf};

use oodlinker::data::ShiftSpec;
use oodlinker::tgraph::GraphDims;
use oodlinker::train::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "OODLINKER_OUT";
pub const DEFAULT_OUT_ROOT: &str = "runs";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory written by `synth`.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Seeds to run; empty means `[train.seed]`.
    pub seeds: Vec<u64>,
    /// Timestamp counts `[train, val, test]` for datasets without fixed queries.
    pub windows: Option<[usize; 3]>,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.train.seed]
        } else {
            self.seeds.clone()
        }
    }

    pub fn data_dir(&self) -> CliResult<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::Input("no dataset directory given (set `data` or pass --data)".into()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceGraph {
    pub edges: PathBuf,
    #[serde(default)]
    pub nodes: Option<PathBuf>,
    pub dims: GraphDims,
    #[serde(default)]
    pub directed: bool,
}

pub fn default_ood_p_bar() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub shift: ShiftSpec,
    /// Input graph for the edge-attribute and node-feature shifts.
    #[serde(default)]
    pub source: Option<SourceGraph>,
    /// Mean link probability of the node-feature ood part.
    #[serde(default = "default_ood_p_bar")]
    pub ood_p_bar: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            out: None,
            shift: ShiftSpec::PlantedMotif(Default::default()),
            source: None,
            ood_p_bar: default_ood_p_bar(),
        }
    }
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| {
        let msg = e.to_string().replace('\n', " ");
        CliError::Input(format!("invalid config {}: {}", path.display(), msg.trim()))
    })
}

pub fn to_toml<T: Serialize>(value: &T) -> CliResult<String> {
    toml::to_string(value).map_err(|e| CliError::Internal(format!("config snapshot: {e}")))
}

/// `$OODLINKER_OUT/<name>`, or `runs/<name>` when the variable is unset.
pub fn default_out(name: &str) -> PathBuf {
    let root = std::env::var_os(OUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT));
    root.join(name)
}

/// Run name derived from a config path, falling back to `fallback`.
pub fn run_name(config: Option<&Path>, fallback: &str) -> String {
    config
        .and_then(|p| p.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| fallback.to_string())
}
