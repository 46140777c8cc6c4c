//! Run configuration file (TOML) and output provenance.
//!
//! Every block has full defaults, so an empty file is a valid configuration.
//! Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{EvalConfig, FitScope, Protocol, SelectionSpec, TaskKind};
use crate::features::FeatureConfig;
use crate::forest::ForestConfig;
use crate::isolation::IsolationConfig;
use crate::pipeline::PipelineConfig;
use crate::rng::derive_seed;
use crate::synth::DatasetConfig;
use crate::tracker::TrackerConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seed stream used for models trained outside the evaluation harness.
const TRAIN_STREAM: u64 = 0x7472_6169_6e;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Output directory; `--out` overrides it.
    pub out_dir: PathBuf,
    /// Dataset manifest consumed by `features` and `pipeline`.
    pub manifest: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            out_dir: PathBuf::from("out"),
            manifest: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipConfig {
    pub seconds: f64,
    pub min_landmark_overlap: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        ClipConfig {
            seconds: p.clip_seconds,
            min_landmark_overlap: p.min_landmark_overlap,
        }
    }
}

/// Evaluation settings other than the forest and the selection method,
/// which have their own blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub task: TaskKind,
    pub protocol: Protocol,
    pub repeats: usize,
    pub group_by_participant: bool,
    pub leakage_guard: bool,
    pub fit_scope: FitScope,
    pub label_derived_features: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        EvalSection {
            task: e.task,
            protocol: e.protocol,
            repeats: e.repeats,
            group_by_participant: e.group_by_participant,
            leakage_guard: e.leakage_guard,
            fit_scope: e.fit_scope,
            label_derived_features: e.label_derived_features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub synth: DatasetConfig,
    pub tracker: TrackerConfig,
    pub isolation: IsolationConfig,
    pub features: FeatureConfig,
    pub clip: ClipConfig,
    pub forest: ForestConfig,
    pub selection: SelectionSpec,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            paths: PathsConfig::default(),
            synth: DatasetConfig::default(),
            tracker: TrackerConfig::default(),
            isolation: IsolationConfig::default(),
            features: FeatureConfig::default(),
            clip: ClipConfig::default(),
            forest: ForestConfig::default(),
            selection: SelectionSpec::All,
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.pipeline().validate()?;
        self.eval_config().validate()
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            tracker: self.tracker.clone(),
            isolation: self.isolation,
            features: self.features,
            clip_seconds: self.clip.seconds,
            min_landmark_overlap: self.clip.min_landmark_overlap,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        let e = &self.eval;
        EvalConfig {
            task: e.task,
            protocol: e.protocol.clone(),
            repeats: e.repeats,
            forest: self.forest.clone(),
            selection: self.selection.clone(),
            group_by_participant: e.group_by_participant,
            leakage_guard: e.leakage_guard,
            fit_scope: e.fit_scope,
            label_derived_features: e.label_derived_features.clone(),
        }
    }

    /// Forest settings for a standalone model, seeded from the run seed.
    pub fn train_forest(&self) -> ForestConfig {
        self.forest.with_seed(derive_seed(self.seed, TRAIN_STREAM))
    }

    /// SHA-256 of the canonical TOML serialization, lowercase hex.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn provenance(&self) -> Result<Provenance> {
        Ok(Provenance {
            config_hash: self.hash()?,
            seed: self.seed,
            version: VERSION.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

/// A JSON artifact with its provenance and the effective configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub provenance: Provenance,
    pub config: RunConfig,
    pub result: T,
}

/// Writes `value` as pretty JSON wrapped with provenance.
pub fn write_stamped_json<T: Serialize>(path: &Path, config: &RunConfig, value: T) -> Result<()> {
    let stamped = Stamped {
        provenance: config.provenance()?,
        config: config.clone(),
        result: value,
    };
    let mut text = serde_json::to_string_pretty(&stamped)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Path of the provenance sidecar for a non-JSON artifact: `x.csv` gets `x.csv.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Writes a text artifact plus its provenance sidecar.
pub fn write_with_meta(path: &Path, contents: &str, config: &RunConfig) -> Result<()> {
    std::fs::write(path, contents)?;
    let meta = Stamped {
        provenance: config.provenance()?,
        config: config.clone(),
        result: path.file_name().map(|n| n.to_string_lossy().into_owned()),
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    std::fs::write(meta_path(path), text)?;
    Ok(())
}

/// Records wall-clock time in `timestamps.json` under `dir`, kept apart from
/// the artifacts so reruns reproduce them byte for byte.
pub fn write_timestamp(dir: &Path, command: &str) -> Result<()> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let text = serde_json::to_string_pretty(&serde_json::json!({
        "command": command,
        "unix_seconds": secs,
    }))?;
    std::fs::write(dir.join("timestamps.json"), text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sed = 1").is_err());
        assert!(RunConfig::from_toml("[tracker]\niou = 0.5").is_err());
        assert!(RunConfig::from_toml("[selection]\nmethod = \"rfecv\"\nstep = 2\nfoo = 1").is_err());
    }

    #[test]
    fn partial_blocks_keep_other_defaults() {
        let c = RunConfig::from_toml(
            "seed = 9\n[tracker]\nmax_age = 7\n[eval]\ntask = \"severity_regression\"\nprotocol = { kind = \"leave_one_site_out\", site = \"S2\" }\n[selection]\nmethod = \"importance_topk\"\nk = 15\n",
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.tracker.max_age, 7);
        assert_eq!(c.tracker.min_hits, TrackerConfig::default().min_hits);
        let e = c.eval_config();
        assert_eq!(e.task, TaskKind::SeverityRegression);
        assert_eq!(e.protocol, Protocol::LeaveOneSiteOut { site: Some("S2".into()) });
        assert_eq!(e.selection, SelectionSpec::ImportanceTopk { k: 15, n_trees: None });
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml("[tracker]\nmin_confidence = 1.5").is_err());
        assert!(RunConfig::from_toml("[eval]\nrepeats = 0").is_err());
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let mut c = RunConfig::default();
        c.seed = 42;
        c.selection = SelectionSpec::Rfecv {
            step: 4,
            folds: 3,
            n_trees: Some(20),
        };
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash().unwrap(), c.hash().unwrap());
        assert_eq!(c.hash().unwrap().len(), 64);
        assert_ne!(c.hash().unwrap(), RunConfig::default().hash().unwrap());
    }

    #[test]
    fn meta_path_appends_suffix() {
        assert_eq!(meta_path(Path::new("out/features.csv")), Path::new("out/features.csv.meta.json"));
    }
}
