//! Run configuration: a single TOML file with one table per tool.
//!
//! The `[scenario]` table drives error-rate sweeps and single-block
//! debugging, `[train]` the autoencoder trainer, `[power]` the layer
//! power optimizer, `[sysim]` the cell-level simulator and `[zc]` the
//! sequence correlation report. Tools only require their own table.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::galois::FieldTables;
use crate::phy::OuterRate;
use crate::signatures::BchSignatureCode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config has no [{0}] table, which this command requires")]
    MissingSection(&'static str),
    #[error("ebn0_grid_db must not be empty")]
    EmptyGrid,
    #[error("trials_per_point must be positive")]
    ZeroTrials,
    #[error("outer_rate must be 1 or 0.5, got {0}")]
    BadOuterRate(f64),
    #[error("detector \"dl\" requires model_path")]
    MissingModelPath,
    #[error("activity must name exactly one of fixed / uniform_up_to")]
    BadActivity,
    #[error("activity must allow at least one active user")]
    ZeroActivity,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Galois(#[from] crate::galois::GaloisError),
    #[error(transparent)]
    Signature(#[from] crate::signatures::SignatureError),
}

/// Signature code parameters. `primitive_poly` overrides the frozen
/// default modulus for the field width when present.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct CodeConfig {
    pub k: u32,
    pub t: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive_poly: Option<u32>,
}

impl CodeConfig {
    pub fn build(&self) -> Result<BchSignatureCode, ConfigError> {
        let field = match self.primitive_poly {
            Some(poly) => FieldTables::new(self.k, poly)?,
            None => FieldTables::with_default_poly(self.k)?,
        };
        Ok(BchSignatureCode::new(field, self.t)?)
    }
}

/// How many users transmit in each simulated block.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ActivityModel {
    /// Exactly this many active users every trial.
    Fixed(usize),
    /// Each row of the sweep fixes one count from `1..=limit`.
    UniformUpTo(usize),
}

impl ActivityModel {
    /// Active-user counts this model stratifies over.
    pub fn user_counts(&self) -> Vec<usize> {
        match *self {
            ActivityModel::Fixed(l) => vec![l],
            ActivityModel::UniformUpTo(t) => (1..=t).collect(),
        }
    }

    pub fn max_users(&self) -> usize {
        match *self {
            ActivityModel::Fixed(l) | ActivityModel::UniformUpTo(l) => l,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DetectorChoice {
    Bma,
    Mld,
    Dl,
}

impl DetectorChoice {
    pub fn label(&self) -> &'static str {
        match self {
            DetectorChoice::Bma => "bma",
            DetectorChoice::Mld => "mld",
            DetectorChoice::Dl => "dl",
        }
    }
}

fn default_scenario_id() -> String {
    "scenario".to_string()
}

fn default_amplitude() -> f64 {
    1.0
}

fn default_outer_rate() -> f64 {
    1.0
}

fn default_min_error_events() -> u64 {
    100
}

fn default_trials() -> u64 {
    10_000
}

/// Everything a BLER sweep needs. A sweep measures, per grid point, the
/// probability that a transmitted message is missing from the decoded
/// set.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioConfig {
    #[serde(default = "default_scenario_id")]
    pub scenario_id: String,
    pub code: CodeConfig,
    /// 1 for the bare signature chain, 0.5 to wrap each parity stream in
    /// the rate-1/2 convolutional code.
    #[serde(default = "default_outer_rate")]
    pub outer_rate: f64,
    pub detector: DetectorChoice,
    /// Checkpoint consumed when `detector = "dl"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    pub ebn0_grid_db: Vec<f64>,
    pub activity: ActivityModel,
    #[serde(default = "default_trials")]
    pub trials_per_point: u64,
    /// Stop a grid cell early once this many message errors accumulate.
    #[serde(default = "default_min_error_events")]
    pub min_error_events: u64,
    #[serde(default)]
    pub seed: u64,
    /// 0 lets the runtime pick its own thread count.
    #[serde(default)]
    pub workers: usize,
}

impl ScenarioConfig {
    pub fn outer_rate_enum(&self) -> Result<OuterRate, ConfigError> {
        if self.outer_rate == 1.0 {
            Ok(OuterRate::Unity)
        } else if self.outer_rate == 0.5 {
            Ok(OuterRate::Half)
        } else {
            Err(ConfigError::BadOuterRate(self.outer_rate))
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.ebn0_grid_db.is_empty() {
            return Err(ConfigError::EmptyGrid);
        }
        if self.trials_per_point == 0 {
            return Err(ConfigError::ZeroTrials);
        }
        self.outer_rate_enum()?;
        if self.detector == DetectorChoice::Dl && self.model_path.is_none() {
            return Err(ConfigError::MissingModelPath);
        }
        if self.activity.max_users() == 0 {
            return Err(ConfigError::ZeroActivity);
        }
        // NaN must fail the check too, hence no plain `<=`.
        if self.amplitude.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(ConfigError::Invalid(format!(
                "amplitude must be positive, got {}",
                self.amplitude
            )));
        }
        let code = self.code.build()?;
        if self.activity.max_users() > code.capability() {
            return Err(ConfigError::Invalid(format!(
                "activity asks for {} users but the code handles at most {}",
                self.activity.max_users(),
                code.capability()
            )));
        }
        Ok(())
    }

    /// Canonical digest of the full scenario, embedded in result files
    /// so curves stay traceable to their exact configuration.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = toml::to_string(self).expect("scenario serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn default_hidden_width() -> usize {
    256
}

fn default_hidden_layers() -> usize {
    4
}

fn default_checkpoint_name() -> String {
    "model.bin".to_string()
}

/// Autoencoder training setup: network shape here, optimization
/// schedule mostly inherited from the desk-scale defaults.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainSection {
    pub code: CodeConfig,
    /// Transmit chips the encoder produces.
    pub chip_count: usize,
    #[serde(default = "default_hidden_width")]
    pub hidden_width: usize,
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minibatch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_ebn0_db: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity_max: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_checkpoint_name")]
    pub checkpoint_name: String,
}

fn default_levels() -> usize {
    32
}

fn default_power_trials() -> usize {
    200
}

fn default_users_per_layer() -> usize {
    2
}

/// Layer power optimizer setup.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PowerSection {
    pub code: CodeConfig,
    pub layer_count: usize,
    pub p_max: f64,
    pub noise_var: f64,
    #[serde(default = "default_users_per_layer")]
    pub users_per_layer: usize,
    #[serde(default = "default_power_trials")]
    pub trials: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_frame_count() -> u64 {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SysimClusterSection {
    pub cluster_id: u32,
    pub gfru_count: usize,
    pub signature_pool_size: usize,
    pub capability: usize,
    #[serde(default)]
    pub arrival_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<u64>,
}

/// Cell simulator setup; `full_phy = true` swaps the counting
/// adjudicator for the real detector chain at `ebn0_db`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SysimSection {
    #[serde(default)]
    pub full_phy: bool,
    #[serde(default)]
    pub ebn0_db: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_frame_count")]
    pub frame_count: u64,
    #[serde(default)]
    pub oma_block_count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "cluster")]
    pub clusters: Vec<SysimClusterSection>,
}

fn default_zc_lengths() -> Vec<usize> {
    vec![7, 839]
}

fn default_zc_roots() -> Vec<usize> {
    vec![1, 2]
}

/// Constant-amplitude sequence report setup: one report per length,
/// correlations across the listed roots.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ZcSection {
    #[serde(default = "default_zc_lengths")]
    pub lengths: Vec<usize>,
    #[serde(default = "default_zc_roots")]
    pub roots: Vec<usize>,
}

impl Default for ZcSection {
    fn default() -> Self {
        ZcSection {
            lengths: default_zc_lengths(),
            roots: default_zc_roots(),
        }
    }
}

/// Root of the config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct AppConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sysim: Option<SysimSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zc: Option<ZcSection>,
}

pub fn load_config(path: &Path) -> Result<AppConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(toml::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario_toml() -> &'static str {
        r#"
[scenario]
scenario_id = "demo"
detector = "bma"
outer_rate = 0.5
amplitude = 1.0
ebn0_grid_db = [4.0, 6.0, 8.0]
activity = { fixed = 4 }
trials_per_point = 500
seed = 7

[scenario.code]
k = 6
t = 4
"#
    }

    #[test]
    fn parses_scenario_table() {
        let cfg: AppConfig = toml::from_str(scenario_toml()).unwrap();
        let s = cfg.scenario.unwrap();
        assert_eq!(s.scenario_id, "demo");
        assert_eq!(s.code.k, 6);
        assert_eq!(s.detector, DetectorChoice::Bma);
        assert_eq!(s.outer_rate_enum().unwrap(), OuterRate::Half);
        assert_eq!(s.activity, ActivityModel::Fixed(4));
        assert_eq!(s.min_error_events, 100, "default applies");
        assert_eq!(s.workers, 0);
        s.validate().unwrap();
    }

    #[test]
    fn activity_stratification() {
        assert_eq!(ActivityModel::Fixed(3).user_counts(), vec![3]);
        assert_eq!(ActivityModel::UniformUpTo(4).user_counts(), vec![1, 2, 3, 4]);
        let parsed: ActivityModel = toml::from_str::<AppConfig>(
            &scenario_toml().replace("{ fixed = 4 }", "{ uniform_up_to = 3 }"),
        )
        .unwrap()
        .scenario
        .unwrap()
        .activity;
        assert_eq!(parsed, ActivityModel::UniformUpTo(3));
    }

    #[test]
    fn validation_rejects_bad_scenarios() {
        let base: ScenarioConfig =
            toml::from_str::<AppConfig>(scenario_toml()).unwrap().scenario.unwrap();

        let mut s = base.clone();
        s.ebn0_grid_db.clear();
        assert!(matches!(s.validate().unwrap_err(), ConfigError::EmptyGrid));

        let mut s = base.clone();
        s.trials_per_point = 0;
        assert!(matches!(s.validate().unwrap_err(), ConfigError::ZeroTrials));

        let mut s = base.clone();
        s.outer_rate = 0.25;
        assert!(matches!(s.validate().unwrap_err(), ConfigError::BadOuterRate(_)));

        let mut s = base.clone();
        s.detector = DetectorChoice::Dl;
        assert!(matches!(s.validate().unwrap_err(), ConfigError::MissingModelPath));

        let mut s = base.clone();
        s.activity = ActivityModel::Fixed(9);
        assert!(matches!(s.validate().unwrap_err(), ConfigError::Invalid(_)));

        let mut s = base;
        s.activity = ActivityModel::Fixed(0);
        assert!(matches!(s.validate().unwrap_err(), ConfigError::ZeroActivity));
    }

    #[test]
    fn digest_tracks_content() {
        let a: ScenarioConfig =
            toml::from_str::<AppConfig>(scenario_toml()).unwrap().scenario.unwrap();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.seed = 8;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn code_config_builds_with_poly_override() {
        let code = CodeConfig { k: 4, t: 2, primitive_poly: None }.build().unwrap();
        assert_eq!(code.message_count(), 15);
        // x^4 + x + 1 is the frozen default; the other primitive choice
        // x^4 + x^3 + 1 must also build
        let alt = CodeConfig { k: 4, t: 2, primitive_poly: Some(0b11001) }.build().unwrap();
        assert_eq!(alt.message_count(), 15);
        assert!(CodeConfig { k: 4, t: 2, primitive_poly: Some(0b10101) }.build().is_err());
    }

    #[test]
    fn full_config_with_every_section_parses() {
        let text = r#"
[scenario]
detector = "mld"
ebn0_grid_db = [8.0]
activity = { uniform_up_to = 2 }
[scenario.code]
k = 4
t = 2

[train]
chip_count = 24
seed = 3
[train.code]
k = 6
t = 4

[power]
layer_count = 2
p_max = 8.0
noise_var = 0.05
[power.code]
k = 4
t = 2

[sysim]
frame_count = 100
[[sysim.cluster]]
cluster_id = 1
gfru_count = 2
signature_pool_size = 15
capability = 2
arrival_rate = 1.0

[zc]
lengths = [7]
roots = [1, 3]
"#;
        let cfg: AppConfig = toml::from_str(text).unwrap();
        assert!(cfg.scenario.is_some());
        let train = cfg.train.unwrap();
        assert_eq!(train.hidden_width, 256);
        assert_eq!(train.hidden_layers, 4);
        assert_eq!(train.checkpoint_name, "model.bin");
        let power = cfg.power.unwrap();
        assert_eq!(power.levels, 32);
        assert_eq!(power.trials, 200);
        let sysim = cfg.sysim.unwrap();
        assert_eq!(sysim.clusters.len(), 1);
        assert!(!sysim.full_phy);
        assert_eq!(cfg.zc.unwrap().roots, vec![1, 3]);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_config(Path::new("/nonexistent/cfg.toml")).unwrap_err();
        assert!(matches!(err, ConfigError::Io { .. }));
    }
}
