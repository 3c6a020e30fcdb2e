//! Experiment configuration: strict JSON, resolved once at load.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::channel::{db_to_linear, ChannelConfig, ChannelMode};
use crate::codec::{CodecDims, CorpusSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::lander::{LanderConfig, LinkMethod};
use crate::latency::CostModelConfig;
use crate::surface::SurfaceParams;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub k_factor: f64,
    pub bandwidth_hz: f64,
    pub modes: Vec<ChannelMode>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            k_factor: 5.0,
            bandwidth_hz: 3e6,
            modes: vec![ChannelMode::Awgn, ChannelMode::Rician],
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecSection {
    /// Parameter files; relative paths resolve against the config file.
    pub teacher_path: Option<PathBuf>,
    pub student_path: Option<PathBuf>,
    /// Training images; required by `train-codec`.
    pub corpus: Option<CorpusSpec>,
    pub dims: CodecDims,
    pub train: TrainConfig,
    /// Keep ratio for reconstruction, detection and timing sweeps.
    pub delta: f64,
    /// Quantizer width of the DCT baseline.
    pub q_bits: u8,
}

impl Default for CodecSection {
    fn default() -> Self {
        Self {
            teacher_path: None,
            student_path: None,
            corpus: None,
            dims: CodecDims::default(),
            train: TrainConfig::default(),
            delta: 0.7,
            q_bits: 8,
        }
    }
}

/// Terrain the landing and detection experiments run on.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSection {
    pub seed: u64,
    pub crater_count: usize,
    pub size_m: (f64, f64),
    pub terrain: SurfaceParams,
}

impl Default for SurfaceSection {
    fn default() -> Self {
        Self {
            seed: 11,
            crater_count: 300,
            size_m: (6000.0, 2000.0),
            terrain: SurfaceParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandingSection {
    pub eval_episodes: usize,
    /// Transmissions used to estimate each link's detection accuracy.
    pub calibration_trials: usize,
    pub methods: Vec<LinkMethod>,
    /// Episodes written to the trajectory CSV.
    pub trajectory_episodes: usize,
    pub trajectory_method: LinkMethod,
    pub trajectory_channel: ChannelMode,
    /// Defaults to the highest grid point.
    pub trajectory_snr_db: Option<f64>,
}

impl Default for LandingSection {
    fn default() -> Self {
        Self {
            eval_episodes: 500,
            calibration_trials: 1000,
            methods: vec![LinkMethod::Dynasc, LinkMethod::DenseTeacher, LinkMethod::DctBaseline],
            trajectory_episodes: 5,
            trajectory_method: LinkMethod::Dynasc,
            trajectory_channel: ChannelMode::Awgn,
            trajectory_snr_db: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Prop2Section {
    pub k_factors: Vec<f64>,
    pub ebn0_db: Vec<f64>,
    pub g_values: Vec<f64>,
    pub mc_samples: usize,
}

impl Default for Prop2Section {
    fn default() -> Self {
        Self {
            k_factors: vec![0.0, 2.0, 5.0, 10.0],
            ebn0_db: vec![0.0, 6.0, 12.0, 18.0],
            g_values: vec![0.5, 1.0, 2.0, 3.0, 4.0],
            mc_samples: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub codec: CodecSection,
    #[serde(default)]
    pub cost_model: CostModelConfig,
    #[serde(default = "default_grid")]
    pub snr_grid_db: Vec<f64>,
    /// Images per point of the reconstruction and timing sweeps.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Images per point of the detection sweep.
    #[serde(default = "default_detection_trials")]
    pub detection_trials: usize,
    #[serde(default)]
    pub surface: SurfaceSection,
    #[serde(default)]
    pub lander: LanderConfig,
    #[serde(default)]
    pub landing: LandingSection,
    #[serde(default)]
    pub prop2: Prop2Section,
    /// Used when the command line gives no output directory.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_grid() -> Vec<f64> {
    vec![0.0, 6.0, 12.0, 18.0]
}

fn default_trials() -> usize {
    100
}

fn default_detection_trials() -> usize {
    500
}

impl ExperimentConfig {
    /// All defaults under the given scenario name.
    pub fn named(scenario: &str) -> Self {
        serde_json::from_value(serde_json::json!({ "scenario": scenario })).expect("defaults deserialize")
    }
}

/// One point of the SNR grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnrPoint {
    pub db: f64,
    /// `10^(db / 10)`.
    pub linear: f64,
}

/// A validated configuration with the seed fixed and the grid converted.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub seed: u64,
    pub grid: Vec<SnrPoint>,
    /// Directory relative codec paths resolve against.
    pub base_dir: PathBuf,
}

impl Experiment {
    /// Validates `cfg`; `seed` overrides the configured one.
    pub fn new(cfg: ExperimentConfig, seed: Option<u64>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let seed = seed
            .or(cfg.seed)
            .ok_or_else(|| Error::Config("no seed: set \"seed\" in the config or pass --seed".into()))?;
        validate(&cfg)?;
        let grid = cfg
            .snr_grid_db
            .iter()
            .map(|&db| SnrPoint {
                db,
                linear: db_to_linear(db),
            })
            .collect();
        Ok(Self {
            cfg,
            seed,
            grid,
            base_dir: base_dir.into(),
        })
    }

    pub fn from_json(text: &str, seed: Option<u64>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::new(cfg, seed, base_dir)
    }

    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, seed, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// SHA-256 of the canonical config JSON with the resolved seed.
    pub fn config_hash(&self) -> String {
        let mut cfg = self.cfg.clone();
        cfg.seed = Some(self.seed);
        let canonical = serde_json::to_vec(&cfg).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn channel(&self, mode: ChannelMode, snr: SnrPoint) -> Result<ChannelConfig> {
        let c = &self.cfg.channel;
        ChannelConfig::new(mode, c.k_factor, snr.linear, c.bandwidth_hz)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.snr_grid_db.is_empty() || cfg.snr_grid_db.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("snr_grid_db must be a non-empty list of finite values".into()));
    }
    if cfg.trials == 0 || cfg.detection_trials == 0 {
        return Err(Error::Config("trials and detection_trials must be positive".into()));
    }
    let ch = &cfg.channel;
    ChannelConfig::new(ChannelMode::Rician, ch.k_factor, 1.0, ch.bandwidth_hz).map_err(|e| Error::Config(e.to_string()))?;
    if ch.modes.is_empty() {
        return Err(Error::Config("channel.modes must not be empty".into()));
    }
    let codec = &cfg.codec;
    codec.dims.validate().map_err(|e| Error::Config(e.to_string()))?;
    codec.train.validate()?;
    if !(codec.delta > 0.0 && codec.delta <= 1.0) {
        return Err(Error::Config(format!("codec.delta must be in (0, 1], got {}", codec.delta)));
    }
    if !(2..=8).contains(&codec.q_bits) {
        return Err(Error::Config(format!("codec.q_bits must be in [2, 8], got {}", codec.q_bits)));
    }
    cfg.cost_model.validate()?;
    cfg.lander.validate()?;
    let land = &cfg.landing;
    if land.eval_episodes == 0 || land.calibration_trials == 0 {
        return Err(Error::Config("landing episode and calibration counts must be positive".into()));
    }
    if land.methods.is_empty() {
        return Err(Error::Config("landing.methods must not be empty".into()));
    }
    let p2 = &cfg.prop2;
    if p2.mc_samples == 0 || p2.k_factors.iter().any(|k| !(*k >= 0.0)) {
        return Err(Error::Config("prop2 needs mc_samples > 0 and K >= 0".into()));
    }
    Ok(())
}
