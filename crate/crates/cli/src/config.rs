//! Run configuration files.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use imlp_core::energy::{EnergyProvider, PowerTrace, DEFAULT_JOULES_PER_FLOP};
use imlp_core::model::{BufferGranularity, ImlpConfig};
use imlp_core::optim::OptimizerKind;
use imlp_core::trainer::{ModelKind, TrainConfig, TrainMode};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEEDS: [u64; 3] = [7, 42, 101];

/// Where per-segment energy comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum EnergySpec {
    Flops,
    Constant { watts: f64 },
    /// Power trace per run; `{seed}` in the path is replaced by the run seed.
    Trace { path: PathBuf },
}

impl FromStr for EnergySpec {
    type Err = CliError;

    /// `flops`, `constant:<watts>` or `trace:<path>`.
    fn from_str(s: &str) -> CliResult<Self> {
        if s == "flops" {
            return Ok(EnergySpec::Flops);
        }
        if let Some(w) = s.strip_prefix("constant:") {
            let watts: f64 = w
                .parse()
                .map_err(|_| CliError::config(format!("bad wattage in energy spec {s:?}")))?;
            if !(watts > 0.0 && watts.is_finite()) {
                return Err(CliError::config(format!("constant power must be > 0 W, got {watts}")));
            }
            return Ok(EnergySpec::Constant { watts });
        }
        if let Some(p) = s.strip_prefix("trace:") {
            if p.is_empty() {
                return Err(CliError::config("trace energy spec needs a path"));
            }
            return Ok(EnergySpec::Trace { path: p.into() });
        }
        Err(CliError::config(format!(
            "unknown energy spec {s:?}; expected flops, constant:<watts> or trace:<path>"
        )))
    }
}

impl std::fmt::Display for EnergySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnergySpec::Flops => f.write_str("flops"),
            EnergySpec::Constant { watts } => write!(f, "constant:{watts}"),
            EnergySpec::Trace { path } => write!(f, "trace:{}", path.display()),
        }
    }
}

impl Serialize for EnergySpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for EnergySpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|e: CliError| serde::de::Error::custom(e.message))
    }
}

impl EnergySpec {
    pub fn trace_path(&self, seed: u64) -> Option<PathBuf> {
        match self {
            EnergySpec::Trace { path } => Some(PathBuf::from(path.to_string_lossy().replace("{seed}", &seed.to_string()))),
            _ => None,
        }
    }

    pub fn provider(&self, seed: u64, joules_per_flop: f64) -> CliResult<EnergyProvider> {
        let provider = match self {
            EnergySpec::Flops => EnergyProvider::FlopsProxy { joules_per_flop },
            EnergySpec::Constant { watts } => EnergyProvider::ConstantPower { watts: *watts },
            EnergySpec::Trace { .. } => {
                let path = self.trace_path(seed).expect("trace spec");
                EnergyProvider::Trace(PowerTrace::from_csv(&path).map_err(|e| CliError::from(e).context(path.display()))?)
            }
        };
        provider.validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(provider)
    }
}

/// Architecture settings; input width and class count come from the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub d_h: usize,
    pub d_ff: usize,
    pub window: usize,
    pub attention_enabled: bool,
    pub fc2_bias: bool,
    pub normalize_prototypes: bool,
    pub buffer_granularity: BufferGranularity,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ImlpConfig::new(1, 1);
        Self {
            d_h: d.d_h,
            d_ff: d.d_ff,
            window: d.window,
            attention_enabled: d.attention_enabled,
            fc2_bias: d.fc2_bias,
            normalize_prototypes: d.normalize_prototypes,
            buffer_granularity: d.buffer_granularity,
        }
    }
}

impl ModelSection {
    pub fn to_config(&self, d_in: usize, n_classes: usize) -> ImlpConfig {
        ImlpConfig {
            d_in,
            d_h: self.d_h,
            d_ff: self.d_ff,
            n_classes,
            window: self.window,
            attention_enabled: self.attention_enabled,
            fc2_bias: self.fc2_bias,
            normalize_prototypes: self.normalize_prototypes,
            buffer_granularity: self.buffer_granularity,
        }
    }
}

/// Training settings; the seed comes from the run's seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs_per_segment: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub mode: TrainMode,
    pub shuffle: bool,
    pub patience: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs_per_segment: d.epochs_per_segment,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            optimizer: d.optimizer,
            mode: d.mode,
            shuffle: d.shuffle,
            patience: d.patience,
        }
    }
}

impl TrainSection {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs_per_segment: self.epochs_per_segment,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed,
            mode: self.mode,
            shuffle: self.shuffle,
            patience: self.patience,
        }
    }
}

/// Contents of a run configuration file:
///
/// ```toml
/// manifest = "prep/manifest.json"
/// out_dir = "runs/imlp"
/// model_kind = "imlp"              # or "plain-mlp"
/// seeds = [7, 42, 101]
/// energy = "flops"                 # or "constant:<watts>", "trace:<path>"
/// joules_per_flop = 1e-9
/// jobs = 1
///
/// [model]
/// d_h = 256
/// window = 8
///
/// [train]
/// epochs_per_segment = 20
/// mode = "incremental"             # or "cumulative-retrain"
/// optimizer = { kind = "adam", beta1 = 0.9, beta2 = 0.999, eps = 1e-8 }
/// ```
///
/// Relative paths are resolved against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub model_kind: ModelKind,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_energy")]
    pub energy: EnergySpec,
    #[serde(default = "default_joules_per_flop")]
    pub joules_per_flop: f64,
    /// Seeds run concurrently, at most this many at a time.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

fn default_energy() -> EnergySpec {
    EnergySpec::Flops
}

fn default_joules_per_flop() -> f64 {
    DEFAULT_JOULES_PER_FLOP
}

fn default_jobs() -> usize {
    1
}

impl RunConfig {
    pub fn new(manifest: PathBuf) -> Self {
        Self {
            manifest,
            out_dir: default_out_dir(),
            model_kind: ModelKind::default(),
            seeds: default_seeds(),
            energy: default_energy(),
            joules_per_flop: default_joules_per_flop(),
            jobs: default_jobs(),
            model: ModelSection::default(),
            train: TrainSection::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| e.context(path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifest = base.join(&cfg.manifest);
        cfg.out_dir = base.join(&cfg.out_dir);
        if let EnergySpec::Trace { path } = &cfg.energy {
            cfg.energy = EnergySpec::Trace { path: base.join(path) };
        }
        Ok(cfg)
    }

    /// Checks everything that does not need the manifest.
    pub fn validate(&self) -> CliResult<()> {
        if self.seeds.is_empty() {
            return Err(CliError::config("seed list is empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(CliError::config("seed list has duplicates"));
        }
        if self.jobs == 0 {
            return Err(CliError::config("jobs must be >= 1"));
        }
        if !(self.joules_per_flop > 0.0 && self.joules_per_flop.is_finite()) {
            return Err(CliError::config(format!("joules_per_flop must be > 0, got {}", self.joules_per_flop)));
        }
        self.train.to_config(0).validate().map_err(|e| CliError::config(e.to_string()))?;
        self.model.to_config(1, 1).validate().map_err(|e| CliError::config(e.to_string()))?;
        Ok(())
    }
}

/// Parses `7,42,101`.
pub fn parse_seed_list(s: &str) -> CliResult<Vec<u64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| CliError::config(format!("bad seed {p:?} in {s:?}")))
        })
        .collect()
}
