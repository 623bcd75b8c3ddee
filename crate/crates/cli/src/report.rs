//! Run reports: a full configuration echo, per-segment results, aggregates
//! and a content hash. Reports are pretty-printed JSON whose key order is
//! fixed by the struct definitions, so equal runs give equal bytes.
//!
//! Measured wall time would break that, so it goes to a timing sidecar
//! (`timing-seed<N>.json`) next to each report.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use imlp_core::buffer::PROTOTYPE_EPS;
use imlp_core::data::manifest::sha256_hex;
use imlp_core::data::DatasetManifest;
use imlp_core::energy::EnergyProvider;
use imlp_core::metrics::{netscore, netscore_t, SegmentResult, LOG_LOSS_CLIP, NETSCORE_ENERGY_FLOOR};
use imlp_core::model::ImlpConfig;
use imlp_core::trainer::{ModelKind, TrainConfig, DIVERGENCE_THRESHOLD};

use crate::error::{io_error, CliError, CliResult};

pub const REPORT_FORMAT: &str = "imlp-run-report";
pub const AGGREGATE_FORMAT: &str = "imlp-aggregate-report";
pub const TIMING_FORMAT: &str = "imlp-run-timing";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolStamp {
    pub name: String,
    pub version: String,
}

impl ToolStamp {
    pub fn current() -> Self {
        Self {
            name: "imlp".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEcho {
    pub manifest_file: String,
    pub manifest_hash: String,
    pub table_sha256: String,
    pub n_rows: usize,
    pub n_segments: usize,
    pub n_features: usize,
    pub labels: Vec<String>,
    pub split_seed: u64,
    pub train_fraction: f64,
    pub preprocessing: String,
}

impl DatasetEcho {
    pub fn new(manifest: &DatasetManifest, manifest_path: &Path) -> Self {
        Self {
            manifest_file: manifest_path
                .file_name()
                .map_or_else(String::new, |f| f.to_string_lossy().into_owned()),
            manifest_hash: manifest.content_hash.clone(),
            table_sha256: manifest.table.sha256.clone(),
            n_rows: manifest.n_rows,
            n_segments: manifest.segments.len(),
            n_features: manifest.n_features,
            labels: manifest.preprocessor.labels.clone(),
            split_seed: manifest.split_seed,
            train_fraction: manifest.train_fraction,
            preprocessing: format!(
                "numeric: median impute + standardize; categorical: one-hot with missing slot, unseen -> zeros; fitted on {}, frozen",
                manifest.preprocessor.fitted_on
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyEcho {
    pub spec: String,
    pub provider: String,
    /// Whether the values are measured physical energy.
    pub physical: bool,
    pub joules_per_flop: Option<f64>,
    pub watts: Option<f64>,
    pub trace_sha256: Option<String>,
}

impl EnergyEcho {
    pub fn new(spec: &str, provider: &EnergyProvider, trace_sha256: Option<String>) -> Self {
        let (joules_per_flop, watts) = match provider {
            EnergyProvider::FlopsProxy { joules_per_flop } => (Some(*joules_per_flop), None),
            EnergyProvider::ConstantPower { watts } => (None, Some(*watts)),
            EnergyProvider::Trace(_) => (None, None),
        };
        Self {
            spec: spec.into(),
            provider: provider.describe(),
            physical: matches!(provider, EnergyProvider::Trace(_)),
            joules_per_flop,
            watts,
            trace_sha256,
        }
    }
}

/// Fixed behaviors that affect the numbers, echoed for auditability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolEcho {
    pub evaluation: String,
    pub buffer: String,
    pub init: String,
    pub netscore_energy_floor_j: f64,
    pub log_loss_clip: f64,
    pub prototype_eps: f64,
    pub divergence_threshold: f64,
}

impl Default for ProtocolEcho {
    fn default() -> Self {
        Self {
            evaluation: "each segment's test split is scored after training on it and before its prototype enters the buffer".into(),
            buffer: "one detached mean penultimate feature per segment from a pass over its training rows; cumulative-retrain resets parameters, optimizer and buffer each segment".into(),
            init: "he-uniform weights from the run seed, zero biases".into(),
            netscore_energy_floor_j: NETSCORE_ENERGY_FLOOR,
            log_loss_clip: LOG_LOSS_CLIP,
            prototype_eps: PROTOTYPE_EPS,
            divergence_threshold: DIVERGENCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub dataset: DatasetEcho,
    pub model_kind: ModelKind,
    /// The configuration actually trained (attention off for plain-mlp).
    pub model: ImlpConfig,
    pub train: TrainConfig,
    pub energy: EnergyEcho,
    pub protocol: ProtocolEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub segments: usize,
    pub balanced_accuracy: MeanStd,
    pub log_loss: MeanStd,
    pub energy_j: MeanStd,
    pub total_energy_j: f64,
    pub total_flops: u64,
    pub netscore: MeanStd,
    pub netscore_t: f64,
    pub capped_segments: usize,
}

impl Aggregates {
    pub fn from_segments(segments: &[SegmentResult]) -> CliResult<Self> {
        let col = |f: fn(&SegmentResult) -> f64| segments.iter().map(f).collect::<Vec<f64>>();
        let ns = col(|s| s.netscore);
        Ok(Self {
            segments: segments.len(),
            balanced_accuracy: MeanStd::of(&col(|s| s.balanced_accuracy)),
            log_loss: MeanStd::of(&col(|s| s.log_loss)),
            energy_j: MeanStd::of(&col(|s| s.energy_j)),
            total_energy_j: segments.iter().map(|s| s.energy_j).sum(),
            total_flops: segments.iter().map(SegmentResult::total_flops).sum(),
            netscore: MeanStd::of(&ns),
            netscore_t: netscore_t(&ns)?,
            capped_segments: segments.iter().filter(|s| s.netscore_capped).count(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: String,
    pub version: u32,
    pub tool: ToolStamp,
    pub seed: u64,
    pub config: ConfigEcho,
    pub segments: Vec<SegmentResult>,
    pub aggregates: Aggregates,
    pub timing_file: String,
    pub content_hash: String,
}

/// Measured wall time of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSidecar {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub report_hash: String,
    pub total_time_s: f64,
    pub segment_time_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub report_file: String,
    pub report_hash: String,
    pub balanced_accuracy: f64,
    pub log_loss: f64,
    pub total_energy_j: f64,
    pub netscore_t: f64,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcrossSeeds {
    pub balanced_accuracy: MeanStd,
    pub log_loss: MeanStd,
    pub total_energy_j: MeanStd,
    pub netscore_t: MeanStd,
    /// Measured; varies between otherwise identical runs.
    pub time_s: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub format: String,
    pub version: u32,
    pub tool: ToolStamp,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunSummary>,
    pub across_seeds: AcrossSeeds,
    pub content_hash: String,
}

/// Types carrying a `content_hash` over their own serialization.
pub trait Hashed: Serialize + DeserializeOwned + Clone {
    fn hash_slot(&mut self) -> &mut String;

    fn compute_hash(&self) -> String {
        let mut copy = self.clone();
        copy.hash_slot().clear();
        sha256_hex(serde_json::to_string_pretty(&copy).expect("serializable").as_bytes())
    }

    fn seal(&mut self) {
        let h = self.compute_hash();
        *self.hash_slot() = h;
    }

    fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }
}

impl Hashed for RunReport {
    fn hash_slot(&mut self) -> &mut String {
        &mut self.content_hash
    }
}

impl Hashed for AggregateReport {
    fn hash_slot(&mut self) -> &mut String {
        &mut self.content_hash
    }
}

pub fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: malformed report: {e}", path.display())))
}

impl RunReport {
    pub fn build(seed: u64, config: ConfigEcho, segments: Vec<SegmentResult>) -> CliResult<Self> {
        let aggregates = Aggregates::from_segments(&segments)?;
        let mut r = RunReport {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            tool: ToolStamp::current(),
            seed,
            config,
            segments,
            aggregates,
            timing_file: timing_file_name(seed),
            content_hash: String::new(),
        };
        r.seal();
        Ok(r)
    }

    /// Parses a report and checks its header and hash.
    pub fn load(path: &Path) -> CliResult<Self> {
        let r: RunReport = read_json(path)?;
        if r.format != REPORT_FORMAT || r.version != REPORT_VERSION {
            return Err(CliError::data(format!(
                "{}: not a run report (format {:?} v{})",
                path.display(),
                r.format,
                r.version
            )));
        }
        if r.compute_hash() != r.content_hash {
            return Err(CliError::data(format!("{}: content hash mismatch", path.display())));
        }
        Ok(r)
    }

    /// NetScore-T recomputed from the per-segment accuracy and energy.
    pub fn recomputed_netscore_t(&self) -> CliResult<f64> {
        let ns = self
            .segments
            .iter()
            .map(|s| netscore(s.balanced_accuracy, s.energy_j).map(|n| n.value))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(netscore_t(&ns)?)
    }

    pub fn label(&self) -> String {
        let mode = match self.config.train.mode {
            imlp_core::trainer::TrainMode::Incremental => "incremental",
            imlp_core::trainer::TrainMode::CumulativeRetrain => "cumulative",
        };
        let kind = match self.config.model_kind {
            ModelKind::Imlp => "imlp",
            ModelKind::PlainMlp => "plain-mlp",
        };
        format!("{kind}/{mode}/seed{}", self.seed)
    }
}

impl TimingSidecar {
    pub fn new(report: &RunReport, segment_time_s: Vec<f64>) -> Self {
        Self {
            format: TIMING_FORMAT.into(),
            version: REPORT_VERSION,
            seed: report.seed,
            report_hash: report.content_hash.clone(),
            total_time_s: segment_time_s.iter().sum(),
            segment_time_s,
        }
    }

    /// The sidecar of the report at `report_path`, if present and matching.
    pub fn for_report(report_path: &Path, report: &RunReport) -> Option<Self> {
        let path = report_path.with_file_name(&report.timing_file);
        let t: TimingSidecar = read_json(&path).ok()?;
        (t.format == TIMING_FORMAT && t.report_hash == report.content_hash).then_some(t)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }
}

pub fn report_file_name(seed: u64) -> String {
    format!("report-seed{seed}.json")
}

pub fn timing_file_name(seed: u64) -> String {
    format!("timing-seed{seed}.json")
}

pub fn checkpoint_file_name(seed: u64) -> String {
    format!("model-seed{seed}.ckpt")
}

impl AggregateReport {
    pub fn build(runs: Vec<RunSummary>) -> Self {
        let col = |f: fn(&RunSummary) -> f64| runs.iter().map(f).collect::<Vec<f64>>();
        let across_seeds = AcrossSeeds {
            balanced_accuracy: MeanStd::of(&col(|r| r.balanced_accuracy)),
            log_loss: MeanStd::of(&col(|r| r.log_loss)),
            total_energy_j: MeanStd::of(&col(|r| r.total_energy_j)),
            netscore_t: MeanStd::of(&col(|r| r.netscore_t)),
            time_s: MeanStd::of(&col(|r| r.time_s)),
        };
        let mut a = AggregateReport {
            format: AGGREGATE_FORMAT.into(),
            version: REPORT_VERSION,
            tool: ToolStamp::current(),
            seeds: runs.iter().map(|r| r.seed).collect(),
            runs,
            across_seeds,
            content_hash: String::new(),
        };
        a.seal();
        a
    }
}

/// `path` relative to `base` when both share a root; otherwise `path` itself.
pub fn relative_to(path: &Path, base: &Path) -> PathBuf {
    let (Ok(p), Ok(b)) = (path.canonicalize(), base.canonicalize()) else {
        return path.to_path_buf();
    };
    let pc: Vec<_> = p.components().collect();
    let bc: Vec<_> = b.components().collect();
    let common = pc.iter().zip(&bc).take_while(|(a, b)| a == b).count();
    if common == 0 {
        return p;
    }
    let mut out = PathBuf::new();
    for _ in common..bc.len() {
        out.push("..");
    }
    for c in &pc[common..] {
        out.push(c);
    }
    out
}
