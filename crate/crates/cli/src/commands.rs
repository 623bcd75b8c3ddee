//! The five subcommands as library functions. `main` only parses arguments,
//! calls these and prints.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use imlp_core::checkpoint::write_checkpoint;
use imlp_core::data::manifest::file_sha256;
use imlp_core::data::{build_manifest, DatasetManifest, FileRef, RawTable, Schema};
use imlp_core::stats::rank::{nemenyi_q, PairwiseComparison};
use imlp_core::stats::{friedman_test, nemenyi_cd, pareto_front, wilcoxon_holm, ResultsMatrix, TradeoffPoint};
use imlp_core::trainer::{run_stream, Segment};

use crate::config::{EnergySpec, RunConfig};
use crate::error::{io_error, CliError, CliResult};
use crate::report::{
    checkpoint_file_name, relative_to, report_file_name, write_file, AggregateReport, ConfigEcho, DatasetEcho,
    EnergyEcho, Hashed, ProtocolEcho, RunReport, RunSummary, TimingSidecar, REPORT_VERSION,
};
use crate::svg;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "preprocessing.txt";
pub const AGGREGATE_FILE: &str = "aggregate.json";
pub const FRONT_FILE: &str = "pareto_front.csv";
pub const FIGURE_FILE: &str = "pareto.svg";

#[derive(Debug)]
pub struct PrepOutput {
    pub manifest_path: PathBuf,
    pub summary_path: PathBuf,
    pub manifest: DatasetManifest,
}

/// Reads, segments and splits a table and writes its manifest.
///
/// File references in the manifest are relative to `out_dir` where
/// possible, so the output directory can move together with its inputs.
pub fn cmd_prep(table_path: &Path, schema_path: &Path, out_dir: &Path, split_seed: u64) -> CliResult<PrepOutput> {
    let schema = Schema::from_path(schema_path)?;
    let table = RawTable::from_path(table_path, &schema)?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let file_ref = |p: &Path| -> CliResult<FileRef> {
        Ok(FileRef {
            path: relative_to(p, out_dir).to_string_lossy().into_owned(),
            sha256: file_sha256(p)?,
        })
    };
    let manifest = build_manifest(&table, &schema, file_ref(table_path)?, file_ref(schema_path)?, split_seed)?;
    for w in &manifest.preprocessor.warnings {
        log::warn!("{w}");
    }
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let summary_path = out_dir.join(SUMMARY_FILE);
    let mut json = manifest.to_json()?;
    json.push('\n');
    write_file(&manifest_path, json.as_bytes())?;
    write_file(&summary_path, manifest.summary().as_bytes())?;
    Ok(PrepOutput {
        manifest_path,
        summary_path,
        manifest,
    })
}

/// Resolves a manifest file reference and checks the file is unchanged.
fn verified_input(manifest_dir: &Path, file: &FileRef, what: &str) -> CliResult<PathBuf> {
    let path = manifest_dir.join(&file.path);
    let actual = file_sha256(&path).map_err(|e| CliError::from(e).context(what))?;
    if actual != file.sha256 {
        return Err(CliError::data(format!(
            "{what} {} changed since the manifest was written (sha256 {actual}, expected {})",
            path.display(),
            file.sha256
        )));
    }
    Ok(path)
}

/// Loads a manifest and encodes its table into segments.
pub fn load_stream(manifest_path: &Path) -> CliResult<(DatasetManifest, Vec<Segment>)> {
    let manifest = DatasetManifest::load(manifest_path).map_err(|e| CliError::from(e).context(manifest_path.display()))?;
    let dir = manifest_path.parent().unwrap_or(Path::new(""));
    let table_path = verified_input(dir, &manifest.table, "table")?;
    let schema_path = verified_input(dir, &manifest.schema, "schema")?;
    let schema = Schema::from_path(&schema_path)?;
    let table = RawTable::from_path(&table_path, &schema)?;
    let stream = manifest.encode_stream(&table)?;
    Ok((manifest, stream))
}

#[derive(Debug)]
pub struct RunOutput {
    pub reports: Vec<(PathBuf, RunReport)>,
    pub aggregate_path: PathBuf,
    pub aggregate: AggregateReport,
}

fn energy_spec_echo(spec: &EnergySpec) -> String {
    match spec {
        EnergySpec::Trace { path } => format!(
            "trace:{}",
            path.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned())
        ),
        other => other.to_string(),
    }
}

fn run_seed(
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    stream: &[Segment],
    seed: u64,
) -> CliResult<(PathBuf, RunReport, RunSummary)> {
    let provider = cfg.energy.provider(seed, cfg.joules_per_flop)?;
    let trace_sha256 = match cfg.energy.trace_path(seed) {
        Some(p) => Some(file_sha256(&p)?),
        None => None,
    };
    let model_config = cfg.model.to_config(manifest.n_features, manifest.n_classes);
    let train_config = cfg.train.to_config(seed);
    log::info!("seed {seed}: {} segments", stream.len());
    let run = run_stream(stream, cfg.model_kind, &model_config, &train_config, &provider)?;

    let segment_time_s: Vec<f64> = run.results.iter().map(|r| r.wall_time_s).collect();
    let echo = ConfigEcho {
        dataset: DatasetEcho::new(manifest, &cfg.manifest),
        model_kind: cfg.model_kind,
        model: cfg.model_kind.effective_config(&model_config),
        train: train_config,
        energy: EnergyEcho::new(&energy_spec_echo(&cfg.energy), &provider, trace_sha256),
        protocol: ProtocolEcho::default(),
    };
    let report = RunReport::build(seed, echo, run.results)?;
    let timing = TimingSidecar::new(&report, segment_time_s);

    let report_path = cfg.out_dir.join(report_file_name(seed));
    write_file(&report_path, report.to_json().as_bytes())?;
    write_file(&cfg.out_dir.join(&report.timing_file), timing.to_json().as_bytes())?;
    let mut ckpt = Vec::new();
    write_checkpoint(&mut ckpt, &run.model, &run.buffer).map_err(|e| CliError::data(e.to_string()))?;
    write_file(&cfg.out_dir.join(checkpoint_file_name(seed)), &ckpt)?;

    let summary = RunSummary {
        seed,
        report_file: report_file_name(seed),
        report_hash: report.content_hash.clone(),
        balanced_accuracy: report.aggregates.balanced_accuracy.mean,
        log_loss: report.aggregates.log_loss.mean,
        total_energy_j: report.aggregates.total_energy_j,
        netscore_t: report.aggregates.netscore_t,
        time_s: timing.total_time_s,
    };
    Ok((report_path, report, summary))
}

/// Runs every seed of `cfg` (up to `cfg.jobs` at once), then writes the
/// seed aggregate.
pub fn cmd_run(cfg: &RunConfig) -> CliResult<RunOutput> {
    cfg.validate()?;
    let (manifest, stream) = load_stream(&cfg.manifest)?;
    cfg.model
        .to_config(manifest.n_features, manifest.n_classes)
        .validate()
        .map_err(|e| CliError::config(e.to_string()))?;

    type SeedOutput = CliResult<(PathBuf, RunReport, RunSummary)>;
    let slots: Mutex<Vec<Option<SeedOutput>>> = Mutex::new((0..cfg.seeds.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..cfg.jobs.min(cfg.seeds.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = cfg.seeds.get(i) else { break };
                let out = run_seed(cfg, &manifest, &stream, seed).map_err(|e| e.context(format!("seed {seed}")));
                slots.lock().expect("no worker panicked")[i] = Some(out);
            });
        }
    });

    let mut reports = Vec::with_capacity(cfg.seeds.len());
    let mut summaries = Vec::with_capacity(cfg.seeds.len());
    for slot in slots.into_inner().expect("no worker panicked") {
        let (path, report, summary) = slot.expect("every seed ran")?;
        reports.push((path, report));
        summaries.push(summary);
    }
    let aggregate = AggregateReport::build(summaries);
    let aggregate_path = cfg.out_dir.join(AGGREGATE_FILE);
    write_file(&aggregate_path, aggregate.to_json().as_bytes())?;
    Ok(RunOutput {
        reports,
        aggregate_path,
        aggregate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub label: String,
    pub report: PathBuf,
    pub energy_j: f64,
    pub time_s: Option<f64>,
    pub balanced_accuracy: f64,
    pub log_loss: f64,
    pub netscore_t: f64,
}

/// Largest tolerated gap between stored and recomputed NetScore-T.
pub const SCORE_TOLERANCE: f64 = 1e-12;

/// One row per report, NetScore-T recomputed from the segment list and
/// sorted best first.
pub fn cmd_score(paths: &[PathBuf]) -> CliResult<Vec<ScoreRow>> {
    if paths.is_empty() {
        return Err(CliError::config("score needs at least one report"));
    }
    let mut rows = Vec::with_capacity(paths.len());
    for path in paths {
        let report = RunReport::load(path)?;
        let ns = report.recomputed_netscore_t().map_err(|e| e.context(path.display()))?;
        if (ns - report.aggregates.netscore_t).abs() > SCORE_TOLERANCE {
            return Err(CliError::data(format!(
                "{}: stored NetScore-T {} disagrees with segments ({ns})",
                path.display(),
                report.aggregates.netscore_t
            )));
        }
        let n = report.segments.len() as f64;
        rows.push(ScoreRow {
            label: report.label(),
            report: path.clone(),
            energy_j: report.segments.iter().map(|s| s.energy_j).sum(),
            time_s: TimingSidecar::for_report(path, &report).map(|t| t.total_time_s),
            balanced_accuracy: report.segments.iter().map(|s| s.balanced_accuracy).sum::<f64>() / n,
            log_loss: report.segments.iter().map(|s| s.log_loss).sum::<f64>() / n,
            netscore_t: ns,
        });
    }
    rows.sort_by(|a, b| b.netscore_t.total_cmp(&a.netscore_t));
    Ok(rows)
}

pub fn format_score_table(rows: &[ScoreRow]) -> String {
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(3);
    let mut out = format!(
        "{:<width$}  {:>14}  {:>10}  {:>10}  {:>10}  {:>12}\n",
        "run", "Energy (J) ↓", "Time (s) ↓", "BA ↑", "LogLoss ↓", "NetScore-T ↑"
    );
    for r in rows {
        let time = r.time_s.map_or_else(|| "-".to_string(), |t| format!("{t:.3}"));
        out.push_str(&format!(
            "{:<width$}  {:>14.6e}  {:>10}  {:>10.4}  {:>10.4}  {:>12.6}\n",
            r.label, r.energy_j, time, r.balanced_accuracy, r.log_loss, r.netscore_t
        ));
    }
    out
}

/// Row of a points file: `label,performance,energy`.
#[derive(Debug, Serialize, Deserialize)]
struct PointRow {
    label: String,
    performance: f64,
    energy: f64,
}

pub fn read_points(path: &Path) -> CliResult<Vec<TradeoffPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_error(path, e))?;
    rdr.deserialize::<PointRow>()
        .map(|row| {
            row.map(|r| TradeoffPoint::new(r.performance, r.energy, r.label))
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Points from run reports: mean balanced accuracy against total energy.
pub fn points_from_reports(paths: &[PathBuf]) -> CliResult<Vec<TradeoffPoint>> {
    paths
        .iter()
        .map(|p| {
            let r = RunReport::load(p)?;
            Ok(TradeoffPoint::new(
                r.aggregates.balanced_accuracy.mean,
                r.aggregates.total_energy_j,
                r.label(),
            ))
        })
        .collect()
}

#[derive(Debug)]
pub struct ParetoOutput {
    pub points: Vec<TradeoffPoint>,
    pub front: Vec<TradeoffPoint>,
    pub front_path: PathBuf,
    pub figure_path: PathBuf,
}

pub fn cmd_pareto(points: Vec<TradeoffPoint>, out_dir: &Path) -> CliResult<ParetoOutput> {
    let front = pareto_front(&points)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &front {
        w.serialize(PointRow {
            label: p.label.clone(),
            performance: p.performance,
            energy: p.energy,
        })
        .map_err(|e| CliError::data(e.to_string()))?;
    }
    let table = w.into_inner().map_err(|e| CliError::data(e.to_string()))?;
    let front_path = out_dir.join(FRONT_FILE);
    let figure_path = out_dir.join(FIGURE_FILE);
    write_file(&front_path, &table)?;
    write_file(&figure_path, svg::render(&points, &front).as_bytes())?;
    Ok(ParetoOutput {
        points,
        front,
        front_path,
        figure_path,
    })
}

pub const STATS_FORMAT: &str = "imlp-stats-report";

#[derive(Debug, Clone, PartialEq)]
pub struct StatsOptions {
    pub alpha: f64,
    pub higher_is_better: bool,
    /// Defaults to the algorithm with the best average rank.
    pub control: Option<String>,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            higher_is_better: true,
            control: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankEntry {
    pub algorithm: String,
    pub average_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FriedmanSection {
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
    pub reject: bool,
    pub average_ranks: Vec<RankEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NemenyiSection {
    pub alpha: f64,
    pub q: Option<f64>,
    pub critical_difference: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PostHoc {
    pub control: String,
    pub wilcoxon_holm: Vec<PairwiseComparison>,
    pub nemenyi: NemenyiSection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub format: String,
    pub version: u32,
    pub n_datasets: usize,
    pub algorithms: Vec<String>,
    pub alpha: f64,
    pub higher_is_better: bool,
    pub friedman: FriedmanSection,
    /// Present only when the Friedman test rejects at `alpha`.
    pub post_hoc: Option<PostHoc>,
}

pub fn read_matrix(path: &Path) -> CliResult<ResultsMatrix> {
    let file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
    ResultsMatrix::from_reader(file, b',').map_err(|e| CliError::from(e).context(path.display()))
}

/// Friedman test, then post-hoc comparisons if it rejects.
pub fn cmd_stats(m: &ResultsMatrix, opts: &StatsOptions) -> CliResult<StatsReport> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(CliError::config(format!("alpha must lie in (0, 1), got {}", opts.alpha)));
    }
    let fr = friedman_test(m, opts.higher_is_better)?;
    let reject = fr.p_value < opts.alpha;
    let post_hoc = if reject {
        let control = match &opts.control {
            Some(c) => c.clone(),
            None => {
                let best = (0..fr.avg_ranks.len())
                    .min_by(|&a, &b| fr.avg_ranks[a].total_cmp(&fr.avg_ranks[b]))
                    .expect("at least one algorithm");
                m.algorithms[best].clone()
            }
        };
        let k = m.n_algorithms();
        let nemenyi = match nemenyi_cd(k, m.n_datasets(), opts.alpha) {
            Ok(cd) => NemenyiSection {
                alpha: opts.alpha,
                q: Some(nemenyi_q(k, opts.alpha)?),
                critical_difference: Some(cd),
                note: None,
            },
            Err(e) => NemenyiSection {
                alpha: opts.alpha,
                q: None,
                critical_difference: None,
                note: Some(e.to_string()),
            },
        };
        Some(PostHoc {
            wilcoxon_holm: wilcoxon_holm(m, &control, opts.alpha)?,
            control,
            nemenyi,
        })
    } else {
        None
    };
    Ok(StatsReport {
        format: STATS_FORMAT.into(),
        version: REPORT_VERSION,
        n_datasets: m.n_datasets(),
        algorithms: m.algorithms.clone(),
        alpha: opts.alpha,
        higher_is_better: opts.higher_is_better,
        friedman: FriedmanSection {
            chi2: fr.chi2,
            df: fr.df,
            p_value: fr.p_value,
            reject,
            average_ranks: m
                .algorithms
                .iter()
                .zip(&fr.avg_ranks)
                .map(|(a, &r)| RankEntry {
                    algorithm: a.clone(),
                    average_rank: r,
                })
                .collect(),
        },
        post_hoc,
    })
}
