use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use imlp_cli::commands::{
    cmd_pareto, cmd_prep, cmd_run, cmd_score, cmd_stats, format_score_table, points_from_reports, read_matrix,
    read_points, StatsOptions,
};
use imlp_cli::config::{parse_seed_list, EnergySpec, RunConfig};
use imlp_cli::error::{exit, CliError, CliResult};
use imlp_cli::report::write_file;
use imlp_core::data::manifest::DEFAULT_SPLIT_SEED;
use imlp_core::trainer::{ModelKind, TrainMode};

/// Energy-aware continual learning on tabular streams.
#[derive(Parser)]
#[command(name = "imlp", version)]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment, split and fit preprocessing for a table; writes manifest.json.
    Prep {
        /// CSV table.
        table: PathBuf,
        /// TOML schema describing the table's columns.
        schema: PathBuf,
        #[arg(long, default_value = "prep")]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SPLIT_SEED)]
        split_seed: u64,
    },
    /// Train over the stream for each seed and write reports.
    Run(RunArgs),
    /// Compare run reports.
    Score {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Pareto front of performance against energy.
    Pareto {
        /// Run reports (ignored with --points).
        reports: Vec<PathBuf>,
        /// CSV with header `label,performance,energy`.
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long, default_value = "pareto")]
        out: PathBuf,
    },
    /// Friedman test with gated post-hoc comparisons.
    Stats {
        /// CSV with header `dataset,<algorithm>,...`, one row per dataset.
        matrix: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Control algorithm for Wilcoxon-Holm (default: best average rank).
        #[arg(long)]
        control: Option<String>,
        /// Treat smaller values as better.
        #[arg(long)]
        lower_is_better: bool,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Incremental,
    Cumulative,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Imlp,
    PlainMlp,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Manifest to use (overrides the configuration's).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated seeds, e.g. 7,42,101.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// flops, constant:<watts> or trace:<path> (`{seed}` expands).
    #[arg(long)]
    energy: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Seeds run concurrently.
    #[arg(long)]
    jobs: Option<usize>,
}

impl RunArgs {
    fn resolve(self) -> CliResult<RunConfig> {
        let mut cfg = match (&self.config, &self.manifest) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(m)) => RunConfig::new(m.clone()),
            (None, None) => return Err(CliError::config("run needs --config or --manifest")),
        };
        if let Some(m) = self.manifest {
            cfg.manifest = m;
        }
        if let Some(s) = self.seed {
            cfg.seeds = parse_seed_list(&s)?;
        }
        if let Some(o) = self.out {
            cfg.out_dir = o;
        }
        if let Some(e) = self.energy {
            cfg.energy = e.parse::<EnergySpec>()?;
        }
        if let Some(m) = self.mode {
            cfg.train.mode = match m {
                ModeArg::Incremental => TrainMode::Incremental,
                ModeArg::Cumulative => TrainMode::CumulativeRetrain,
            };
        }
        if let Some(m) = self.model {
            cfg.model_kind = match m {
                ModelArg::Imlp => ModelKind::Imlp,
                ModelArg::PlainMlp => ModelKind::PlainMlp,
            };
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        Ok(cfg)
    }
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Prep {
            table,
            schema,
            out,
            split_seed,
        } => {
            let o = cmd_prep(&table, &schema, &out, split_seed)?;
            print!("{}", o.manifest.summary());
            println!("manifest {} ({})", o.manifest_path.display(), o.manifest.content_hash);
        }
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let o = cmd_run(&cfg)?;
            for (path, r) in &o.reports {
                println!(
                    "seed {:>6}  BA {:.4}  energy {:.6e} J  NetScore-T {:.6}  {}",
                    r.seed,
                    r.aggregates.balanced_accuracy.mean,
                    r.aggregates.total_energy_j,
                    r.aggregates.netscore_t,
                    path.display()
                );
            }
            let a = &o.aggregate.across_seeds;
            println!(
                "mean ± std  BA {:.4} ± {:.4}  NetScore-T {:.6} ± {:.6}  {}",
                a.balanced_accuracy.mean,
                a.balanced_accuracy.std,
                a.netscore_t.mean,
                a.netscore_t.std,
                o.aggregate_path.display()
            );
        }
        Command::Score { reports, csv } => {
            let rows = cmd_score(&reports)?;
            print!("{}", format_score_table(&rows));
            if let Some(path) = csv {
                let mut w = ::csv::Writer::from_writer(Vec::new());
                for r in &rows {
                    w.serialize(r).map_err(|e| CliError::data(e.to_string()))?;
                }
                let bytes = w.into_inner().map_err(|e| CliError::data(e.to_string()))?;
                write_file(&path, &bytes)?;
            }
        }
        Command::Pareto { reports, points, out } => {
            let pts = match points {
                Some(p) => read_points(&p)?,
                None if reports.is_empty() => return Err(CliError::config("pareto needs reports or --points")),
                None => points_from_reports(&reports)?,
            };
            let o = cmd_pareto(pts, &out)?;
            println!("{} of {} points on the front", o.front.len(), o.points.len());
            for p in &o.front {
                println!("{}  performance {}  energy {}", p.label, p.performance, p.energy);
            }
            println!("{}\n{}", o.front_path.display(), o.figure_path.display());
        }
        Command::Stats {
            matrix,
            alpha,
            control,
            lower_is_better,
            out,
        } => {
            let m = read_matrix(&matrix)?;
            let opts = StatsOptions {
                alpha,
                higher_is_better: !lower_is_better,
                control,
            };
            let report = cmd_stats(&m, &opts)?;
            let mut json = serde_json::to_string_pretty(&report).expect("serializable");
            json.push('\n');
            match out {
                Some(path) => {
                    write_file(&path, json.as_bytes())?;
                    println!(
                        "chi2 {:.6}  p {:.6}  {}",
                        report.friedman.chi2,
                        report.friedman.p_value,
                        if report.friedman.reject { "rejected; post-hoc written" } else { "not rejected" }
                    );
                }
                None => print!("{json}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
