use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qedcomm::config::ExperimentConfig;
use qedcomm::error::Error;
use qedcomm::report::{render_table, ExperimentReport};
use qedcomm::runner;

/// Costly-channel referential games: protocol training, symmetry discovery,
/// and zero-shot communication evaluation.
#[derive(Parser)]
#[command(name = "qedcomm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Worker thread count (default: available parallelism). The
    /// QEDCOMM_WORKERS environment variable overrides this flag.
    #[arg(long)]
    workers: Option<usize>,

    /// Offset added to every seed in the config; replicate batches without
    /// editing config files.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured experiment and write its report directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory root.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run the 2x2 ablation grid (channel x goal distribution) from a base
    /// qed config on the energy-degeneracy task.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Aggregate report files into a combined CSV and rendered table.
    Report {
        /// Paths to report.json files.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export sender/receiver/confusion heatmap matrices for one seed of a
    /// report, plus the cross-play confusion against a partner seed.
    ExportHeatmaps {
        #[arg(long)]
        report: PathBuf,
        /// Seed index into the report's population.
        #[arg(long)]
        seed: usize,
        /// Partner seed index for the cross-play confusion (default: the
        /// next index, wrapping).
        #[arg(long)]
        partner: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

struct CliError {
    code: u8,
    message: String,
}

/// Invalid input (config, missing file, bad index) exits 2; runtime
/// failures exit 1.
fn classify(err: Error) -> CliError {
    let code = match &err {
        Error::ConfigParse { .. }
        | Error::ConfigInvalid(_)
        | Error::InvalidArgument(_)
        | Error::Report(_)
        | Error::Json(_)
        | Error::Io(_) => 2,
        _ => 1,
    };
    CliError {
        code,
        message: err.to_string(),
    }
}

fn runtime(err: Error) -> CliError {
    CliError {
        code: 1,
        message: err.to_string(),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            common,
        } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(classify)?;
            cfg.apply_seed_offset(common.seed_offset);
            let workers = resolve_workers(common.workers);
            let pool = build_pool(workers)?;
            let report = pool
                .install(|| runner::run_experiment(&cfg))
                .map_err(|e| runtime_with_diagnostic(e, &out))?;
            let dir = runner::write_outputs(&report, &cfg, &out, workers).map_err(runtime)?;
            println!(
                "{}: SP {:.4} +/- {:.4}  XP {:.4} +/- {:.4}  (n = {})",
                report.method.as_str(),
                report.sp_mean,
                report.sp_std,
                report.xp_mean,
                report.xp_std,
                report.n
            );
            println!("wrote {}", dir.display());
            Ok(())
        }
        Command::Ablate {
            config,
            out,
            common,
        } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(classify)?;
            cfg.apply_seed_offset(common.seed_offset);
            let workers = resolve_workers(common.workers);
            let pool = build_pool(workers)?;
            let reports = pool
                .install(|| runner::run_ablation(&cfg))
                .map_err(|e| runtime_with_diagnostic(e, &out))?;
            for report in &reports {
                let mut cell_cfg = cfg.clone();
                cell_cfg.channel = report.task.channel();
                cell_cfg.goal_kind = report.task.goal_kind();
                let dir =
                    runner::write_outputs(report, &cell_cfg, &out, workers).map_err(runtime)?;
                println!(
                    "{}: XP {:.4} +/- {:.1e}  -> {}",
                    report.condition(),
                    report.xp_mean,
                    report.xp_std,
                    dir.display()
                );
            }
            let refs: Vec<&ExperimentReport> = reports.iter().collect();
            runner::write_combined_table(&refs, &out).map_err(runtime)?;
            println!("wrote {}", out.join("table.csv").display());
            Ok(())
        }
        Command::Report { reports, out } => {
            let mut loaded = Vec::with_capacity(reports.len());
            for path in &reports {
                loaded.push(ExperimentReport::load(path).map_err(classify)?);
            }
            let refs: Vec<&ExperimentReport> = loaded.iter().collect();
            runner::write_combined_table(&refs, &out).map_err(classify)?;
            let rows = qedcomm::report::aggregate(&refs).map_err(classify)?;
            print!("{}", render_table(&rows));
            println!("wrote {}", out.join("table.csv").display());
            Ok(())
        }
        Command::ExportHeatmaps {
            report,
            seed,
            partner,
            out,
        } => {
            let loaded = ExperimentReport::load(&report).map_err(classify)?;
            let partner = partner.unwrap_or_else(|| {
                if loaded.per_seed.len() > 1 {
                    (seed + 1) % loaded.per_seed.len()
                } else {
                    seed
                }
            });
            runner::export_heatmaps(&loaded, seed, partner, &out).map_err(classify)?;
            println!("wrote heatmaps to {}", out.display());
            Ok(())
        }
    }
}

/// QEDCOMM_WORKERS overrides the flag; the flag overrides detection.
fn resolve_workers(flag: Option<usize>) -> usize {
    std::env::var("QEDCOMM_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .or(flag)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError {
            code: 1,
            message: format!("failed to build thread pool: {e}"),
        })
}

/// Classify the error; genuine runtime aborts additionally leave a
/// diagnostic file next to the outputs.
fn runtime_with_diagnostic(err: Error, out: &PathBuf) -> CliError {
    let classified = classify(err);
    if classified.code == 1 {
        let detail = format!("run aborted: {}\n", classified.message);
        if std::fs::create_dir_all(out).is_ok() {
            let _ = std::fs::write(out.join("diagnostic.txt"), &detail);
        }
    }
    classified
}
