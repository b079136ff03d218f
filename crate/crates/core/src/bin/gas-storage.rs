use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gas_storage::commands::{cmd_compare, cmd_grid, cmd_simulate, cmd_value, BackendKind, PolicySource};
use gas_storage::config::RunConfig;
use gas_storage::error::{Result, StorageError};
use gas_storage::valuation::PolicyMode;

#[derive(Parser)]
#[command(name = "gas-storage", version, about = "Natural gas storage valuation")]
struct Cli {
    /// TOML run configuration; the built-in Stratton Ridge fixture if omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `run.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; 0 uses all cores. Overrides `run.workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Tree,
    Lsmc,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Tree => BackendKind::Tree,
            BackendArg::Lsmc => BackendKind::Lsmc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Optimal,
    Bangbang,
}

#[derive(Args)]
struct SeedArgs {
    /// Seed for randomized steps; overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Value the contract and write policy bounds.
    Value {
        #[arg(long, value_enum, default_value = "tree")]
        backend: BackendArg,
        #[command(flatten)]
        seed: SeedArgs,
        /// Number of consecutive LSMC seeds to run; overrides `run.seeds`.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Run a policy forward along fresh simulated price paths.
    Simulate {
        /// Directory holding `bounds.csv` from an earlier `value` run.
        #[arg(long, conflicts_with = "recompute")]
        bounds_dir: Option<PathBuf>,
        /// Recompute the policy instead of reading bounds from disk.
        #[arg(long)]
        recompute: bool,
        #[arg(long, value_enum, default_value = "tree")]
        backend: BackendArg,
        #[arg(long, value_enum, default_value = "optimal")]
        policy: PolicyArg,
        /// Number of paths; overrides `simulation.paths`.
        #[arg(long)]
        paths: Option<usize>,
        #[command(flatten)]
        seed: SeedArgs,
    },
    /// Compare optimal and bang-bang values.
    Compare {
        /// Backend to run; both if omitted.
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[command(flatten)]
        seed: SeedArgs,
    },
    /// Write the storage grid and its gap histogram.
    Grid,
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let workers = cli.workers.unwrap_or(config.run.workers);
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| StorageError::InvalidArgument(e.to_string()))?;
    }
    let out = cli.out.clone().unwrap_or_else(|| config.run.out_dir.clone());
    match cli.command {
        Command::Value { backend, seed, seeds } => {
            let kind = BackendKind::from(backend);
            let report = cmd_value(
                &config,
                kind,
                seed.seed.unwrap_or(config.lsmc.seed),
                seeds.unwrap_or(config.run.seeds),
                &out,
            )?;
            for r in &report.runs {
                match r.seed {
                    Some(s) => println!("{} seed {s}: {:.2} ({:.2}s)", kind.name(), r.value, r.seconds),
                    None => println!("{}: {:.2} ({:.2}s)", kind.name(), r.value, r.seconds),
                }
            }
            if report.runs.len() > 1 {
                println!(
                    "mean {:.2} sd {:.2} over {} seeds",
                    report.mean,
                    report.std_dev,
                    report.runs.len()
                );
            }
            println!("parameters sha256 {}", report.parameters_sha256);
            println!("manifest {}", report.manifest.display());
        }
        Command::Simulate {
            bounds_dir,
            recompute,
            backend,
            policy,
            paths,
            seed,
        } => {
            let source = match (bounds_dir, recompute) {
                (Some(dir), _) => {
                    if matches!(policy, PolicyArg::Bangbang) {
                        return Err(StorageError::InvalidArgument(
                            "bounds files describe the optimal policy; use --recompute for bang-bang".into(),
                        ));
                    }
                    PolicySource::BoundsDir(dir)
                }
                (None, true) => PolicySource::Recompute {
                    backend: backend.into(),
                    mode: match policy {
                        PolicyArg::Optimal => PolicyMode::Threshold,
                        PolicyArg::Bangbang => PolicyMode::BangBang,
                    },
                },
                (None, false) => PolicySource::BoundsDir(out.clone()),
            };
            let report = cmd_simulate(
                &config,
                &source,
                paths.unwrap_or(config.simulation.paths),
                seed.seed.unwrap_or(config.simulation.seed),
                &out,
            )?;
            println!(
                "{} paths: mean {:.2} sd {:.2} (clamped lookups {})",
                report.paths, report.mean, report.std_dev, report.clamped_lookups
            );
            println!("manifest {}", report.manifest.display());
        }
        Command::Compare { backend, seed } => {
            let kinds = match backend {
                Some(b) => vec![b.into()],
                None => vec![BackendKind::Tree, BackendKind::Lsmc],
            };
            let rows = cmd_compare(&config, &kinds, seed.seed.unwrap_or(config.lsmc.seed), &out)?;
            for r in rows {
                println!(
                    "{}: optimal {:.2} bang-bang {:.2} gap {:.4}%",
                    r.backend, r.optimal, r.bangbang, r.gap_pct
                );
            }
        }
        Command::Grid => {
            let report = cmd_grid(&config, &out)?;
            println!("grid length {} (refinement {})", report.length, report.refinement);
            println!("manifest {}", report.manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
