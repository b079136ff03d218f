//! The four pipeline commands behind the command-line tool. Each writes CSV
//! artifacts plus a `<command>_manifest.toml` that records the configuration, seeds and
//! SHA-256 hashes of everything written.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Setup};
use crate::error::{Result, StorageError};
use crate::lsmc::write_diagnostics_csv;
use crate::market::simulate_price_paths;
use crate::simulate::{realized_value, run_policy, write_tag_counts_csv, write_trajectory_csv, ThresholdPolicy};
use crate::valuation::{
    backward_induct, read_bounds_csv, write_bounds_csv, Backend, NoObserver, PolicyArtifact, PolicyMode, Valuation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Tree,
    Lsmc,
}

impl BackendKind {
    pub fn name(&self) -> &'static str {
        match self {
            BackendKind::Tree => "tree",
            BackendKind::Lsmc => "lsmc",
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    package_version: &'a str,
    backend: Option<&'a str>,
    seeds: Vec<u64>,
    artifacts: BTreeMap<String, String>,
    config: &'a RunConfig,
}

/// Tracks written files so the manifest can hash them.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(path)?))
    }

    fn finish(self, command: &str, backend: Option<&str>, seeds: Vec<u64>, config: &RunConfig) -> Result<PathBuf> {
        let mut artifacts = BTreeMap::new();
        for name in &self.files {
            let bytes = fs::read(self.dir.join(name))?;
            artifacts.insert(name.clone(), hex::encode(Sha256::digest(&bytes)));
        }
        let manifest = Manifest {
            command,
            package_version: env!("CARGO_PKG_VERSION"),
            backend,
            seeds,
            artifacts,
            config,
        };
        let text = toml::to_string(&manifest).map_err(|e| StorageError::invalid(e.to_string()))?;
        let path = self.dir.join(format!("{command}_manifest.toml"));
        fs::write(&path, text)?;
        Ok(path)
    }
}

fn backend_for(config: &RunConfig, kind: BackendKind, seed: u64) -> Result<Backend> {
    match kind {
        BackendKind::Tree => config.lattice_backend(),
        BackendKind::Lsmc => config.lsmc_backend(seed),
    }
}

fn value_once(setup: &Setup, backend: &Backend, mode: PolicyMode) -> Result<Valuation> {
    backward_induct(&setup.problem(), backend, mode, &mut NoObserver)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueRun {
    pub seed: Option<u64>,
    pub value: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueReport {
    pub backend: BackendKind,
    pub runs: Vec<ValueRun>,
    pub mean: f64,
    pub std_dev: f64,
    pub parameters_sha256: String,
    pub manifest: PathBuf,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Values the contract. The tree backend runs once; the LSMC backend runs
/// `seeds` times with consecutive seeds starting at `seed`. Policy bounds
/// are written for the first run.
pub fn cmd_value(config: &RunConfig, kind: BackendKind, seed: u64, seeds: usize, out: &Path) -> Result<ValueReport> {
    let setup = config.setup()?;
    let seeds = if kind == BackendKind::Tree { 1 } else { seeds.max(1) };
    let mut outputs = Outputs::new(out)?;
    let mut runs = Vec::with_capacity(seeds);
    for i in 0..seeds {
        let s = seed + i as u64;
        let backend = backend_for(config, kind, s)?;
        let start = Instant::now();
        let v = value_once(&setup, &backend, PolicyMode::Threshold)?;
        let seconds = start.elapsed().as_secs_f64();
        if i == 0 {
            write_bounds_csv(outputs.create("bounds.csv")?, &v.bounds)?;
            match &v.artifact {
                PolicyArtifact::Lsmc { fits } => write_diagnostics_csv(outputs.create("lsmc_diagnostics.csv")?, fits)?,
                PolicyArtifact::Lattice { lattice, .. } => lattice.write_csv(outputs.create("lattice_nodes.csv")?)?,
            }
        }
        runs.push(ValueRun {
            seed: (kind == BackendKind::Lsmc).then_some(s),
            value: v.value,
            seconds,
        });
    }
    let mut w = csv::Writer::from_writer(outputs.create("value.csv")?);
    w.write_record(["backend", "seed", "value", "seconds"])?;
    for r in &runs {
        w.write_record(&[
            kind.name().to_string(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            r.value.to_string(),
            r.seconds.to_string(),
        ])?;
    }
    w.flush()?;
    drop(w);
    let values: Vec<f64> = runs.iter().map(|r| r.value).collect();
    let (mean, std_dev) = mean_sd(&values);
    let parameters_sha256 = hex::encode(Sha256::digest(config.to_toml_string()?.as_bytes()));
    let seed_list = runs.iter().filter_map(|r| r.seed).collect();
    let manifest = outputs.finish("value", Some(kind.name()), seed_list, config)?;
    Ok(ValueReport {
        backend: kind,
        runs,
        mean,
        std_dev,
        parameters_sha256,
        manifest,
    })
}

/// Where `cmd_simulate` gets its policy from.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySource {
    /// `bounds.csv` written by `cmd_value`; threshold policy only.
    BoundsDir(PathBuf),
    /// Recompute the policy with the given backend and policy class.
    Recompute { backend: BackendKind, mode: PolicyMode },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub mean: f64,
    pub std_dev: f64,
    pub paths: usize,
    pub clamped_lookups: u64,
    pub tag_totals: [usize; 5],
    pub manifest: PathBuf,
}

/// Runs a policy along `paths` fresh price paths drawn with `seed`.
pub fn cmd_simulate(
    config: &RunConfig,
    source: &PolicySource,
    paths: usize,
    seed: u64,
    out: &Path,
) -> Result<SimulationReport> {
    let setup = config.setup()?;
    let horizon = setup.contract.horizon();
    let price_paths = simulate_price_paths(
        &setup.model,
        setup.initial_log_price,
        setup.initial_regime,
        horizon,
        paths,
        config.simulation.substeps_per_day,
        seed,
    )?;
    let mut outputs = Outputs::new(out)?;
    let valuation;
    let file_policy;
    let (policy, backend_name): (Box<dyn crate::simulate::Policy + '_>, &str) = match source {
        PolicySource::BoundsDir(dir) => {
            let path = dir.join("bounds.csv");
            if !path.is_file() {
                return Err(StorageError::MissingArtifact(path));
            }
            let bounds = read_bounds_csv(File::open(&path)?, &setup.model)?;
            if bounds.len() < horizon {
                return Err(StorageError::invalid(format!(
                    "{} covers {} stages, need {horizon}",
                    path.display(),
                    bounds.len()
                )));
            }
            file_policy = ThresholdPolicy::new(&bounds, &setup.model);
            (Box::new(file_policy), "bounds-file")
        }
        PolicySource::Recompute { backend, mode } => {
            let b = backend_for(config, *backend, config.lsmc.seed)?;
            valuation = value_once(&setup, &b, *mode)?;
            (valuation.policy(&setup.model, &setup.grid), backend.name())
        }
    };
    let trajectories = run_policy(policy.as_ref(), &setup.contract, &price_paths)?;
    let width = paths.saturating_sub(1).to_string().len().max(1);
    for t in &trajectories {
        let name = format!("trajectories/path_{:0width$}.csv", t.path_id, width = width);
        write_trajectory_csv(outputs.create(&name)?, t)?;
    }
    write_tag_counts_csv(outputs.create("tag_counts.csv")?, &trajectories)?;
    let (mean, std_dev) = if trajectories.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        realized_value(&trajectories)?
    };
    let mut tag_totals = [0usize; 5];
    for t in &trajectories {
        for (acc, c) in tag_totals.iter_mut().zip(t.tag_counts()) {
            *acc += c;
        }
    }
    let clamped_lookups = policy.clamped_lookups();
    let mut w = csv::Writer::from_writer(outputs.create("summary.csv")?);
    w.write_record(["paths", "mean", "std_dev", "clamped_lookups"])?;
    w.write_record(&[
        paths.to_string(),
        mean.to_string(),
        std_dev.to_string(),
        clamped_lookups.to_string(),
    ])?;
    w.flush()?;
    drop(w);
    let manifest = outputs.finish("simulate", Some(backend_name), vec![seed], config)?;
    Ok(SimulationReport {
        mean,
        std_dev,
        paths,
        clamped_lookups,
        tag_totals,
        manifest,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub backend: &'static str,
    pub seed: Option<u64>,
    pub optimal: f64,
    pub bangbang: f64,
    pub gap_pct: f64,
}

/// Optimal versus bang-bang values on each requested backend, with matched seeds for LSMC.
pub fn cmd_compare(config: &RunConfig, backends: &[BackendKind], seed: u64, out: &Path) -> Result<Vec<ComparisonRow>> {
    let setup = config.setup()?;
    let mut outputs = Outputs::new(out)?;
    let mut rows = Vec::new();
    for &kind in backends {
        let backend = backend_for(config, kind, seed)?;
        let optimal = value_once(&setup, &backend, PolicyMode::Threshold)?.value;
        let bangbang = value_once(&setup, &backend, PolicyMode::BangBang)?.value;
        rows.push(ComparisonRow {
            backend: kind.name(),
            seed: (kind == BackendKind::Lsmc).then_some(seed),
            optimal,
            bangbang,
            gap_pct: 100.0 * (optimal - bangbang) / optimal.abs().max(f64::MIN_POSITIVE),
        });
    }
    let mut w = csv::Writer::from_writer(outputs.create("compare.csv")?);
    w.write_record(["backend", "seed", "optimal", "bangbang", "gap_pct"])?;
    for r in &rows {
        w.write_record(&[
            r.backend.to_string(),
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            r.optimal.to_string(),
            r.bangbang.to_string(),
            r.gap_pct.to_string(),
        ])?;
    }
    w.flush()?;
    drop(w);
    outputs.finish("compare", None, vec![seed], config)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub length: usize,
    pub refinement: usize,
    pub manifest: PathBuf,
}

/// Writes the storage grid and a histogram of its gaps.
pub fn cmd_grid(config: &RunConfig, out: &Path) -> Result<GridReport> {
    let contract = config.build_contract()?;
    let grid = config.build_grid(&contract)?;
    let mut outputs = Outputs::new(out)?;
    grid.write_csv(outputs.create("grid.csv")?)?;
    grid.write_gap_histogram_csv(outputs.create("grid_histogram.csv")?, 50)?;
    let manifest = outputs.finish("grid", None, Vec::new(), config)?;
    Ok(GridReport {
        length: grid.len(),
        refinement: grid.refinement(),
        manifest,
    })
}
