//! Least-squares Monte Carlo valuation repeated over several seeds.
//!
//! Usage: `cargo run --release --example lsmc_value -- [paths] [seeds]`

use std::time::Instant;

use gas_storage::contract::StorageContract;
use gas_storage::grid::{build_grid, default_merge_tol};
use gas_storage::lsmc::BasisSpec;
use gas_storage::market::RegimeModel;
use gas_storage::valuation::{backward_induct, Backend, LsmcParams, NoObserver, PolicyMode, Problem};

fn main() -> gas_storage::error::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let paths = args.first().copied().unwrap_or(1000);
    let seeds = args.get(1).copied().unwrap_or(5);
    let model = RegimeModel::nbp_two_regime();
    let contract = StorageContract::stratton_ridge();
    let grid = build_grid(&contract, 500, default_merge_tol(&contract))?;
    let problem = Problem {
        model: &model,
        contract: &contract,
        grid: &grid,
        initial_log_price: model.mean(0, 0.0),
        initial_regime: 0,
    };
    println!("seed,value,bangbang,gap_pct,seconds");
    let mut values = Vec::new();
    for seed in 1..=seeds as u64 {
        let start = Instant::now();
        let backend = Backend::Lsmc(LsmcParams {
            paths,
            basis: BasisSpec::default(),
            seed,
            substeps: 16,
        });
        let opt = backward_induct(&problem, &backend, PolicyMode::Threshold, &mut NoObserver)?;
        let bb = backward_induct(&problem, &backend, PolicyMode::BangBang, &mut NoObserver)?;
        println!(
            "{seed},{:.0},{:.0},{:.3},{:.1}",
            opt.value,
            bb.value,
            100.0 * (opt.value - bb.value) / opt.value,
            start.elapsed().as_secs_f64()
        );
        values.push(opt.value);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    println!("mean {mean:.0}, sd {sd:.0} over {seeds} seeds with M = {paths}");
    Ok(())
}
