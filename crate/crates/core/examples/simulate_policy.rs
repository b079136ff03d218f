//! Values the contract on the lattice, then runs the optimal and bang-bang
//! policies forward on fresh paths and compares realized cash flows.
//!
//! Usage: `cargo run --release --example simulate_policy -- [paths]`

use gas_storage::config::RunConfig;
use gas_storage::market::simulate_price_paths;
use gas_storage::simulate::{realized_value, run_policy};
use gas_storage::valuation::{backward_induct, DecisionTag, NoObserver, PolicyMode};

fn main() -> gas_storage::error::Result<()> {
    let n_paths = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2000);
    let config = RunConfig::default();
    let setup = config.setup()?;
    let backend = config.lattice_backend()?;
    let paths = simulate_price_paths(
        &setup.model,
        setup.initial_log_price,
        setup.initial_regime,
        setup.contract.horizon(),
        n_paths,
        config.simulation.substeps_per_day,
        config.simulation.seed,
    )?;
    for mode in [PolicyMode::Threshold, PolicyMode::BangBang] {
        let v = backward_induct(&setup.problem(), &backend, mode, &mut NoObserver)?;
        let policy = v.policy(&setup.model, &setup.grid);
        let runs = run_policy(policy.as_ref(), &setup.contract, &paths)?;
        let (mean, sd) = realized_value(&runs)?;
        let mut tags = [0usize; 5];
        for t in &runs {
            for (acc, c) in tags.iter_mut().zip(t.tag_counts()) {
                *acc += c;
            }
        }
        println!(
            "{mode:?}: backward {:.0}, realized {mean:.0} +/- {:.0}",
            v.value,
            sd / (n_paths as f64).sqrt()
        );
        for (tag, count) in DecisionTag::ALL.iter().zip(tags) {
            println!("  {:<18} {count}", tag.as_str());
        }
    }
    Ok(())
}
