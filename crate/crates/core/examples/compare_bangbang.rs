//! Optimal versus bang-bang value on the lattice, for the Stratton Ridge
//! contract and for a fast-storage variant where the two coincide.

use gas_storage::contract::{ContractTerms, RateFn, StorageContract, TerminalReward};
use gas_storage::grid::{build_grid, default_merge_tol, StorageGrid};
use gas_storage::market::RegimeModel;
use gas_storage::valuation::{backward_induct, Backend, NoObserver, PolicyMode, Problem};

fn gap(problem: &Problem, backend: &Backend) -> gas_storage::error::Result<(f64, f64)> {
    let opt = backward_induct(problem, backend, PolicyMode::Threshold, &mut NoObserver)?.value;
    let bb = backward_induct(problem, backend, PolicyMode::BangBang, &mut NoObserver)?.value;
    Ok((opt, bb))
}

fn main() -> gas_storage::error::Result<()> {
    let model = RegimeModel::nbp_two_regime();
    let backend = Backend::Lattice { substeps: 4 };
    let slow = StorageContract::stratton_ridge();
    let fast = StorageContract::new(ContractTerms {
        b_min: 500_000.0,
        b_max: 2_000_000.0,
        x0: 1_000_000.0,
        rate_min: RateFn::Affine {
            slope: -1.0,
            intercept: 500_000.0,
        },
        rate_max: RateFn::Affine {
            slope: -1.0,
            intercept: 2_000_000.0,
        },
        fees: *slow.fees(),
        terminal: TerminalReward::SellAll,
        horizon: 250,
        discount: 1.0,
        price_range: (0.05, 100.0),
    })?;
    for (name, contract) in [("stratton-ridge", &slow), ("fast-storage", &fast)] {
        let grid = if contract.terminal() == &TerminalReward::SellAll {
            StorageGrid::equidistant(contract, 101)?
        } else {
            build_grid(contract, 500, default_merge_tol(contract))?
        };
        let problem = Problem {
            model: &model,
            contract,
            grid: &grid,
            initial_log_price: model.mean(0, 0.0),
            initial_regime: 0,
        };
        let (opt, bb) = gap(&problem, &backend)?;
        println!(
            "{name}: optimal {opt:.2}, bang-bang {bb:.2}, gap {:.4}%",
            100.0 * (opt - bb) / opt
        );
    }
    Ok(())
}
