//! Checks structured backward induction against exhaustive search on a
//! small contract.

use gas_storage::contract::{BidAsk, ContractTerms, RateFn, StorageContract, TerminalReward};
use gas_storage::grid::StorageGrid;
use gas_storage::market::RegimeModel;
use gas_storage::valuation::{
    backward_induct, brute_force_value, Backend, NoObserver, PolicyMode, Problem, DEFAULT_BRUTE_FORCE_LIMIT,
};

fn main() -> gas_storage::error::Result<()> {
    let model = RegimeModel::nbp_two_regime().with_sigma(0.3);
    let contract = StorageContract::new(ContractTerms {
        b_min: 0.0,
        b_max: 100.0,
        x0: 50.0,
        rate_min: RateFn::Sqrt { coef: -4.0 },
        rate_max: RateFn::Affine {
            slope: -0.2,
            intercept: 30.0,
        },
        fees: BidAsk {
            w1: 0.01,
            z1: 0.0,
            w2: 0.005,
            z2: 0.0,
        },
        terminal: TerminalReward::SellAll,
        horizon: 5,
        discount: 0.999,
        price_range: (0.05, 100.0),
    })?;
    let grid = StorageGrid::equidistant(&contract, 21)?;
    let problem = Problem {
        model: &model,
        contract: &contract,
        grid: &grid,
        initial_log_price: model.mean(0, 0.0),
        initial_regime: 0,
    };
    let structured = backward_induct(
        &problem,
        &Backend::Lattice { substeps: 1 },
        PolicyMode::Threshold,
        &mut NoObserver,
    )?;
    let brute = brute_force_value(&problem, 1, DEFAULT_BRUTE_FORCE_LIMIT)?;
    println!("structured {:.10}", structured.value);
    println!("brute      {:.10}", brute.value);
    println!(
        "relative difference {:.3e}",
        (structured.value - brute.value).abs() / brute.value.abs().max(1.0)
    );
    Ok(())
}
