use approx::assert_relative_eq;
use gas_storage::contract::{BidAsk, ContractTerms, RateFn, StorageContract, TerminalReward};
use gas_storage::grid::StorageGrid;
use gas_storage::lsmc::BasisSpec;
use gas_storage::market::{MeanFn, RegimeModel, SeasonalMean};
use gas_storage::valuation::{backward_induct, Backend, LsmcParams, NoObserver, PolicyMode, Problem};

const FEES: BidAsk = BidAsk {
    w1: 0.01,
    z1: 0.02,
    w2: 0.005,
    z2: 0.02,
};

fn contract(b_max: f64, x0: f64, rate: f64, horizon: usize, discount: f64) -> StorageContract {
    StorageContract::new(ContractTerms {
        b_min: 0.0,
        b_max,
        x0,
        rate_min: RateFn::Constant { value: -rate },
        rate_max: RateFn::Constant { value: rate },
        fees: FEES,
        terminal: TerminalReward::SellAll,
        horizon,
        discount,
        price_range: (0.5, 100.0),
    })
    .unwrap()
}

/// One day, one regime: the lattice moves to `y0 +- sigma` with the
/// mean-reverting up-probability, and the linear terminal reward makes the
/// best first move an extreme one.
fn one_stage_by_hand(mean: f64, y0: f64) -> f64 {
    let (alpha, sigma, beta) = (0.2, 0.1, 0.99);
    let (x0, rate) = (50.0, 20.0);
    let q = 0.5 + alpha * (mean - y0) / (2.0 * sigma);
    let bid = |y: f64| FEES.bid(y.exp());
    let expected_bid = q * bid(y0 + sigma) + (1.0 - q) * bid(y0 - sigma);
    let p0 = y0.exp();
    [
        beta * expected_bid * x0,
        -FEES.ask(p0) * rate + beta * expected_bid * (x0 + rate),
        FEES.bid(p0) * rate + beta * expected_bid * (x0 - rate),
    ]
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn one_stage_value_matches_closed_form() {
    for (mean, y0) in [(2.5, 2.0), (2.0, 2.5), (2.2, 2.2)] {
        let model = RegimeModel::new(vec![vec![1.0]], vec![MeanFn::Constant { level: mean }], 0.2, 0.1, 1.0).unwrap();
        let contract = contract(100.0, 50.0, 20.0, 1, 0.99);
        let grid = StorageGrid::equidistant(&contract, 11).unwrap();
        let problem = Problem {
            model: &model,
            contract: &contract,
            grid: &grid,
            initial_log_price: y0,
            initial_regime: 0,
        };
        let v = backward_induct(
            &problem,
            &Backend::Lattice { substeps: 1 },
            PolicyMode::Threshold,
            &mut NoObserver,
        )
        .unwrap();
        assert_relative_eq!(v.value, one_stage_by_hand(mean, y0), max_relative = 1e-12);
    }
}

/// Exhaustive search over every sequence of moves between three levels.
fn warehouse_by_hand(prices: &[f64], levels: &[f64; 3], x: usize, day: usize, beta: f64) -> f64 {
    if day == prices.len() - 1 {
        return FEES.bid(prices[day]) * levels[x];
    }
    let p = prices[day];
    let mut best = f64::NEG_INFINITY;
    for z in x.saturating_sub(1)..=(x + 1).min(2) {
        let a = levels[z] - levels[x];
        let cash = if a > 0.0 { -FEES.ask(p) * a } else { -FEES.bid(p) * a };
        best = best.max(cash + beta * warehouse_by_hand(prices, levels, z, day + 1, beta));
    }
    best
}

#[test]
fn deterministic_three_level_warehouse_matches_enumeration() {
    let horizon = 6;
    let beta = 0.995;
    let mean = SeasonalMean {
        a0: 2.0,
        a1: 0.0,
        a2: 0.4,
        a3: 0.0,
        sign_a1: 1.0,
        period: 4.0,
    };
    // Zero volatility and full reversion: the log-price on day n + 1 is the mean at day n.
    let model = RegimeModel::new(vec![vec![1.0]], vec![MeanFn::Seasonal(mean)], 1.0, 0.0, 1.0).unwrap();
    let y0 = 2.1;
    let mut log_prices = vec![y0];
    log_prices.extend((0..horizon).map(|n| mean.eval(n as f64)));
    let prices: Vec<f64> = log_prices.iter().map(|y| y.exp()).collect();
    let levels = [0.0, 50.0, 100.0];
    let by_hand = warehouse_by_hand(&prices, &levels, 1, 0, beta);
    assert!(by_hand > FEES.bid(prices[horizon]) * 50.0 * beta.powi(horizon as i32));

    let contract = contract(100.0, 50.0, 50.0, horizon, beta);
    let grid = StorageGrid::equidistant(&contract, 3).unwrap();
    let problem = Problem {
        model: &model,
        contract: &contract,
        grid: &grid,
        initial_log_price: y0,
        initial_regime: 0,
    };
    let backend = Backend::Lsmc(LsmcParams {
        paths: 8,
        basis: BasisSpec::default(),
        seed: 3,
        substeps: 1,
    });
    for mode in [PolicyMode::Threshold, PolicyMode::BangBang] {
        let v = backward_induct(&problem, &backend, mode, &mut NoObserver).unwrap();
        assert_relative_eq!(v.value, by_hand, max_relative = 1e-12);
    }
}
