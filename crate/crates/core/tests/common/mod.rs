#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gas_storage::contract::{BidAsk, ContractTerms, RateFn, StorageContract, TerminalReward};
use gas_storage::grid::{build_grid, default_merge_tol, StorageGrid};
use gas_storage::market::{MeanFn, RegimeModel, SeasonalMean};
use gas_storage::valuation::Problem;

/// A self-contained valuation problem.
pub struct Instance {
    pub model: RegimeModel,
    pub contract: StorageContract,
    pub grid: StorageGrid,
    pub initial_log_price: f64,
    pub initial_regime: usize,
}

impl Instance {
    pub fn problem(&self) -> Problem<'_> {
        Problem {
            model: &self.model,
            contract: &self.contract,
            grid: &self.grid,
            initial_log_price: self.initial_log_price,
            initial_regime: self.initial_regime,
        }
    }

    /// Same instance and grid levels on another contract with the same capacity.
    pub fn with_contract(&self, contract: StorageContract) -> Instance {
        Instance {
            model: self.model.clone(),
            grid: StorageGrid::from_sorted(self.grid.levels().to_vec(), contract.x0()).expect("levels still valid"),
            contract,
            initial_log_price: self.initial_log_price,
            initial_regime: self.initial_regime,
        }
    }
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn stratton_ridge() -> Instance {
    let model = RegimeModel::nbp_two_regime();
    let contract = StorageContract::stratton_ridge();
    let grid = build_grid(&contract, 500, default_merge_tol(&contract)).expect("fixture grid");
    Instance {
        initial_log_price: model.mean(0, 0.0),
        model,
        contract,
        grid,
        initial_regime: 0,
    }
}

/// Contract terms drawn at random; rates are affine, square-root or constant.
pub fn random_terms(rng: &mut ChaCha8Rng, horizon: usize) -> ContractTerms {
    let b_min: f64 = rng.random_range(0.0..50.0);
    let b_max = b_min + rng.random_range(20.0..200.0);
    let x0 = rng.random_range(b_min..=b_max);
    let span = b_max - b_min;
    let rate_min = match rng.random_range(0..3) {
        0 => RateFn::Sqrt {
            coef: -rng.random_range(0.05..0.6) * span / b_max.sqrt(),
        },
        1 => RateFn::Affine {
            slope: -rng.random_range(0.0..0.3),
            intercept: -rng.random_range(0.05..0.5) * span,
        },
        _ => RateFn::Constant {
            value: -rng.random_range(0.05..0.6) * span,
        },
    };
    let rate_max = match rng.random_range(0..2) {
        0 => {
            let slope = -rng.random_range(0.0..0.3);
            RateFn::Affine {
                slope,
                intercept: -slope * b_max + rng.random_range(0.05..0.6) * span,
            }
        }
        _ => RateFn::Constant {
            value: rng.random_range(0.05..0.6) * span,
        },
    };
    let fees = BidAsk {
        w1: rng.random_range(0.0..0.05),
        z1: rng.random_range(0.0..0.1),
        w2: rng.random_range(0.0..0.05),
        z2: rng.random_range(0.0..0.1),
    };
    let target = rng.random_range(b_min..=b_max);
    let terminal = match rng.random_range(0..3) {
        0 => TerminalReward::SellAll,
        1 => TerminalReward::PenaltyToTarget { target },
        _ => TerminalReward::ZeroAboveTarget { target },
    };
    ContractTerms {
        b_min,
        b_max,
        x0,
        rate_min,
        rate_max,
        fees,
        terminal,
        horizon,
        discount: rng.random_range(0.95..=1.0),
        price_range: (0.5, 200.0),
    }
}

pub fn random_model(rng: &mut ChaCha8Rng, regimes: usize) -> RegimeModel {
    let transition = if regimes == 1 {
        vec![vec![1.0]]
    } else {
        let (a, b) = (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95));
        vec![vec![a, 1.0 - a], vec![b, 1.0 - b]]
    };
    let means = (0..regimes)
        .map(|_| {
            if rng.random_bool(0.5) {
                MeanFn::Constant {
                    level: rng.random_range(1.0..3.0),
                }
            } else {
                MeanFn::Seasonal(SeasonalMean {
                    a0: rng.random_range(1.0..3.0),
                    a1: rng.random_range(0.0..0.05),
                    a2: rng.random_range(-0.5..0.5),
                    a3: rng.random_range(0.0..10.0),
                    sign_a1: if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                    period: rng.random_range(3.0..20.0),
                })
            }
        })
        .collect();
    RegimeModel::new(
        transition,
        means,
        rng.random_range(0.0..0.5),
        rng.random_range(0.05..0.4),
        1.0,
    )
    .expect("random model is valid")
}

/// Grid of at most `max_levels` levels; equidistant or with random interior levels.
pub fn random_grid(rng: &mut ChaCha8Rng, contract: &StorageContract, max_levels: usize) -> StorageGrid {
    let n = rng.random_range(3..=max_levels);
    if rng.random_bool(0.5) {
        return StorageGrid::equidistant(contract, n).expect("equidistant grid");
    }
    let (lo, hi) = (contract.b_min(), contract.b_max());
    let mut levels: Vec<f64> = (0..n - 2).map(|_| rng.random_range(lo..hi)).collect();
    levels.push(lo);
    levels.push(hi);
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-6 * (hi - lo));
    StorageGrid::from_sorted(levels, contract.x0()).expect("random grid")
}

/// Small random instance: horizon up to 5 days, at most 20 levels, one or two regimes.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = rng.random_range(1..=5);
    let regimes = rng.random_range(1..=2);
    let model = random_model(&mut rng, regimes);
    let contract = StorageContract::new(random_terms(&mut rng, horizon)).expect("random contract is valid");
    let grid = random_grid(&mut rng, &contract, 20);
    let initial_regime = rng.random_range(0..regimes);
    Instance {
        initial_log_price: model.mean(initial_regime, 0.0) + rng.random_range(-0.3..0.3),
        model,
        contract,
        grid,
        initial_regime,
    }
}
