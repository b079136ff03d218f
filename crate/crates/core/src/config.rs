//! TOML run configuration. Key names carry their units; the defaults are the
//! Stratton Ridge contract under the two-regime NBP price model.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contract::{BidAsk, ContractTerms, RateFn, StageRates, StorageContract, TerminalReward};
use crate::error::{Result, StorageError};
use crate::grid::{build_grid, default_merge_tol, StorageGrid};
use crate::lsmc::BasisSpec;
use crate::market::{MeanFn, RegimeModel, SeasonalMean};
use crate::valuation::{Backend, LsmcParams, Problem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub alpha_per_day: f64,
    pub sigma_per_sqrt_day: f64,
    pub price_scale_gbp_per_mmbtu: f64,
    pub transition: Vec<Vec<f64>>,
    pub initial_regime: usize,
    /// Defaults to the initial regime's mean level at day 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_log_price: Option<f64>,
    pub means_log_price: Vec<MeanFn>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeesConfig {
    pub ask_loss_fraction: f64,
    pub ask_spread_gbp_per_mmbtu: f64,
    pub bid_loss_fraction: f64,
    pub bid_spread_gbp_per_mmbtu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractConfig {
    pub b_min_mmbtu: f64,
    pub b_max_mmbtu: f64,
    pub x0_mmbtu: f64,
    pub horizon_days: usize,
    pub discount_per_day: f64,
    /// Prices on which `k(p) >= e(p) >= 0` is checked.
    pub fee_check_range_gbp_per_mmbtu: [f64; 2],
    pub rate_min_mmbtu_per_day: RateFn,
    pub rate_max_mmbtu_per_day: RateFn,
    pub fees: FeesConfig,
    /// Target volumes are in MMBtu.
    pub terminal: TerminalReward,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stage_rates: Vec<StageRates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub min_length: usize,
    /// Defaults to one millionth of the working range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_tol_mmbtu: Option<f64>,
    pub equidistant: bool,
    pub equidistant_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub substeps_per_day: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsmcConfig {
    pub paths: usize,
    pub basis_degree: usize,
    pub standardize_prices: bool,
    pub seed: u64,
    pub substeps_per_day: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub paths: usize,
    pub seed: u64,
    pub substeps_per_day: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub out_dir: PathBuf,
    /// 0 uses every available core.
    pub workers: usize,
    /// Number of consecutive seeds for repetition studies.
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub contract: ContractConfig,
    pub grid: GridConfig,
    pub lattice: LatticeConfig,
    pub lsmc: LsmcConfig,
    pub simulation: SimulationConfig,
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig {
                alpha_per_day: 0.073,
                sigma_per_sqrt_day: 0.072,
                price_scale_gbp_per_mmbtu: 0.1,
                transition: vec![vec![0.9, 0.1], vec![0.5, 0.5]],
                initial_regime: 0,
                initial_log_price: None,
                means_log_price: vec![
                    MeanFn::Seasonal(SeasonalMean::nbp_upward()),
                    MeanFn::Seasonal(SeasonalMean::nbp_downward()),
                ],
            },
            contract: ContractConfig {
                b_min_mmbtu: 500_000.0,
                b_max_mmbtu: 2_000_000.0,
                x0_mmbtu: 1_000_000.0,
                horizon_days: 250,
                discount_per_day: 1.0,
                fee_check_range_gbp_per_mmbtu: [0.05, 100.0],
                rate_min_mmbtu_per_day: RateFn::Sqrt { coef: -70.71 },
                rate_max_mmbtu_per_day: RateFn::Affine {
                    slope: -0.032,
                    intercept: 68_170.0,
                },
                fees: FeesConfig {
                    ask_loss_fraction: 0.01,
                    ask_spread_gbp_per_mmbtu: 0.02,
                    bid_loss_fraction: 0.005,
                    bid_spread_gbp_per_mmbtu: 0.02,
                },
                terminal: TerminalReward::PenaltyToTarget { target: 1_000_000.0 },
                stage_rates: Vec::new(),
            },
            grid: GridConfig {
                min_length: 500,
                merge_tol_mmbtu: None,
                equidistant: false,
                equidistant_points: 530,
            },
            lattice: LatticeConfig { substeps_per_day: 4 },
            lsmc: LsmcConfig {
                paths: 2000,
                basis_degree: 3,
                standardize_prices: true,
                seed: 1,
                substeps_per_day: 16,
            },
            simulation: SimulationConfig {
                paths: 10_000,
                seed: 1_000_001,
                substeps_per_day: 16,
            },
            run: RunSection {
                out_dir: PathBuf::from("out"),
                workers: 0,
                seeds: 1,
            },
        }
    }
}

fn at(path: &str) -> impl Fn(StorageError) -> StorageError + '_ {
    move |e| match e {
        StorageError::Config { .. } => e,
        other => StorageError::config(path, other.to_string()),
    }
}

/// Model, contract and grid built from one configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub model: RegimeModel,
    pub contract: StorageContract,
    pub grid: StorageGrid,
    pub initial_log_price: f64,
    pub initial_regime: usize,
}

impl Setup {
    pub fn problem(&self) -> Problem<'_> {
        Problem {
            model: &self.model,
            contract: &self.contract,
            grid: &self.grid,
            initial_log_price: self.initial_log_price,
            initial_regime: self.initial_regime,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| StorageError::config("<document>", e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            StorageError::config(path, e.into_inner().message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StorageError::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| StorageError::config("<document>", e.to_string()))
    }

    pub fn build_model(&self) -> Result<RegimeModel> {
        let m = &self.model;
        RegimeModel::new(
            m.transition.clone(),
            m.means_log_price.clone(),
            m.alpha_per_day,
            m.sigma_per_sqrt_day,
            m.price_scale_gbp_per_mmbtu,
        )
        .map_err(at("model"))
    }

    pub fn build_contract(&self) -> Result<StorageContract> {
        let c = &self.contract;
        let f = c.fees;
        let mut contract = StorageContract::new(ContractTerms {
            b_min: c.b_min_mmbtu,
            b_max: c.b_max_mmbtu,
            x0: c.x0_mmbtu,
            rate_min: c.rate_min_mmbtu_per_day,
            rate_max: c.rate_max_mmbtu_per_day,
            fees: BidAsk {
                w1: f.ask_loss_fraction,
                z1: f.ask_spread_gbp_per_mmbtu,
                w2: f.bid_loss_fraction,
                z2: f.bid_spread_gbp_per_mmbtu,
            },
            terminal: c.terminal,
            horizon: c.horizon_days,
            discount: c.discount_per_day,
            price_range: (c.fee_check_range_gbp_per_mmbtu[0], c.fee_check_range_gbp_per_mmbtu[1]),
        })
        .map_err(at("contract"))?;
        for over in &c.stage_rates {
            contract = contract.with_stage_rates(*over).map_err(at("contract.stage_rates"))?;
        }
        Ok(contract)
    }

    pub fn build_grid(&self, contract: &StorageContract) -> Result<StorageGrid> {
        let g = &self.grid;
        if g.equidistant {
            StorageGrid::equidistant(contract, g.equidistant_points).map_err(at("grid.equidistant_points"))
        } else {
            let tol = g.merge_tol_mmbtu.unwrap_or_else(|| default_merge_tol(contract));
            build_grid(contract, g.min_length, tol).map_err(at("grid"))
        }
    }

    pub fn setup(&self) -> Result<Setup> {
        let model = self.build_model()?;
        let contract = self.build_contract()?;
        let grid = self.build_grid(&contract)?;
        let r0 = self.model.initial_regime;
        if r0 >= model.num_regimes() {
            return Err(StorageError::config(
                "model.initial_regime",
                format!("regime {r0} out of range"),
            ));
        }
        let initial_log_price = self.model.initial_log_price.unwrap_or_else(|| model.mean(r0, 0.0));
        Ok(Setup {
            model,
            contract,
            grid,
            initial_log_price,
            initial_regime: r0,
        })
    }

    pub fn lattice_backend(&self) -> Result<Backend> {
        if self.lattice.substeps_per_day == 0 {
            return Err(StorageError::config("lattice.substeps_per_day", "must be >= 1"));
        }
        Ok(Backend::Lattice {
            substeps: self.lattice.substeps_per_day,
        })
    }

    pub fn lsmc_backend(&self, seed: u64) -> Result<Backend> {
        let l = &self.lsmc;
        if l.paths == 0 {
            return Err(StorageError::config("lsmc.paths", "must be >= 1"));
        }
        if l.substeps_per_day == 0 {
            return Err(StorageError::config("lsmc.substeps_per_day", "must be >= 1"));
        }
        Ok(Backend::Lsmc(LsmcParams {
            paths: l.paths,
            basis: BasisSpec {
                degree: l.basis_degree,
                standardize: l.standardize_prices,
            },
            seed,
            substeps: l.substeps_per_day,
        }))
    }
}
