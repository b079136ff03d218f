//! Regime-switching mean-reverting log-price model.
//!
//! The log-price follows `dX = alpha * (mu_R(t) - X) dt + sigma dB` where the
//! regime `R` is a finite Markov chain that only switches at whole days, and
//! the quoted price is `price_scale * exp(X)`. Time is measured in trading
//! days from contract start.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StorageError};

/// Seasonal log-price level `a0 + sign * a1 * t + a2 * cos(2 pi (t - a3) / period)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonalMean {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// `+1.0` or `-1.0`; selects the trend direction of the regime.
    pub sign_a1: f64,
    pub period: f64,
}

impl SeasonalMean {
    pub fn eval(&self, t: f64) -> f64 {
        self.a0 + self.sign_a1 * self.a1 * t + self.a2 * (2.0 * PI * (t - self.a3) / self.period).cos()
    }

    /// Regime 1 of the NBP-fitted parameter set (upward trend).
    pub fn nbp_upward() -> Self {
        SeasonalMean {
            a0: 2.69,
            a1: 0.0007,
            a2: -0.234,
            a3: 118.1,
            sign_a1: 1.0,
            period: 250.0,
        }
    }

    /// Regime 2 of the NBP-fitted parameter set (downward trend).
    pub fn nbp_downward() -> Self {
        SeasonalMean {
            sign_a1: -1.0,
            ..Self::nbp_upward()
        }
    }
}

/// Per-regime mean level of the log-price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanFn {
    Seasonal(SeasonalMean),
    Constant { level: f64 },
}

impl MeanFn {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            MeanFn::Seasonal(s) => s.eval(t),
            MeanFn::Constant { level } => *level,
        }
    }
}

/// Regime chain plus the mean-reverting diffusion it modulates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeModel {
    transition: Vec<Vec<f64>>,
    means: Vec<MeanFn>,
    alpha: f64,
    sigma: f64,
    price_scale: f64,
}

impl RegimeModel {
    /// Validates the transition matrix (rows stochastic within 1e-12) and the
    /// diffusion parameters. `alpha` and `sigma` may be zero for degenerate
    /// test models; the lattice refuses `sigma == 0`.
    pub fn new(
        transition: Vec<Vec<f64>>,
        means: Vec<MeanFn>,
        alpha: f64,
        sigma: f64,
        price_scale: f64,
    ) -> Result<Self> {
        let k = means.len();
        if k == 0 {
            return Err(StorageError::invalid("at least one regime is required"));
        }
        if transition.len() != k {
            return Err(StorageError::DimensionMismatch {
                context: "transition matrix rows",
                expected: k,
                actual: transition.len(),
            });
        }
        for (j, row) in transition.iter().enumerate() {
            if row.len() != k {
                return Err(StorageError::DimensionMismatch {
                    context: "transition matrix columns",
                    expected: k,
                    actual: row.len(),
                });
            }
            if row.iter().any(|q| !(0.0..=1.0).contains(q)) {
                return Err(StorageError::invalid(format!(
                    "transition row {j} has an entry outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(StorageError::invalid(format!(
                    "transition row {j} sums to {sum}, not 1"
                )));
            }
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(StorageError::invalid("alpha must be finite and >= 0"));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(StorageError::invalid("sigma must be finite and >= 0"));
        }
        if !(price_scale.is_finite() && price_scale > 0.0) {
            return Err(StorageError::invalid("price_scale must be finite and > 0"));
        }
        Ok(RegimeModel {
            transition,
            means,
            alpha,
            sigma,
            price_scale,
        })
    }

    /// Two-regime NBP model: alpha 0.073, sigma 0.072, seasonal means with
    /// opposite trends, `Q = [[0.9, 0.1], [0.5, 0.5]]`. Prices are quoted as
    /// `0.1 * exp(X)` (pence/therm fit converted to GBP/MMBtu).
    pub fn nbp_two_regime() -> Self {
        RegimeModel::new(
            vec![vec![0.9, 0.1], vec![0.5, 0.5]],
            vec![
                MeanFn::Seasonal(SeasonalMean::nbp_upward()),
                MeanFn::Seasonal(SeasonalMean::nbp_downward()),
            ],
            0.073,
            0.072,
            0.1,
        )
        .expect("built-in parameters are valid")
    }

    pub fn num_regimes(&self) -> usize {
        self.means.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn q(&self, from: usize, to: usize) -> f64 {
        self.transition[from][to]
    }

    pub fn means(&self) -> &[MeanFn] {
        &self.means
    }

    pub fn mean(&self, regime: usize, t: f64) -> f64 {
        self.means[regime].eval(t)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn price_scale(&self) -> f64 {
        self.price_scale
    }

    pub fn price(&self, log_price: f64) -> f64 {
        self.price_scale * log_price.exp()
    }

    pub fn log_price(&self, price: f64) -> f64 {
        (price / self.price_scale).ln()
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    fn check_regime(&self, r: usize) -> Result<()> {
        if r >= self.num_regimes() {
            return Err(StorageError::invalid(format!(
                "regime {r} out of range (model has {})",
                self.num_regimes()
            )));
        }
        Ok(())
    }
}

/// One simulated realization: regimes `R_0..R_N`, log-prices and prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    pub regimes: Vec<usize>,
    pub log_prices: Vec<f64>,
    pub prices: Vec<f64>,
}

impl PricePath {
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Independent, reproducible stream for path `path_id` under `seed`.
pub fn path_rng(seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    rng
}

pub fn simulate_regime_chain<R: Rng + ?Sized>(
    model: &RegimeModel,
    r0: usize,
    n_steps: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    model.check_regime(r0)?;
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut r = r0;
    out.push(r);
    for _ in 0..n_steps {
        let u: f64 = rng.random();
        let row = &model.transition[r];
        let mut acc = 0.0;
        let mut next = row.len() - 1;
        for (k, q) in row.iter().enumerate() {
            acc += q;
            if u < acc {
                next = k;
                break;
            }
        }
        // Never step into a zero-probability state through round-off.
        while row[next] == 0.0 && next > 0 {
            next -= 1;
        }
        r = next;
        out.push(r);
    }
    Ok(out)
}

fn simulate_one(
    model: &RegimeModel,
    x0: f64,
    r0: usize,
    n_steps: usize,
    substeps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PricePath> {
    let regimes = simulate_regime_chain(model, r0, n_steps, rng)?;
    let dt = 1.0 / substeps as f64;
    let vol = model.sigma * dt.sqrt();
    let mut log_prices = Vec::with_capacity(n_steps + 1);
    let mut x = x0;
    log_prices.push(x);
    for (n, &r) in regimes.iter().take(n_steps).enumerate() {
        for k in 0..substeps {
            let t = n as f64 + k as f64 * dt;
            let z: f64 = rng.sample(StandardNormal);
            x += model.alpha * (model.mean(r, t) - x) * dt + vol * z;
        }
        log_prices.push(x);
    }
    let prices = log_prices.iter().map(|&x| model.price(x)).collect();
    Ok(PricePath {
        regimes,
        log_prices,
        prices,
    })
}

/// Euler-Maruyama paths with `substeps` steps per day. Path `k` draws from
/// `path_rng(seed, k)`, so results do not depend on thread scheduling.
pub fn simulate_price_paths(
    model: &RegimeModel,
    x0: f64,
    r0: usize,
    n_steps: usize,
    n_paths: usize,
    substeps: usize,
    seed: u64,
) -> Result<Vec<PricePath>> {
    if substeps == 0 {
        return Err(StorageError::invalid("substeps must be >= 1"));
    }
    model.check_regime(r0)?;
    (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(seed, k as u64);
            simulate_one(model, x0, r0, n_steps, substeps, &mut rng)
        })
        .collect()
}

/// Writes `path_id,day,regime,price` rows.
pub fn write_paths_csv<W: Write>(out: W, paths: &[PricePath]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path_id", "day", "regime", "price"])?;
    for (id, path) in paths.iter().enumerate() {
        for (day, (&r, &p)) in path.regimes.iter().zip(&path.prices).enumerate() {
            w.write_record(&[id.to_string(), day.to_string(), r.to_string(), p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
