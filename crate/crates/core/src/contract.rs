//! Physical and commercial terms of a storage contract.
//!
//! Volumes are in MMBtu, prices in GBP/MMBtu, rates in MMBtu/day.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StorageError};

/// Number of equally spaced probes used for the shape checks.
pub const PROBE_COUNT: usize = 101;

/// Volume-dependent injection or withdrawal rate limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateFn {
    /// `slope * x + intercept`
    Affine {
        slope: f64,
        intercept: f64,
    },
    /// `coef * sqrt(x)`
    Sqrt {
        coef: f64,
    },
    Constant {
        value: f64,
    },
}

impl RateFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            RateFn::Affine { slope, intercept } => slope * x + intercept,
            RateFn::Sqrt { coef } => coef * x.max(0.0).sqrt(),
            RateFn::Constant { value } => value,
        }
    }

    /// Same form with every output multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> RateFn {
        match *self {
            RateFn::Affine { slope, intercept } => RateFn::Affine {
                slope: slope * factor,
                intercept: intercept * factor,
            },
            RateFn::Sqrt { coef } => RateFn::Sqrt { coef: coef * factor },
            RateFn::Constant { value } => RateFn::Constant { value: value * factor },
        }
    }
}

/// Ask transform `k(p) = (1 + w1) p + z1` and bid transform `e(p) = (1 - w2) p - z2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidAsk {
    pub w1: f64,
    pub z1: f64,
    pub w2: f64,
    pub z2: f64,
}

impl BidAsk {
    pub fn ask(&self, p: f64) -> f64 {
        (1.0 + self.w1) * p + self.z1
    }

    pub fn bid(&self, p: f64) -> f64 {
        (1.0 - self.w2) * p - self.z2
    }

    pub fn frictionless() -> Self {
        BidAsk {
            w1: 0.0,
            z1: 0.0,
            w2: 0.0,
            z2: 0.0,
        }
    }
}

/// Reward collected at the horizon as a function of the final volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalReward {
    /// Sell everything above `b_min` at the bid.
    SellAll,
    /// Sell the surplus above `target` at the bid, buy the shortfall at the ask.
    PenaltyToTarget { target: f64 },
    /// As `PenaltyToTarget` but surplus gas is worth nothing.
    ZeroAboveTarget { target: f64 },
}

/// Per-stage replacement of the rate limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageRates {
    pub stage: usize,
    pub rate_min: RateFn,
    pub rate_max: RateFn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageContract {
    b_min: f64,
    b_max: f64,
    x0: f64,
    rate_min: RateFn,
    rate_max: RateFn,
    fees: BidAsk,
    terminal: TerminalReward,
    horizon: usize,
    discount: f64,
    stage_overrides: Vec<StageRates>,
}

/// Builder-style parameter bundle for [`StorageContract::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct ContractTerms {
    pub b_min: f64,
    pub b_max: f64,
    pub x0: f64,
    pub rate_min: RateFn,
    pub rate_max: RateFn,
    pub fees: BidAsk,
    pub terminal: TerminalReward,
    pub horizon: usize,
    pub discount: f64,
    /// Price interval on which `k(p) >= e(p) >= 0` must hold.
    pub price_range: (f64, f64),
}

fn probes(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (0..PROBE_COUNT).map(move |i| (lo + (hi - lo) * i as f64 / (PROBE_COUNT - 1) as f64).min(hi))
}

/// Midpoint test on consecutive probe triples; `sign = 1` for concave, `-1` for convex.
fn midpoint_ok(f: impl Fn(f64) -> f64, lo: f64, hi: f64, sign: f64) -> bool {
    let xs: Vec<f64> = probes(lo, hi).collect();
    xs.windows(3).all(|w| {
        let mid = f(w[1]);
        let chord = 0.5 * (f(w[0]) + f(w[2]));
        let scale = mid.abs().max(chord.abs()).max(1.0);
        sign * (mid - chord) >= -1e-9 * scale
    })
}

impl StorageContract {
    pub fn new(terms: ContractTerms) -> Result<Self> {
        let ContractTerms {
            b_min,
            b_max,
            x0,
            rate_min,
            rate_max,
            fees,
            terminal,
            horizon,
            discount,
            price_range,
        } = terms;
        if !(b_min.is_finite() && b_max.is_finite() && b_min < b_max) {
            return Err(StorageError::invalid("capacity bounds must satisfy b_min < b_max"));
        }
        if !(b_min..=b_max).contains(&x0) {
            return Err(StorageError::invalid("initial volume outside capacity"));
        }
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(StorageError::invalid("discount factor must lie in (0, 1]"));
        }
        let (p_lo, p_hi) = price_range;
        if !(p_lo > 0.0 && p_lo <= p_hi) {
            return Err(StorageError::invalid("price probe range must be positive and ordered"));
        }
        for p in probes(p_lo, p_hi) {
            let (k, e) = (fees.ask(p), fees.bid(p));
            if !(k >= e && e >= 0.0) {
                return Err(StorageError::invalid(format!(
                    "need k(p) >= e(p) >= 0, violated at p = {p} (k = {k}, e = {e})"
                )));
            }
        }
        let contract = StorageContract {
            b_min,
            b_max,
            x0,
            rate_min,
            rate_max,
            fees,
            terminal,
            horizon,
            discount,
            stage_overrides: Vec::new(),
        };
        contract.check_rates(&rate_min, &rate_max)?;
        for p in [p_lo, (p_lo * p_hi).sqrt(), p_hi] {
            if !midpoint_ok(|x| contract.terminal_reward(x, p), b_min, b_max, 1.0) {
                return Err(StorageError::invalid(format!(
                    "terminal reward is not concave in volume at p = {p}"
                )));
            }
        }
        Ok(contract)
    }

    fn check_rates(&self, rate_min: &RateFn, rate_max: &RateFn) -> Result<()> {
        for x in probes(self.b_min, self.b_max) {
            if rate_min.eval(x) > 0.0 || rate_max.eval(x) < 0.0 {
                return Err(StorageError::invalid(format!(
                    "need rate_min <= 0 <= rate_max, violated at x = {x}"
                )));
            }
        }
        if !midpoint_ok(|x| rate_min.eval(x), self.b_min, self.b_max, -1.0) {
            return Err(StorageError::invalid("rate_min must be convex"));
        }
        if !midpoint_ok(|x| rate_max.eval(x), self.b_min, self.b_max, 1.0) {
            return Err(StorageError::invalid("rate_max must be concave"));
        }
        Ok(())
    }

    /// Replaces the rate limits at one stage. Values and shapes are checked
    /// exactly like the base rates.
    pub fn with_stage_rates(mut self, over: StageRates) -> Result<Self> {
        if over.stage >= self.horizon {
            return Err(StorageError::invalid("override stage beyond horizon"));
        }
        self.check_rates(&over.rate_min, &over.rate_max)?;
        self.stage_overrides.retain(|o| o.stage != over.stage);
        self.stage_overrides.push(over);
        Ok(self)
    }

    /// The salt-cavern facility: 0.5-2.0 million MMBtu, start at 1.0 million,
    /// withdrawal `-70.71 sqrt(x)`, injection `-0.032 x + 68170`, 250 days,
    /// 1% / 0.5% proportional and 0.02 fixed fees, penalty to the start level.
    pub fn stratton_ridge() -> Self {
        StorageContract::new(ContractTerms {
            b_min: 500_000.0,
            b_max: 2_000_000.0,
            x0: 1_000_000.0,
            rate_min: RateFn::Sqrt { coef: -70.71 },
            rate_max: RateFn::Affine {
                slope: -0.032,
                intercept: 68_170.0,
            },
            fees: BidAsk {
                w1: 0.01,
                z1: 0.02,
                w2: 0.005,
                z2: 0.02,
            },
            terminal: TerminalReward::PenaltyToTarget { target: 1_000_000.0 },
            horizon: 250,
            discount: 1.0,
            price_range: (0.05, 100.0),
        })
        .expect("built-in contract is valid")
    }

    pub fn b_min(&self) -> f64 {
        self.b_min
    }

    pub fn b_max(&self) -> f64 {
        self.b_max
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn fees(&self) -> &BidAsk {
        &self.fees
    }

    pub fn terminal(&self) -> &TerminalReward {
        &self.terminal
    }

    pub fn rate_min(&self) -> &RateFn {
        &self.rate_min
    }

    pub fn rate_max(&self) -> &RateFn {
        &self.rate_max
    }

    pub fn stage_overrides(&self) -> &[StageRates] {
        &self.stage_overrides
    }

    /// Rate limits in force at `stage`.
    pub fn rates_at(&self, stage: usize) -> (&RateFn, &RateFn) {
        match self.stage_overrides.iter().find(|o| o.stage == stage) {
            Some(o) => (&o.rate_min, &o.rate_max),
            None => (&self.rate_min, &self.rate_max),
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self.stage_overrides.retain(|o| o.stage < horizon);
        self
    }

    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(StorageError::invalid("discount factor must lie in (0, 1]"));
        }
        self.discount = discount;
        Ok(self)
    }

    pub fn ask(&self, p: f64) -> f64 {
        self.fees.ask(p)
    }

    pub fn bid(&self, p: f64) -> f64 {
        self.fees.bid(p)
    }

    fn slack(&self) -> f64 {
        1e-9 * (self.b_max - self.b_min)
    }

    pub(crate) fn check_volume(&self, x: f64) -> Result<()> {
        if !(x >= self.b_min - self.slack() && x <= self.b_max + self.slack()) {
            return Err(StorageError::invalid(format!(
                "volume {x} outside capacity [{}, {}]",
                self.b_min, self.b_max
            )));
        }
        Ok(())
    }

    /// Admissible volume changes `[a_lo, a_hi]` at volume `x` under the base rates.
    pub fn admissible_interval(&self, x: f64) -> Result<(f64, f64)> {
        self.admissible_interval_at(0, x)
    }

    pub fn admissible_interval_at(&self, stage: usize, x: f64) -> Result<(f64, f64)> {
        self.check_volume(x)?;
        let (rmin, rmax) = self.rates_at(stage);
        Ok(self.interval_unchecked(rmin, rmax, x))
    }

    pub(crate) fn interval_unchecked(&self, rmin: &RateFn, rmax: &RateFn, x: f64) -> (f64, f64) {
        let lo = (self.b_min - x).max(rmin.eval(x)).min(0.0);
        let hi = (self.b_max - x).min(rmax.eval(x)).max(0.0);
        (lo, hi)
    }

    /// One-day cash flow of changing the volume by `a` at price `p`.
    pub fn stage_reward(&self, p: f64, a: f64) -> f64 {
        if a > 0.0 {
            -self.ask(p) * a
        } else if a < 0.0 {
            -self.bid(p) * a
        } else {
            0.0
        }
    }

    pub fn terminal_reward(&self, x: f64, p: f64) -> f64 {
        match self.terminal {
            TerminalReward::SellAll => self.bid(p) * (x - self.b_min),
            TerminalReward::PenaltyToTarget { target } => {
                if x >= target {
                    self.bid(p) * (x - target)
                } else {
                    self.ask(p) * (x - target)
                }
            }
            TerminalReward::ZeroAboveTarget { target } => {
                if x >= target {
                    0.0
                } else {
                    self.ask(p) * (x - target)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sr() -> StorageContract {
        StorageContract::stratton_ridge()
    }

    #[test]
    fn full_storage_cannot_inject() {
        let (lo, hi) = sr().admissible_interval(2_000_000.0).unwrap();
        assert_eq!(hi, 0.0);
        assert!(lo < 0.0);
    }

    #[test]
    fn injection_limit_at_half_million() {
        let (_, hi) = sr().admissible_interval(500_000.0).unwrap();
        assert_abs_diff_eq!(hi, 52_170.0, epsilon = 1e-9);
    }

    #[test]
    fn withdrawal_limit_at_two_million() {
        let (lo, _) = sr().admissible_interval(2_000_000.0).unwrap();
        assert_abs_diff_eq!(lo, -70.71 * 2e6f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(lo, -99_999.04, epsilon = 0.01);
    }

    #[test]
    fn volume_outside_capacity_is_an_error() {
        assert!(sr().admissible_interval(499_000.0).is_err());
        assert!(sr().admissible_interval(2_000_001.0).is_err());
    }

    #[test]
    fn interval_contains_zero_everywhere() {
        let c = sr();
        for x in probes(c.b_min(), c.b_max()) {
            let (lo, hi) = c.admissible_interval(x).unwrap();
            assert!(lo <= 0.0 && 0.0 <= hi);
            assert!(x + lo >= c.b_min() - 1e-6 && x + hi <= c.b_max() + 1e-6);
        }
    }

    #[test]
    fn stage_reward_examples() {
        let c = sr();
        assert_eq!(c.stage_reward(1.855, 0.0), 0.0);
        assert_abs_diff_eq!(c.stage_reward(1.855, 1000.0), -1893.55, epsilon = 1e-9);
        assert_abs_diff_eq!(c.stage_reward(1.855, -1000.0), 1825.725, epsilon = 1e-9);
    }

    #[test]
    fn stage_reward_is_concave_in_action() {
        let c = sr();
        for p in [0.1, 1.855, 7.0] {
            assert!(midpoint_ok(|a| c.stage_reward(p, a), -1e5, 1e5, 1.0));
        }
    }

    #[test]
    fn terminal_reward_examples() {
        let c = sr();
        assert_eq!(c.terminal_reward(1_000_000.0, 1.855), 0.0);
        // e(p) = 1 at p = 1.02 / 0.995
        assert_abs_diff_eq!(c.terminal_reward(1_000_001.0, 1.02 / 0.995), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.terminal_reward(999_999.0, 1.855), -1.89355, epsilon = 1e-9);
    }

    #[test]
    fn all_terminal_kinds_are_concave() {
        for terminal in [
            TerminalReward::SellAll,
            TerminalReward::PenaltyToTarget { target: 1.2e6 },
            TerminalReward::ZeroAboveTarget { target: 1.2e6 },
        ] {
            let c = StorageContract::new(ContractTerms { terminal, ..sr_terms() }).unwrap();
            for p in [0.1, 2.0, 50.0] {
                assert!(midpoint_ok(|x| c.terminal_reward(x, p), c.b_min(), c.b_max(), 1.0));
            }
        }
    }

    fn sr_terms() -> ContractTerms {
        let c = sr();
        ContractTerms {
            b_min: c.b_min,
            b_max: c.b_max,
            x0: c.x0,
            rate_min: c.rate_min,
            rate_max: c.rate_max,
            fees: c.fees,
            terminal: c.terminal,
            horizon: c.horizon,
            discount: c.discount,
            price_range: (0.05, 100.0),
        }
    }

    #[test]
    fn rejects_bid_above_ask() {
        let bad = ContractTerms {
            fees: BidAsk {
                w1: -0.1,
                z1: 0.0,
                w2: 0.0,
                z2: 0.0,
            },
            ..sr_terms()
        };
        assert!(StorageContract::new(bad).is_err());
    }

    #[test]
    fn rejects_wrong_rate_shapes() {
        let concave_withdrawal = ContractTerms {
            rate_min: RateFn::Sqrt { coef: 70.71 },
            ..sr_terms()
        };
        assert!(StorageContract::new(concave_withdrawal).is_err());
        let convex_injection = ContractTerms {
            rate_max: RateFn::Sqrt { coef: -1.0 },
            ..sr_terms()
        };
        assert!(StorageContract::new(convex_injection).is_err());
    }

    #[test]
    fn stage_override_applies_only_to_its_stage() {
        let c = sr()
            .with_stage_rates(StageRates {
                stage: 3,
                rate_min: RateFn::Constant { value: -10.0 },
                rate_max: RateFn::Constant { value: 10.0 },
            })
            .unwrap();
        assert_eq!(c.admissible_interval_at(3, 1e6).unwrap(), (-10.0, 10.0));
        assert_ne!(c.admissible_interval_at(4, 1e6).unwrap(), (-10.0, 10.0));
    }
}
