//! Backward induction with the two-threshold policy.
//!
//! At every stage and price point the continuation `U_n` is known on the
//! storage grid. Two scans of the grid give the lower bound (smallest
//! maximizer of `U_n(z) - k(p) z`) and the upper bound (largest maximizer of
//! `U_n(z) - e(p) z`); below the lower bound the policy injects towards it at
//! the fastest admissible rate, above the upper bound it withdraws towards it,
//! and in between it does nothing. The bang-bang variant instead compares the
//! three extreme actions directly.

mod brute;
mod lattice_backend;
mod lsmc_backend;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use brute::{brute_force_value, BruteForce, DEFAULT_BRUTE_FORCE_LIMIT};

use crate::contract::StorageContract;
use crate::error::{Result, StorageError};
use crate::grid::{Bracket, StorageGrid};
use crate::lattice::{ClampStats, PriceLattice};
use crate::lsmc::{BasisSpec, BucketDiagnostics, RegressionFit};
use crate::market::RegimeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecisionTag {
    InjectToBound,
    InjectMax,
    DoNothing,
    WithdrawToBound,
    WithdrawMax,
}

impl DecisionTag {
    pub const ALL: [DecisionTag; 5] = [
        DecisionTag::InjectToBound,
        DecisionTag::InjectMax,
        DecisionTag::DoNothing,
        DecisionTag::WithdrawToBound,
        DecisionTag::WithdrawMax,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DecisionTag::InjectToBound => "inject-to-bound",
            DecisionTag::InjectMax => "inject-max",
            DecisionTag::DoNothing => "do-nothing",
            DecisionTag::WithdrawToBound => "withdraw-to-bound",
            DecisionTag::WithdrawMax => "withdraw-max",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyDecision {
    pub action: f64,
    pub tag: DecisionTag,
}

/// Grid indices and volumes of the two bounds for one price point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub lower_index: usize,
    pub upper_index: usize,
    pub lower: f64,
    pub upper: f64,
}

fn argmax(values: impl Iterator<Item = f64>, keep_last: bool) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut at = 0;
    for (i, v) in values.enumerate() {
        if v > best || (keep_last && v == best) {
            best = v;
            at = i;
        }
    }
    at
}

/// Solves both threshold problems over the full grid for continuation `u`.
pub fn solve_thresholds(u: &[f64], grid: &StorageGrid, contract: &StorageContract, p: f64) -> Thresholds {
    let (k, e) = (contract.ask(p), contract.bid(p));
    let levels = grid.levels();
    let lower_index = argmax(u.iter().zip(levels).map(|(u, z)| u - k * z), false);
    let upper_index = argmax(u.iter().zip(levels).map(|(u, z)| u - e * z), true);
    Thresholds {
        lower_index,
        upper_index,
        lower: levels[lower_index],
        upper: levels[upper_index],
    }
}

/// True when `g` rises and then falls, up to `tol * max|g|`.
pub fn is_unimodal(g: impl Iterator<Item = f64> + Clone, rel_tol: f64) -> bool {
    let scale = g.clone().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let tol = rel_tol * scale;
    let mut prev = f64::NEG_INFINITY;
    let mut falling = false;
    for v in g {
        if falling {
            if v > prev + tol {
                return false;
            }
        } else if v < prev - tol {
            falling = true;
        }
        prev = v;
    }
    true
}

/// The three-branch threshold rule given the rate limits `i_min(x)` and `i_max(x)`.
pub fn threshold_decision(lower: f64, upper: f64, x: f64, lo: f64, hi: f64) -> PolicyDecision {
    if x < lower {
        if hi <= lower - x {
            PolicyDecision {
                action: hi,
                tag: DecisionTag::InjectMax,
            }
        } else {
            PolicyDecision {
                action: lower - x,
                tag: DecisionTag::InjectToBound,
            }
        }
    } else if x > upper {
        if lo >= upper - x {
            PolicyDecision {
                action: lo,
                tag: DecisionTag::WithdrawMax,
            }
        } else {
            PolicyDecision {
                action: upper - x,
                tag: DecisionTag::WithdrawToBound,
            }
        }
    } else {
        PolicyDecision {
            action: 0.0,
            tag: DecisionTag::DoNothing,
        }
    }
}

/// Applies the threshold rule at volume `x` on `stage`.
pub fn apply_policy(
    lower: f64,
    upper: f64,
    contract: &StorageContract,
    stage: usize,
    x: f64,
) -> Result<PolicyDecision> {
    let (lo, hi) = rate_limits(contract, stage, x)?;
    Ok(threshold_decision(lower, upper, x, lo, hi))
}

/// `(i_min(x), i_max(x))` at `stage`, without the capacity cap.
pub fn rate_limits(contract: &StorageContract, stage: usize, x: f64) -> Result<(f64, f64)> {
    contract.admissible_interval_at(stage, x)?;
    let (rmin, rmax) = contract.rates_at(stage);
    Ok((rmin.eval(x), rmax.eval(x)))
}

/// Best of `{lo, 0, hi}`; ties prefer doing nothing, then injecting.
pub fn bangbang_decision(
    contract: &StorageContract,
    p: f64,
    lo: f64,
    hi: f64,
    u_stay: f64,
    u_hi: f64,
    u_lo: f64,
) -> (PolicyDecision, f64) {
    let mut best = (
        PolicyDecision {
            action: 0.0,
            tag: DecisionTag::DoNothing,
        },
        u_stay,
    );
    if hi > 0.0 {
        let v = contract.stage_reward(p, hi) + u_hi;
        if v > best.1 {
            best = (
                PolicyDecision {
                    action: hi,
                    tag: DecisionTag::InjectMax,
                },
                v,
            );
        }
    }
    if lo < 0.0 {
        let v = contract.stage_reward(p, lo) + u_lo;
        if v > best.1 {
            best = (
                PolicyDecision {
                    action: lo,
                    tag: DecisionTag::WithdrawMax,
                },
                v,
            );
        }
    }
    best
}

/// Bang-bang choice at an arbitrary volume `x` given the continuation `u` on
/// the grid. In grid mode the extreme moves stop at the farthest grid level
/// inside `[x + lo, x + hi]`.
pub fn bangbang_at(
    contract: &StorageContract,
    grid: &StorageGrid,
    mode: PolicyMode,
    p: f64,
    x: f64,
    lo: f64,
    hi: f64,
    u: impl Fn(f64) -> Result<f64>,
) -> Result<PolicyDecision> {
    let (lo, hi) = if mode == PolicyMode::BangBang {
        let levels = grid.levels();
        let up = levels[grid.bracket(x + hi)?.floor_index()];
        let down = levels[grid.bracket(x + lo)?.ceil_index()];
        ((down - x).min(0.0), (up - x).max(0.0))
    } else {
        (lo, hi)
    };
    let (d, _) = bangbang_decision(contract, p, lo, hi, u(x)?, u(x + hi)?, u(x + lo)?);
    Ok(d)
}

/// A point of the price state space: lattice node or simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricePoint {
    pub price: f64,
    pub log_price: f64,
    pub regime: usize,
}

/// `values[point * levels + x]` for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub stage: usize,
    pub levels: usize,
    pub points: Vec<PricePoint>,
    pub values: Vec<f64>,
}

impl ValueSurface {
    pub fn row(&self, point: usize) -> &[f64] {
        &self.values[point * self.levels..(point + 1) * self.levels]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub price: f64,
    pub log_price: f64,
    pub regime: usize,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBounds {
    pub stage: usize,
    pub rows: Vec<BoundRow>,
}

/// Writes `stage,price,regime,b_lower,b_upper` rows for every stage.
pub fn write_bounds_csv<W: Write>(out: W, bounds: &[PolicyBounds]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stage", "price", "regime", "b_lower", "b_upper"])?;
    for b in bounds {
        for r in &b.rows {
            w.write_record(&[
                b.stage.to_string(),
                r.price.to_string(),
                r.regime.to_string(),
                r.lower.to_string(),
                r.upper.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct BoundRecord {
    stage: usize,
    price: f64,
    regime: usize,
    b_lower: f64,
    b_upper: f64,
}

/// Reads a bounds CSV written by [`write_bounds_csv`].
pub fn read_bounds_csv<R: Read>(input: R, model: &RegimeModel) -> Result<Vec<PolicyBounds>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out: Vec<PolicyBounds> = Vec::new();
    for rec in rdr.deserialize() {
        let rec: BoundRecord = rec?;
        while out.len() <= rec.stage {
            let stage = out.len();
            out.push(PolicyBounds {
                stage,
                rows: Vec::new(),
            });
        }
        out[rec.stage].rows.push(BoundRow {
            price: rec.price,
            log_price: model.log_price(rec.price),
            regime: rec.regime,
            lower: rec.b_lower,
            upper: rec.b_upper,
        });
    }
    Ok(out)
}

/// Receives every stage's value surface, from the horizon down to stage 0.
pub trait StageObserver {
    fn observe(&mut self, surface: &ValueSurface, bounds: Option<&PolicyBounds>);
}

pub struct NoObserver;

impl StageObserver for NoObserver {
    fn observe(&mut self, _: &ValueSurface, _: Option<&PolicyBounds>) {}
}

/// Keeps every surface; intended for small instances.
#[derive(Default)]
pub struct SurfaceRecorder {
    pub surfaces: Vec<ValueSurface>,
    pub bounds: Vec<PolicyBounds>,
}

impl StageObserver for SurfaceRecorder {
    fn observe(&mut self, surface: &ValueSurface, bounds: Option<&PolicyBounds>) {
        self.surfaces.push(surface.clone());
        if let Some(b) = bounds {
            self.bounds.push(b.clone());
        }
    }
}

/// Largest relative violation of discrete concavity in one row of grid values.
pub fn concavity_violation(levels: &[f64], values: &[f64]) -> f64 {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut worst = 0.0f64;
    for i in 1..levels.len().saturating_sub(1) {
        let w = (levels[i] - levels[i - 1]) / (levels[i + 1] - levels[i - 1]);
        let chord = (1.0 - w) * values[i - 1] + w * values[i + 1];
        worst = worst.max((chord - values[i]) / scale);
    }
    worst
}

/// Largest relative distance of one row from the line through its endpoints.
pub fn affine_deviation(levels: &[f64], values: &[f64]) -> f64 {
    let n = levels.len();
    if n < 3 {
        return 0.0;
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let slope = (values[n - 1] - values[0]) / (levels[n - 1] - levels[0]);
    levels
        .iter()
        .zip(values)
        .map(|(x, v)| (v - (values[0] + slope * (x - levels[0]))).abs() / scale)
        .fold(0.0, f64::max)
}

/// Tracks the structural properties of every surface it sees.
#[derive(Debug, Clone, Default)]
pub struct InvariantMonitor {
    levels: Vec<f64>,
    pub stages_seen: usize,
    pub max_concavity_violation: f64,
    pub max_affine_deviation: f64,
    pub bound_order_violations: usize,
    pub bounds_outside_capacity: usize,
    pub non_finite: usize,
    pub checked_rows: usize,
    pub checked_bounds: usize,
}

impl InvariantMonitor {
    pub fn new(grid: &StorageGrid) -> Self {
        InvariantMonitor {
            levels: grid.levels().to_vec(),
            ..Default::default()
        }
    }
}

impl StageObserver for InvariantMonitor {
    fn observe(&mut self, surface: &ValueSurface, bounds: Option<&PolicyBounds>) {
        self.stages_seen += 1;
        for p in 0..surface.points.len() {
            let row = surface.row(p);
            self.non_finite += row.iter().filter(|v| !v.is_finite()).count();
            self.max_concavity_violation = self.max_concavity_violation.max(concavity_violation(&self.levels, row));
            self.max_affine_deviation = self.max_affine_deviation.max(affine_deviation(&self.levels, row));
            self.checked_rows += 1;
        }
        if let Some(b) = bounds {
            let (lo, hi) = (self.levels[0], self.levels[self.levels.len() - 1]);
            for r in &b.rows {
                self.checked_bounds += 1;
                if r.lower > r.upper {
                    self.bound_order_violations += 1;
                }
                if r.lower < lo || r.upper > hi {
                    self.bounds_outside_capacity += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    Threshold,
    /// Extreme moves to the farthest grid level reachable at full rate.
    BangBang,
    /// Extreme moves to `x + a_lo` and `x + a_hi`, valued by interpolation.
    BangBangInterpolated,
}

impl PolicyMode {
    pub fn is_bangbang(&self) -> bool {
        !matches!(self, PolicyMode::Threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsmcParams {
    pub paths: usize,
    pub basis: BasisSpec,
    pub seed: u64,
    pub substeps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backend {
    Lattice { substeps: usize },
    Lsmc(LsmcParams),
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Lattice { .. } => "tree",
            Backend::Lsmc(_) => "lsmc",
        }
    }
}

/// Everything that defines one valuation apart from the backend.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub model: &'a RegimeModel,
    pub contract: &'a StorageContract,
    pub grid: &'a StorageGrid,
    pub initial_log_price: f64,
    pub initial_regime: usize,
}

impl Problem<'_> {
    pub fn initial_price(&self) -> f64 {
        self.model.price(self.initial_log_price)
    }

    fn check(&self) -> Result<()> {
        if self.initial_regime >= self.model.num_regimes() {
            return Err(StorageError::invalid(format!(
                "initial regime {} out of range",
                self.initial_regime
            )));
        }
        let (lo, hi) = (self.grid.lowest(), self.grid.highest());
        let c = self.contract;
        let slack = 1e-9 * (c.b_max() - c.b_min());
        if (lo - c.b_min()).abs() > slack || (hi - c.b_max()).abs() > slack {
            return Err(StorageError::invalid("grid must span [b_min, b_max]"));
        }
        Ok(())
    }
}

/// Stored policy data needed to act on new price paths.
#[derive(Debug, Clone)]
pub enum PolicyArtifact {
    /// Continuation tables are kept only for the bang-bang mode.
    Lattice {
        lattice: PriceLattice,
        continuation: Vec<Vec<f32>>,
    },
    /// One fit per stage, stage 0 first.
    Lsmc { fits: Vec<RegressionFit> },
}

#[derive(Debug, Clone, Default)]
pub struct RunDiagnostics {
    pub clamp: Option<ClampStats>,
    /// Price points whose threshold objective was not unimodal.
    pub non_unimodal: usize,
    pub lsmc: Vec<BucketDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct Valuation {
    pub value: f64,
    pub mode: PolicyMode,
    pub backend: &'static str,
    /// Stage 0 first; empty in bang-bang mode.
    pub bounds: Vec<PolicyBounds>,
    pub artifact: PolicyArtifact,
    pub diagnostics: RunDiagnostics,
}

/// Admissible moves from every grid level at one stage.
pub(crate) struct ReachTable {
    pub rate_lo: Vec<f64>,
    pub rate_hi: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub lo_bracket: Vec<Bracket>,
    pub hi_bracket: Vec<Bracket>,
}

impl ReachTable {
    pub fn new(contract: &StorageContract, grid: &StorageGrid, stage: usize) -> Result<Self> {
        let n = grid.len();
        let mut t = ReachTable {
            rate_lo: Vec::with_capacity(n),
            rate_hi: Vec::with_capacity(n),
            lo: Vec::with_capacity(n),
            hi: Vec::with_capacity(n),
            lo_bracket: Vec::with_capacity(n),
            hi_bracket: Vec::with_capacity(n),
        };
        for &x in grid.levels() {
            let (lo, hi) = contract.admissible_interval_at(stage, x)?;
            t.lo_bracket.push(grid.bracket(x + lo)?);
            t.hi_bracket.push(grid.bracket(x + hi)?);
            let (rate_lo, rate_hi) = rate_limits(contract, stage, x)?;
            t.rate_lo.push(rate_lo);
            t.rate_hi.push(rate_hi);
            t.lo.push(lo);
            t.hi.push(hi);
        }
        Ok(t)
    }
}

/// Reach tables per stage, shared between stages without rate overrides.
pub(crate) struct ReachCache {
    base: ReachTable,
    overrides: Vec<(usize, ReachTable)>,
}

impl ReachCache {
    pub fn new(contract: &StorageContract, grid: &StorageGrid) -> Result<Self> {
        let base = ReachTable::new(contract, grid, usize::MAX)?;
        let mut overrides = Vec::new();
        for o in contract.stage_overrides() {
            overrides.push((o.stage, ReachTable::new(contract, grid, o.stage)?));
        }
        Ok(ReachCache { base, overrides })
    }

    pub fn at(&self, stage: usize) -> &ReachTable {
        self.overrides
            .iter()
            .find(|(s, _)| *s == stage)
            .map(|(_, t)| t)
            .unwrap_or(&self.base)
    }
}

/// Computes one row of `V_n` from the discounted continuation `u`. Returns
/// the bounds in threshold mode and whether the threshold objective was unimodal.
pub(crate) fn update_row(
    u: &[f64],
    point: &PricePoint,
    contract: &StorageContract,
    grid: &StorageGrid,
    reach: &ReachTable,
    mode: PolicyMode,
    out: &mut [f64],
) -> (Option<Thresholds>, bool) {
    let p = point.price;
    let levels = grid.levels();
    match mode {
        PolicyMode::Threshold => {
            let th = solve_thresholds(u, grid, contract, p);
            let k = contract.ask(p);
            let unimodal = is_unimodal(u.iter().zip(levels).map(|(u, z)| u - k * z), 1e-9);
            for (i, o) in out.iter_mut().enumerate() {
                let x = levels[i];
                let d = threshold_decision(th.lower, th.upper, x, reach.rate_lo[i], reach.rate_hi[i]);
                let cont = match d.tag {
                    DecisionTag::DoNothing => u[i],
                    DecisionTag::InjectToBound => u[th.lower_index],
                    DecisionTag::WithdrawToBound => u[th.upper_index],
                    DecisionTag::InjectMax => reach.hi_bracket[i].apply(u),
                    DecisionTag::WithdrawMax => reach.lo_bracket[i].apply(u),
                };
                *o = contract.stage_reward(p, d.action) + cont;
            }
            (Some(th), unimodal)
        }
        PolicyMode::BangBang => {
            for (i, o) in out.iter_mut().enumerate() {
                let up = reach.hi_bracket[i].floor_index();
                let down = reach.lo_bracket[i].ceil_index();
                let (_, v) = bangbang_decision(
                    contract,
                    p,
                    (levels[down] - levels[i]).min(0.0),
                    (levels[up] - levels[i]).max(0.0),
                    u[i],
                    u[up],
                    u[down],
                );
                *o = v;
            }
            (None, true)
        }
        PolicyMode::BangBangInterpolated => {
            for (i, o) in out.iter_mut().enumerate() {
                let (_, v) = bangbang_decision(
                    contract,
                    p,
                    reach.lo[i],
                    reach.hi[i],
                    u[i],
                    reach.hi_bracket[i].apply(u),
                    reach.lo_bracket[i].apply(u),
                );
                *o = v;
            }
            (None, true)
        }
    }
}

pub(crate) fn check_finite(stage: usize, values: &[f64]) -> Result<()> {
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(StorageError::Numeric {
            stage,
            index,
            message: format!("value {} is not finite", values[index]),
        });
    }
    Ok(())
}

/// Runs the backward induction with the chosen backend and policy class.
pub fn backward_induct(
    problem: &Problem,
    backend: &Backend,
    mode: PolicyMode,
    observer: &mut dyn StageObserver,
) -> Result<Valuation> {
    problem.check()?;
    match backend {
        Backend::Lattice { substeps } => lattice_backend::run(problem, *substeps, mode, observer),
        Backend::Lsmc(params) => lsmc_backend::run(problem, params, mode, observer),
    }
}

/// Same as [`backward_induct`] with actions restricted to the extreme moves and zero.
pub fn backward_induct_bangbang(
    problem: &Problem,
    backend: &Backend,
    observer: &mut dyn StageObserver,
) -> Result<Valuation> {
    backward_induct(problem, backend, PolicyMode::BangBang, observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{BidAsk, ContractTerms, RateFn, TerminalReward};

    fn toy_contract() -> StorageContract {
        StorageContract::new(ContractTerms {
            b_min: 0.0,
            b_max: 2.0,
            x0: 1.0,
            rate_min: RateFn::Constant { value: -1.0 },
            rate_max: RateFn::Constant { value: 1.0 },
            fees: BidAsk {
                w1: 0.1,
                z1: 0.0,
                w2: 0.1,
                z2: 0.0,
            },
            terminal: TerminalReward::SellAll,
            horizon: 1,
            discount: 1.0,
            price_range: (0.1, 10.0),
        })
        .unwrap()
    }

    #[test]
    fn zero_continuation_puts_both_bounds_at_bottom() {
        let c = toy_contract();
        let g = StorageGrid::equidistant(&c, 3).unwrap();
        let th = solve_thresholds(&[0.0; 3], &g, &c, 1.0);
        assert_eq!((th.lower, th.upper), (0.0, 0.0));
    }

    #[test]
    fn linear_continuation_at_bid_hits_both_ends() {
        let c = toy_contract();
        let g = StorageGrid::equidistant(&c, 3).unwrap();
        let e = c.bid(1.0);
        let u: Vec<f64> = g.levels().iter().map(|z| e * z).collect();
        let th = solve_thresholds(&u, &g, &c, 1.0);
        assert_eq!((th.lower, th.upper), (0.0, 2.0));
    }

    #[test]
    fn frictionless_zero_price_finds_peak() {
        let c = StorageContract::new(ContractTerms {
            fees: BidAsk::frictionless(),
            ..ContractTerms {
                b_min: 0.0,
                b_max: 4.0,
                x0: 1.0,
                rate_min: RateFn::Constant { value: -1.0 },
                rate_max: RateFn::Constant { value: 1.0 },
                fees: BidAsk::frictionless(),
                terminal: TerminalReward::SellAll,
                horizon: 1,
                discount: 1.0,
                price_range: (0.1, 1.0),
            }
        })
        .unwrap();
        let g = StorageGrid::equidistant(&c, 5).unwrap();
        let u = [0.0, 3.0, 4.0, 3.0, 0.0];
        let th = solve_thresholds(&u, &g, &c, 0.0);
        assert_eq!((th.lower, th.upper), (2.0, 2.0));
    }

    #[test]
    fn threshold_rule_branches() {
        let d = threshold_decision(1.0, 3.0, 2.0, -1.0, 1.0);
        assert_eq!(
            d,
            PolicyDecision {
                action: 0.0,
                tag: DecisionTag::DoNothing
            }
        );
        let d = threshold_decision(5.0, 6.0, 2.0, -1.0, 1.5);
        assert_eq!(
            d,
            PolicyDecision {
                action: 1.5,
                tag: DecisionTag::InjectMax
            }
        );
        let d = threshold_decision(2.5, 6.0, 2.0, -1.0, 1.5);
        assert_eq!(
            d,
            PolicyDecision {
                action: 0.5,
                tag: DecisionTag::InjectToBound
            }
        );
        let d = threshold_decision(0.0, 1.5, 2.0, -1.0, 1.0);
        assert_eq!(
            d,
            PolicyDecision {
                action: -0.5,
                tag: DecisionTag::WithdrawToBound
            }
        );
        let d = threshold_decision(0.0, 0.5, 2.0, -1.0, 1.0);
        assert_eq!(
            d,
            PolicyDecision {
                action: -1.0,
                tag: DecisionTag::WithdrawMax
            }
        );
    }

    #[test]
    fn threshold_rule_on_stratton_ridge() {
        let c = StorageContract::stratton_ridge();
        let x = 1_000_000.0;
        let d = apply_policy(2_000_000.0, 2_000_000.0, &c, 0, x).unwrap();
        assert_eq!(d.tag, DecisionTag::InjectMax);
        assert_eq!(d.action, 36_170.0);
        let d = apply_policy(500_000.0, 950_000.0, &c, 0, x).unwrap();
        assert_eq!(d.tag, DecisionTag::WithdrawToBound);
        assert_eq!(d.action, -50_000.0);
    }

    #[test]
    fn bangbang_prefers_idle_on_ties() {
        let c = toy_contract();
        let (d, v) = bangbang_decision(&c, 1.0, -1.0, 1.0, 5.0, 5.0 + c.ask(1.0), 5.0 - c.bid(1.0));
        assert_eq!(d.tag, DecisionTag::DoNothing);
        assert_eq!(v, 5.0);
    }

    #[test]
    fn unimodality_detection() {
        assert!(is_unimodal([1.0, 2.0, 3.0, 2.0, 1.0].into_iter(), 1e-9));
        assert!(is_unimodal([3.0, 2.0, 1.0].into_iter(), 1e-9));
        assert!(!is_unimodal([1.0, 3.0, 1.0, 3.0].into_iter(), 1e-9));
    }

    #[test]
    fn concavity_and_affine_measures() {
        let x = [0.0, 1.0, 3.0];
        assert_eq!(concavity_violation(&x, &[0.0, 1.0, 3.0]), 0.0);
        assert!(concavity_violation(&x, &[0.0, 0.0, 3.0]) > 0.0);
        assert!(affine_deviation(&x, &[2.0, 3.0, 5.0]) < 1e-15);
        assert!(affine_deviation(&x, &[0.0, 2.0, 3.0]) > 0.1);
    }

    #[test]
    fn bounds_csv_round_trip() {
        let model = RegimeModel::nbp_two_regime();
        let price = 1.8551234567891;
        let bounds = vec![PolicyBounds {
            stage: 0,
            rows: vec![BoundRow {
                price,
                log_price: model.log_price(price),
                regime: 1,
                lower: 612_345.25,
                upper: 1_999_999.5,
            }],
        }];
        let mut buf = Vec::new();
        write_bounds_csv(&mut buf, &bounds).unwrap();
        let back = read_bounds_csv(buf.as_slice(), &model).unwrap();
        assert_eq!(back, bounds);
    }
}
