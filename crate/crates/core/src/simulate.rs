//! Forward simulation of a stored policy along price paths.

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::contract::StorageContract;
use crate::error::{Result, StorageError};
use crate::grid::StorageGrid;
use crate::lattice::PriceLattice;
use crate::lsmc::RegressionFit;
use crate::market::{PricePath, RegimeModel};
use crate::valuation::{
    apply_policy, bangbang_at, solve_thresholds, DecisionTag, PolicyArtifact, PolicyBounds, PolicyDecision, PolicyMode,
    Valuation,
};

/// Maps a state to an admissible action.
pub trait Policy: Sync {
    fn decide(
        &self,
        contract: &StorageContract,
        stage: usize,
        x: f64,
        price: f64,
        regime: usize,
    ) -> Result<PolicyDecision>;

    /// Lookups that fell outside the stored price range and were clamped.
    fn clamped_lookups(&self) -> u64 {
        0
    }
}

/// Threshold policy driven by stored bounds, looked up at the nearest stored log-price.
pub struct ThresholdPolicy {
    /// `[stage][regime]` rows `(log_price, lower, upper)` sorted by log-price.
    table: Vec<Vec<Vec<(f64, f64, f64)>>>,
    price_scale: f64,
    clamped: AtomicU64,
}

impl ThresholdPolicy {
    pub fn new(bounds: &[PolicyBounds], model: &RegimeModel) -> Self {
        let regimes = model.num_regimes();
        let mut table = vec![vec![Vec::new(); regimes]; bounds.len()];
        for b in bounds {
            for r in &b.rows {
                if r.regime < regimes {
                    table[b.stage][r.regime].push((r.log_price, r.lower, r.upper));
                }
            }
        }
        for stage in &mut table {
            for rows in stage.iter_mut() {
                rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
        }
        ThresholdPolicy {
            table,
            price_scale: model.price_scale(),
            clamped: AtomicU64::new(0),
        }
    }

    /// `(lower, upper)` at the nearest stored log-price.
    pub fn bounds_at(&self, stage: usize, price: f64, regime: usize) -> Result<(f64, f64)> {
        let rows = self
            .table
            .get(stage)
            .and_then(|s| s.get(regime))
            .filter(|r| !r.is_empty())
            .ok_or(StorageError::UncoveredBucket { stage, regime })?;
        let y = (price / self.price_scale).ln();
        let (first, last) = (rows[0].0, rows[rows.len() - 1].0);
        if y < first || y > last {
            self.clamped.fetch_add(1, Ordering::Relaxed);
        }
        let i = rows.partition_point(|r| r.0 < y);
        let j = if i == 0 {
            0
        } else if i == rows.len() || (y - rows[i - 1].0) <= (rows[i].0 - y) {
            i - 1
        } else {
            i
        };
        Ok((rows[j].1, rows[j].2))
    }
}

impl Policy for ThresholdPolicy {
    fn decide(
        &self,
        contract: &StorageContract,
        stage: usize,
        x: f64,
        price: f64,
        regime: usize,
    ) -> Result<PolicyDecision> {
        let (lower, upper) = self.bounds_at(stage, price, regime)?;
        apply_policy(lower, upper, contract, stage, x)
    }

    fn clamped_lookups(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }
}

/// Bang-bang policy from stored lattice continuation values.
pub struct LatticeBangBangPolicy<'a> {
    lattice: &'a PriceLattice,
    continuation: &'a [Vec<f32>],
    grid: &'a StorageGrid,
    model: &'a RegimeModel,
    mode: PolicyMode,
    clamped: AtomicU64,
}

impl<'a> LatticeBangBangPolicy<'a> {
    pub fn new(
        lattice: &'a PriceLattice,
        continuation: &'a [Vec<f32>],
        grid: &'a StorageGrid,
        model: &'a RegimeModel,
        mode: PolicyMode,
    ) -> Self {
        LatticeBangBangPolicy {
            lattice,
            continuation,
            grid,
            model,
            mode,
            clamped: AtomicU64::new(0),
        }
    }
}

impl Policy for LatticeBangBangPolicy<'_> {
    fn decide(
        &self,
        contract: &StorageContract,
        stage: usize,
        x: f64,
        price: f64,
        regime: usize,
    ) -> Result<PolicyDecision> {
        let (lo, hi) = contract.admissible_interval_at(stage, x)?;
        let table = self
            .continuation
            .get(stage)
            .ok_or_else(|| StorageError::invalid(format!("no continuation stored for stage {stage}")))?;
        let (node, clamped) = self.lattice.nearest_node(stage, self.model.log_price(price));
        if clamped {
            self.clamped.fetch_add(1, Ordering::Relaxed);
        }
        let g = self.grid.len();
        let base = (node * self.model.num_regimes() + regime) * g;
        let row = &table[base..base + g];
        let at = |z: f64| -> Result<f64> {
            let b = self.grid.bracket(z)?;
            let v0 = row[b.lower] as f64;
            Ok(if b.weight == 0.0 {
                v0
            } else {
                (1.0 - b.weight) * v0 + b.weight * row[b.lower + 1] as f64
            })
        };
        bangbang_at(contract, self.grid, self.mode, price, x, lo, hi, at)
    }

    fn clamped_lookups(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }
}

/// Policy re-derived from the stored regression fits at the realized state.
pub struct LsmcPolicy<'a> {
    fits: &'a [RegressionFit],
    grid: &'a StorageGrid,
    mode: PolicyMode,
}

impl<'a> LsmcPolicy<'a> {
    pub fn new(fits: &'a [RegressionFit], grid: &'a StorageGrid, mode: PolicyMode) -> Self {
        LsmcPolicy { fits, grid, mode }
    }
}

impl Policy for LsmcPolicy<'_> {
    fn decide(
        &self,
        contract: &StorageContract,
        stage: usize,
        x: f64,
        price: f64,
        regime: usize,
    ) -> Result<PolicyDecision> {
        let fit = self
            .fits
            .get(stage)
            .ok_or_else(|| StorageError::invalid(format!("no regression stored for stage {stage}")))?;
        let mut u = vec![0.0; self.grid.len()];
        fit.estimate_all(price, regime, contract.discount(), &mut u)?;
        Ok(match self.mode {
            PolicyMode::Threshold => {
                let th = solve_thresholds(&u, self.grid, contract, price);
                apply_policy(th.lower, th.upper, contract, stage, x)?
            }
            mode => {
                let (lo, hi) = contract.admissible_interval_at(stage, x)?;
                let at = |z: f64| self.grid.interpolate(&u, z);
                bangbang_at(contract, self.grid, mode, price, x, lo, hi, at)?
            }
        })
    }
}

impl Valuation {
    /// The policy this valuation computed, ready for forward simulation.
    pub fn policy<'a>(&'a self, model: &'a RegimeModel, grid: &'a StorageGrid) -> Box<dyn Policy + 'a> {
        match (&self.artifact, self.mode) {
            (PolicyArtifact::Lattice { .. }, PolicyMode::Threshold) => {
                Box::new(ThresholdPolicy::new(&self.bounds, model))
            }
            (PolicyArtifact::Lattice { lattice, continuation }, mode) => {
                Box::new(LatticeBangBangPolicy::new(lattice, continuation, grid, model, mode))
            }
            (PolicyArtifact::Lsmc { fits }, mode) => Box::new(LsmcPolicy::new(fits, grid, mode)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub day: usize,
    pub price: f64,
    pub regime: usize,
    pub volume: f64,
    pub decision: PolicyDecision,
    pub cashflow: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub path_id: usize,
    pub steps: Vec<Step>,
    pub terminal_volume: f64,
    pub terminal_price: f64,
    pub terminal_cashflow: f64,
    /// Discounted sum of all cash flows.
    pub total: f64,
}

impl Trajectory {
    pub fn tag_counts(&self) -> [usize; 5] {
        let mut c = [0; 5];
        for s in &self.steps {
            c[s.decision.tag.index()] += 1;
        }
        c
    }
}

/// Runs `policy` from the contract's initial volume along each path.
pub fn run_policy(policy: &dyn Policy, contract: &StorageContract, paths: &[PricePath]) -> Result<Vec<Trajectory>> {
    let horizon = contract.horizon();
    paths
        .par_iter()
        .enumerate()
        .map(|(path_id, path)| {
            if path.len() <= horizon {
                return Err(StorageError::invalid(format!(
                    "path {path_id} has {} days, need {}",
                    path.len(),
                    horizon + 1
                )));
            }
            let mut x = contract.x0();
            let mut total = 0.0;
            let mut factor = 1.0;
            let mut steps = Vec::with_capacity(horizon);
            for day in 0..horizon {
                let (price, regime) = (path.prices[day], path.regimes[day]);
                let decision = policy.decide(contract, day, x, price, regime)?;
                let cashflow = contract.stage_reward(price, decision.action);
                steps.push(Step {
                    day,
                    price,
                    regime,
                    volume: x,
                    decision,
                    cashflow,
                });
                total += factor * cashflow;
                factor *= contract.discount();
                x += decision.action;
            }
            let terminal_price = path.prices[horizon];
            let terminal_cashflow = contract.terminal_reward(x, terminal_price);
            total += factor * terminal_cashflow;
            Ok(Trajectory {
                path_id,
                steps,
                terminal_volume: x,
                terminal_price,
                terminal_cashflow,
                total,
            })
        })
        .collect()
}

/// Sample mean and standard deviation (zero for a single path) of the realized totals.
pub fn realized_value(trajectories: &[Trajectory]) -> Result<(f64, f64)> {
    if trajectories.is_empty() {
        return Err(StorageError::invalid("no trajectories"));
    }
    let n = trajectories.len() as f64;
    let mean = trajectories.iter().map(|t| t.total).sum::<f64>() / n;
    if trajectories.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = trajectories.iter().map(|t| (t.total - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// Writes `day,price,regime,volume,action,tag,cashflow`, closing with a `terminal` row.
pub fn write_trajectory_csv<W: Write>(out: W, t: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "price", "regime", "volume", "action", "tag", "cashflow"])?;
    for s in &t.steps {
        w.write_record(&[
            s.day.to_string(),
            s.price.to_string(),
            s.regime.to_string(),
            s.volume.to_string(),
            s.decision.action.to_string(),
            s.decision.tag.as_str().to_string(),
            s.cashflow.to_string(),
        ])?;
    }
    w.write_record(&[
        t.steps.len().to_string(),
        t.terminal_price.to_string(),
        String::new(),
        t.terminal_volume.to_string(),
        "0".to_string(),
        "terminal".to_string(),
        t.terminal_cashflow.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// Writes one row of decision counts per path plus the realized total.
pub fn write_tag_counts_csv<W: Write>(out: W, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["path_id".to_string()];
    header.extend(DecisionTag::ALL.iter().map(|t| t.as_str().to_string()));
    header.push("total".to_string());
    w.write_record(&header)?;
    for t in trajectories {
        let mut rec = vec![t.path_id.to_string()];
        rec.extend(t.tag_counts().iter().map(|c| c.to_string()));
        rec.push(t.total.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuation::BoundRow;

    fn flat_bounds(model: &RegimeModel, horizon: usize, lower: f64, upper: f64) -> Vec<PolicyBounds> {
        (0..horizon)
            .map(|stage| PolicyBounds {
                stage,
                rows: (0..model.num_regimes())
                    .map(|regime| BoundRow {
                        price: 1.0,
                        log_price: model.log_price(1.0),
                        regime,
                        lower,
                        upper,
                    })
                    .collect(),
            })
            .collect()
    }

    fn fixture_paths(n: usize, horizon: usize) -> Vec<PricePath> {
        let model = RegimeModel::nbp_two_regime();
        crate::market::simulate_price_paths(&model, model.mean(0, 0.0), 0, horizon, n, 1, 5).unwrap()
    }

    #[test]
    fn full_band_never_trades() {
        let model = RegimeModel::nbp_two_regime();
        let c = StorageContract::stratton_ridge();
        let policy = ThresholdPolicy::new(&flat_bounds(&model, 250, c.b_min(), c.b_max()), &model);
        let trajs = run_policy(&policy, &c, &fixture_paths(4, 250)).unwrap();
        for t in &trajs {
            assert_eq!(t.tag_counts()[DecisionTag::DoNothing.index()], 250);
            assert_eq!(t.terminal_volume, c.x0());
        }
    }

    #[test]
    fn fill_to_top_injects_at_full_rate_then_tops_up() {
        let model = RegimeModel::nbp_two_regime();
        let c = StorageContract::stratton_ridge();
        let policy = ThresholdPolicy::new(&flat_bounds(&model, 250, c.b_max(), c.b_max()), &model);
        let t = &run_policy(&policy, &c, &fixture_paths(1, 250)).unwrap()[0];
        // hand-rolled trajectory: x <- x + min(b_max - x, -0.032 x + 68170)
        let mut x = c.x0();
        let mut expected = Vec::new();
        for _ in 0..250 {
            let rate = -0.032 * x + 68_170.0;
            let tag = if rate <= c.b_max() - x {
                x += rate;
                DecisionTag::InjectMax
            } else if x < c.b_max() {
                x = c.b_max();
                DecisionTag::InjectToBound
            } else {
                DecisionTag::DoNothing
            };
            expected.push(tag);
        }
        let tags: Vec<_> = t.steps.iter().map(|s| s.decision.tag).collect();
        assert_eq!(tags, expected);
        let first_idle = tags.iter().position(|t| *t == DecisionTag::DoNothing).unwrap();
        assert_eq!(tags[first_idle - 1], DecisionTag::InjectToBound);
        assert!(tags[..first_idle - 1].iter().all(|t| *t == DecisionTag::InjectMax));
        assert!((t.terminal_volume - c.b_max()).abs() < 1e-6);
    }

    #[test]
    fn volumes_are_running_sums_and_cashflows_match() {
        let model = RegimeModel::nbp_two_regime();
        let c = StorageContract::stratton_ridge();
        let policy = ThresholdPolicy::new(&flat_bounds(&model, 250, 800_000.0, 1_200_000.0), &model);
        let t = &run_policy(&policy, &c, &fixture_paths(1, 250)).unwrap()[0];
        let mut x = c.x0();
        for s in &t.steps {
            assert_eq!(s.volume, x);
            assert_eq!(s.cashflow, c.stage_reward(s.price, s.decision.action));
            x += s.decision.action;
        }
        assert_eq!(x, t.terminal_volume);
    }

    #[test]
    fn realized_value_examples() {
        let model = RegimeModel::nbp_two_regime();
        let c = StorageContract::stratton_ridge();
        let policy = ThresholdPolicy::new(&flat_bounds(&model, 250, 900_000.0, 900_000.0), &model);
        let t = run_policy(&policy, &c, &fixture_paths(1, 250)).unwrap();
        assert_eq!(realized_value(&t).unwrap(), (t[0].total, 0.0));
        let copies = vec![t[0].clone(); 5];
        let (m, sd) = realized_value(&copies).unwrap();
        assert!((m - t[0].total).abs() <= 1e-9 * t[0].total.abs());
        assert!(sd < 1e-6);
        assert!(realized_value(&[]).is_err());
    }

    #[test]
    fn nearest_lookup_and_clamping() {
        let model = RegimeModel::nbp_two_regime();
        let rows = [(1.0, 1.0), (2.0, 2.0), (4.0, 4.0)]
            .iter()
            .map(|&(p, b)| BoundRow {
                price: p,
                log_price: model.log_price(p),
                regime: 0,
                lower: b,
                upper: b,
            })
            .collect();
        let policy = ThresholdPolicy::new(&[PolicyBounds { stage: 0, rows }], &model);
        assert_eq!(policy.bounds_at(0, 2.1, 0).unwrap(), (2.0, 2.0));
        assert_eq!(policy.bounds_at(0, 3.9, 0).unwrap(), (4.0, 4.0));
        assert_eq!(policy.clamped_lookups(), 0);
        assert_eq!(policy.bounds_at(0, 50.0, 0).unwrap(), (4.0, 4.0));
        assert_eq!(policy.clamped_lookups(), 1);
        assert!(matches!(
            policy.bounds_at(0, 1.0, 1),
            Err(StorageError::UncoveredBucket { .. })
        ));
    }
}
