//! Direct Bellman recursion over all admissible moves, without the threshold structure.

use super::lattice_backend::{points_at, terminal_surface};
use super::{check_finite, Problem};
use crate::error::{Result, StorageError};
use crate::lattice::PriceLattice;

/// Default cap on `sum over days of (nodes * regimes * grid levels)`.
pub const DEFAULT_BRUTE_FORCE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub value: f64,
    /// Stage-0 values on the grid at the initial price and regime.
    pub stage0: Vec<f64>,
}

/// Maximizes `h(p, z - x) + U_n(z)` over every grid level `z` inside the
/// admissible range, the two range endpoints and `z = x`. The continuation is
/// linearly interpolated between grid levels, so the candidate set contains
/// every kink of the objective and the maximum is exact for that interpolant.
pub fn brute_force_value(problem: &Problem, substeps: usize, limit: usize) -> Result<BruteForce> {
    problem.check()?;
    let Problem {
        model,
        contract,
        grid,
        initial_log_price,
        initial_regime,
    } = *problem;
    let horizon = contract.horizon();
    let lattice = PriceLattice::build(model, initial_log_price, horizon, substeps)?;
    let levels = grid.len();
    let regimes = model.num_regimes();
    let size: usize = (0..=horizon).map(|n| lattice.node_count(n) * regimes * levels).sum();
    if size > limit {
        return Err(StorageError::InstanceTooLarge { size, limit });
    }
    let xs = grid.levels();
    let mut values = terminal_surface(problem, &lattice).values;
    for n in (0..horizon).rev() {
        let u = lattice.continuation(model, &values, levels, n, contract.discount())?;
        let points = points_at(problem, &lattice, n);
        let mut next = vec![0.0; u.len()];
        for (pi, pt) in points.iter().enumerate() {
            let row = &u[pi * levels..(pi + 1) * levels];
            for (i, &x) in xs.iter().enumerate() {
                let (lo, hi) = contract.admissible_interval_at(n, x)?;
                let mut best = row[i];
                for a in [lo, hi] {
                    best = best.max(contract.stage_reward(pt.price, a) + grid.interpolate(row, x + a)?);
                }
                for (j, &z) in xs.iter().enumerate() {
                    if z > x + lo && z < x + hi {
                        best = best.max(contract.stage_reward(pt.price, z - x) + row[j]);
                    }
                }
                next[pi * levels + i] = best;
            }
        }
        check_finite(n, &next)?;
        values = next;
    }
    let stage0 = values[initial_regime * levels..(initial_regime + 1) * levels].to_vec();
    let value = if horizon == 0 {
        contract.terminal_reward(contract.x0(), problem.initial_price())
    } else {
        grid.interpolate(&stage0, contract.x0())?
    };
    Ok(BruteForce { value, stage0 })
}
