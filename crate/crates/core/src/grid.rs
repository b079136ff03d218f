//! Volume grid generated by iterating the rate limits.
//!
//! Points are produced by four chains: down from `b_max` with the withdrawal
//! rate, up from `b_min` with the injection rate, and both directions from the
//! initial volume. Full-rate moves from chain points therefore land on grid
//! points, which keeps interpolation error away from the most common actions.
//! When the union is shorter than requested, the chains are re-run with the
//! rates divided by an integer `s` (fractional steps) until it is long enough.

use std::io::Write;

use crate::contract::{RateFn, StorageContract};
use crate::error::{Result, StorageError};

/// Largest integer step divisor tried before giving up on `min_length`.
const MAX_REFINEMENT: usize = 100_000;
const MAX_CHAIN_STEPS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct StorageGrid {
    levels: Vec<f64>,
    x0_index: Option<usize>,
    refinement: usize,
}

/// Position of a volume between two grid levels: `(1 - weight) * v[lower] + weight * v[lower + 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lower: usize,
    pub weight: f64,
}

impl Bracket {
    pub fn apply(&self, values: &[f64]) -> f64 {
        if self.weight == 0.0 {
            values[self.lower]
        } else {
            (1.0 - self.weight) * values[self.lower] + self.weight * values[self.lower + 1]
        }
    }

    /// Index of the highest level at or below the point, treating weights
    /// within `SNAP_TOL` of 1 as landing on the next level.
    pub fn floor_index(&self) -> usize {
        if self.weight >= 1.0 - SNAP_TOL {
            self.lower + 1
        } else {
            self.lower
        }
    }

    /// Index of the lowest level at or above the point, treating weights
    /// within `SNAP_TOL` of 0 as landing on the lower level.
    pub fn ceil_index(&self) -> usize {
        if self.weight > SNAP_TOL {
            self.lower + 1
        } else {
            self.lower
        }
    }
}

/// Round-off allowance, as a fraction of one grid gap, when snapping to a level.
pub const SNAP_TOL: f64 = 1e-9;

/// Default merge tolerance: one millionth of the working range.
pub fn default_merge_tol(contract: &StorageContract) -> f64 {
    1e-6 * (contract.b_max() - contract.b_min())
}

fn chain(
    name: &'static str,
    start: f64,
    rate: &RateFn,
    divisor: f64,
    lo: f64,
    hi: f64,
    merge_tol: f64,
    out: &mut Vec<f64>,
) -> Result<()> {
    let upward = rate.eval(start) >= 0.0;
    let eps = 1e-12 * (hi - lo);
    let mut x = start;
    for _ in 0..MAX_CHAIN_STEPS {
        let step = rate.eval(x) / divisor;
        if step.abs() <= eps || (upward && step < 0.0) || (!upward && step > 0.0) {
            return Err(StorageError::StuckChain { chain: name, level: x });
        }
        x += step;
        if (upward && x >= hi - merge_tol) || (!upward && x <= lo + merge_tol) {
            return Ok(());
        }
        out.push(x);
    }
    Err(StorageError::StuckChain { chain: name, level: x })
}

/// Keeps anchors exactly and drops chain points within `tol` of anything kept.
fn merge(mut anchors: Vec<f64>, mut points: Vec<f64>, tol: f64) -> Vec<f64> {
    anchors.sort_by(f64::total_cmp);
    anchors.dedup();
    points.sort_by(f64::total_cmp);
    let mut kept: Vec<f64> = Vec::with_capacity(points.len());
    for p in points {
        let i = anchors.partition_point(|&a| a < p);
        let near_anchor = (i < anchors.len() && anchors[i] - p <= tol) || (i > 0 && p - anchors[i - 1] <= tol);
        let near_kept = kept.last().is_some_and(|&k| p - k <= tol);
        if !near_anchor && !near_kept {
            kept.push(p);
        }
    }
    kept.extend(anchors);
    kept.sort_by(f64::total_cmp);
    kept
}

/// Builds the rate-driven grid with at least `min_length` levels.
pub fn build_grid(contract: &StorageContract, min_length: usize, merge_tol: f64) -> Result<StorageGrid> {
    if min_length < 2 {
        return Err(StorageError::invalid("min_length must be >= 2"));
    }
    if !(merge_tol > 0.0) {
        return Err(StorageError::invalid("merge_tol must be > 0"));
    }
    let (lo, hi, x0) = (contract.b_min(), contract.b_max(), contract.x0());
    let (rmin, rmax) = (contract.rate_min(), contract.rate_max());
    for s in 1..=MAX_REFINEMENT {
        let d = s as f64;
        let mut pts = Vec::new();
        chain("down from b_max", hi, rmin, d, lo, hi, merge_tol, &mut pts)?;
        chain("up from b_min", lo, rmax, d, lo, hi, merge_tol, &mut pts)?;
        if x0 - lo > merge_tol && hi - x0 > merge_tol {
            chain("up from x0", x0, rmax, d, lo, hi, merge_tol, &mut pts)?;
            chain("down from x0", x0, rmin, d, lo, hi, merge_tol, &mut pts)?;
        }
        let levels = merge(vec![lo, hi, x0], pts, merge_tol);
        if levels.len() >= min_length {
            return Ok(StorageGrid::from_levels(levels, x0, s));
        }
    }
    Err(StorageError::invalid(format!(
        "could not reach {min_length} levels with step divisor up to {MAX_REFINEMENT}"
    )))
}

impl StorageGrid {
    fn from_levels(levels: Vec<f64>, x0: f64, refinement: usize) -> Self {
        let x0_index = levels.iter().position(|&l| l == x0);
        StorageGrid {
            levels,
            x0_index,
            refinement,
        }
    }

    /// `n` equally spaced levels from `b_min` to `b_max`; `x0` is generally not a level.
    pub fn equidistant(contract: &StorageContract, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(StorageError::invalid("an equidistant grid needs >= 2 levels"));
        }
        let (lo, hi) = (contract.b_min(), contract.b_max());
        let mut levels: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        levels[n - 1] = hi;
        Ok(StorageGrid::from_levels(levels, contract.x0(), 1))
    }

    /// Arbitrary strictly increasing levels (used by tests and small instances).
    pub fn from_sorted(levels: Vec<f64>, x0: f64) -> Result<Self> {
        if levels.len() < 2 || levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(StorageError::invalid(
                "levels must be strictly increasing with >= 2 points",
            ));
        }
        Ok(StorageGrid::from_levels(levels, x0, 1))
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn min_index(&self) -> usize {
        0
    }

    pub fn max_index(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn x0_index(&self) -> Option<usize> {
        self.x0_index
    }

    /// Step divisor that was needed to reach the requested length.
    pub fn refinement(&self) -> usize {
        self.refinement
    }

    pub fn lowest(&self) -> f64 {
        self.levels[0]
    }

    pub fn highest(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    /// Locates `x` for linear interpolation; errors outside the grid span.
    pub fn bracket(&self, x: f64) -> Result<Bracket> {
        let (lo, hi) = (self.lowest(), self.highest());
        let slack = 1e-9 * (hi - lo);
        if !(x >= lo - slack && x <= hi + slack) {
            return Err(StorageError::invalid(format!("volume {x} outside grid [{lo}, {hi}]")));
        }
        let x = x.clamp(lo, hi);
        let n = self.levels.len();
        let i = self.levels.partition_point(|&l| l <= x);
        if i == 0 {
            return Ok(Bracket { lower: 0, weight: 0.0 });
        }
        let lower = i - 1;
        if lower == n - 1 || self.levels[lower] == x {
            return Ok(Bracket { lower, weight: 0.0 });
        }
        let (a, b) = (self.levels[lower], self.levels[lower + 1]);
        Ok(Bracket {
            lower,
            weight: (x - a) / (b - a),
        })
    }

    /// Piecewise-linear interpolation of grid values at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> Result<f64> {
        if values.len() != self.len() {
            return Err(StorageError::DimensionMismatch {
                context: "grid values",
                expected: self.len(),
                actual: values.len(),
            });
        }
        Ok(self.bracket(x)?.apply(values))
    }

    /// Histogram of consecutive gaps: `(bin_lo, bin_hi, count)` over `bins` equal-width bins.
    pub fn gap_histogram(&self, bins: usize) -> Vec<(f64, f64, usize)> {
        let gaps: Vec<f64> = self.levels.windows(2).map(|w| w[1] - w[0]).collect();
        if gaps.is_empty() || bins == 0 {
            return Vec::new();
        }
        let min = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = if max > min { (max - min) / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for g in gaps {
            let b = (((g - min) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(i, c)| (min + i as f64 * width, min + (i + 1) as f64 * width, c))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "level"])?;
        for (i, l) in self.levels.iter().enumerate() {
            w.write_record(&[i.to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_gap_histogram_csv<W: Write>(&self, out: W, bins: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["gap_lo", "gap_hi", "count"])?;
        for (a, b, c) in self.gap_histogram(bins) {
            w.write_record(&[a.to_string(), b.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
