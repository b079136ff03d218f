//! Recombining log-price lattice with regime-dependent probabilities.
//!
//! Each day is split into `m` binomial sub-steps of size `dt = 1/m`. Node
//! values `x0 + j * sigma * sqrt(dt)` do not depend on the regime; the regime
//! (frozen for the whole day) only changes the up-probabilities, which are
//! the clamped drift-matching probabilities
//! `q_up = clamp(1/2 + dt * alpha * (mu_r(t) - y) / (2 sigma sqrt(dt)))`.
//! Day-to-day transition distributions over the `m + 1` reachable successors
//! are obtained by convolving the sub-steps and cached per (day, node, regime).
//! Nodes that cannot be reached with positive probability are dropped.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Result, StorageError};
use crate::market::RegimeModel;

/// Up-probability before clamping.
pub fn raw_up_probability(model: &RegimeModel, y: f64, t: f64, dt: f64, regime: usize) -> f64 {
    let h = model.sigma() * dt.sqrt();
    let up = y + h;
    let down = y - h;
    (dt * model.alpha() * (model.mean(regime, t) - y) + y - down) / (up - down)
}

/// Clamped up-probability of one sub-step starting at log-price `y` at time `t`.
pub fn up_probability(model: &RegimeModel, y: f64, t: f64, dt: f64, regime: usize) -> f64 {
    raw_up_probability(model, y, t, dt, regime).clamp(0.0, 1.0)
}

/// Counts of sub-step probability evaluations that hit the [0, 1] clamp.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClampStats {
    pub evaluations: u64,
    pub clamped: u64,
}

impl ClampStats {
    pub fn rate(&self) -> f64 {
        if self.evaluations == 0 {
            0.0
        } else {
            self.clamped as f64 / self.evaluations as f64
        }
    }
}

#[derive(Debug, Clone)]
struct Day {
    /// Lattice index `j` of the lowest node; nodes are `lo, lo + 2, ...`.
    lo: i64,
    count: usize,
    /// Index into the next day's nodes of successor 0 (the all-down move).
    succ_first: Vec<i64>,
    /// `[(node * regimes + r) * (m + 1) + k]`, successor `k` has `k` net up moves.
    probs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PriceLattice {
    m: usize,
    dt: f64,
    spacing: f64,
    x0: f64,
    regimes: usize,
    days: Vec<Day>,
    clamp: ClampStats,
}

/// Distribution after `m` sub-steps from lattice index `j` on day `day`.
/// `out[k]` is the probability of `k` up-moves. Returns the probability mass
/// that passed through clamped sub-steps.
fn day_distribution(
    model: &RegimeModel,
    x0: f64,
    spacing: f64,
    m: usize,
    day: usize,
    j: i64,
    regime: usize,
    out: &mut [f64],
    stats: &mut ClampStats,
) -> f64 {
    let dt = 1.0 / m as f64;
    let mut clamped_mass = 0.0;
    out.iter_mut().for_each(|p| *p = 0.0);
    out[0] = 1.0;
    for k in 0..m {
        let t = day as f64 + k as f64 * dt;
        for u in (0..=k).rev() {
            let mass = out[u];
            if mass == 0.0 {
                continue;
            }
            let y = x0 + (j - k as i64 + 2 * u as i64) as f64 * spacing;
            let raw = raw_up_probability(model, y, t, dt, regime);
            stats.evaluations += 1;
            if !(0.0..=1.0).contains(&raw) {
                stats.clamped += 1;
                clamped_mass += mass;
            }
            let q = raw.clamp(0.0, 1.0);
            out[u + 1] += mass * q;
            out[u] = mass * (1.0 - q);
        }
    }
    clamped_mass
}

impl PriceLattice {
    /// Builds the lattice for days `0..=n_days` starting from log-price `x0`.
    pub fn build(model: &RegimeModel, x0: f64, n_days: usize, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(StorageError::invalid("sub-steps per day must be >= 1"));
        }
        if !(model.sigma() > 0.0) {
            return Err(StorageError::invalid("the lattice needs sigma > 0"));
        }
        let dt = 1.0 / m as f64;
        let spacing = model.sigma() * dt.sqrt();
        let regimes = model.num_regimes();
        let width = m + 1;
        let mut days = Vec::with_capacity(n_days + 1);
        let mut clamp = ClampStats::default();
        let (mut lo, mut count) = (0i64, 1usize);
        let mut buf = vec![0.0; width];
        for day in 0..n_days {
            let mut probs = vec![0.0; count * regimes * width];
            let mut min_succ = i64::MAX;
            let mut max_succ = i64::MIN;
            for i in 0..count {
                let j = lo + 2 * i as i64;
                for r in 0..regimes {
                    day_distribution(model, x0, spacing, m, day, j, r, &mut buf, &mut clamp);
                    let base = (i * regimes + r) * width;
                    probs[base..base + width].copy_from_slice(&buf);
                    for (k, &p) in buf.iter().enumerate() {
                        if p > 0.0 {
                            let s = j - m as i64 + 2 * k as i64;
                            min_succ = min_succ.min(s);
                            max_succ = max_succ.max(s);
                        }
                    }
                }
            }
            let next_lo = min_succ;
            let next_count = ((max_succ - min_succ) / 2 + 1) as usize;
            let succ_first = (0..count)
                .map(|i| (lo + 2 * i as i64 - m as i64 - next_lo) / 2)
                .collect();
            days.push(Day {
                lo,
                count,
                succ_first,
                probs,
            });
            lo = next_lo;
            count = next_count;
        }
        days.push(Day {
            lo,
            count,
            succ_first: Vec::new(),
            probs: Vec::new(),
        });
        Ok(PriceLattice {
            m,
            dt,
            spacing,
            x0,
            regimes,
            days,
            clamp,
        })
    }

    pub fn substeps(&self) -> usize {
        self.m
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn n_days(&self) -> usize {
        self.days.len() - 1
    }

    pub fn regimes(&self) -> usize {
        self.regimes
    }

    pub fn clamp_stats(&self) -> ClampStats {
        self.clamp
    }

    pub fn node_count(&self, day: usize) -> usize {
        self.days[day].count
    }

    /// Lattice index `j` of node `i` on `day`.
    pub fn node_index(&self, day: usize, i: usize) -> i64 {
        self.days[day].lo + 2 * i as i64
    }

    pub fn log_price(&self, day: usize, i: usize) -> f64 {
        self.x0 + self.node_index(day, i) as f64 * self.spacing
    }

    pub fn log_prices(&self, day: usize) -> Vec<f64> {
        (0..self.node_count(day)).map(|i| self.log_price(day, i)).collect()
    }

    /// `(first successor node on day + 1, probabilities over m + 1 successors)`.
    /// Successors outside the stored range always carry probability zero.
    pub fn day_transition(&self, day: usize, node: usize, regime: usize) -> (i64, &[f64]) {
        let d = &self.days[day];
        let w = self.m + 1;
        let base = (node * self.regimes + regime) * w;
        (d.succ_first[node], &d.probs[base..base + w])
    }

    /// Node on `day` nearest to `log_price`, clamped to the extreme nodes.
    /// The flag reports whether clamping happened.
    pub fn nearest_node(&self, day: usize, log_price: f64) -> (usize, bool) {
        let d = &self.days[day];
        let u = (log_price - self.x0) / self.spacing;
        let i = ((u - d.lo as f64) / 2.0).round();
        if i < 0.0 {
            (0, true)
        } else if i as usize >= d.count {
            (d.count - 1, true)
        } else {
            (i as usize, false)
        }
    }

    /// Discounted continuation `U_n(x, p, r) = beta * sum_l q_rl * sum_j V_{n+1}(x, p_j, l) P(p_j | p, r)`.
    ///
    /// `next_values` is laid out `[(node * regimes + l) * levels + x]` over the
    /// nodes of `day + 1`; the result uses the same layout over the nodes of `day`.
    pub fn continuation(
        &self,
        model: &RegimeModel,
        next_values: &[f64],
        levels: usize,
        day: usize,
        discount: f64,
    ) -> Result<Vec<f64>> {
        if day >= self.n_days() {
            return Err(StorageError::invalid(format!("no transitions out of day {day}")));
        }
        let regimes = self.regimes;
        let next_nodes = self.days[day + 1].count;
        let expected = next_nodes * regimes * levels;
        if next_values.len() != expected {
            return Err(StorageError::DimensionMismatch {
                context: "next-stage values",
                expected,
                actual: next_values.len(),
            });
        }
        // mixed[r][(node', x)] = sum_l q_rl V(x, node', l)
        let mixed: Vec<Vec<f64>> = (0..regimes)
            .map(|r| {
                let mut w = vec![0.0; next_nodes * levels];
                for node in 0..next_nodes {
                    let dst = &mut w[node * levels..(node + 1) * levels];
                    for l in 0..regimes {
                        let q = model.q(r, l);
                        if q == 0.0 {
                            continue;
                        }
                        let src = &next_values[(node * regimes + l) * levels..][..levels];
                        dst.iter_mut().zip(src).for_each(|(d, v)| *d += q * v);
                    }
                }
                w
            })
            .collect();
        let count = self.days[day].count;
        let mut out = vec![0.0; count * regimes * levels];
        out.par_chunks_mut(regimes * levels).enumerate().for_each(|(i, block)| {
            for r in 0..regimes {
                let (first, probs) = self.day_transition(day, i, r);
                let dst = &mut block[r * levels..(r + 1) * levels];
                for (k, &p) in probs.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let node = (first + k as i64) as usize;
                    let src = &mixed[r][node * levels..(node + 1) * levels];
                    dst.iter_mut().zip(src).for_each(|(d, v)| *d += p * v);
                }
                dst.iter_mut().for_each(|d| *d *= discount);
            }
        });
        Ok(out)
    }

    /// Share of sub-step probability mass that goes through a clamped
    /// probability, weighting each node by how likely the lattice is to be
    /// there when started in `initial_regime`.
    pub fn clamped_mass_fraction(&self, model: &RegimeModel, initial_regime: usize) -> f64 {
        let r_count = self.regimes;
        let mut occupancy = vec![0.0; r_count];
        occupancy[initial_regime] = 1.0;
        let mut buf = vec![0.0; self.m + 1];
        let mut scratch = ClampStats::default();
        let (mut clamped, mut total) = (0.0, 0.0);
        for day in 0..self.n_days() {
            let mut next = vec![0.0; self.node_count(day + 1) * r_count];
            for i in 0..self.node_count(day) {
                for r in 0..r_count {
                    let w = occupancy[i * r_count + r];
                    if w == 0.0 {
                        continue;
                    }
                    let j = self.node_index(day, i);
                    clamped +=
                        w * day_distribution(model, self.x0, self.spacing, self.m, day, j, r, &mut buf, &mut scratch);
                    total += w * self.m as f64;
                    let first = self.days[day].succ_first[i];
                    for (k, &p) in buf.iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        let node = (first + k as i64) as usize;
                        for l in 0..r_count {
                            next[node * r_count + l] += w * p * model.q(r, l);
                        }
                    }
                }
            }
            occupancy = next;
        }
        if total == 0.0 {
            0.0
        } else {
            clamped / total
        }
    }

    /// Writes `day,node_index,log_price` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["day", "node_index", "log_price"])?;
        for day in 0..self.days.len() {
            for i in 0..self.node_count(day) {
                w.write_record(&[
                    day.to_string(),
                    self.node_index(day, i).to_string(),
                    self.log_price(day, i).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::MeanFn;
    use approx::assert_abs_diff_eq;

    fn single(level: f64, alpha: f64, sigma: f64) -> RegimeModel {
        RegimeModel::new(vec![vec![1.0]], vec![MeanFn::Constant { level }], alpha, sigma, 1.0).unwrap()
    }

    #[test]
    fn up_probability_examples() {
        let m = single(1.0, 0.073, 0.072);
        assert_abs_diff_eq!(up_probability(&m, 1.0, 0.0, 1.0, 0), 0.5, epsilon = 1e-12);
        assert_eq!(up_probability(&m, -100.0, 0.0, 1.0, 0), 1.0);
        assert_eq!(up_probability(&m, 100.0, 0.0, 1.0, 0), 0.0);
        let p = up_probability(&m, 0.9, 0.0, 1.0, 0);
        assert_abs_diff_eq!(p, 0.5 + 0.073 * 0.1 / (2.0 * 0.072), epsilon = 1e-12);
        assert_abs_diff_eq!(p, 0.5507, epsilon = 1e-4);
    }

    #[test]
    fn one_substep_day_is_two_point() {
        let model = RegimeModel::nbp_two_regime();
        let x0 = model.mean(0, 0.0) - 0.05;
        let lat = PriceLattice::build(&model, x0, 3, 1).unwrap();
        for r in 0..2 {
            let (first, probs) = lat.day_transition(0, 0, r);
            let q = up_probability(&model, x0, 0.0, 1.0, r);
            assert_eq!(probs, &[1.0 - q, q]);
            assert_eq!(first, 0);
        }
    }

    #[test]
    fn two_substep_day_matches_path_products() {
        let model = RegimeModel::nbp_two_regime();
        let y = model.mean(1, 0.0) + 0.2;
        let lat = PriceLattice::build(&model, y, 2, 2).unwrap();
        let h = model.sigma() * 0.5f64.sqrt();
        let r = 1;
        let q0 = up_probability(&model, y, 0.0, 0.5, r);
        let qu = up_probability(&model, y + h, 0.5, 0.5, r);
        let qd = up_probability(&model, y - h, 0.5, 0.5, r);
        let (_, probs) = lat.day_transition(0, 0, r);
        assert_abs_diff_eq!(probs[2], q0 * qu, epsilon = 1e-15);
        assert_abs_diff_eq!(probs[1], q0 * (1.0 - qu) + (1.0 - q0) * qd, epsilon = 1e-15);
        assert_abs_diff_eq!(probs[0], (1.0 - q0) * (1.0 - qd), epsilon = 1e-15);
    }

    #[test]
    fn node_counts_at_start() {
        let model = RegimeModel::nbp_two_regime();
        for m in 1..=5 {
            let lat = PriceLattice::build(&model, model.mean(0, 0.0), 40, m).unwrap();
            assert_eq!(lat.node_count(0), 1);
            assert_eq!(lat.node_count(1), m + 1);
            for n in 0..=40 {
                assert!(lat.node_count(n) <= 1 + m * n);
            }
        }
    }

    #[test]
    fn transitions_are_distributions() {
        let model = RegimeModel::nbp_two_regime();
        let lat = PriceLattice::build(&model, model.mean(0, 0.0), 60, 3).unwrap();
        for n in 0..60 {
            for i in 0..lat.node_count(n) {
                for r in 0..2 {
                    let (first, probs) = lat.day_transition(n, i, r);
                    assert!(probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
                    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    for (k, &p) in probs.iter().enumerate() {
                        let s = first + k as i64;
                        if p > 0.0 {
                            assert!(s >= 0 && (s as usize) < lat.node_count(n + 1));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn clamped_mass_is_small_for_nbp_parameters() {
        let model = RegimeModel::nbp_two_regime();
        let lat = PriceLattice::build(&model, model.mean(0, 0.0), 250, 2).unwrap();
        assert!(lat.clamp_stats().clamped > 0);
        assert!(lat.clamped_mass_fraction(&model, 0) < 1e-6);
    }

    #[test]
    fn clamped_mass_is_one_when_every_step_clamps() {
        // start far below the mean: the first day is all clamped up-moves
        let model = single(0.0, 0.5, 0.01);
        let lat = PriceLattice::build(&model, -10.0, 1, 2).unwrap();
        assert_eq!(lat.clamped_mass_fraction(&model, 0), 1.0);
    }

    #[test]
    fn strong_reversion_prunes_far_nodes() {
        // sigma / (alpha sqrt(dt)) = 1/3 keeps the reachable band narrow
        let model = single(0.0, 0.3, 0.1);
        let lat = PriceLattice::build(&model, 0.0, 100, 1).unwrap();
        assert!(lat.node_count(100) < 1 + 100);
        assert!(lat.clamp_stats().clamped > 0);
    }

    #[test]
    fn one_day_mean_follows_euler_drift() {
        let model = RegimeModel::nbp_two_regime();
        for m in 1..=5 {
            let lat = PriceLattice::build(&model, model.mean(0, 0.0), 30, m).unwrap();
            let dt = 1.0 / m as f64;
            for n in [0usize, 10, 29] {
                for i in (0..lat.node_count(n)).step_by(3) {
                    for r in 0..2 {
                        let y = lat.log_price(n, i);
                        let (first, probs) = lat.day_transition(n, i, r);
                        // skip nodes whose day touched the clamp
                        let mut stats = ClampStats::default();
                        let mut buf = vec![0.0; m + 1];
                        day_distribution(
                            &model,
                            lat.x0,
                            lat.spacing,
                            m,
                            n,
                            lat.node_index(n, i),
                            r,
                            &mut buf,
                            &mut stats,
                        );
                        if stats.clamped > 0 {
                            continue;
                        }
                        let mean: f64 = probs
                            .iter()
                            .enumerate()
                            .map(|(k, p)| p * lat.log_price(n + 1, (first + k as i64) as usize))
                            .sum();
                        let mut euler = y;
                        for k in 0..m {
                            let t = n as f64 + k as f64 * dt;
                            euler += dt * model.alpha() * (model.mean(r, t) - euler);
                        }
                        assert_abs_diff_eq!(mean, euler, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn one_day_variance_approaches_diffusion_variance() {
        // exact one-day variance of the OU diffusion: sigma^2 (1 - e^{-2 alpha}) / (2 alpha)
        let model = RegimeModel::nbp_two_regime();
        let (a, s) = (model.alpha(), model.sigma());
        let target = s * s * (1.0 - (-2.0 * a).exp()) / (2.0 * a);
        let mut last_err = f64::INFINITY;
        for m in 1..=5 {
            let y = model.mean(0, 0.0);
            let lat = PriceLattice::build(&model, y, 1, m).unwrap();
            let (first, probs) = lat.day_transition(0, 0, 0);
            let xs: Vec<f64> = (0..=m).map(|k| lat.log_price(1, (first + k as i64) as usize)).collect();
            let mean: f64 = probs.iter().zip(&xs).map(|(p, x)| p * x).sum();
            let var: f64 = probs.iter().zip(&xs).map(|(p, x)| p * (x - mean).powi(2)).sum();
            let err = (var - target).abs();
            assert!(err < last_err, "m = {m}: {err} vs {last_err}");
            assert!((var - s * s).abs() / (s * s) < 0.08);
            last_err = err;
        }
    }

    #[test]
    fn continuation_of_constant_is_discounted_constant() {
        let model = RegimeModel::nbp_two_regime();
        let lat = PriceLattice::build(&model, model.mean(0, 0.0), 5, 2).unwrap();
        let levels = 3;
        let next = vec![7.5; lat.node_count(5) * 2 * levels];
        let u = lat.continuation(&model, &next, levels, 4, 0.9).unwrap();
        assert!(u.iter().all(|&v| (v - 6.75).abs() < 1e-12));
    }

    #[test]
    fn continuation_single_regime_two_point() {
        let model = single(0.3, 0.1, 0.2);
        let lat = PriceLattice::build(&model, 0.0, 2, 1).unwrap();
        let next: Vec<f64> = lat.log_prices(2);
        let u = lat.continuation(&model, &next, 1, 1, 1.0).unwrap();
        for i in 0..lat.node_count(1) {
            let y = lat.log_price(1, i);
            let q = up_probability(&model, y, 1.0, 1.0, 0);
            let expected = q * (y + 0.2) + (1.0 - q) * (y - 0.2);
            assert_abs_diff_eq!(u[i], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn continuation_of_regime_only_values() {
        let model = RegimeModel::nbp_two_regime();
        let lat = PriceLattice::build(&model, model.mean(0, 0.0), 3, 1).unwrap();
        let v = [100.0, 40.0];
        let next: Vec<f64> = (0..lat.node_count(3)).flat_map(|_| v).collect();
        let u = lat.continuation(&model, &next, 1, 2, 1.0).unwrap();
        // Q v = (0.9*100 + 0.1*40, 0.5*100 + 0.5*40) = (94, 70)
        for i in 0..lat.node_count(2) {
            assert_abs_diff_eq!(u[i * 2], 94.0, epsilon = 1e-9);
            assert_abs_diff_eq!(u[i * 2 + 1], 70.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn continuation_rejects_wrong_shape() {
        let model = RegimeModel::nbp_two_regime();
        let lat = PriceLattice::build(&model, 2.9, 3, 1).unwrap();
        assert!(lat.continuation(&model, &[0.0; 5], 2, 2, 1.0).is_err());
    }

    #[test]
    fn nearest_node_clamps_outside() {
        let model = RegimeModel::nbp_two_regime();
        let lat = PriceLattice::build(&model, 2.9, 10, 2).unwrap();
        let (i, clamped) = lat.nearest_node(10, lat.log_price(10, 3) + 0.3 * lat.spacing());
        assert_eq!((i, clamped), (3, false));
        assert_eq!(lat.nearest_node(10, 100.0), (lat.node_count(10) - 1, true));
        assert_eq!(lat.nearest_node(10, -100.0), (0, true));
    }
}
