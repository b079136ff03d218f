//! Least-squares Monte Carlo continuation estimates.
//!
//! For each stage and regime the next-stage values along the paths currently
//! in that regime are regressed on monomials of the current price. Every grid
//! level is a separate right-hand side of the same design matrix, so one QR
//! factorization per (stage, regime) serves the whole grid.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StorageError};
use crate::market::PricePath;

/// Condition numbers above this trigger a degree reduction.
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub degree: usize,
    pub standardize: bool,
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec {
            degree: 3,
            standardize: true,
        }
    }
}

impl BasisSpec {
    pub fn functions(&self) -> usize {
        self.degree + 1
    }
}

/// Fit of one regime bucket: `coefficients[x * (degree + 1) + i]` multiplies
/// `((p - shift) / scale)^i` for grid level `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketFit {
    pub degree: usize,
    pub shift: f64,
    pub scale: f64,
    pub coefficients: Vec<f64>,
}

impl BucketFit {
    fn basis(&self, p: f64, out: &mut [f64]) {
        let u = (p - self.shift) / self.scale;
        let mut v = 1.0;
        for o in out.iter_mut() {
            *o = v;
            v *= u;
        }
    }

    fn eval(&self, x: usize, p: f64) -> f64 {
        let nb = self.degree + 1;
        let mut phi = [0.0; 16];
        let phi = &mut phi[..nb];
        self.basis(p, phi);
        let c = &self.coefficients[x * nb..(x + 1) * nb];
        c.iter().zip(phi.iter()).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketDiagnostics {
    pub stage: usize,
    pub regime: usize,
    pub bucket_size: usize,
    pub degree_used: usize,
    pub condition: f64,
    pub fallback: bool,
}

/// Per-regime fits for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub stage: usize,
    pub levels: usize,
    pub buckets: Vec<Option<BucketFit>>,
    pub diagnostics: Vec<BucketDiagnostics>,
}

impl RegressionFit {
    fn bucket(&self, regime: usize) -> Result<&BucketFit> {
        self.buckets
            .get(regime)
            .and_then(|b| b.as_ref())
            .ok_or(StorageError::UncoveredBucket {
                stage: self.stage,
                regime,
            })
    }

    /// Undiscounted continuation estimate at grid level `x`.
    pub fn estimate(&self, x: usize, p: f64, regime: usize) -> Result<f64> {
        if x >= self.levels {
            return Err(StorageError::invalid(format!("grid index {x} out of range")));
        }
        Ok(self.bucket(regime)?.eval(x, p))
    }

    /// Estimates at every grid level, scaled by `factor`.
    pub fn estimate_all(&self, p: f64, regime: usize, factor: f64, out: &mut [f64]) -> Result<()> {
        let b = self.bucket(regime)?;
        let nb = b.degree + 1;
        let mut phi = [0.0; 16];
        let phi = &mut phi[..nb];
        b.basis(p, phi);
        for (o, c) in out.iter_mut().zip(b.coefficients.chunks_exact(nb)) {
            *o = factor * c.iter().zip(phi.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(())
    }
}

/// Arithmetic mean over paths per grid level; `next_values` is `[path * levels + x]`.
pub fn stage0_continuation(next_values: &[f64], levels: usize) -> Vec<f64> {
    let n_paths = next_values.len() / levels.max(1);
    let mut out = vec![0.0; levels];
    if n_paths == 0 {
        return out;
    }
    for row in next_values.chunks_exact(levels) {
        out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
    }
    out.iter_mut().for_each(|o| *o /= n_paths as f64);
    out
}

fn fit_bucket(
    prices: &[f64],
    rows: &[&[f64]],
    levels: usize,
    degree: usize,
    standardize: bool,
) -> Option<(BucketFit, f64)> {
    let n = prices.len();
    let mean = prices.iter().sum::<f64>() / n as f64;
    let var = prices.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    if degree > 0 && !(sd > 0.0) {
        return None;
    }
    let (shift, scale) = if standardize && degree > 0 {
        (mean, sd)
    } else {
        (0.0, 1.0)
    };
    let nb = degree + 1;
    let mut fit = BucketFit {
        degree,
        shift,
        scale,
        coefficients: Vec::new(),
    };
    let mut a = DMatrix::<f64>::zeros(n, nb);
    let mut phi = vec![0.0; nb];
    for (k, &p) in prices.iter().enumerate() {
        fit.basis(p, &mut phi);
        for i in 0..nb {
            a[(k, i)] = phi[i];
        }
    }
    let b = DMatrix::<f64>::from_fn(n, levels, |k, x| rows[k][x]);
    let qr = a.qr();
    let r = qr.r();
    let sv = r.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return None;
    }
    let qtb = qr.q().transpose() * b;
    let coef = r.solve_upper_triangular(&qtb)?;
    if coef.iter().any(|c| !c.is_finite()) {
        return None;
    }
    fit.coefficients = coef.as_slice().to_vec();
    Some((fit, condition))
}

/// Regresses `next_values[path * levels + x]` (values at day `stage + 1`) on
/// the day-`stage` prices, separately per regime.
pub fn fit_continuation(
    paths: &[PricePath],
    next_values: &[f64],
    levels: usize,
    stage: usize,
    regimes: usize,
    basis: BasisSpec,
) -> Result<RegressionFit> {
    if next_values.len() != paths.len() * levels {
        return Err(StorageError::DimensionMismatch {
            context: "regression targets",
            expected: paths.len() * levels,
            actual: next_values.len(),
        });
    }
    if basis.degree >= 16 {
        return Err(StorageError::invalid("basis degree must be below 16"));
    }
    let mut buckets = Vec::with_capacity(regimes);
    let mut diagnostics = Vec::with_capacity(regimes);
    for regime in 0..regimes {
        let mut prices = Vec::new();
        let mut rows: Vec<&[f64]> = Vec::new();
        for (k, path) in paths.iter().enumerate() {
            if path.len() <= stage {
                return Err(StorageError::invalid(format!("path {k} shorter than stage {stage}")));
            }
            if path.regimes[stage] == regime {
                prices.push(path.prices[stage]);
                let row = &next_values[k * levels..(k + 1) * levels];
                if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                    return Err(StorageError::Numeric {
                        stage: stage + 1,
                        index: k * levels + i,
                        message: "non-finite regression target".into(),
                    });
                }
                rows.push(row);
            }
        }
        if prices.is_empty() {
            buckets.push(None);
            diagnostics.push(BucketDiagnostics {
                stage,
                regime,
                bucket_size: 0,
                degree_used: 0,
                condition: f64::NAN,
                fallback: false,
            });
            continue;
        }
        let mut degree = basis.degree;
        while degree > 0 && prices.len() < 2 * (degree + 1) {
            degree -= 1;
        }
        let fitted = loop {
            if let Some(f) = fit_bucket(&prices, &rows, levels, degree, basis.standardize) {
                break f;
            }
            if degree == 0 {
                return Err(StorageError::Numeric {
                    stage,
                    index: regime,
                    message: "constant regression failed".into(),
                });
            }
            degree -= 1;
        };
        diagnostics.push(BucketDiagnostics {
            stage,
            regime,
            bucket_size: prices.len(),
            degree_used: degree,
            condition: fitted.1,
            fallback: degree != basis.degree,
        });
        buckets.push(Some(fitted.0));
    }
    Ok(RegressionFit {
        stage,
        levels,
        buckets,
        diagnostics,
    })
}

/// Stage-0 fit: all paths share the starting state, so the continuation is the path average.
pub fn stage0_fit(next_values: &[f64], levels: usize, regime: usize, regimes: usize, n_paths: usize) -> RegressionFit {
    let mean = stage0_continuation(next_values, levels);
    let mut buckets = vec![None; regimes];
    buckets[regime] = Some(BucketFit {
        degree: 0,
        shift: 0.0,
        scale: 1.0,
        coefficients: mean,
    });
    RegressionFit {
        stage: 0,
        levels,
        buckets,
        diagnostics: vec![BucketDiagnostics {
            stage: 0,
            regime,
            bucket_size: n_paths,
            degree_used: 0,
            condition: 1.0,
            fallback: false,
        }],
    }
}

/// Writes `stage,regime,bucket_size,degree_used,condition` rows.
pub fn write_diagnostics_csv<W: Write>(out: W, fits: &[RegressionFit]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stage", "regime", "bucket_size", "degree_used", "condition"])?;
    for fit in fits {
        for d in &fit.diagnostics {
            w.write_record(&[
                d.stage.to_string(),
                d.regime.to_string(),
                d.bucket_size.to_string(),
                d.degree_used.to_string(),
                d.condition.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
