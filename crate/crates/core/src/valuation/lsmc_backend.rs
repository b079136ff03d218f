use rayon::prelude::*;

use super::{
    check_finite, update_row, BoundRow, LsmcParams, PolicyArtifact, PolicyBounds, PolicyMode, PricePoint, Problem,
    ReachCache, RunDiagnostics, StageObserver, Valuation, ValueSurface,
};
use crate::error::{Result, StorageError};
use crate::lsmc::{fit_continuation, stage0_fit};
use crate::market::{simulate_price_paths, PricePath};

fn points_at(paths: &[PricePath], day: usize) -> Vec<PricePoint> {
    paths
        .iter()
        .map(|p| PricePoint {
            price: p.prices[day],
            log_price: p.log_prices[day],
            regime: p.regimes[day],
        })
        .collect()
}

pub(super) fn run(
    problem: &Problem,
    params: &LsmcParams,
    mode: PolicyMode,
    observer: &mut dyn StageObserver,
) -> Result<Valuation> {
    let Problem {
        model,
        contract,
        grid,
        initial_log_price,
        initial_regime,
    } = *problem;
    if params.paths == 0 {
        return Err(StorageError::invalid("LSMC needs at least one path"));
    }
    let horizon = contract.horizon();
    let regimes = model.num_regimes();
    let levels = grid.len();
    let paths = simulate_price_paths(
        model,
        initial_log_price,
        initial_regime,
        horizon,
        params.paths,
        params.substeps,
        params.seed,
    )?;
    let reach = ReachCache::new(contract, grid)?;
    let mut diagnostics = RunDiagnostics::default();

    let points = points_at(&paths, horizon);
    let mut values = Vec::with_capacity(points.len() * levels);
    for pt in &points {
        values.extend(grid.levels().iter().map(|&x| contract.terminal_reward(x, pt.price)));
    }
    let mut surface = ValueSurface {
        stage: horizon,
        levels,
        points,
        values,
    };
    check_finite(horizon, &surface.values)?;
    observer.observe(&surface, None);

    let mut fits = Vec::with_capacity(horizon);
    let mut bounds = Vec::with_capacity(horizon);
    for n in (0..horizon).rev() {
        let fit = if n == 0 {
            stage0_fit(&surface.values, levels, initial_regime, regimes, paths.len())
        } else {
            fit_continuation(&paths, &surface.values, levels, n, regimes, params.basis)?
        };
        diagnostics.lsmc.extend(fit.diagnostics.iter().cloned());
        let points = points_at(&paths, n);
        let table = reach.at(n);
        let mut values = vec![0.0; points.len() * levels];
        let results: Vec<_> = values
            .par_chunks_mut(levels)
            .zip(points.par_iter())
            .map(|(out, pt)| -> Result<_> {
                let mut u = vec![0.0; levels];
                fit.estimate_all(pt.price, pt.regime, contract.discount(), &mut u)?;
                Ok(update_row(&u, pt, contract, grid, table, mode, out))
            })
            .collect::<Result<_>>()?;
        check_finite(n, &values)?;
        diagnostics.non_unimodal += results.iter().filter(|r| !r.1).count();
        let stage_bounds = (mode == PolicyMode::Threshold).then(|| PolicyBounds {
            stage: n,
            rows: points
                .iter()
                .zip(&results)
                .map(|(pt, (th, _))| {
                    let th = th.expect("threshold mode yields bounds");
                    BoundRow {
                        price: pt.price,
                        log_price: pt.log_price,
                        regime: pt.regime,
                        lower: th.lower,
                        upper: th.upper,
                    }
                })
                .collect(),
        });
        fits.push(fit);
        surface = ValueSurface {
            stage: n,
            levels,
            points,
            values,
        };
        observer.observe(&surface, stage_bounds.as_ref());
        if let Some(b) = stage_bounds {
            bounds.push(b);
        }
    }
    fits.reverse();
    bounds.reverse();
    let value = if horizon == 0 {
        contract.terminal_reward(contract.x0(), problem.initial_price())
    } else {
        grid.interpolate(surface.row(0), contract.x0())?
    };
    Ok(Valuation {
        value,
        mode,
        backend: "lsmc",
        bounds,
        artifact: PolicyArtifact::Lsmc { fits },
        diagnostics,
    })
}
