use rayon::prelude::*;

use super::{
    check_finite, update_row, BoundRow, PolicyArtifact, PolicyBounds, PolicyMode, PricePoint, Problem, ReachCache,
    RunDiagnostics, StageObserver, Valuation, ValueSurface,
};
use crate::error::Result;
use crate::lattice::PriceLattice;

pub(super) fn points_at(problem: &Problem, lattice: &PriceLattice, day: usize) -> Vec<PricePoint> {
    let regimes = problem.model.num_regimes();
    (0..lattice.node_count(day))
        .flat_map(|i| {
            let y = lattice.log_price(day, i);
            (0..regimes).map(move |r| PricePoint {
                price: problem.model.price(y),
                log_price: y,
                regime: r,
            })
        })
        .collect()
}

pub(super) fn terminal_surface(problem: &Problem, lattice: &PriceLattice) -> ValueSurface {
    let n = problem.contract.horizon();
    let levels = problem.grid.len();
    let points = points_at(problem, lattice, n);
    let mut values = Vec::with_capacity(points.len() * levels);
    for pt in &points {
        values.extend(
            problem
                .grid
                .levels()
                .iter()
                .map(|&x| problem.contract.terminal_reward(x, pt.price)),
        );
    }
    ValueSurface {
        stage: n,
        levels,
        points,
        values,
    }
}

pub(super) fn run(
    problem: &Problem,
    substeps: usize,
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
    let horizon = contract.horizon();
    let lattice = PriceLattice::build(model, initial_log_price, horizon, substeps)?;
    let levels = grid.len();
    let reach = ReachCache::new(contract, grid)?;
    let mut diagnostics = RunDiagnostics {
        clamp: Some(lattice.clamp_stats()),
        ..Default::default()
    };
    let mut surface = terminal_surface(problem, &lattice);
    check_finite(horizon, &surface.values)?;
    observer.observe(&surface, None);
    let mut bounds = Vec::new();
    let mut continuation = Vec::new();
    for n in (0..horizon).rev() {
        let u = lattice.continuation(model, &surface.values, levels, n, contract.discount())?;
        check_finite(n, &u)?;
        let points = points_at(problem, &lattice, n);
        let table = reach.at(n);
        let mut values = vec![0.0; u.len()];
        let results: Vec<_> = values
            .par_chunks_mut(levels)
            .zip(u.par_chunks(levels))
            .zip(points.par_iter())
            .map(|((out, u), pt)| update_row(u, pt, contract, grid, table, mode, out))
            .collect();
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
        if mode.is_bangbang() {
            continuation.push(u.iter().map(|&v| v as f32).collect::<Vec<f32>>());
        }
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
    bounds.reverse();
    continuation.reverse();
    let value = if horizon == 0 {
        contract.terminal_reward(contract.x0(), problem.initial_price())
    } else {
        grid.interpolate(surface.row(initial_regime), contract.x0())?
    };
    Ok(Valuation {
        value,
        mode,
        backend: "tree",
        bounds,
        artifact: PolicyArtifact::Lattice { lattice, continuation },
        diagnostics,
    })
}
