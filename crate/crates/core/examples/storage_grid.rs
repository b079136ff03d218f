//! Builds the storage grid for several minimum lengths and prints the
//! gap histogram of the default grid as CSV.

use gas_storage::contract::StorageContract;
use gas_storage::grid::{build_grid, default_merge_tol, StorageGrid};

fn main() -> gas_storage::error::Result<()> {
    let contract = StorageContract::stratton_ridge();
    let tol = default_merge_tol(&contract);
    for min_length in [100, 500, 1500] {
        let grid = build_grid(&contract, min_length, tol)?;
        println!(
            "min_length {min_length}: {} levels, refinement {}, x0 on grid: {}",
            grid.len(),
            grid.refinement(),
            grid.x0_index().is_some()
        );
    }
    let flat = StorageGrid::equidistant(&contract, 530)?;
    println!("equidistant: {} levels", flat.len());
    let grid = build_grid(&contract, 500, tol)?;
    grid.write_gap_histogram_csv(std::io::stdout().lock(), 20)
}
