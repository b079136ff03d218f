//! Simulates regime-switching price paths and prints them as CSV.
//!
//! Usage: `cargo run --release --example price_paths -- [paths] [seed]`

use gas_storage::market::{simulate_price_paths, write_paths_csv, RegimeModel};

fn main() -> gas_storage::error::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let n_paths = args.first().copied().unwrap_or(3) as usize;
    let seed = args.get(1).copied().unwrap_or(42);
    let model = RegimeModel::nbp_two_regime();
    let paths = simulate_price_paths(&model, model.mean(0, 0.0), 0, 250, n_paths, 16, seed)?;
    write_paths_csv(std::io::stdout().lock(), &paths)
}
