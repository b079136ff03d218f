pub mod commands;
pub mod config;
pub mod contract;
pub mod error;
pub mod grid;
pub mod lattice;
pub mod lsmc;
pub mod market;
pub mod simulate;
pub mod valuation;
