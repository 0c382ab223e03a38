pub mod bench;
pub mod cli;
pub mod error;
pub mod fem;
pub mod grid;
pub mod linalg;
pub mod nonlinear;
pub mod offline;
pub mod online;
pub mod problems;
pub mod snapshots;
pub mod store;
pub mod sparse;
