pub mod density;
pub mod error;
pub mod fpca;
pub mod frechet;
pub mod grid;
pub mod io;
pub mod kde;
pub mod metrics;
pub mod regression;
pub mod simulation;
pub mod sphere;
pub mod transform;
