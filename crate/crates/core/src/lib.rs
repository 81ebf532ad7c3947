pub mod config;
pub mod error;
pub mod expr;
pub mod model;
pub mod scalar;
pub mod simulator;
pub mod objective;
pub mod optimizer;
pub mod systems;
pub mod guards;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Core types with the scalar defaulting to `f64`.
pub type MultimodalSystem<T = f64> = model::MultimodalSystem<T>;
pub type PerformanceMetric<T = f64> = model::PerformanceMetric<T>;
pub type HybridState<T = f64> = model::HybridState<T>;
pub type SwitchingLogic<T = f64> = model::SwitchingLogic<T>;
pub type ExtendedTrajectory<T = f64> = simulator::ExtendedTrajectory<T>;
pub type DwellSchedule<T = f64> = objective::DwellSchedule<T>;
