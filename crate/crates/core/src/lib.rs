//! Simulation, exact evaluation and combinatorial verification for the
//! residual prophet inequality: `n` independent values are drawn, Nature
//! removes the `k` largest, and a gambler selects one survivor online. The
//! benchmark is the expected `(k+1)`-th largest value.

pub mod distributions;
pub mod engine;
pub mod exact;
pub mod exec;
pub mod iid_analysis;
pub mod instances;
pub mod numeric;
pub mod paired_oracle;
pub mod policies;
pub mod reproduce;

pub use distributions::{Distribution, Instance, QuantileFn};
pub use engine::{ArrivalOrder, InfoModel, RatioEstimate, SimConfig};
pub use exec::ExecMode;
pub use policies::{PolicySpec, TieRule};
