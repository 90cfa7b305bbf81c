//! Out-of-core block tensor contraction.
//!
//! Tensors are split into fixed-shape blocks kept in an on-disk block store.
//! A contraction of two block arrays is planned into tasks that a dataflow
//! runtime schedules over simulated nodes with core and memory budgets.
//! The [`circuit`] module builds tensor networks for quantum circuit
//! amplitudes on top of the same machinery.

pub mod circuit;
pub mod config;
pub mod dense;
mod engine;
pub mod planner;
pub mod runtime;
pub mod store;

pub use config::{EngineConfig, NodeProfile, Strategy, StrategyChoice};
pub use dense::{tensordot, DenseTensor, C32};
pub use engine::Engine;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] dense::TensorError),
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error(transparent)]
    Plan(#[from] planner::PlanError),
    #[error(transparent)]
    Runtime(#[from] runtime::RuntimeError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Trace(#[from] runtime::TraceError),
    #[error(transparent)]
    Circuit(#[from] circuit::CircuitError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
