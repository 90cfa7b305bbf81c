//! Block contraction planning: index classification, pairwise coupling of
//! input blocks, reduction strategy and per-task resource tuning.

mod layout;
mod path;
mod plan;
mod tune;

pub use layout::{labels, BlockArray, BlockLayout, Label};
pub use path::{greedy_path, path_cost, Signature};
pub use plan::{couple, plan, ContractionPlan, ContractionSpec, OutputBlock, PlanSummary};
pub use tune::{memory_elements, tune, BlockShape, TuneConfig, Tuning};

use thiserror::Error;

use crate::config::Strategy;
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("index {label} differs between operands: extents {a_extent}/{b_extent}, blocks {a_block}/{b_block}")]
    Mismatch {
        label: Label,
        a_extent: usize,
        b_extent: usize,
        a_block: usize,
        b_block: usize,
    },
    #[error(
        "infeasible block size for {strategy} reduction: a task needs {required_bytes} bytes \
         ({formula} elements x 8) but a node has {node_memory_bytes}; use smaller blocks"
    )]
    Infeasible {
        strategy: Strategy,
        formula: &'static str,
        required_bytes: u64,
        node_memory_bytes: u64,
    },
    #[error("empty tensor network")]
    EmptyNetwork,
    #[error(transparent)]
    Store(#[from] StoreError),
}
