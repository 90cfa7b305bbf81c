//! Single-process dataflow runtime over simulated nodes.
//!
//! Tasks declare each datum they touch as `IN`, `INOUT` or `COMMUTATIVE`;
//! dependencies are inferred from those directions in submission order.
//! Every value passed between tasks goes through the block store, so a
//! task holds only its own parameters in memory.

mod contraction;
mod exec;
mod graph;
mod scheduler;
mod trace;

pub use contraction::{build_contraction_graph, execute_contraction, ContractionGraph, ContractionRun};
pub use exec::{RunReport, Runtime, TaskFailure};
pub use graph::{
    Constraints, DataId, Direction, Param, TaskBuilder, TaskFn, TaskGraph, TaskId, TaskInputs, TaskNode,
    TaskOutputs,
};
pub use scheduler::{schedule_next, NodeState, ReadyTask};
pub use trace::{aggregate, export_trace, read_trace, OpShare, TraceError, TraceEvent};

use thiserror::Error;

use crate::store::StoreError;

/// Upper bound on timestamping overhead assumed by trace consistency checks.
pub const SCHEDULING_EPSILON_NS: u64 = 5_000_000;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("task {op_name} needs {cores} cores and {memory_bytes} bytes, more than any node offers")]
    Unschedulable {
        op_name: String,
        cores: usize,
        memory_bytes: u64,
    },
    #[error("invalid task {op_name}: {reason}")]
    InvalidTask { op_name: String, reason: String },
    #[error("graph was built for a different node set")]
    NodeMismatch,
    #[error("scheduler made no progress with {remaining} tasks left")]
    NoProgress { remaining: usize },
    #[error("task {task_id} ({op_name}) failed: {message}; {not_run} tasks not run")]
    TaskFailed {
        task_id: TaskId,
        op_name: String,
        message: String,
        not_run: usize,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}
