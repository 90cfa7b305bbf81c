use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::RuntimeError;
use crate::config::NodeProfile;
use crate::dense::DenseTensor;
use crate::store::BlockRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub usize);

/// Logical datum tracked by the runtime; each write creates a new stored version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DataId(pub usize);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for DataId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    In,
    InOut,
    /// Read-modify-write whose siblings may run in any order, one at a time.
    Commutative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Param {
    pub data: DataId,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    pub cores: usize,
    pub memory_bytes: u64,
}

/// Deserialized arguments handed to a task body.
#[derive(Debug)]
pub struct TaskInputs {
    /// `IN` parameters in declaration order.
    pub inputs: Vec<DenseTensor>,
    /// Current value of the `INOUT`/`COMMUTATIVE` parameter, if any.
    pub acc: Option<DenseTensor>,
    pub cores: usize,
}

#[derive(Debug, Default)]
pub struct TaskOutputs {
    pub acc: Option<DenseTensor>,
    pub returns: Vec<DenseTensor>,
}

pub type TaskFn = Arc<dyn Fn(TaskInputs) -> Result<TaskOutputs, String> + Send + Sync>;

#[derive(Clone)]
pub struct TaskNode {
    pub id: TaskId,
    pub op_name: String,
    pub params: Vec<Param>,
    /// Data produced fresh by this task.
    pub returns: Vec<DataId>,
    pub constraints: Constraints,
    pub preferred_node: Option<usize>,
    /// Tasks that must finish first.
    pub deps: Vec<TaskId>,
    pub submit_ns: u64,
    pub(crate) op: TaskFn,
}

impl fmt::Debug for TaskNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskNode")
            .field("id", &self.id)
            .field("op_name", &self.op_name)
            .field("params", &self.params)
            .field("returns", &self.returns)
            .field("constraints", &self.constraints)
            .field("deps", &self.deps)
            .finish()
    }
}

impl TaskNode {
    pub fn accumulator(&self) -> Option<Param> {
        self.params.iter().copied().find(|p| p.direction != Direction::In)
    }

    pub fn inputs(&self) -> impl Iterator<Item = DataId> + '_ {
        self.params
            .iter()
            .filter(|p| p.direction == Direction::In)
            .map(|p| p.data)
    }

    /// Every datum this task touches.
    pub fn data(&self) -> impl Iterator<Item = DataId> + '_ {
        self.params.iter().map(|p| p.data).chain(self.returns.iter().copied())
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct DataSlot {
    pub initial: Option<BlockRef>,
    pub transient: bool,
    // dependency inference state
    writers: Vec<TaskId>,
    readers: Vec<TaskId>,
    commutative_open: bool,
    before_commutative: Vec<TaskId>,
}

/// Dataflow graph built incrementally from task submissions. Edges are
/// inferred from parameter directions on shared data.
pub struct TaskGraph {
    nodes: Vec<NodeProfile>,
    pub(crate) tasks: Vec<TaskNode>,
    pub(crate) data: Vec<DataSlot>,
    pub(crate) epoch: Instant,
}

impl TaskGraph {
    pub fn new(nodes: Vec<NodeProfile>) -> Self {
        Self {
            nodes,
            tasks: Vec::new(),
            data: Vec::new(),
            epoch: Instant::now(),
        }
    }

    pub fn nodes(&self) -> &[NodeProfile] {
        &self.nodes
    }

    pub fn tasks(&self) -> &[TaskNode] {
        &self.tasks
    }

    pub fn get(&self, id: TaskId) -> &TaskNode {
        &self.tasks[id.0]
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn data_count(&self) -> usize {
        self.data.len()
    }

    /// Registers an existing stored block as a datum.
    pub fn data(&mut self, block: BlockRef) -> DataId {
        self.data.push(DataSlot {
            initial: Some(block),
            ..DataSlot::default()
        });
        DataId(self.data.len() - 1)
    }

    /// Marks a datum for deletion once no unfinished task references it.
    pub fn set_transient(&mut self, d: DataId) {
        self.data[d.0].transient = true;
    }

    pub fn task(&mut self, op_name: impl Into<String>) -> TaskBuilder<'_> {
        TaskBuilder {
            graph: self,
            op_name: op_name.into(),
            params: Vec::new(),
            returns: 0,
            constraints: Constraints {
                cores: 1,
                memory_bytes: 1,
            },
            preferred_node: None,
        }
    }

    fn submit(&mut self, b: PendingTask) -> Result<(TaskId, Vec<DataId>), RuntimeError> {
        let id = TaskId(self.tasks.len());
        let c = b.constraints;
        if c.cores == 0 || c.memory_bytes == 0 {
            return Err(RuntimeError::InvalidTask {
                op_name: b.op_name,
                reason: "cores and memory must be positive".into(),
            });
        }
        if !self
            .nodes
            .iter()
            .any(|n| n.cores >= c.cores && n.memory_bytes >= c.memory_bytes)
        {
            return Err(RuntimeError::Unschedulable {
                op_name: b.op_name,
                cores: c.cores,
                memory_bytes: c.memory_bytes,
            });
        }
        let mut seen = BTreeSet::new();
        let mut accumulators = 0;
        for p in &b.params {
            let slot = self.data.get(p.data.0).ok_or_else(|| RuntimeError::InvalidTask {
                op_name: b.op_name.clone(),
                reason: format!("unknown datum {}", p.data),
            })?;
            if !seen.insert(p.data) {
                return Err(RuntimeError::InvalidTask {
                    op_name: b.op_name.clone(),
                    reason: format!("datum {} passed twice", p.data),
                });
            }
            if slot.initial.is_none() && slot.writers.is_empty() {
                return Err(RuntimeError::InvalidTask {
                    op_name: b.op_name.clone(),
                    reason: format!("datum {} is read before it is written", p.data),
                });
            }
            if p.direction != Direction::In {
                accumulators += 1;
            }
        }
        if accumulators > 1 {
            return Err(RuntimeError::InvalidTask {
                op_name: b.op_name,
                reason: "more than one INOUT/COMMUTATIVE parameter".into(),
            });
        }

        let mut deps = BTreeSet::new();
        for p in &b.params {
            let slot = &mut self.data[p.data.0];
            match p.direction {
                Direction::In => {
                    deps.extend(slot.writers.iter().copied());
                    slot.readers.push(id);
                }
                Direction::InOut => {
                    deps.extend(slot.writers.iter().copied());
                    deps.extend(slot.readers.iter().copied());
                    slot.writers = vec![id];
                    slot.readers.clear();
                    slot.commutative_open = false;
                }
                Direction::Commutative => {
                    if !slot.commutative_open {
                        let mut before: Vec<TaskId> = slot.writers.clone();
                        before.extend(slot.readers.iter().copied());
                        slot.before_commutative = before;
                        slot.writers.clear();
                        slot.readers.clear();
                        slot.commutative_open = true;
                    }
                    deps.extend(slot.before_commutative.iter().copied());
                    slot.writers.push(id);
                }
            }
        }

        let returns: Vec<DataId> = (0..b.returns)
            .map(|_| {
                self.data.push(DataSlot {
                    writers: vec![id],
                    ..DataSlot::default()
                });
                DataId(self.data.len() - 1)
            })
            .collect();

        self.tasks.push(TaskNode {
            id,
            op_name: b.op_name,
            params: b.params,
            returns: returns.clone(),
            constraints: c,
            preferred_node: b.preferred_node,
            deps: deps.into_iter().collect(),
            submit_ns: self.epoch.elapsed().as_nanos() as u64,
            op: b.op,
        });
        Ok((id, returns))
    }
}

struct PendingTask {
    op_name: String,
    params: Vec<Param>,
    returns: usize,
    constraints: Constraints,
    preferred_node: Option<usize>,
    op: TaskFn,
}

/// Builder returned by [`TaskGraph::task`].
pub struct TaskBuilder<'g> {
    graph: &'g mut TaskGraph,
    op_name: String,
    params: Vec<Param>,
    returns: usize,
    constraints: Constraints,
    preferred_node: Option<usize>,
}

impl TaskBuilder<'_> {
    pub fn input(mut self, data: DataId) -> Self {
        self.params.push(Param {
            data,
            direction: Direction::In,
        });
        self
    }

    pub fn inout(mut self, data: DataId) -> Self {
        self.params.push(Param {
            data,
            direction: Direction::InOut,
        });
        self
    }

    pub fn commutative(mut self, data: DataId) -> Self {
        self.params.push(Param {
            data,
            direction: Direction::Commutative,
        });
        self
    }

    pub fn returns(mut self, count: usize) -> Self {
        self.returns = count;
        self
    }

    pub fn constraints(mut self, cores: usize, memory_bytes: u64) -> Self {
        self.constraints = Constraints { cores, memory_bytes };
        self
    }

    pub fn prefer(mut self, node: usize) -> Self {
        self.preferred_node = Some(node);
        self
    }

    /// Submits the task with body `op`. Returns its id and the ids of the data it returns.
    pub fn submit<F>(self, op: F) -> Result<(TaskId, Vec<DataId>), RuntimeError>
    where
        F: Fn(TaskInputs) -> Result<TaskOutputs, String> + Send + Sync + 'static,
    {
        self.graph.submit(PendingTask {
            op_name: self.op_name,
            params: self.params,
            returns: self.returns,
            constraints: self.constraints,
            preferred_node: self.preferred_node,
            op: Arc::new(op),
        })
    }
}
