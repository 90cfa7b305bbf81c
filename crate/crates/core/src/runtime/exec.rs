use std::collections::{BTreeMap, HashSet};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use super::graph::{DataId, Direction, TaskGraph, TaskId, TaskInputs, TaskNode};
use super::scheduler::{schedule_next, NodeState, ReadyTask};
use super::trace::TraceEvent;
use super::RuntimeError;
use crate::config::NodeProfile;
use crate::store::{BlockRef, BlockStore, StoreMetrics, ELEMENT_BYTES};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskFailure {
    pub task_id: TaskId,
    pub op_name: String,
    pub message: String,
}

/// Outcome of [`Runtime::run`].
#[derive(Debug, Clone)]
pub struct RunReport {
    /// One event per executed task, in completion order.
    pub trace: Vec<TraceEvent>,
    /// Store counter deltas over the run.
    pub metrics: StoreMetrics,
    /// Per-node high-water mark of declared memory of running tasks.
    pub peak_declared_bytes: Vec<u64>,
    /// Per task: bytes of tensors it held (inputs, accumulator and returns).
    pub footprint_bytes: Vec<u64>,
    pub wall_ns: u64,
    pub failed: Option<TaskFailure>,
    pub not_run: Vec<TaskId>,
    data: Vec<Option<BlockRef>>,
}

impl RunReport {
    pub fn is_ok(&self) -> bool {
        self.failed.is_none()
    }

    /// Final stored version of a datum; `None` for deleted transients.
    pub fn output(&self, d: DataId) -> Option<&BlockRef> {
        self.data.get(d.0).and_then(Option::as_ref)
    }

    pub fn into_result(self) -> Result<Self, RuntimeError> {
        match &self.failed {
            None => Ok(self),
            Some(f) => Err(RuntimeError::TaskFailed {
                task_id: f.task_id,
                op_name: f.op_name.clone(),
                message: f.message.clone(),
                not_run: self.not_run.len(),
            }),
        }
    }

    pub fn peak_declared(&self) -> u64 {
        self.peak_declared_bytes.iter().copied().max().unwrap_or(0)
    }
}

/// Executes task graphs over simulated nodes sharing one worker pool.
#[derive(Debug, Clone)]
pub struct Runtime {
    nodes: Vec<NodeProfile>,
    workers: usize,
    store: Arc<BlockStore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Waiting(usize),
    Ready,
    Running,
    Done,
    Failed,
    NotRun,
}

struct State {
    status: Vec<Status>,
    ready: BTreeMap<TaskId, ReadyTask>,
    nodes: Vec<NodeState>,
    declared: Vec<u64>,
    peak_declared: Vec<u64>,
    locked: HashSet<DataId>,
    current: Vec<Option<BlockRef>>,
    produced: Vec<bool>,
    pending_refs: Vec<usize>,
    footprint: Vec<u64>,
    remaining: usize,
    running: usize,
    aborted: bool,
    failure: Option<TaskFailure>,
    trace: Vec<TraceEvent>,
}

struct Assignment {
    task: TaskId,
    node: usize,
    inputs: Vec<BlockRef>,
    acc: Option<BlockRef>,
}

struct Completed {
    acc: Option<BlockRef>,
    returns: Vec<BlockRef>,
    footprint: u64,
}

impl Runtime {
    pub fn new(nodes: Vec<NodeProfile>, workers: usize, store: Arc<BlockStore>) -> Self {
        assert!(!nodes.is_empty(), "runtime needs at least one node");
        assert!(nodes.len() <= store.nodes(), "store has fewer nodes than the runtime");
        Self {
            nodes,
            workers: workers.max(1),
            store,
        }
    }

    pub fn nodes(&self) -> &[NodeProfile] {
        &self.nodes
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn store(&self) -> &Arc<BlockStore> {
        &self.store
    }

    /// Empty graph bound to this runtime's nodes.
    pub fn graph(&self) -> TaskGraph {
        TaskGraph::new(self.nodes.clone())
    }

    /// Runs every task of `graph`, honouring dependencies, commutative
    /// exclusion and per-node core and memory budgets. A failing task aborts
    /// the run; tasks not yet started are reported as not run.
    pub fn run(&self, graph: &TaskGraph) -> Result<RunReport, RuntimeError> {
        if graph.nodes() != self.nodes.as_slice() {
            return Err(RuntimeError::NodeMismatch);
        }
        let started = Instant::now();
        let before = self.store.metrics();
        let n = graph.len();

        let mut dependents = vec![Vec::new(); n];
        for t in graph.tasks() {
            for d in &t.deps {
                dependents[d.0].push(t.id);
            }
        }
        let mut pending_refs = vec![0; graph.data_count()];
        for t in graph.tasks() {
            for d in t.data() {
                pending_refs[d.0] += 1;
            }
        }

        let mut state = State {
            status: graph.tasks().iter().map(|t| Status::Waiting(t.deps.len())).collect(),
            ready: BTreeMap::new(),
            nodes: self
                .nodes
                .iter()
                .map(|p| NodeState {
                    free_cores: p.cores,
                    free_memory: p.memory_bytes,
                })
                .collect(),
            declared: vec![0; self.nodes.len()],
            peak_declared: vec![0; self.nodes.len()],
            locked: HashSet::new(),
            current: graph.data.iter().map(|s| s.initial.clone()).collect(),
            produced: vec![false; graph.data_count()],
            pending_refs,
            footprint: vec![0; n],
            remaining: n,
            running: 0,
            aborted: false,
            failure: None,
            trace: Vec::with_capacity(n),
        };
        for t in graph.tasks() {
            if t.deps.is_empty() {
                self.make_ready(&mut state, t);
            }
        }

        let shared = (Mutex::new(state), Condvar::new());
        let workers = self.workers.min(n.max(1));
        let result: Result<(), RuntimeError> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|_| s.spawn(|| self.worker(graph, &dependents, &shared)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        });
        result?;

        let state = shared.0.into_inner().unwrap();
        let not_run = state
            .status
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Status::NotRun)
            .map(|(i, _)| TaskId(i))
            .collect();
        Ok(RunReport {
            trace: state.trace,
            metrics: self.store.metrics().since(&before),
            peak_declared_bytes: state.peak_declared,
            footprint_bytes: state.footprint,
            wall_ns: started.elapsed().as_nanos() as u64,
            failed: state.failure,
            not_run,
            data: state.current,
        })
    }

    fn make_ready(&self, state: &mut State, task: &TaskNode) {
        let mut local_bytes = vec![0; self.nodes.len()];
        for p in &task.params {
            if let Some(r) = &state.current[p.data.0] {
                let home = self.store.home_of(r.block_id).unwrap_or(r.home_node);
                if let Some(slot) = local_bytes.get_mut(home) {
                    *slot += r.bytes;
                }
            }
        }
        state.status[task.id.0] = Status::Ready;
        state.ready.insert(
            task.id,
            ReadyTask {
                id: task.id,
                cores: task.constraints.cores,
                memory_bytes: task.constraints.memory_bytes,
                local_bytes,
                preferred_node: task.preferred_node,
            },
        );
    }

    fn worker(
        &self,
        graph: &TaskGraph,
        dependents: &[Vec<TaskId>],
        (lock, cvar): &(Mutex<State>, Condvar),
    ) -> Result<(), RuntimeError> {
        loop {
            let assignment = {
                let mut st = lock.lock().unwrap();
                loop {
                    if st.remaining == 0 {
                        cvar.notify_all();
                        return Ok(());
                    }
                    if st.aborted {
                        if st.running == 0 {
                            for s in st.status.iter_mut() {
                                if matches!(s, Status::Waiting(_) | Status::Ready) {
                                    *s = Status::NotRun;
                                }
                            }
                            st.ready.clear();
                            st.remaining = 0;
                            cvar.notify_all();
                            return Ok(());
                        }
                    } else if let Some(a) = self.assign(graph, &mut st) {
                        break a;
                    } else if st.running == 0 {
                        // nothing running and nothing placeable: cannot happen for
                        // graphs accepted by `TaskGraph::submit`
                        st.aborted = true;
                        cvar.notify_all();
                        return Err(RuntimeError::NoProgress {
                            remaining: st.remaining,
                        });
                    }
                    st = cvar.wait(st).unwrap();
                }
            };

            let task = graph.get(assignment.task);
            let (event, outcome) = self.execute(graph, task, &assignment);

            let mut st = lock.lock().unwrap();
            let mut doomed = Vec::new();
            self.finish(graph, dependents, &mut st, task, &assignment, event, outcome, &mut doomed);
            drop(st);
            cvar.notify_all();
            for r in doomed {
                // a stale version already gone is harmless
                let _ = self.store.delete(&r);
            }
        }
    }

    fn assign(&self, graph: &TaskGraph, st: &mut State) -> Option<Assignment> {
        let eligible = st.ready.values().filter(|r| {
            graph
                .get(r.id)
                .accumulator()
                .map_or(true, |p| p.direction != Direction::Commutative || !st.locked.contains(&p.data))
        });
        let (id, node) = schedule_next(eligible, &st.nodes)?;
        let ready = st.ready.remove(&id).unwrap();
        let task = graph.get(id);
        st.status[id.0] = Status::Running;
        st.running += 1;
        st.nodes[node].free_cores -= ready.cores;
        st.nodes[node].free_memory -= ready.memory_bytes;
        st.declared[node] += ready.memory_bytes;
        st.peak_declared[node] = st.peak_declared[node].max(st.declared[node]);
        if let Some(p) = task.accumulator() {
            if p.direction == Direction::Commutative {
                st.locked.insert(p.data);
            }
        }
        let current = |d: DataId| st.current[d.0].clone().expect("dependencies produce data first");
        Some(Assignment {
            task: id,
            node,
            inputs: task.inputs().map(current).collect(),
            acc: task.accumulator().map(|p| current(p.data)),
        })
    }

    fn execute(&self, graph: &TaskGraph, task: &TaskNode, a: &Assignment) -> (TraceEvent, Result<Completed, String>) {
        let since = |t: Instant| t.duration_since(graph.epoch).as_nanos() as u64;
        let t_start = Instant::now();
        let mut event = TraceEvent {
            task_id: task.id.0,
            op_name: task.op_name.clone(),
            node: a.node,
            cores: task.constraints.cores,
            t_submit: task.submit_ns,
            t_start: since(t_start),
            t_end: 0,
            deser_ns: 0,
            user_ns: 0,
            ser_ns: 0,
            bytes_in: 0,
            bytes_out: 0,
        };

        let outcome = (|| {
            let mut footprint = 0;
            let mut load = |r: &BlockRef| {
                event.bytes_in += r.bytes;
                self.store.get(a.node, r).map_err(|e| e.to_string())
            };
            let inputs = a.inputs.iter().map(&mut load).collect::<Result<Vec<_>, _>>()?;
            let acc = a.acc.as_ref().map(&mut load).transpose()?;
            let acc_in = acc.as_ref().map_or(0, |t| t.len() as u64);
            footprint += inputs.iter().map(|t| t.len() as u64).sum::<u64>();
            let t_user = Instant::now();
            event.deser_ns = t_user.duration_since(t_start).as_nanos() as u64;

            let out = (task.op)(TaskInputs {
                inputs,
                acc,
                cores: task.constraints.cores,
            })?;
            let t_ser = Instant::now();
            event.user_ns = t_ser.duration_since(t_user).as_nanos() as u64;

            if out.acc.is_some() != a.acc.is_some() {
                return Err("task did not hand back its accumulator".to_string());
            }
            if out.returns.len() != task.returns.len() {
                return Err(format!(
                    "task returned {} values, {} declared",
                    out.returns.len(),
                    task.returns.len()
                ));
            }
            let acc_out = out.acc.as_ref().map_or(0, |t| t.len() as u64);
            footprint += acc_in.max(acc_out) + out.returns.iter().map(|t| t.len() as u64).sum::<u64>();

            let mut save = |t: &crate::dense::DenseTensor| {
                let r = self.store.put(a.node, t).map_err(|e| e.to_string())?;
                event.bytes_out += r.bytes;
                Ok::<_, String>(r)
            };
            let acc = out.acc.as_ref().map(&mut save).transpose()?;
            let returns = out.returns.iter().map(&mut save).collect::<Result<Vec<_>, _>>()?;
            event.ser_ns = t_ser.elapsed().as_nanos() as u64;
            Ok(Completed {
                acc,
                returns,
                footprint: footprint * ELEMENT_BYTES,
            })
        })();

        event.t_end = since(Instant::now());
        (event, outcome)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        graph: &TaskGraph,
        dependents: &[Vec<TaskId>],
        st: &mut State,
        task: &TaskNode,
        a: &Assignment,
        event: TraceEvent,
        outcome: Result<Completed, String>,
        doomed: &mut Vec<BlockRef>,
    ) {
        st.running -= 1;
        st.remaining -= 1;
        st.nodes[a.node].free_cores += task.constraints.cores;
        st.nodes[a.node].free_memory += task.constraints.memory_bytes;
        st.declared[a.node] -= task.constraints.memory_bytes;
        if let Some(p) = task.accumulator() {
            st.locked.remove(&p.data);
        }
        st.trace.push(event);

        let done = match outcome {
            Ok(done) => done,
            Err(message) => {
                st.status[task.id.0] = Status::Failed;
                st.aborted = true;
                if st.failure.is_none() {
                    st.failure = Some(TaskFailure {
                        task_id: task.id,
                        op_name: task.op_name.clone(),
                        message,
                    });
                }
                return;
            }
        };
        st.footprint[task.id.0] = done.footprint;
        st.status[task.id.0] = Status::Done;

        if let (Some(p), Some(new)) = (task.accumulator(), done.acc) {
            let old = st.current[p.data.0].replace(new);
            if st.produced[p.data.0] {
                doomed.extend(old);
            }
            st.produced[p.data.0] = true;
        }
        for (d, r) in task.returns.iter().zip(done.returns) {
            st.current[d.0] = Some(r);
            st.produced[d.0] = true;
        }
        for d in task.data() {
            st.pending_refs[d.0] -= 1;
            if st.pending_refs[d.0] == 0 && graph.data[d.0].transient && st.produced[d.0] {
                doomed.extend(st.current[d.0].take());
            }
        }

        for &next in &dependents[task.id.0] {
            if let Status::Waiting(k) = st.status[next.0] {
                if k == 1 {
                    self.make_ready(st, graph.get(next));
                } else {
                    st.status[next.0] = Status::Waiting(k - 1);
                }
            }
        }
    }
}
