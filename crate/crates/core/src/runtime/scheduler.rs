use super::graph::TaskId;

/// A task whose dependencies are satisfied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadyTask {
    pub id: TaskId,
    pub cores: usize,
    pub memory_bytes: u64,
    /// Bytes of the task's inputs currently homed on each node.
    pub local_bytes: Vec<u64>,
    pub preferred_node: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeState {
    pub free_cores: usize,
    pub free_memory: u64,
}

/// Picks one `(task, node)` assignment among the ready tasks that fit a
/// node's free cores and memory.
///
/// Preference order: most input bytes already on the node, the task's
/// preferred node, earliest submission, then the node with the most free
/// cores and finally the lowest node index. Tasks that do not fit anywhere
/// are skipped rather than blocking those behind them.
pub fn schedule_next<'a>(
    ready: impl IntoIterator<Item = &'a ReadyTask>,
    nodes: &[NodeState],
) -> Option<(TaskId, usize)> {
    let mut best: Option<((u64, bool, std::cmp::Reverse<TaskId>, usize, std::cmp::Reverse<usize>), TaskId, usize)> = None;
    for task in ready {
        for (n, node) in nodes.iter().enumerate() {
            if task.cores > node.free_cores || task.memory_bytes > node.free_memory {
                continue;
            }
            let key = (
                task.local_bytes.get(n).copied().unwrap_or(0),
                task.preferred_node == Some(n),
                std::cmp::Reverse(task.id),
                node.free_cores,
                std::cmp::Reverse(n),
            );
            if best.as_ref().map_or(true, |b| key > b.0) {
                best = Some((key, task.id, n));
            }
        }
    }
    best.map(|(_, t, n)| (t, n))
}
