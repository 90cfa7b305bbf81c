use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::config::{NodeProfile, Strategy, StrategyChoice};
use crate::store::ELEMENT_BYTES;

/// Block element counts of one contraction: free indices of each operand,
/// contracted indices, and the number of contracted block coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockShape {
    pub m_b: u64,
    pub n_b: u64,
    pub k_b: u64,
    pub b_k: u64,
}

/// Elements a single task holds in memory under `strategy`.
///
/// Sequential reduction loads every coupled pair at once:
/// `B_k * k_b * (m_b + n_b) + m_b * n_b`. Tree and commutative tasks only
/// hold one pair and the accumulator: `k_b * (m_b + n_b) + m_b * n_b`.
pub fn memory_elements(strategy: Strategy, m_b: u64, n_b: u64, k_b: u64, b_k: u64) -> u64 {
    let pair = k_b.saturating_mul(m_b.saturating_add(n_b));
    let acc = m_b.saturating_mul(n_b);
    match strategy {
        Strategy::Sequential => b_k.saturating_mul(pair).saturating_add(acc),
        Strategy::Tree | Strategy::Commutative => pair.saturating_add(acc),
    }
}

impl BlockShape {
    pub fn memory_elements(&self, strategy: Strategy) -> u64 {
        memory_elements(strategy, self.m_b, self.n_b, self.k_b, self.b_k)
    }

    pub fn task_bytes(&self, strategy: Strategy) -> u64 {
        self.memory_elements(strategy).saturating_mul(ELEMENT_BYTES)
    }

    /// Bytes of one output block.
    pub fn accumulator_bytes(&self) -> u64 {
        self.m_b.saturating_mul(self.n_b).saturating_mul(ELEMENT_BYTES)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub strategy: StrategyChoice,
    pub bk_threshold: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyChoice::Auto,
            bk_threshold: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tuning {
    pub strategy: Strategy,
    pub cores_per_task: usize,
    /// Declared memory of each contraction task.
    pub task_bytes: u64,
}

const PAIR_FORMULA: &str = "k_b*(m_b+n_b) + m_b*n_b";
const SEQUENTIAL_FORMULA: &str = "B_k*k_b*(m_b+n_b) + m_b*n_b";

fn infeasible(strategy: Strategy, required_bytes: u64, node: NodeProfile) -> PlanError {
    PlanError::Infeasible {
        strategy,
        formula: if strategy == Strategy::Sequential {
            SEQUENTIAL_FORMULA
        } else {
            PAIR_FORMULA
        },
        required_bytes,
        node_memory_bytes: node.memory_bytes,
    }
}

/// Picks the reduction strategy and the smallest core count whose memory
/// share covers the task footprint.
pub fn tune(shape: BlockShape, node: NodeProfile, config: TuneConfig) -> Result<Tuning, PlanError> {
    let pair_bytes = shape.task_bytes(Strategy::Commutative);
    let sequential_bytes = shape.task_bytes(Strategy::Sequential);
    if pair_bytes > node.memory_bytes {
        return Err(match config.strategy.forced() {
            Some(Strategy::Sequential) => infeasible(Strategy::Sequential, sequential_bytes, node),
            forced => infeasible(forced.unwrap_or(Strategy::Commutative), pair_bytes, node),
        });
    }

    let strategy = match config.strategy.forced() {
        Some(Strategy::Sequential) if sequential_bytes > node.memory_bytes => {
            return Err(infeasible(Strategy::Sequential, sequential_bytes, node));
        }
        // tree additions hold two partial blocks and their sum
        Some(Strategy::Tree) if 3 * shape.accumulator_bytes() > node.memory_bytes => {
            return Err(PlanError::Infeasible {
                strategy: Strategy::Tree,
                formula: "3*m_b*n_b",
                required_bytes: 3 * shape.accumulator_bytes(),
                node_memory_bytes: node.memory_bytes,
            });
        }
        Some(s) => s,
        None if shape.b_k <= config.bk_threshold as u64 && sequential_bytes <= node.memory_bytes => {
            Strategy::Sequential
        }
        None => Strategy::Commutative,
    };

    let task_bytes = shape.task_bytes(strategy);
    Ok(Tuning {
        strategy,
        cores_per_task: cores_for(task_bytes, node),
        task_bytes,
    })
}

/// `clamp(ceil(cores * task_bytes / memory), 1, cores)`.
pub(crate) fn cores_for(task_bytes: u64, node: NodeProfile) -> usize {
    let num = node.cores as u128 * task_bytes as u128;
    let cores = num.div_ceil(node.memory_bytes as u128);
    cores.clamp(1, node.cores as u128) as usize
}
