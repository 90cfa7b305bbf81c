use serde::{Deserialize, Serialize};

use super::layout::{BlockLayout, Label};
use super::tune::{tune, BlockShape, TuneConfig};
use super::PlanError;
use crate::config::{NodeProfile, Strategy};
use crate::dense::next_index;

/// Two operand layouts with their indices classified.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractionSpec {
    pub a: BlockLayout,
    pub b: BlockLayout,
    /// Shared indices, in the order they appear in `a`.
    pub contracted: Vec<Label>,
    pub free_a: Vec<Label>,
    pub free_b: Vec<Label>,
}

impl ContractionSpec {
    /// Every label shared by `a` and `b` is contracted.
    pub fn new(a: BlockLayout, b: BlockLayout) -> Result<Self, PlanError> {
        let mut contracted = Vec::new();
        let mut free_a = Vec::new();
        for (i, label) in a.labels().iter().enumerate() {
            match b.position(label) {
                Some(j) => {
                    let (ga, gb) = (a.global_extents()[i], b.global_extents()[j]);
                    let (ba, bb) = (a.block_extents()[i], b.block_extents()[j]);
                    if ga != gb || ba != bb {
                        return Err(PlanError::Mismatch {
                            label: label.clone(),
                            a_extent: ga,
                            b_extent: gb,
                            a_block: ba,
                            b_block: bb,
                        });
                    }
                    contracted.push(label.clone());
                }
                None => free_a.push(label.clone()),
            }
        }
        let free_b = b
            .labels()
            .iter()
            .filter(|l| a.position(l).is_none())
            .cloned()
            .collect();
        Ok(Self {
            a,
            b,
            contracted,
            free_a,
            free_b,
        })
    }

    /// Layout of the result: free indices of `a`, then those of `b`.
    pub fn output_layout(&self) -> BlockLayout {
        let mut labels = Vec::new();
        let mut global = Vec::new();
        let mut block = Vec::new();
        for (layout, free) in [(&self.a, &self.free_a), (&self.b, &self.free_b)] {
            for l in free {
                let p = layout.position(l).unwrap();
                labels.push(l.clone());
                global.push(layout.global_extents()[p]);
                block.push(layout.block_extents()[p]);
            }
        }
        BlockLayout::new(labels, global, block).expect("derived from valid layouts")
    }

    /// `(dim in a, dim in b)` for every contracted label.
    pub fn axes(&self) -> Vec<(usize, usize)> {
        self.contracted
            .iter()
            .map(|l| (self.a.position(l).unwrap(), self.b.position(l).unwrap()))
            .collect()
    }

    pub fn shape(&self) -> BlockShape {
        let block_product = |layout: &BlockLayout, set: &[Label]| -> u64 {
            set.iter()
                .map(|l| layout.block_extents()[layout.position(l).unwrap()] as u64)
                .product()
        };
        let b_k = self
            .contracted
            .iter()
            .map(|l| self.a.grid()[self.a.position(l).unwrap()] as u64)
            .product();
        BlockShape {
            m_b: block_product(&self.a, &self.free_a),
            n_b: block_product(&self.b, &self.free_b),
            k_b: block_product(&self.a, &self.contracted),
            b_k,
        }
    }
}

/// Coupled input block pairs contributing to one output block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputBlock {
    pub coord: Vec<usize>,
    /// `(a grid coordinate, b grid coordinate)`, one per contracted block coordinate.
    pub pairs: Vec<(Vec<usize>, Vec<usize>)>,
}

/// Pairs up input blocks for every output block. Output blocks and the
/// pairs within each are in lexicographic coordinate order.
pub fn couple(spec: &ContractionSpec) -> Vec<OutputBlock> {
    let a_grid = spec.a.grid();
    let pos_a = |l: &Label| spec.a.position(l).unwrap();
    let pos_b = |l: &Label| spec.b.position(l).unwrap();
    let contracted_grid: Vec<usize> = spec.contracted.iter().map(|l| a_grid[pos_a(l)]).collect();
    let out_layout = spec.output_layout();
    let n_free_a = spec.free_a.len();

    out_layout
        .coords()
        .into_iter()
        .map(|out| {
            let mut a_coord = vec![0; spec.a.order()];
            let mut b_coord = vec![0; spec.b.order()];
            for (l, &c) in spec.free_a.iter().zip(&out[..n_free_a]) {
                a_coord[pos_a(l)] = c;
            }
            for (l, &c) in spec.free_b.iter().zip(&out[n_free_a..]) {
                b_coord[pos_b(l)] = c;
            }
            let mut pairs = Vec::new();
            let mut k = vec![0; contracted_grid.len()];
            loop {
                for (l, &c) in spec.contracted.iter().zip(&k) {
                    a_coord[pos_a(l)] = c;
                    b_coord[pos_b(l)] = c;
                }
                pairs.push((a_coord.clone(), b_coord.clone()));
                if !next_index(&mut k, &contracted_grid) {
                    break;
                }
            }
            OutputBlock { coord: out, pairs }
        })
        .collect()
}

/// Full recipe for one block contraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractionPlan {
    pub spec: ContractionSpec,
    pub shape: BlockShape,
    pub outputs: Vec<OutputBlock>,
    pub strategy: Strategy,
    pub cores_per_task: usize,
    pub task_bytes: u64,
}

pub fn plan(spec: ContractionSpec, node: NodeProfile, config: TuneConfig) -> Result<ContractionPlan, PlanError> {
    let shape = spec.shape();
    let tuning = tune(shape, node, config)?;
    let outputs = couple(&spec);
    Ok(ContractionPlan {
        spec,
        shape,
        outputs,
        strategy: tuning.strategy,
        cores_per_task: tuning.cores_per_task,
        task_bytes: tuning.task_bytes,
    })
}

impl ContractionPlan {
    pub fn b_k(&self) -> usize {
        self.shape.b_k as usize
    }

    /// With a single contracted block coordinate every strategy collapses
    /// to one contraction task per output block.
    pub fn effective_strategy(&self) -> Strategy {
        if self.b_k() == 1 {
            Strategy::Sequential
        } else {
            self.strategy
        }
    }

    /// Contraction tasks: one per output block for sequential reduction,
    /// one per coupled pair otherwise.
    pub fn task_count(&self) -> usize {
        match self.effective_strategy() {
            Strategy::Sequential => self.outputs.len(),
            Strategy::Tree | Strategy::Commutative => self.outputs.len() * self.b_k(),
        }
    }

    /// All tasks submitted to the runtime, counting accumulator
    /// initialisation (commutative) and additions (tree).
    pub fn graph_task_count(&self) -> usize {
        let bk = self.b_k();
        self.outputs.len()
            * match self.effective_strategy() {
                Strategy::Sequential => 1,
                Strategy::Commutative => bk + 1,
                Strategy::Tree => 2 * bk - 1,
            }
    }

    pub fn summary(&self) -> PlanSummary {
        let side = |l: &BlockLayout| LayoutSummary {
            labels: l.labels().to_vec(),
            global_extents: l.global_extents().to_vec(),
            block_extents: l.block_extents().to_vec(),
            grid: l.grid(),
        };
        PlanSummary {
            a: side(&self.spec.a),
            b: side(&self.spec.b),
            output: side(&self.spec.output_layout()),
            contracted: self.spec.contracted.clone(),
            m_b: self.shape.m_b,
            n_b: self.shape.n_b,
            k_b: self.shape.k_b,
            b_k: self.shape.b_k,
            strategy: self.effective_strategy(),
            cores_per_task: self.cores_per_task,
            task_count: self.task_count(),
            graph_task_count: self.graph_task_count(),
            bytes_per_task: self.task_bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutSummary {
    pub labels: Vec<Label>,
    pub global_extents: Vec<usize>,
    pub block_extents: Vec<usize>,
    pub grid: Vec<usize>,
}

/// JSON form of a plan, as written by `--dump-plan`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub a: LayoutSummary,
    pub b: LayoutSummary,
    pub output: LayoutSummary,
    pub contracted: Vec<Label>,
    pub m_b: u64,
    pub n_b: u64,
    pub k_b: u64,
    pub b_k: u64,
    pub strategy: Strategy,
    pub cores_per_task: usize,
    pub task_count: usize,
    pub graph_task_count: usize,
    pub bytes_per_task: u64,
}
