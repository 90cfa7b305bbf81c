use std::sync::Arc;

use super::exec::{RunReport, Runtime};
use super::graph::{DataId, TaskGraph, TaskInputs, TaskOutputs};
use crate::config::Strategy;
use crate::dense::{tensordot_threads, DenseTensor};
use crate::planner::{BlockArray, ContractionPlan, PlanError};
use crate::store::ELEMENT_BYTES;
use crate::Error;

/// Task graph of one block contraction with the datum holding each output
/// block, in output coordinate order.
pub struct ContractionGraph {
    pub graph: TaskGraph,
    pub outputs: Vec<DataId>,
}

pub struct ContractionRun {
    pub output: BlockArray,
    pub report: RunReport,
}

fn contract_pairs(inputs: &[DenseTensor], axes: &[(usize, usize)], cores: usize) -> Result<DenseTensor, String> {
    let mut acc: Option<DenseTensor> = None;
    for pair in inputs.chunks(2) {
        let r = tensordot_threads(&pair[0], &pair[1], axes, cores).map_err(|e| e.to_string())?;
        match &mut acc {
            None => acc = Some(r),
            Some(a) => a.add_inplace(&r).map_err(|e| e.to_string())?,
        }
    }
    acc.ok_or_else(|| "no input blocks".to_string())
}

/// Submits the tasks computing `a x b` under the plan's reduction strategy.
///
/// * sequential: one task per output block reading all of its coupled pairs;
/// * commutative: a zero-initialised accumulator updated by one
///   `COMMUTATIVE` task per pair;
/// * tree: one partial product per pair, summed pairwise by `tree_add`
///   tasks. Partial products are deleted once consumed.
pub fn build_contraction_graph(
    runtime: &Runtime,
    plan: &ContractionPlan,
    a: &BlockArray,
    b: &BlockArray,
) -> Result<ContractionGraph, Error> {
    if a.layout() != &plan.spec.a || b.layout() != &plan.spec.b {
        return Err(PlanError::Layout("operand layouts differ from the plan".into()).into());
    }
    let mut g = runtime.graph();
    let a_ids: Vec<DataId> = a.blocks().iter().map(|r| g.data(r.clone())).collect();
    let b_ids: Vec<DataId> = b.blocks().iter().map(|r| g.data(r.clone())).collect();
    let a_layout = a.layout();
    let b_layout = b.layout();

    let axes: Arc<[(usize, usize)]> = plan.spec.axes().into();
    let out_extents = plan.spec.output_layout().block_extents().to_vec();
    let cores = plan.cores_per_task;
    let task_bytes = plan.task_bytes;
    let acc_bytes = plan.shape.accumulator_bytes().max(ELEMENT_BYTES);

    let mut outputs = Vec::with_capacity(plan.outputs.len());
    for out in &plan.outputs {
        let pair_ids: Vec<(DataId, DataId)> = out
            .pairs
            .iter()
            .map(|(ca, cb)| (a_ids[a_layout.linear(ca)], b_ids[b_layout.linear(cb)]))
            .collect();

        let result = match plan.effective_strategy() {
            Strategy::Sequential => {
                let mut t = g.task("tensordot").returns(1).constraints(cores, task_bytes);
                for &(x, y) in &pair_ids {
                    t = t.input(x).input(y);
                }
                let axes = axes.clone();
                let (_, ret) = t.submit(move |inp: TaskInputs| {
                    Ok(TaskOutputs {
                        acc: None,
                        returns: vec![contract_pairs(&inp.inputs, &axes, inp.cores)?],
                    })
                })?;
                ret[0]
            }
            Strategy::Commutative => {
                let extents = out_extents.clone();
                let (_, ret) = g
                    .task("zeros")
                    .returns(1)
                    .constraints(1, acc_bytes)
                    .submit(move |_| {
                        Ok(TaskOutputs {
                            acc: None,
                            returns: vec![DenseTensor::zeros(&extents)],
                        })
                    })?;
                let acc = ret[0];
                for &(x, y) in &pair_ids {
                    let axes = axes.clone();
                    g.task("commutative")
                        .input(x)
                        .input(y)
                        .commutative(acc)
                        .constraints(cores, task_bytes)
                        .submit(move |inp: TaskInputs| {
                            let r = contract_pairs(&inp.inputs, &axes, inp.cores)?;
                            let mut acc = inp.acc.ok_or("missing accumulator")?;
                            acc.add_inplace(&r).map_err(|e| e.to_string())?;
                            Ok(TaskOutputs {
                                acc: Some(acc),
                                returns: Vec::new(),
                            })
                        })?;
                }
                acc
            }
            Strategy::Tree => {
                let mut level = Vec::with_capacity(pair_ids.len());
                for &(x, y) in &pair_ids {
                    let axes = axes.clone();
                    let (_, ret) = g
                        .task("partial")
                        .input(x)
                        .input(y)
                        .returns(1)
                        .constraints(cores, task_bytes)
                        .submit(move |inp: TaskInputs| {
                            Ok(TaskOutputs {
                                acc: None,
                                returns: vec![contract_pairs(&inp.inputs, &axes, inp.cores)?],
                            })
                        })?;
                    level.push(ret[0]);
                }
                let mut partials = level.clone();
                while level.len() > 1 {
                    let mut next = Vec::with_capacity(level.len().div_ceil(2));
                    for chunk in level.chunks(2) {
                        if let [x, y] = *chunk {
                            let (_, ret) = g
                                .task("tree_add")
                                .input(x)
                                .input(y)
                                .returns(1)
                                .constraints(1, 3 * acc_bytes)
                                .submit(|inp: TaskInputs| {
                                    let mut it = inp.inputs.into_iter();
                                    let (mut x, y) = (it.next().unwrap(), it.next().unwrap());
                                    x.add_inplace(&y).map_err(|e| e.to_string())?;
                                    Ok(TaskOutputs {
                                        acc: None,
                                        returns: vec![x],
                                    })
                                })?;
                            next.push(ret[0]);
                            partials.push(ret[0]);
                        } else {
                            next.push(chunk[0]);
                        }
                    }
                    level = next;
                }
                let root = level[0];
                for d in partials.into_iter().filter(|&d| d != root) {
                    g.set_transient(d);
                }
                root
            }
        };
        outputs.push(result);
    }
    Ok(ContractionGraph { graph: g, outputs })
}

/// Runs a planned block contraction and collects the output blocks.
pub fn execute_contraction(
    runtime: &Runtime,
    plan: &ContractionPlan,
    a: &BlockArray,
    b: &BlockArray,
) -> Result<ContractionRun, Error> {
    let ContractionGraph { graph, outputs } = build_contraction_graph(runtime, plan, a, b)?;
    let report = runtime.run(&graph)?.into_result()?;
    let blocks = outputs
        .iter()
        .map(|&d| report.output(d).cloned().expect("output blocks are not transient"))
        .collect();
    let output = BlockArray::from_blocks(plan.spec.output_layout(), blocks)?;
    Ok(ContractionRun { output, report })
}
