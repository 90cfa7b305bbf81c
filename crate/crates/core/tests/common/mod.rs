#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use tessera::dense::{DenseTensor, C32};
use tessera::planner::{BlockLayout, Label};
use tessera::runtime::{Direction, RunReport, TaskGraph, TaskId, TraceEvent};

/// Largest elementwise deviation relative to the largest magnitude of `want`.
pub fn rel_error(got: &DenseTensor, want: &DenseTensor) -> f64 {
    assert_eq!(got.extents(), want.extents());
    let scale = want.data().iter().map(|c| c.norm() as f64).fold(0.0, f64::max).max(1e-30);
    got.data()
        .iter()
        .zip(want.data())
        .map(|(g, w)| (g - w).norm() as f64)
        .fold(0.0, f64::max)
        / scale
}

pub fn c(re: f64, im: f64) -> C32 {
    C32::new(re as f32, im as f32)
}

/// Random pair of block layouts sharing at least one label, with orders
/// up to 4, extents up to 16 and at most 4 blocks along any index.
pub fn random_layouts<R: Rng>(rng: &mut R) -> (BlockLayout, BlockLayout) {
    let pool = ["i", "j", "k", "l", "m", "n", "p"];
    let index = |rng: &mut R| {
        let grid = rng.gen_range(1..=4usize);
        let block = rng.gen_range(1..=16 / grid);
        (grid * block, block)
    };
    loop {
        let n_shared = rng.gen_range(1..=3usize);
        let n_a = rng.gen_range(0..=4 - n_shared);
        let n_b = rng.gen_range(0..=4 - n_shared);
        let names: Vec<&str> = pool[..n_shared + n_a + n_b].to_vec();
        let dims: Vec<(usize, usize)> = names.iter().map(|_| index(rng)).collect();
        let mut a_idx: Vec<usize> = (0..n_shared).chain(n_shared..n_shared + n_a).collect();
        let mut b_idx: Vec<usize> = (0..n_shared).chain(n_shared + n_a..names.len()).collect();
        shuffle(&mut a_idx, rng);
        shuffle(&mut b_idx, rng);
        let layout = |idx: &[usize]| {
            BlockLayout::new(
                idx.iter().map(|&i| Label::from(names[i])).collect(),
                idx.iter().map(|&i| dims[i].0).collect(),
                idx.iter().map(|&i| dims[i].1).collect(),
            )
            .unwrap()
        };
        let (a, b) = (layout(&a_idx), layout(&b_idx));
        // keep the dense oracle cheap
        if a.global_elements() * b.global_elements() <= 1 << 20 {
            return (a, b);
        }
    }
}

pub fn shuffle<T, R: Rng>(v: &mut [T], rng: &mut R) {
    for i in (1..v.len()).rev() {
        v.swap(i, rng.gen_range(0..=i));
    }
}

/// Checks a finished run against the task graph: per-node core and
/// memory budgets, disjoint commutative siblings and dependency order.
/// Returns one message per violation.
pub fn safety_violations(graph: &TaskGraph, report: &RunReport) -> Vec<String> {
    let mut out = Vec::new();
    let by_id: BTreeMap<usize, &TraceEvent> = report.trace.iter().map(|e| (e.task_id, e)).collect();

    for (n, node) in graph.nodes().iter().enumerate() {
        let mut points: Vec<(u64, i8, usize)> = Vec::new();
        for e in report.trace.iter().filter(|e| e.node == n) {
            points.push((e.t_start, 1, e.task_id));
            points.push((e.t_end, -1, e.task_id));
        }
        // ends sort before starts at equal timestamps
        points.sort();
        let (mut cores, mut mem) = (0i64, 0i128);
        for (t, delta, id) in points {
            let c = graph.get(TaskId(id)).constraints;
            cores += delta as i64 * c.cores as i64;
            mem += delta as i128 * c.memory_bytes as i128;
            if cores > node.cores as i64 || mem > node.memory_bytes as i128 {
                out.push(format!("node {n} oversubscribed at {t}: {cores} cores, {mem} bytes"));
            }
        }
    }

    let mut siblings: BTreeMap<usize, Vec<(u64, u64)>> = BTreeMap::new();
    for t in graph.tasks() {
        if let Some(p) = t.accumulator().filter(|p| p.direction == Direction::Commutative) {
            if let Some(e) = by_id.get(&t.id.0) {
                siblings.entry(p.data.0).or_default().push((e.t_start, e.t_end));
            }
        }
    }
    for (d, mut spans) in siblings {
        spans.sort();
        for w in spans.windows(2) {
            if w[0].1 > w[1].0 {
                out.push(format!("commutative tasks on datum {d} overlap: {:?} {:?}", w[0], w[1]));
            }
        }
    }

    for t in graph.tasks() {
        let Some(e) = by_id.get(&t.id.0) else { continue };
        for d in &t.deps {
            match by_id.get(&d.0) {
                Some(p) if p.t_end <= e.t_start => {}
                Some(p) => out.push(format!("task {} started at {} before dependency {} ended at {}", t.id, e.t_start, d, p.t_end)),
                None => out.push(format!("task {} ran but dependency {} did not", t.id, d)),
            }
        }
    }
    out
}
