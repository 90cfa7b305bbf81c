use std::collections::BTreeMap;

use super::gates::GateTensor;
use super::model::Circuit;
use super::CircuitError;
use crate::dense::{tensordot, DenseTensor, C32};
use crate::planner::{greedy_path, BlockArray, BlockLayout, Label, Signature};
use crate::runtime::execute_contraction;
use crate::store::StoreMetrics;
use crate::{Engine, Error};

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTensor {
    pub labels: Vec<Label>,
    pub data: DenseTensor,
}

impl NetworkTensor {
    pub fn new(labels: Vec<Label>, data: DenseTensor) -> Self {
        Self { labels, data }
    }

    fn signature(&self) -> Signature {
        self.labels.iter().cloned().zip(self.data.extents().iter().copied()).collect()
    }
}

/// Labelled tensors whose shared labels are summed over. `open` lists the
/// labels left in the result, in result order.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorNetwork {
    pub tensors: Vec<NetworkTensor>,
    pub open: Vec<Label>,
}

fn invalid(msg: impl Into<String>) -> CircuitError {
    CircuitError::InvalidNetwork(msg.into())
}

impl TensorNetwork {
    pub fn new(tensors: Vec<NetworkTensor>, open: Vec<Label>) -> Result<Self, CircuitError> {
        let n = Self { tensors, open };
        n.validate()?;
        Ok(n)
    }

    /// Each label appears at most twice over all tensors and the open list,
    /// with one extent.
    pub fn validate(&self) -> Result<(), CircuitError> {
        if self.tensors.is_empty() {
            return Err(invalid("no tensors"));
        }
        let mut seen: BTreeMap<&Label, (usize, usize)> = BTreeMap::new();
        for t in &self.tensors {
            if t.labels.len() != t.data.order() {
                return Err(invalid(format!(
                    "{} labels on a tensor of order {}",
                    t.labels.len(),
                    t.data.order()
                )));
            }
            for (l, &e) in t.labels.iter().zip(t.data.extents()) {
                let entry = seen.entry(l).or_insert((0, e));
                entry.0 += 1;
                if entry.1 != e {
                    return Err(invalid(format!("label {l} has extents {} and {e}", entry.1)));
                }
            }
        }
        for l in &self.open {
            match seen.get_mut(l) {
                Some(entry) => entry.0 += 1,
                None => return Err(invalid(format!("open label {l} is on no tensor"))),
            }
        }
        match seen.iter().find(|(_, (count, _))| *count > 2) {
            Some((l, (count, _))) => Err(invalid(format!("label {l} appears {count} times"))),
            None => Ok(()),
        }
    }

    pub fn signatures(&self) -> Vec<Signature> {
        self.tensors.iter().map(NetworkTensor::signature).collect()
    }

    /// Labels shared by two tensors, in order of first appearance.
    pub fn internal_labels(&self) -> Vec<Label> {
        let mut out: Vec<Label> = Vec::new();
        for (i, t) in self.tensors.iter().enumerate() {
            for l in &t.labels {
                if !out.contains(l) && self.tensors[i + 1..].iter().any(|u| u.labels.contains(l)) {
                    out.push(l.clone());
                }
            }
        }
        out
    }

    pub fn greedy_path(&self) -> Result<Vec<(usize, usize)>, Error> {
        Ok(greedy_path(&self.signatures(), &self.open)?)
    }

    /// In-memory contraction along `path` (pairs of tensor ids, where each
    /// step's result takes the next unused id). The result's dimensions
    /// follow `open`.
    pub fn contract_dense(&self, path: &[(usize, usize)]) -> Result<DenseTensor, Error> {
        let mut slots: Vec<Option<(Vec<Label>, DenseTensor)>> = self
            .tensors
            .iter()
            .map(|t| Some((t.labels.clone(), t.data.clone())))
            .collect();
        for &(i, j) in path {
            let mut take = |k: usize| {
                slots
                    .get_mut(k)
                    .and_then(Option::take)
                    .ok_or_else(|| invalid(format!("path refers to missing tensor {k}")))
            };
            let (la, a) = take(i)?;
            let (lb, b) = take(j)?;
            let axes: Vec<(usize, usize)> = la
                .iter()
                .enumerate()
                .filter_map(|(p, l)| lb.iter().position(|m| m == l).map(|q| (p, q)))
                .collect();
            let labels = la
                .iter()
                .filter(|l| !lb.contains(l))
                .chain(lb.iter().filter(|l| !la.contains(l)))
                .cloned()
                .collect();
            slots.push(Some((labels, tensordot(&a, &b, &axes)?)));
        }
        let mut rest = slots.into_iter().flatten();
        let (labels, t) = rest.next().ok_or_else(|| invalid("path consumed every tensor"))?;
        if rest.next().is_some() {
            return Err(invalid("path leaves more than one tensor").into());
        }
        Ok(permute_to(&labels, t, &self.open)?)
    }

    /// Scalar value of a closed network, contracted in memory along the greedy path.
    pub fn amplitude_dense(&self) -> Result<C32, Error> {
        self.ensure_closed()?;
        Ok(self.contract_dense(&self.greedy_path()?)?.first())
    }

    fn ensure_closed(&self) -> Result<(), CircuitError> {
        if self.open.is_empty() {
            Ok(())
        } else {
            Err(invalid("network has open indices"))
        }
    }
}

fn permute_to(labels: &[Label], t: DenseTensor, order: &[Label]) -> Result<DenseTensor, Error> {
    if labels.len() != order.len() {
        return Err(invalid(format!("result has labels {labels:?}, expected {order:?}")).into());
    }
    let perm = order
        .iter()
        .map(|l| labels.iter().position(|m| m == l))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| invalid(format!("result has labels {labels:?}, expected {order:?}")))?;
    if perm.iter().enumerate().all(|(i, &p)| i == p) {
        return Ok(t);
    }
    Ok(t.transpose(&perm)?)
}

fn basis(bit: u8) -> DenseTensor {
    let mut data = vec![C32::new(0.0, 0.0); 2];
    data[bit as usize] = C32::new(1.0, 0.0);
    DenseTensor::new(vec![2], data).expect("two entries")
}

/// Closed network for `<output| circuit |input>`: a basis vector on both
/// ends of every wire and one tensor per gate, in circuit order.
pub fn build_network(circuit: &Circuit, input: &[u8], output: &[u8]) -> Result<TensorNetwork, CircuitError> {
    circuit.validate()?;
    let n = circuit.num_qubits;
    for bits in [input, output] {
        if bits.len() != n {
            return Err(CircuitError::BitstringLength {
                bits: bits.iter().map(|b| char::from(b'0' + b)).collect(),
                expected: n,
                got: bits.len(),
            });
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(CircuitError::BadBitstring(format!("{bits:?}")));
        }
    }
    let mut next = vec![0usize; n];
    let mut wire = |q: usize| {
        let l = Label::new(format!("q{q}_{}", next[q]));
        next[q] += 1;
        l
    };
    let mut current: Vec<Label> = (0..n).map(&mut wire).collect();
    let mut tensors: Vec<NetworkTensor> = (0..n)
        .map(|q| NetworkTensor::new(vec![current[q].clone()], basis(input[q])))
        .collect();
    for g in &circuit.gates {
        let outs: Vec<Label> = g.qubits.iter().map(|&q| wire(q)).collect();
        let mut labels = outs.clone();
        labels.extend(g.qubits.iter().map(|&q| current[q].clone()));
        for (&q, l) in g.qubits.iter().zip(outs) {
            current[q] = l;
        }
        tensors.push(NetworkTensor::new(labels, GateTensor::new(g.kind, &g.params).tensor));
    }
    tensors.extend((0..n).map(|q| NetworkTensor::new(vec![current[q].clone()], basis(output[q]))));
    TensorNetwork::new(tensors, Vec::new())
}

/// Splits the network over internal `label` into one copy per basis value.
/// The values of the copies sum to the value of the original.
pub fn slice_index(network: &TensorNetwork, label: &Label) -> Result<Vec<TensorNetwork>, CircuitError> {
    if network.open.contains(label) {
        return Err(CircuitError::NotInternal(label.clone()));
    }
    let touching: Vec<(usize, usize)> = network
        .tensors
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.labels.iter().position(|l| l == label).map(|d| (i, d)))
        .collect();
    if touching.len() != 2 {
        return Err(CircuitError::NotInternal(label.clone()));
    }
    let extent = network.tensors[touching[0].0].data.extents()[touching[0].1];
    (0..extent)
        .map(|v| {
            let mut copy = network.clone();
            for &(i, d) in &touching {
                let t = &mut copy.tensors[i];
                t.data = t.data.project(d, v).map_err(|e| invalid(e.to_string()))?;
                t.labels.remove(d);
            }
            Ok(copy)
        })
        .collect()
}

/// Outcome of contracting a network through the block engine.
#[derive(Debug, Clone)]
pub struct NetworkResult {
    /// Result with dimensions in `open` order.
    pub tensor: DenseTensor,
    /// Pairwise contraction steps.
    pub steps: usize,
    /// Contraction tasks over all steps.
    pub tasks: usize,
    /// Every task submitted, including accumulator and addition tasks.
    pub graph_tasks: usize,
    /// Summed store counters over all steps.
    pub metrics: StoreMetrics,
    /// Element count of the largest intermediate tensor.
    pub largest_intermediate: usize,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Block extents for the operands of one step. Contracted indices take a
/// common block extent; when the result block would exceed `threshold`
/// elements, unsplit even free indices are halved, largest first.
fn step_blocking(x: &BlockLayout, y: &BlockLayout, threshold: usize) -> (Vec<usize>, Vec<usize>) {
    let mut bx = x.block_extents().to_vec();
    let mut by = y.block_extents().to_vec();
    for (i, l) in x.labels().iter().enumerate() {
        if let Some(j) = y.position(l) {
            let g = gcd(bx[i], by[j]);
            (bx[i], by[j]) = (g, g);
        }
    }
    // (operand, dim) of every free index
    let mut free: Vec<(usize, usize)> = Vec::new();
    free.extend((0..x.order()).filter(|&i| y.position(&x.labels()[i]).is_none()).map(|i| (0, i)));
    free.extend((0..y.order()).filter(|&j| x.position(&y.labels()[j]).is_none()).map(|j| (1, j)));
    let global = |(o, d): (usize, usize)| if o == 0 { x.global_extents()[d] } else { y.global_extents()[d] };
    free.sort_by_key(|&f| std::cmp::Reverse(global(f)));

    let out_block = |bx: &[usize], by: &[usize]| -> usize {
        free.iter()
            .map(|&(o, d)| if o == 0 { bx[d] } else { by[d] })
            .product()
    };
    for &(o, d) in &free {
        if out_block(&bx, &by) <= threshold {
            break;
        }
        let g = global((o, d));
        let b = if o == 0 { &mut bx[d] } else { &mut by[d] };
        if *b == g && g % 2 == 0 {
            *b = g / 2;
        }
    }
    (bx, by)
}

/// Contracts `network` pairwise along its greedy path, running every step
/// as a block contraction on `engine`.
pub fn contract_network(network: &TensorNetwork, engine: &Engine) -> Result<NetworkResult, Error> {
    network.validate()?;
    let path = network.greedy_path()?;
    let store = engine.store();
    let threshold = engine.config().block_threshold_elements;

    let mut slots: Vec<Option<BlockArray>> = Vec::with_capacity(2 * network.tensors.len());
    for t in &network.tensors {
        let layout = BlockLayout::dense(t.labels.clone(), t.data.extents().to_vec())?;
        slots.push(Some(engine.scatter(layout, &t.data)?));
    }
    let mut result = NetworkResult {
        tensor: DenseTensor::scalar(C32::new(0.0, 0.0)),
        steps: path.len(),
        tasks: 0,
        graph_tasks: 0,
        metrics: StoreMetrics::default(),
        largest_intermediate: 0,
    };
    for &(i, j) in &path {
        let x = slots[i].take().ok_or_else(|| invalid(format!("tensor {i} used twice")))?;
        let y = slots[j].take().ok_or_else(|| invalid(format!("tensor {j} used twice")))?;
        let (bx, by) = step_blocking(x.layout(), y.layout(), threshold);
        let x = x.rechunk(store, bx)?;
        let y = y.rechunk(store, by)?;
        let plan = engine.plan(x.layout(), y.layout())?;
        let run = execute_contraction(engine.runtime(), &plan, &x, &y)?;
        x.delete(store)?;
        y.delete(store)?;

        result.tasks += plan.task_count();
        result.graph_tasks += plan.graph_task_count();
        let m = &run.report.metrics;
        result.metrics.serializations += m.serializations;
        result.metrics.deserializations += m.deserializations;
        result.metrics.remote_transfers += m.remote_transfers;
        result.metrics.peak_store_bytes = m.peak_store_bytes.clone();
        result.largest_intermediate = result.largest_intermediate.max(run.output.layout().global_elements());
        slots.push(Some(run.output));
    }
    let last = slots.into_iter().flatten().next().expect("a path leaves one tensor");
    let dense = engine.gather(&last)?;
    last.delete(store)?;
    result.tensor = permute_to(last.layout().labels(), dense, &network.open)?;
    Ok(result)
}

/// Value of a closed network, computed on `engine`.
pub fn amplitude(network: &TensorNetwork, engine: &Engine) -> Result<C32, Error> {
    network.ensure_closed()?;
    Ok(contract_network(network, engine)?.tensor.first())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{random_circuit, statevector, Gate, GateKind};
    use crate::config::EngineConfig;
    use std::f32::consts::FRAC_1_SQRT_2;

    fn engine() -> Engine {
        Engine::new(EngineConfig {
            workers: 2,
            ..EngineConfig::default()
        })
        .unwrap()
    }

    fn close(a: C32, b: C32) -> bool {
        (a - b).norm() < 1e-5
    }

    fn bell() -> Circuit {
        Circuit::new(2, vec![Gate::new(GateKind::H, &[0]), Gate::new(GateKind::Cnot, &[0, 1])]).unwrap()
    }

    #[test]
    fn identity_circuit_is_one() {
        let c = Circuit::new(3, vec![]).unwrap();
        let net = build_network(&c, &[1, 0, 1], &[1, 0, 1]).unwrap();
        assert!(close(amplitude(&net, &engine()).unwrap(), C32::new(1.0, 0.0)));
        let other = build_network(&c, &[1, 0, 1], &[1, 1, 1]).unwrap();
        assert!(close(amplitude(&other, &engine()).unwrap(), C32::new(0.0, 0.0)));
    }

    #[test]
    fn single_gates() {
        let h = Circuit::new(1, vec![Gate::new(GateKind::H, &[0])]).unwrap();
        let net = build_network(&h, &[0], &[0]).unwrap();
        assert!(close(amplitude(&net, &engine()).unwrap(), C32::new(FRAC_1_SQRT_2, 0.0)));
        let x = Circuit::new(1, vec![Gate::new(GateKind::X, &[0])]).unwrap();
        let net = build_network(&x, &[0], &[1]).unwrap();
        assert!(close(amplitude(&net, &engine()).unwrap(), C32::new(1.0, 0.0)));
    }

    #[test]
    fn bell_amplitudes_match_state_vector() {
        let e = engine();
        for out in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            let net = build_network(&bell(), &[0, 0], &out).unwrap();
            let want = statevector::amplitude(&bell(), &[0, 0], &out);
            let got = amplitude(&net, &e).unwrap();
            assert!(close(got, C32::new(want.re as f32, want.im as f32)), "{out:?}: {got}");
        }
    }

    #[test]
    fn network_shape() {
        let c = bell();
        let net = build_network(&c, &[0, 0], &[0, 0]).unwrap();
        assert_eq!(net.tensors.len(), 2 + 2 + 2);
        assert_eq!(net.tensors[3].data.order(), 4);
        assert_eq!(net.internal_labels().len(), 5);
        assert!(build_network(&c, &[0], &[0, 0]).is_err());
    }

    #[test]
    fn slicing_recovers_the_bell_amplitude() {
        let net = build_network(&bell(), &[0, 0], &[0, 0]).unwrap();
        for label in net.internal_labels() {
            let parts = slice_index(&net, &label).unwrap();
            assert_eq!(parts.len(), 2);
            let sum: C32 = parts.iter().map(|p| p.amplitude_dense().unwrap()).sum();
            assert!(close(sum, C32::new(FRAC_1_SQRT_2, 0.0)), "{label}");
        }
    }

    #[test]
    fn slicing_halves_the_touching_tensors() {
        let net = build_network(&bell(), &[0, 0], &[0, 0]).unwrap();
        let label = net.internal_labels()[2].clone();
        let parts = slice_index(&net, &label).unwrap();
        for (before, after) in net.tensors.iter().zip(&parts[0].tensors) {
            if before.labels.contains(&label) {
                assert_eq!(after.data.len() * 2, before.data.len());
            } else {
                assert_eq!(after, before);
            }
        }
    }

    #[test]
    fn slicing_rejects_open_and_unknown_labels() {
        let t = NetworkTensor::new(vec![Label::from("a")], DenseTensor::zeros(&[2]));
        let net = TensorNetwork::new(vec![t], vec![Label::from("a")]).unwrap();
        assert!(matches!(slice_index(&net, &Label::from("a")), Err(CircuitError::NotInternal(_))));
        assert!(matches!(slice_index(&net, &Label::from("z")), Err(CircuitError::NotInternal(_))));
    }

    #[test]
    fn forced_blocking_keeps_the_value() {
        let c = random_circuit(6, 4, 5).unwrap();
        let net = build_network(&c, &[0; 6], &[1, 0, 1, 1, 0, 0]).unwrap();
        let want = net.amplitude_dense().unwrap();
        for strategy in ["sequential", "commutative", "tree"] {
            let e = Engine::new(EngineConfig {
                workers: 2,
                block_threshold_elements: 2,
                strategy: strategy.parse().unwrap(),
                ..EngineConfig::default()
            })
            .unwrap();
            let got = contract_network(&net, &e).unwrap();
            assert!(close(got.tensor.first(), want), "{strategy}");
            assert!(got.graph_tasks >= got.tasks);
            assert_eq!(e.store().live_blocks(), 0);
        }
    }

    #[test]
    fn open_networks_keep_index_order() {
        let mut rng = rand::rngs::mock::StepRng::new(1, 7);
        let a = DenseTensor::random(&[2, 3], &mut rng);
        let b = DenseTensor::random(&[3, 4], &mut rng);
        let net = TensorNetwork::new(
            vec![
                NetworkTensor::new(vec!["i".into(), "k".into()], a.clone()),
                NetworkTensor::new(vec!["k".into(), "j".into()], b.clone()),
            ],
            vec!["j".into(), "i".into()],
        )
        .unwrap();
        let got = contract_network(&net, &engine()).unwrap().tensor;
        let want = tensordot(&a, &b, &[(1, 0)]).unwrap().transpose(&[1, 0]).unwrap();
        assert_eq!(got.extents(), &[4, 2]);
        for (x, y) in got.data().iter().zip(want.data()) {
            assert!((x - y).norm() < 1e-5);
        }
    }

    #[test]
    fn label_used_three_times_is_rejected() {
        let t = || NetworkTensor::new(vec!["a".into()], DenseTensor::zeros(&[2]));
        assert!(TensorNetwork::new(vec![t(), t(), t()], vec![]).is_err());
    }
}
