use super::layout::Label;
use super::PlanError;

/// Index labels and extents of one tensor in a network.
pub type Signature = Vec<(Label, usize)>;

fn size(sig: &Signature) -> u128 {
    sig.iter().map(|&(_, e)| e as u128).product()
}

/// Labels surviving the contraction of `x` and `y`: those not shared, plus
/// shared ones that are open or still referenced by another live tensor.
fn merged(x: &Signature, y: &Signature, keep: impl Fn(&Label) -> bool) -> Signature {
    let shared = |l: &Label, other: &Signature| other.iter().any(|(m, _)| m == l);
    x.iter()
        .filter(|(l, _)| !shared(l, y) || keep(l))
        .chain(y.iter().filter(|(l, _)| !shared(l, x)))
        .cloned()
        .collect()
}

/// Greedy pairwise contraction order.
///
/// Tensors are numbered `0..n` and every contraction creates a new id
/// (`n`, `n + 1`, ...). Each step contracts the connected pair producing the
/// smallest tensor, breaking ties by smaller combined input size and then
/// by the lowest id pair. Disconnected components are joined by outer
/// products once no connected pair remains.
pub fn greedy_path(signatures: &[Signature], open: &[Label]) -> Result<Vec<(usize, usize)>, PlanError> {
    if signatures.is_empty() {
        return Err(PlanError::EmptyNetwork);
    }
    let mut live: Vec<(usize, Signature)> = signatures.iter().cloned().enumerate().collect();
    let mut next_id = signatures.len();
    let mut path = Vec::with_capacity(signatures.len() - 1);

    while live.len() > 1 {
        let mut best: Option<((bool, u128, u128, usize, usize), usize, usize, Signature)> = None;
        for i in 0..live.len() {
            for j in i + 1..live.len() {
                let (x, y) = (&live[i].1, &live[j].1);
                let connected = x.iter().any(|(l, _)| y.iter().any(|(m, _)| m == l));
                let keep = |l: &Label| {
                    open.contains(l)
                        || live
                            .iter()
                            .enumerate()
                            .any(|(k, (_, s))| k != i && k != j && s.iter().any(|(m, _)| m == l))
                };
                let result = merged(x, y, keep);
                let key = (!connected, size(&result), size(x) + size(y), live[i].0, live[j].0);
                if best.as_ref().map_or(true, |b| key < b.0) {
                    best = Some((key, i, j, result));
                }
            }
        }
        let (_, i, j, result) = best.expect("at least two live tensors");
        path.push((live[i].0, live[j].0));
        live.remove(j);
        live.remove(i);
        live.push((next_id, result));
        next_id += 1;
    }
    Ok(path)
}

/// Total multiply-adds and the largest intermediate along `path`.
pub fn path_cost(signatures: &[Signature], open: &[Label], path: &[(usize, usize)]) -> (u128, u128) {
    let mut tensors: Vec<Option<Signature>> = signatures.iter().cloned().map(Some).collect();
    let mut flops = 0u128;
    let mut largest = 0u128;
    for &(x, y) in path {
        let sx = tensors[x].take().expect("tensor already consumed");
        let sy = tensors[y].take().expect("tensor already consumed");
        let keep = |l: &Label| {
            open.contains(l)
                || tensors
                    .iter()
                    .flatten()
                    .any(|s| s.iter().any(|(m, _)| m == l))
        };
        let result = merged(&sx, &sy, keep);
        let union: u128 = sx
            .iter()
            .chain(sy.iter().filter(|(l, _)| !sx.iter().any(|(m, _)| m == l)))
            .map(|&(_, e)| e as u128)
            .product();
        flops += union;
        largest = largest.max(size(&result));
        tensors.push(Some(result));
    }
    (flops, largest)
}
