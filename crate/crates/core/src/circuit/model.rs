use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gates::GateKind;
use super::CircuitError;

#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    pub params: Vec<f64>,
}

impl Gate {
    pub fn new(kind: GateKind, qubits: &[usize]) -> Self {
        Self {
            kind,
            qubits: qubits.to_vec(),
            params: Vec::new(),
        }
    }

    pub fn with_params(kind: GateKind, qubits: &[usize], params: &[f64]) -> Self {
        Self {
            kind,
            qubits: qubits.to_vec(),
            params: params.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub num_qubits: usize,
    pub gates: Vec<Gate>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGate {
    name: String,
    qubits: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCircuit {
    num_qubits: usize,
    gates: Vec<RawGate>,
}

impl Circuit {
    pub fn new(num_qubits: usize, gates: Vec<Gate>) -> Result<Self, CircuitError> {
        let c = Self { num_qubits, gates };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        if self.num_qubits == 0 {
            return Err(CircuitError::NoQubits);
        }
        for (index, g) in self.gates.iter().enumerate() {
            let invalid = |message: String| CircuitError::InvalidGate {
                index,
                name: g.kind.name().to_string(),
                message,
            };
            if g.qubits.len() != g.kind.qubits() {
                return Err(invalid(format!(
                    "acts on {} qubits, {} given",
                    g.kind.qubits(),
                    g.qubits.len()
                )));
            }
            if let Some(q) = g.qubits.iter().find(|&&q| q >= self.num_qubits) {
                return Err(invalid(format!("qubit {q} out of range for {} qubits", self.num_qubits)));
            }
            if g.qubits.len() == 2 && g.qubits[0] == g.qubits[1] {
                return Err(invalid(format!("repeated qubit {}", g.qubits[0])));
            }
            if g.params.len() != g.kind.params() {
                return Err(invalid(format!(
                    "takes {} parameters, {} given",
                    g.kind.params(),
                    g.params.len()
                )));
            }
            if g.params.iter().any(|p| !p.is_finite()) {
                return Err(invalid("parameters must be finite".into()));
            }
        }
        Ok(())
    }

    /// Parses `{"num_qubits": n, "gates": [{"name", "qubits", "params"?}]}`.
    pub fn from_json(text: &str) -> Result<Self, CircuitError> {
        let raw: RawCircuit = serde_json::from_str(text).map_err(|e| {
            let message = e.to_string();
            let message = match message.rsplit_once(" at line ") {
                Some((head, _)) => head.to_string(),
                None => message,
            };
            CircuitError::Parse {
                line: e.line(),
                column: e.column(),
                message,
            }
        })?;
        let gates = raw
            .gates
            .into_iter()
            .enumerate()
            .map(|(index, g)| {
                let kind = g
                    .name
                    .parse::<GateKind>()
                    .map_err(|name| CircuitError::UnsupportedGate { index, name })?;
                Ok(Gate {
                    kind,
                    qubits: g.qubits,
                    params: g.params,
                })
            })
            .collect::<Result<_, CircuitError>>()?;
        Self::new(raw.num_qubits, gates)
    }

    pub fn to_json(&self) -> String {
        let raw = RawCircuit {
            num_qubits: self.num_qubits,
            gates: self
                .gates
                .iter()
                .map(|g| RawGate {
                    name: g.kind.name().to_string(),
                    qubits: g.qubits.clone(),
                    params: g.params.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("circuits always serialize")
    }

    pub fn two_qubit_gates(&self) -> usize {
        self.gates.iter().filter(|g| g.kind.qubits() == 2).count()
    }
}

/// Parses a bitstring whose first character is qubit 0.
pub fn parse_bitstring(bits: &str, num_qubits: usize) -> Result<Vec<u8>, CircuitError> {
    let got = bits.chars().count();
    if got != num_qubits {
        return Err(CircuitError::BitstringLength {
            bits: bits.to_string(),
            expected: num_qubits,
            got,
        });
    }
    bits.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(CircuitError::BadBitstring(bits.to_string())),
        })
        .collect()
}

/// Seeded random circuit: each layer applies a gate drawn from
/// {√X, √Y, T} to every qubit, then CZ on neighbouring pairs in a brickwork
/// pattern that alternates between even and odd offsets.
pub fn random_circuit(num_qubits: usize, depth: usize, seed: u64) -> Result<Circuit, CircuitError> {
    const SINGLE: [GateKind; 3] = [GateKind::SqrtX, GateKind::SqrtY, GateKind::T];
    if num_qubits == 0 {
        return Err(CircuitError::NoQubits);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gates = Vec::new();
    for layer in 0..depth {
        for q in 0..num_qubits {
            gates.push(Gate::new(SINGLE[rng.gen_range(0..SINGLE.len())], &[q]));
        }
        let mut q = layer % 2;
        while q + 1 < num_qubits {
            gates.push(Gate::new(GateKind::Cz, &[q, q + 1]));
            q += 2;
        }
    }
    Circuit::new(num_qubits, gates)
}
