//! Quantum circuits as closed tensor networks.
//!
//! A circuit with fixed input and output bitstrings becomes a network of
//! rank-1 basis tensors on every wire end and one tensor per gate. Its full
//! contraction is the amplitude `<out|U|in>`.

mod gates;
mod model;
mod network;
pub mod statevector;

pub use gates::{GateKind, GateTensor};
pub use model::{parse_bitstring, random_circuit, Circuit, Gate};
pub use network::{amplitude, build_network, contract_network, slice_index, NetworkResult, NetworkTensor, TensorNetwork};

use thiserror::Error;

use crate::planner::Label;

#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("gate {index}: unsupported gate {name:?}")]
    UnsupportedGate { index: usize, name: String },
    #[error("gate {index} ({name}): {message}")]
    InvalidGate {
        index: usize,
        name: String,
        message: String,
    },
    #[error("circuit needs at least one qubit")]
    NoQubits,
    #[error("bitstring {bits:?} has length {got}, circuit has {expected} qubits")]
    BitstringLength { bits: String, expected: usize, got: usize },
    #[error("bitstring {0:?} may only contain 0 and 1")]
    BadBitstring(String),
    #[error("label {0} is not an internal index of the network")]
    NotInternal(Label),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
}
