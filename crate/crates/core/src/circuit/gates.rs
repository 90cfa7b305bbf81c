use std::f32::consts::{FRAC_1_SQRT_2, FRAC_PI_4};
use std::fmt;
use std::str::FromStr;

use crate::dense::{DenseTensor, C32};

/// Supported gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    I,
    X,
    Y,
    Z,
    H,
    S,
    T,
    SqrtX,
    SqrtY,
    Rz,
    Cz,
    Cnot,
}

impl GateKind {
    pub const ALL: [GateKind; 12] = [
        GateKind::I,
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::H,
        GateKind::S,
        GateKind::T,
        GateKind::SqrtX,
        GateKind::SqrtY,
        GateKind::Rz,
        GateKind::Cz,
        GateKind::Cnot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::I => "I",
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::H => "H",
            GateKind::S => "S",
            GateKind::T => "T",
            GateKind::SqrtX => "SX",
            GateKind::SqrtY => "SY",
            GateKind::Rz => "RZ",
            GateKind::Cz => "CZ",
            GateKind::Cnot => "CNOT",
        }
    }

    pub fn qubits(self) -> usize {
        match self {
            GateKind::Cz | GateKind::Cnot => 2,
            _ => 1,
        }
    }

    pub fn params(self) -> usize {
        usize::from(self == GateKind::Rz)
    }

    /// Row-major unitary; two-qubit gates index rows and columns as
    /// `2 * first + second`.
    pub fn matrix(self, params: &[f64]) -> Vec<C32> {
        let c = |re: f32, im: f32| C32::new(re, im);
        let (o, l) = (c(0.0, 0.0), c(1.0, 0.0));
        let h = FRAC_1_SQRT_2;
        match self {
            GateKind::I => vec![l, o, o, l],
            GateKind::X => vec![o, l, l, o],
            GateKind::Y => vec![o, c(0.0, -1.0), c(0.0, 1.0), o],
            GateKind::Z => vec![l, o, o, c(-1.0, 0.0)],
            GateKind::H => vec![c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)],
            GateKind::S => vec![l, o, o, c(0.0, 1.0)],
            GateKind::T => vec![l, o, o, C32::from_polar(1.0, FRAC_PI_4)],
            GateKind::SqrtX => vec![c(0.5, 0.5), c(0.5, -0.5), c(0.5, -0.5), c(0.5, 0.5)],
            GateKind::SqrtY => vec![c(0.5, 0.5), c(-0.5, -0.5), c(0.5, 0.5), c(0.5, 0.5)],
            GateKind::Rz => {
                let half = (params[0] / 2.0) as f32;
                vec![C32::from_polar(1.0, -half), o, o, C32::from_polar(1.0, half)]
            }
            GateKind::Cz => {
                let mut m = vec![o; 16];
                (m[0], m[5], m[10], m[15]) = (l, l, l, c(-1.0, 0.0));
                m
            }
            GateKind::Cnot => {
                let mut m = vec![o; 16];
                (m[0], m[5], m[11], m[14]) = (l, l, l, l);
                m
            }
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s.to_ascii_uppercase().as_str() {
            "I" | "ID" => GateKind::I,
            "X" => GateKind::X,
            "Y" => GateKind::Y,
            "Z" => GateKind::Z,
            "H" => GateKind::H,
            "S" => GateKind::S,
            "T" => GateKind::T,
            "SX" | "SQRT_X" | "SQRTX" | "√X" => GateKind::SqrtX,
            "SY" | "SQRT_Y" | "SQRTY" | "√Y" => GateKind::SqrtY,
            "RZ" => GateKind::Rz,
            "CZ" => GateKind::Cz,
            "CNOT" | "CX" => GateKind::Cnot,
            _ => return Err(s.to_string()),
        };
        Ok(kind)
    }
}

/// A gate as a tensor: order 2 `(out, in)` for one qubit, order 4
/// `(out0, out1, in0, in1)` for two.
#[derive(Debug, Clone, PartialEq)]
pub struct GateTensor {
    pub kind: GateKind,
    pub tensor: DenseTensor,
}

impl GateTensor {
    pub fn new(kind: GateKind, params: &[f64]) -> Self {
        let extents = vec![2; 2 * kind.qubits()];
        let tensor = DenseTensor::new(extents, kind.matrix(params)).expect("gate tables have 2^(2q) entries");
        Self { kind, tensor }
    }
}
