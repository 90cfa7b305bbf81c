//! Full state-vector simulation, used to check network amplitudes.
//!
//! Qubit 0 is the most significant bit of a basis index. Arithmetic is
//! done in double precision.

use num_complex::Complex64;

use super::model::Circuit;

fn index_of(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// Final state after applying `circuit` to basis state `input`.
pub fn simulate(circuit: &Circuit, input: &[u8]) -> Vec<Complex64> {
    let n = circuit.num_qubits;
    let mut psi = vec![Complex64::new(0.0, 0.0); 1 << n];
    psi[index_of(input)] = Complex64::new(1.0, 0.0);
    for g in &circuit.gates {
        let m: Vec<Complex64> = g
            .kind
            .matrix(&g.params)
            .iter()
            .map(|c| Complex64::new(c.re as f64, c.im as f64))
            .collect();
        match g.qubits[..] {
            [q] => {
                let bit = 1 << (n - 1 - q);
                for i in (0..psi.len()).filter(|i| i & bit == 0) {
                    let (a, b) = (psi[i], psi[i | bit]);
                    psi[i] = m[0] * a + m[1] * b;
                    psi[i | bit] = m[2] * a + m[3] * b;
                }
            }
            [q0, q1] => {
                let (b0, b1) = (1 << (n - 1 - q0), 1 << (n - 1 - q1));
                for i in (0..psi.len()).filter(|i| i & (b0 | b1) == 0) {
                    let idx = [i, i | b1, i | b0, i | b0 | b1];
                    let v = idx.map(|k| psi[k]);
                    for (r, &k) in idx.iter().enumerate() {
                        psi[k] = (0..4).map(|c| m[r * 4 + c] * v[c]).sum();
                    }
                }
            }
            _ => unreachable!("validated circuits only hold 1- and 2-qubit gates"),
        }
    }
    psi
}

/// `<output| U |input>`.
pub fn amplitude(circuit: &Circuit, input: &[u8], output: &[u8]) -> Complex64 {
    simulate(circuit, input)[index_of(output)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{random_circuit, Gate, GateKind};

    #[test]
    fn bell_preparation() {
        let c = Circuit::new(2, vec![Gate::new(GateKind::H, &[0]), Gate::new(GateKind::Cnot, &[0, 1])]).unwrap();
        let psi = simulate(&c, &[0, 0]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((psi[0].re - h).abs() < 1e-7);
        assert!((psi[3].re - h).abs() < 1e-7);
        assert!(psi[1].norm() < 1e-12 && psi[2].norm() < 1e-12);
    }

    #[test]
    fn control_is_the_first_qubit() {
        let c = Circuit::new(2, vec![Gate::new(GateKind::X, &[0]), Gate::new(GateKind::Cnot, &[0, 1])]).unwrap();
        assert!((amplitude(&c, &[0, 0], &[1, 1]).re - 1.0).abs() < 1e-12);
        let c = Circuit::new(2, vec![Gate::new(GateKind::X, &[1]), Gate::new(GateKind::Cnot, &[0, 1])]).unwrap();
        assert!((amplitude(&c, &[0, 0], &[0, 1]).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_circuits_preserve_norm() {
        let c = random_circuit(6, 5, 9).unwrap();
        let norm: f64 = simulate(&c, &[0; 6]).iter().map(|a| a.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-6);
    }
}
