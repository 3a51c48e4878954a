//! Backward influence sweep.
//!
//! One backward pass over a circuit computes, for every potential fault
//! (each Pauli component of each noise channel target) and every frame coin
//! (each reset and each post-measurement randomization), exactly which
//! detectors and observables it flips. The per-qubit state is the signature
//! a hypothetical X or Z inserted at the current point would have; gates
//! transform it by conjugation, measurements fold in the record's influence,
//! and resets absorb everything before them.
//!
//! The forward single-fault propagator ([`crate::circuit::forward_propagate`])
//! recomputes any one signature independently, which the tests use as an
//! oracle.

use crate::circuit::{CtrlPauli, Gate1, Gate2, Instruction, PhysicalCircuit};
use crate::gf2::BitVector;
use std::collections::HashMap;

/// Which detectors and observables one fault or coin flips.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Signature {
    pub detectors: BitVector,
    pub observables: BitVector,
}

impl Signature {
    pub fn zeros(num_detectors: usize, num_observables: usize) -> Self {
        Signature {
            detectors: BitVector::zeros(num_detectors),
            observables: BitVector::zeros(num_observables),
        }
    }

    pub fn xor_assign(&mut self, other: &Signature) {
        self.detectors.xor_assign(&other.detectors);
        self.observables.xor_assign(&other.observables);
    }

    pub fn clear(&mut self) {
        self.detectors.clear();
        self.observables.clear();
    }

    pub fn is_zero(&self) -> bool {
        self.detectors.is_zero() && self.observables.is_zero()
    }
}

/// Fault address: (noise instruction index, target slot, Pauli component).
/// Component numbering matches the sampler's
/// [`crate::sampler::SampledFault`].
pub type FaultKey = (usize, usize, usize);

/// Coin address: (instruction index, target slot), matching
/// [`crate::sampler::CoinDraw`].
pub type CoinKey = (usize, usize);

/// Every fault and coin signature of a circuit.
#[derive(Clone, Debug, Default)]
pub struct InfluenceTable {
    pub fault_signatures: HashMap<FaultKey, Signature>,
    pub coin_signatures: HashMap<CoinKey, Signature>,
}

impl InfluenceTable {
    /// Observable indices any coin can flip (the nondeterministic ones).
    pub fn coin_influenced_observables(&self, num_observables: usize) -> Vec<bool> {
        let mut out = vec![false; num_observables];
        for sig in self.coin_signatures.values() {
            for o in sig.observables.iter_ones() {
                out[o] = true;
            }
        }
        out
    }

    /// Coins that flip at least one detector. Empty for well-formed circuits
    /// whose detectors are all deterministic.
    pub fn detector_influencing_coins(&self) -> Vec<CoinKey> {
        let mut keys: Vec<CoinKey> = self
            .coin_signatures
            .iter()
            .filter(|(_, sig)| !sig.detectors.is_zero())
            .map(|(&k, _)| k)
            .collect();
        keys.sort_unstable();
        keys
    }
}

struct Walker {
    flip_x: Vec<Signature>,
    flip_z: Vec<Signature>,
    /// Per measurement record: detector/observable membership plus influence
    /// routed through classically controlled Paulis.
    rec_influence: Vec<Signature>,
}

impl Walker {
    fn pauli_code_signature(&self, q: usize, code: usize, d: usize, o: usize) -> Signature {
        // 0=I, 1=X, 2=Y, 3=Z
        let mut sig = Signature::zeros(d, o);
        if code == 1 || code == 2 {
            sig.xor_assign(&self.flip_x[q]);
        }
        if code == 2 || code == 3 {
            sig.xor_assign(&self.flip_z[q]);
        }
        sig
    }
}

/// Run the backward sweep over `c`.
pub fn compute_influence(c: &PhysicalCircuit) -> InfluenceTable {
    let d = c.detector_count;
    let o = c.observable_count;

    // Direct detector/observable membership per record.
    let mut rec_influence = vec![Signature::zeros(d, o); c.num_measurements];
    let mut det_idx = 0usize;
    for instr in &c.instructions {
        match instr {
            Instruction::Detector { recs, .. } => {
                for &r in recs {
                    rec_influence[r].detectors.toggle(det_idx);
                }
                det_idx += 1;
            }
            Instruction::ObservableInclude { index, recs } => {
                for &r in recs {
                    rec_influence[r].observables.toggle(*index);
                }
            }
            _ => {}
        }
    }

    // Record index at which each instruction starts.
    let mut first_rec = Vec::with_capacity(c.instructions.len());
    let mut acc = 0usize;
    for instr in &c.instructions {
        first_rec.push(acc);
        acc += instr.record_count();
    }

    let mut w = Walker {
        flip_x: vec![Signature::zeros(d, o); c.num_qubits],
        flip_z: vec![Signature::zeros(d, o); c.num_qubits],
        rec_influence,
    };
    let mut table = InfluenceTable::default();

    for (idx, instr) in c.instructions.iter().enumerate().rev() {
        match instr {
            Instruction::Reset { qubits } => {
                for (slot, &q) in qubits.iter().enumerate().rev() {
                    table
                        .coin_signatures
                        .insert((idx, slot), w.flip_z[q].clone());
                    w.flip_z[q].clear();
                    w.flip_x[q].clear();
                }
            }
            Instruction::ResetX { qubits } => {
                for (slot, &q) in qubits.iter().enumerate().rev() {
                    table
                        .coin_signatures
                        .insert((idx, slot), w.flip_x[q].clone());
                    w.flip_x[q].clear();
                    w.flip_z[q].clear();
                }
            }
            Instruction::Gate1 { kind, qubits } => {
                for &q in qubits.iter().rev() {
                    match kind {
                        Gate1::H => std::mem::swap(&mut w.flip_x[q], &mut w.flip_z[q]),
                        Gate1::S | Gate1::SDag => {
                            // X ↦ ±Y: an X fault also flips whatever Z flips.
                            let zc = w.flip_z[q].clone();
                            w.flip_x[q].xor_assign(&zc);
                        }
                    }
                }
            }
            Instruction::Gate2 { kind, pairs } => {
                for &(a, b) in pairs.iter().rev() {
                    match kind {
                        Gate2::Cx => {
                            let xt = w.flip_x[b].clone();
                            w.flip_x[a].xor_assign(&xt);
                            let zc = w.flip_z[a].clone();
                            w.flip_z[b].xor_assign(&zc);
                        }
                        Gate2::Cz => {
                            let zb = w.flip_z[b].clone();
                            let za = w.flip_z[a].clone();
                            w.flip_x[a].xor_assign(&zb);
                            w.flip_x[b].xor_assign(&za);
                        }
                        Gate2::Swap => {
                            w.flip_x.swap(a, b);
                            w.flip_z.swap(a, b);
                        }
                    }
                }
            }
            Instruction::Classical { pauli, rec, qubits } => {
                // A flip of the control record toggles the Pauli on every
                // target.
                let mut sig = Signature::zeros(d, o);
                for &q in qubits {
                    match pauli {
                        CtrlPauli::X => sig.xor_assign(&w.flip_x[q]),
                        CtrlPauli::Z => sig.xor_assign(&w.flip_z[q]),
                    }
                }
                w.rec_influence[*rec].xor_assign(&sig);
            }
            Instruction::Measure { qubits } => {
                for (slot, &q) in qubits.iter().enumerate().rev() {
                    let r = first_rec[idx] + slot;
                    table
                        .coin_signatures
                        .insert((idx, slot), w.flip_z[q].clone());
                    w.flip_z[q].clear();
                    let ri = w.rec_influence[r].clone();
                    w.flip_x[q].xor_assign(&ri);
                }
            }
            Instruction::MeasureX { qubits } => {
                for (slot, &q) in qubits.iter().enumerate().rev() {
                    let r = first_rec[idx] + slot;
                    table
                        .coin_signatures
                        .insert((idx, slot), w.flip_x[q].clone());
                    w.flip_x[q].clear();
                    let ri = w.rec_influence[r].clone();
                    w.flip_z[q].xor_assign(&ri);
                }
            }
            Instruction::XError { qubits, .. } => {
                for (slot, &q) in qubits.iter().enumerate() {
                    table
                        .fault_signatures
                        .insert((idx, slot, 0), w.flip_x[q].clone());
                }
            }
            Instruction::ZError { qubits, .. } => {
                for (slot, &q) in qubits.iter().enumerate() {
                    table
                        .fault_signatures
                        .insert((idx, slot, 0), w.flip_z[q].clone());
                }
            }
            Instruction::Depolarize1 { qubits, .. } => {
                for (slot, &q) in qubits.iter().enumerate() {
                    for (component, code) in [(0usize, 1usize), (1, 2), (2, 3)] {
                        let sig = w.pauli_code_signature(q, code, d, o);
                        table.fault_signatures.insert((idx, slot, component), sig);
                    }
                }
            }
            Instruction::Depolarize2 { pairs, .. } => {
                for (slot, &(a, b)) in pairs.iter().enumerate() {
                    for component in 0..15usize {
                        let ca = (component + 1) / 4;
                        let cb = (component + 1) % 4;
                        let mut sig = w.pauli_code_signature(a, ca, d, o);
                        sig.xor_assign(&w.pauli_code_signature(b, cb, d, o));
                        table.fault_signatures.insert((idx, slot, component), sig);
                    }
                }
            }
            _ => {}
        }
    }
    table
}
