//! Noise annotation passes.
//!
//! Three models: circuit-level depolarizing noise attached to every gate
//! layer, a coarser local-stochastic data/syndrome model used by the
//! fault-counting analyses, and targeted Z injection on a single prepared
//! qubit. Annotation inserts channel instructions only — record indices are
//! absolute internally, so detector and observable references survive
//! unchanged.

use crate::circuit::{Instruction, PhysicalCircuit};
use std::collections::HashMap;
use thiserror::Error;

/// Which noise model to apply.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NoiseMode {
    /// Depolarizing channels attached to gates, initializations, and
    /// measurements, plus idle noise during gate layers.
    CircuitDepolarizing,
    /// Data-qubit depolarizing per syndrome-extraction boundary plus
    /// syndrome-readout flips.
    LocalStochastic,
    /// Measurement-record flip noise only, with per-instruction overrides.
    CustomWeights,
}

/// Noise parameters.
#[derive(Clone, Debug)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    /// Probability per operation.
    pub p: f64,
    /// Extra Z rate on injected qubits.
    pub p_z: f64,
    /// Per-instruction probability overrides (keyed by instruction index in
    /// the un-annotated circuit).
    pub custom: Option<HashMap<usize, f64>>,
    /// Instructions at or past this index receive no noise. Used for
    /// noiseless verification tails such as probe gadgets.
    pub noise_horizon: Option<usize>,
}

impl NoiseSpec {
    pub fn circuit_depolarizing(p: f64) -> Self {
        NoiseSpec {
            mode: NoiseMode::CircuitDepolarizing,
            p,
            p_z: 0.0,
            custom: None,
            noise_horizon: None,
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let limit = match self.mode {
            // p is shared by 1- and 2-qubit channels; the 1-qubit bound is
            // the tighter of the two normalization limits.
            NoiseMode::CircuitDepolarizing | NoiseMode::LocalStochastic => 0.75,
            NoiseMode::CustomWeights => 1.0,
        };
        if !(0.0..=limit).contains(&self.p) {
            return Err(NoiseError::ProbabilityOutOfRange {
                value: self.p,
                limit,
            });
        }
        if !(0.0..=1.0).contains(&self.p_z) {
            return Err(NoiseError::ProbabilityOutOfRange {
                value: self.p_z,
                limit: 1.0,
            });
        }
        if let Some(custom) = &self.custom {
            for (_, &v) in custom.iter() {
                if !(0.0..=limit).contains(&v) {
                    return Err(NoiseError::ProbabilityOutOfRange { value: v, limit });
                }
            }
        }
        Ok(())
    }
}

#[derive(Error, Debug)]
pub enum NoiseError {
    #[error("circuit already contains noise channels; refusing to annotate twice")]
    AlreadyAnnotated,
    #[error("probability {value} out of range [0,{limit}]")]
    ProbabilityOutOfRange { value: f64, limit: f64 },
    #[error("qubit {qubit} is never initialized")]
    QubitNeverInitialized { qubit: usize },
    #[error("circuit lacks the structure annotations this model needs")]
    MissingStructure,
}

/// True when the circuit already carries any noise channel.
#[must_use]
pub fn is_noise_annotated(c: &PhysicalCircuit) -> bool {
    c.instructions.iter().any(Instruction::is_noise)
}

/// Apply the noise model selected by `spec`.
pub fn annotate_circuit_noise(
    c: &PhysicalCircuit,
    spec: &NoiseSpec,
) -> Result<PhysicalCircuit, NoiseError> {
    spec.validate()?;
    if is_noise_annotated(c) {
        return Err(NoiseError::AlreadyAnnotated);
    }
    match spec.mode {
        NoiseMode::CircuitDepolarizing => Ok(annotate_depolarizing(c, spec)),
        NoiseMode::CustomWeights => Ok(annotate_record_flips(c, spec)),
        NoiseMode::LocalStochastic => Err(NoiseError::MissingStructure),
    }
}

fn site_p(spec: &NoiseSpec, idx: usize) -> f64 {
    match (&spec.custom, spec.noise_horizon) {
        (_, Some(h)) if idx >= h => 0.0,
        (Some(custom), _) => custom.get(&idx).copied().unwrap_or(spec.p),
        _ => spec.p,
    }
}

fn annotate_depolarizing(c: &PhysicalCircuit, spec: &NoiseSpec) -> PhysicalCircuit {
    let mut out = PhysicalCircuit::new();
    out.num_qubits = c.num_qubits;
    // Walk layer by layer (TICK-delimited).
    let mut layer_start = 0usize;
    let mut idx = 0usize;
    while idx <= c.instructions.len() {
        let at_end = idx == c.instructions.len();
        if at_end || matches!(c.instructions[idx], Instruction::Tick) {
            emit_noisy_layer(c, &c.instructions[layer_start..idx], layer_start, spec, &mut out);
            if !at_end {
                out.push(Instruction::Tick);
            }
            layer_start = idx + 1;
        }
        idx += 1;
    }
    out
}

fn emit_noisy_layer(
    c: &PhysicalCircuit,
    layer: &[Instruction],
    layer_offset: usize,
    spec: &NoiseSpec,
    out: &mut PhysicalCircuit,
) {
    let has_meas_or_init = layer.iter().any(|i| {
        matches!(
            i,
            Instruction::Measure { .. }
                | Instruction::MeasureX { .. }
                | Instruction::Reset { .. }
                | Instruction::ResetX { .. }
        )
    });
    let has_gate = layer
        .iter()
        .any(|i| matches!(i, Instruction::Gate1 { .. } | Instruction::Gate2 { .. }));
    let mut active = vec![false; c.num_qubits];
    for (off, instr) in layer.iter().enumerate() {
        let p = site_p(spec, layer_offset + off);
        for q in instr.qubits() {
            if !matches!(instr, Instruction::QubitCoords { .. }) {
                active[q] = true;
            }
        }
        match instr {
            Instruction::Measure { qubits } | Instruction::MeasureX { qubits } => {
                if p > 0.0 {
                    out.push(Instruction::Depolarize1 {
                        p,
                        qubits: qubits.clone(),
                    });
                }
                out.push(instr.clone());
            }
            Instruction::Gate1 { qubits, .. }
            | Instruction::Reset { qubits }
            | Instruction::ResetX { qubits } => {
                out.push(instr.clone());
                if p > 0.0 {
                    out.push(Instruction::Depolarize1 {
                        p,
                        qubits: qubits.clone(),
                    });
                }
            }
            Instruction::Gate2 { pairs, .. } => {
                out.push(instr.clone());
                if p > 0.0 {
                    out.push(Instruction::Depolarize2 {
                        p,
                        pairs: pairs.clone(),
                    });
                }
            }
            other => out.push(other.clone()),
        }
    }
    // Idle noise only in pure gate layers.
    if has_gate && !has_meas_or_init {
        let p = site_p(spec, layer_offset);
        let idle: Vec<usize> = (0..c.num_qubits).filter(|&q| !active[q]).collect();
        if p > 0.0 && !idle.is_empty() {
            out.push(Instruction::Depolarize1 { p, qubits: idle });
        }
    }
}

fn annotate_record_flips(c: &PhysicalCircuit, spec: &NoiseSpec) -> PhysicalCircuit {
    let mut out = PhysicalCircuit::new();
    out.num_qubits = c.num_qubits;
    for (idx, instr) in c.instructions.iter().enumerate() {
        let p = site_p(spec, idx);
        match instr {
            Instruction::Measure { qubits } if p > 0.0 => {
                out.push(Instruction::XError {
                    p,
                    qubits: qubits.clone(),
                });
            }
            Instruction::MeasureX { qubits } if p > 0.0 => {
                out.push(Instruction::ZError {
                    p,
                    qubits: qubits.clone(),
                });
            }
            _ => {}
        }
        out.push(instr.clone());
    }
    out
}

/// Which parts of a compiled circuit the local-stochastic model touches.
#[derive(Clone, Debug, Default)]
pub struct StochasticStructure {
    /// Data qubits of every code block.
    pub data_qubits: Vec<usize>,
    /// Instruction indices marking syndrome-extraction round boundaries;
    /// data noise is inserted immediately before each.
    pub se_boundaries: Vec<usize>,
    /// Instruction indices of syndrome-readout measurements.
    pub syndrome_measurements: Vec<usize>,
}

/// Local-stochastic data/syndrome noise: depolarizing `p` on each data qubit
/// at each syndrome-extraction boundary, and a record flip with probability
/// `p` on each syndrome readout. Transversal gates themselves stay clean.
pub fn annotate_local_stochastic(
    c: &PhysicalCircuit,
    structure: &StochasticStructure,
    p: f64,
) -> Result<PhysicalCircuit, NoiseError> {
    if is_noise_annotated(c) {
        return Err(NoiseError::AlreadyAnnotated);
    }
    if !(0.0..=0.75).contains(&p) {
        return Err(NoiseError::ProbabilityOutOfRange {
            value: p,
            limit: 0.75,
        });
    }
    if structure.se_boundaries.is_empty() && structure.syndrome_measurements.is_empty() {
        return Err(NoiseError::MissingStructure);
    }
    let mut out = PhysicalCircuit::new();
    out.num_qubits = c.num_qubits;
    for (idx, instr) in c.instructions.iter().enumerate() {
        if p > 0.0 && structure.se_boundaries.contains(&idx) {
            out.push(Instruction::Depolarize1 {
                p,
                qubits: structure.data_qubits.clone(),
            });
        }
        if p > 0.0 && structure.syndrome_measurements.contains(&idx) {
            match instr {
                Instruction::Measure { qubits } => out.push(Instruction::XError {
                    p,
                    qubits: qubits.clone(),
                }),
                Instruction::MeasureX { qubits } => out.push(Instruction::ZError {
                    p,
                    qubits: qubits.clone(),
                }),
                _ => return Err(NoiseError::MissingStructure),
            }
        }
        out.push(instr.clone());
    }
    Ok(out)
}

/// Insert `Z_ERROR(p_z)` on `qubit` immediately after its state preparation:
/// the initial reset plus any directly following single-qubit gates on that
/// qubit, up to its first entangling gate or measurement. Runs after the
/// global noise pass, which would otherwise reject the added channel.
pub fn inject_z_errors(
    c: &PhysicalCircuit,
    qubit: usize,
    p_z: f64,
) -> Result<PhysicalCircuit, NoiseError> {
    if !(0.0..=1.0).contains(&p_z) {
        return Err(NoiseError::ProbabilityOutOfRange {
            value: p_z,
            limit: 1.0,
        });
    }
    let mut prep_end: Option<usize> = None;
    for (idx, instr) in c.instructions.iter().enumerate() {
        match instr {
            Instruction::Reset { qubits } | Instruction::ResetX { qubits }
                if qubits.contains(&qubit) =>
            {
                prep_end = Some(idx);
            }
            Instruction::Gate1 { qubits, .. } if qubits.contains(&qubit) => {
                if prep_end.is_some() {
                    prep_end = Some(idx);
                }
            }
            Instruction::Gate2 { .. }
            | Instruction::Classical { .. }
            | Instruction::Measure { .. }
            | Instruction::MeasureX { .. }
                if instr.qubits().contains(&qubit) && prep_end.is_some() =>
            {
                break;
            }
            _ => {}
        }
    }
    let Some(mut site) = prep_end else {
        return Err(NoiseError::QubitNeverInitialized { qubit });
    };
    // Step over noise already attached to the prep gate.
    while site + 1 < c.instructions.len()
        && c.instructions[site + 1].is_noise()
        && c.instructions[site + 1].qubits().contains(&qubit)
    {
        site += 1;
    }
    let mut out = PhysicalCircuit::new();
    out.num_qubits = c.num_qubits;
    for (idx, instr) in c.instructions.iter().enumerate() {
        out.push(instr.clone());
        if idx == site && p_z > 0.0 {
            out.push(Instruction::ZError {
                p: p_z,
                qubits: vec![qubit],
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{emit_circuit_text, parse_circuit_text};

    fn count_channels(c: &PhysicalCircuit) -> usize {
        c.instructions.iter().filter(|i| i.is_noise()).count()
    }

    #[test]
    fn zero_p_elides_channels() {
        let c = parse_circuit_text("R 0\nTICK\nH 0\nTICK\nM 0").unwrap();
        let noisy = annotate_circuit_noise(&c, &NoiseSpec::circuit_depolarizing(0.0)).unwrap();
        assert_eq!(count_channels(&noisy), 0);
        assert_eq!(emit_circuit_text(&noisy), emit_circuit_text(&c));
    }

    #[test]
    fn idle_noise_in_gate_layer_only() {
        let c = parse_circuit_text("R 0 1 2\nTICK\nCX 0 1\nTICK\nM 0").unwrap();
        let noisy = annotate_circuit_noise(&c, &NoiseSpec::circuit_depolarizing(0.01)).unwrap();
        let text = emit_circuit_text(&noisy);
        // init layer: DEPOLARIZE1 after R, no idle; gate layer: DEPOLARIZE2
        // after CX plus idle on qubit 2; measurement layer: DEPOLARIZE1
        // before M, no idle on 1 and 2.
        assert_eq!(
            text,
            "R 0 1 2\nDEPOLARIZE1(0.01) 0 1 2\nTICK\nCX 0 1\nDEPOLARIZE2(0.01) 0 1\nDEPOLARIZE1(0.01) 2\nTICK\nDEPOLARIZE1(0.01) 0\nM 0\n"
        );
    }

    #[test]
    fn double_annotation_rejected() {
        let c = parse_circuit_text("R 0\nTICK\nM 0").unwrap();
        let noisy = annotate_circuit_noise(&c, &NoiseSpec::circuit_depolarizing(0.01)).unwrap();
        let err = annotate_circuit_noise(&noisy, &NoiseSpec::circuit_depolarizing(0.01));
        assert!(matches!(err, Err(NoiseError::AlreadyAnnotated)));
    }

    #[test]
    fn channel_count_matches_layer_formula() {
        // 4 qubits; layers: init(4 qubits) | gates: CX + H (3 active, 1
        // idle) | measure 2.
        let c = parse_circuit_text("R 0 1 2 3\nTICK\nCX 0 1\nH 2\nTICK\nM 0 2").unwrap();
        let noisy = annotate_circuit_noise(&c, &NoiseSpec::circuit_depolarizing(0.01)).unwrap();
        // closed form: 1 (init DEP1 group) + [1 DEP2 + 1 DEP1 + 1 idle DEP1]
        // + 1 (pre-measure DEP1 group)
        assert_eq!(count_channels(&noisy), 5);
        // and per-qubit channel applications: 4 + (2 + 1 + 1) + 2 = 10
        let touched: usize = noisy
            .instructions
            .iter()
            .filter(|i| i.is_noise())
            .map(|i| i.qubits().len())
            .sum();
        assert_eq!(touched, 10);
    }

    #[test]
    fn noise_horizon_silences_tail() {
        let c = parse_circuit_text("R 0\nTICK\nH 0\nTICK\nH 0\nTICK\nM 0").unwrap();
        let mut spec = NoiseSpec::circuit_depolarizing(0.01);
        // horizon at the second H (instruction index 4)
        spec.noise_horizon = Some(4);
        let noisy = annotate_circuit_noise(&c, &spec).unwrap();
        let text = emit_circuit_text(&noisy);
        assert_eq!(
            text,
            "R 0\nDEPOLARIZE1(0.01) 0\nTICK\nH 0\nDEPOLARIZE1(0.01) 0\nTICK\nH 0\nTICK\nM 0\n"
        );
    }

    #[test]
    fn custom_weights_flip_records_only() {
        let c = parse_circuit_text("R 0 1\nM 0\nMX 1\nM 0").unwrap();
        let spec = NoiseSpec {
            mode: NoiseMode::CustomWeights,
            p: 0.01,
            p_z: 0.0,
            custom: Some(HashMap::from([(3usize, 0.015)])),
            noise_horizon: None,
        };
        spec.validate().unwrap();
        let noisy = annotate_circuit_noise(&c, &spec).unwrap();
        assert_eq!(
            emit_circuit_text(&noisy),
            "R 0 1\nX_ERROR(0.01) 0\nM 0\nZ_ERROR(0.01) 1\nMX 1\nX_ERROR(0.015) 0\nM 0\n"
        );
    }

    #[test]
    fn local_stochastic_counts() {
        let c = parse_circuit_text("R 0 1 2 3 4\nCX 0 3 1 3 1 4 2 4\nM 3 4\nM 0 1 2").unwrap();
        let structure = StochasticStructure {
            data_qubits: vec![0, 1, 2],
            se_boundaries: vec![1],
            syndrome_measurements: vec![2],
        };
        let noisy = annotate_local_stochastic(&c, &structure, 0.01).unwrap();
        // one 3-qubit data channel + one 2-record flip channel
        assert_eq!(count_channels(&noisy), 2);
        let text = emit_circuit_text(&noisy);
        assert!(text.contains("DEPOLARIZE1(0.01) 0 1 2"));
        assert!(text.contains("X_ERROR(0.01) 3 4"));
    }

    #[test]
    fn inject_after_prep_chain() {
        let c = parse_circuit_text("R 0 1\nH 0\nS 0\nCX 0 1\nM 0 1").unwrap();
        let injected = inject_z_errors(&c, 0, 0.1).unwrap();
        assert_eq!(
            emit_circuit_text(&injected),
            "R 0 1\nH 0\nS 0\nZ_ERROR(0.1) 0\nCX 0 1\nM 0 1\n"
        );
    }

    #[test]
    fn inject_requires_initialization() {
        let c = parse_circuit_text("H 0\nM 0").unwrap();
        let err = inject_z_errors(&c, 0, 0.1);
        assert!(matches!(err, Err(NoiseError::QubitNeverInitialized { .. })));
    }

    #[test]
    fn inject_composes_with_depolarizing() {
        let c = parse_circuit_text("R 0\nH 0\nS 0\nTICK\nM 0").unwrap();
        let noisy = annotate_circuit_noise(&c, &NoiseSpec::circuit_depolarizing(0.01)).unwrap();
        let injected = inject_z_errors(&noisy, 0, 0.2).unwrap();
        let text = emit_circuit_text(&injected);
        assert!(text.contains("S 0\nDEPOLARIZE1(0.01) 0\nZ_ERROR(0.2) 0\n"));
    }
}
