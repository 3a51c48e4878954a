//! Physical-circuit intermediate representation.
//!
//! A [`PhysicalCircuit`] is an ordered instruction list covering Clifford
//! gates, resets and measurements in both bases, Pauli/depolarizing noise
//! channels, and detector/observable annotations, with a line-oriented text
//! form (one instruction per line, `#` comments).
//!
//! Measurement-record references are relative in the text form (`rec[-k]`)
//! and absolute in memory; parsing resolves them and emission converts back.

use crate::gf2::BitVector;
use crate::pauli::{Pauli, PauliString};
use std::fmt::Write as _;
use thiserror::Error;

/// Single-qubit Clifford mnemonics.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Gate1 {
    H,
    S,
    SDag,
}

/// Two-qubit Clifford mnemonics. `Cx` pairs are (control, target).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Gate2 {
    Cx,
    Cz,
    Swap,
}

/// Pauli applied by a classically controlled gate.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CtrlPauli {
    /// From `CX rec[-k] q…`.
    X,
    /// From `CZ rec[-k] q…`.
    Z,
}

/// One circuit instruction. Record references are absolute measurement ids.
#[derive(Clone, PartialEq, Debug)]
pub enum Instruction {
    QubitCoords {
        qubit: usize,
        coords: Vec<f64>,
    },
    /// `R` — reset to |0⟩.
    Reset {
        qubits: Vec<usize>,
    },
    /// `RX` — reset to |+⟩.
    ResetX {
        qubits: Vec<usize>,
    },
    Gate1 {
        kind: Gate1,
        qubits: Vec<usize>,
    },
    Gate2 {
        kind: Gate2,
        pairs: Vec<(usize, usize)>,
    },
    /// A two-qubit gate whose first target was `rec[-k]`: applies the Pauli
    /// to each listed qubit iff the referenced record bit is 1.
    Classical {
        pauli: CtrlPauli,
        rec: usize,
        qubits: Vec<usize>,
    },
    /// `M` — Z-basis measurement, one record per qubit in order.
    Measure {
        qubits: Vec<usize>,
    },
    /// `MX` — X-basis measurement.
    MeasureX {
        qubits: Vec<usize>,
    },
    XError {
        p: f64,
        qubits: Vec<usize>,
    },
    ZError {
        p: f64,
        qubits: Vec<usize>,
    },
    Depolarize1 {
        p: f64,
        qubits: Vec<usize>,
    },
    Depolarize2 {
        p: f64,
        pairs: Vec<(usize, usize)>,
    },
    Detector {
        coords: Vec<f64>,
        recs: Vec<usize>,
    },
    ObservableInclude {
        index: usize,
        recs: Vec<usize>,
    },
    GaugeObservable {
        index: usize,
    },
    Tick,
}

impl Instruction {
    /// Qubits this instruction touches.
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Instruction::QubitCoords { qubit, .. } => vec![*qubit],
            Instruction::Reset { qubits }
            | Instruction::ResetX { qubits }
            | Instruction::Gate1 { qubits, .. }
            | Instruction::Classical { qubits, .. }
            | Instruction::Measure { qubits }
            | Instruction::MeasureX { qubits }
            | Instruction::XError { qubits, .. }
            | Instruction::ZError { qubits, .. }
            | Instruction::Depolarize1 { qubits, .. } => qubits.clone(),
            Instruction::Gate2 { pairs, .. } | Instruction::Depolarize2 { pairs, .. } => {
                pairs.iter().flat_map(|&(a, b)| [a, b]).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Number of measurement records this instruction emits.
    pub fn record_count(&self) -> usize {
        match self {
            Instruction::Measure { qubits } | Instruction::MeasureX { qubits } => qubits.len(),
            _ => 0,
        }
    }

    pub fn is_noise(&self) -> bool {
        matches!(
            self,
            Instruction::XError { .. }
                | Instruction::ZError { .. }
                | Instruction::Depolarize1 { .. }
                | Instruction::Depolarize2 { .. }
        )
    }
}

/// Errors raised while parsing circuit text.
#[derive(Error, Debug)]
pub enum CircuitParseError {
    #[error("line {line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: malformed arguments: {detail}")]
    MalformedArgs { line: usize, detail: String },
    #[error("line {line}: malformed target `{target}`")]
    MalformedTarget { line: usize, target: String },
    #[error("line {line}: rec[-{lookback}] reaches before the first measurement")]
    ForwardRecReference { line: usize, lookback: usize },
    #[error("line {line}: probability {value} out of range [0,1]")]
    ProbabilityOutOfRange { line: usize, value: f64 },
    #[error("line {line}: classical control is only supported for CX and CZ")]
    UnsupportedClassicalControl { line: usize },
}

/// Ordered instruction list plus derived counts.
#[derive(Clone, PartialEq, Debug, Default)]
pub struct PhysicalCircuit {
    pub num_qubits: usize,
    pub instructions: Vec<Instruction>,
    pub num_measurements: usize,
    pub detector_count: usize,
    pub observable_count: usize,
    /// Per-observable flag: `true` for observables declared nondeterministic
    /// (`GAUGE_OBSERVABLE`).
    pub gauge_flags: Vec<bool>,
}

impl PhysicalCircuit {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append an instruction, updating the derived counts.
    pub fn push(&mut self, instr: Instruction) {
        for q in instr.qubits() {
            self.num_qubits = self.num_qubits.max(q + 1);
        }
        self.num_measurements += instr.record_count();
        match &instr {
            Instruction::Detector { .. } => self.detector_count += 1,
            Instruction::ObservableInclude { index, .. }
            | Instruction::GaugeObservable { index } => {
                if *index >= self.observable_count {
                    self.observable_count = index + 1;
                    self.gauge_flags.resize(self.observable_count, false);
                }
                if matches!(instr, Instruction::GaugeObservable { .. }) {
                    self.gauge_flags[*index] = true;
                }
            }
            _ => {}
        }
        self.instructions.push(instr);
    }

    /// Absolute record ids referenced by each detector, in declaration order.
    pub fn detector_recs(&self) -> Vec<Vec<usize>> {
        self.instructions
            .iter()
            .filter_map(|i| match i {
                Instruction::Detector { recs, .. } => Some(recs.clone()),
                _ => None,
            })
            .collect()
    }

    /// Absolute record ids accumulated per observable index.
    pub fn observable_recs(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.observable_count];
        for i in &self.instructions {
            if let Instruction::ObservableInclude { index, recs } = i {
                out[*index].extend(recs.iter().copied());
            }
        }
        out
    }

    /// Structural validity diagnostics (empty = ok).
    pub fn validate(&self) -> Vec<String> {
        let mut diags = Vec::new();
        let mut seen_recs = 0usize;
        for (idx, instr) in self.instructions.iter().enumerate() {
            for q in instr.qubits() {
                if q >= self.num_qubits {
                    diags.push(format!(
                        "instruction {idx}: qubit {q} out of range {}",
                        self.num_qubits
                    ));
                }
            }
            let mut check_recs = |recs: &[usize]| {
                for &r in recs {
                    if r >= seen_recs {
                        diags.push(format!(
                            "instruction {idx}: record {r} is not yet measured (record underflow)"
                        ));
                    }
                }
            };
            match instr {
                Instruction::Detector { recs, .. } => check_recs(recs),
                Instruction::ObservableInclude { recs, .. } => check_recs(recs),
                Instruction::Classical { rec, .. } => check_recs(&[*rec]),
                Instruction::XError { p, .. }
                | Instruction::ZError { p, .. }
                | Instruction::Depolarize1 { p, .. }
                | Instruction::Depolarize2 { p, .. } => {
                    if !(0.0..=1.0).contains(p) {
                        diags.push(format!("instruction {idx}: probability {p} out of range"));
                    }
                }
                Instruction::Gate2 { pairs, .. } => {
                    for &(a, b) in pairs {
                        if a == b {
                            diags.push(format!("instruction {idx}: duplicate target {a}"));
                        }
                    }
                }
                _ => {}
            }
            seen_recs += instr.record_count();
        }
        if self.gauge_flags.len() != self.observable_count {
            diags.push("gauge flag list length mismatch".to_string());
        }
        diags
    }
}

// ---------- text format ----------

fn fmt_num(v: f64) -> String {
    // `f64` Display emits the shortest string that parses back exactly.
    format!("{v}")
}

/// Render a circuit in the line-oriented text format. The output parses back
/// to a structurally equal circuit.
pub fn emit_circuit_text(c: &PhysicalCircuit) -> String {
    let mut out = String::new();
    let mut seen_recs = 0usize;
    let rec = |abs: usize, seen: usize| format!("rec[-{}]", seen - abs);
    for instr in &c.instructions {
        match instr {
            Instruction::QubitCoords { qubit, coords } => {
                let args: Vec<String> = coords.iter().map(|&v| fmt_num(v)).collect();
                let _ = writeln!(out, "QUBIT_COORDS({}) {}", args.join(","), qubit);
            }
            Instruction::Reset { qubits } => {
                let _ = writeln!(out, "R {}", join_qubits(qubits));
            }
            Instruction::ResetX { qubits } => {
                let _ = writeln!(out, "RX {}", join_qubits(qubits));
            }
            Instruction::Gate1 { kind, qubits } => {
                let name = match kind {
                    Gate1::H => "H",
                    Gate1::S => "S",
                    Gate1::SDag => "S_DAG",
                };
                let _ = writeln!(out, "{name} {}", join_qubits(qubits));
            }
            Instruction::Gate2 { kind, pairs } => {
                let name = match kind {
                    Gate2::Cx => "CX",
                    Gate2::Cz => "CZ",
                    Gate2::Swap => "SWAP",
                };
                let flat: Vec<String> = pairs
                    .iter()
                    .flat_map(|&(a, b)| [a.to_string(), b.to_string()])
                    .collect();
                let _ = writeln!(out, "{name} {}", flat.join(" "));
            }
            Instruction::Classical { pauli, rec: r, qubits } => {
                let name = match pauli {
                    CtrlPauli::X => "CX",
                    CtrlPauli::Z => "CZ",
                };
                let _ = writeln!(out, "{name} {} {}", rec(*r, seen_recs), join_qubits(qubits));
            }
            Instruction::Measure { qubits } => {
                let _ = writeln!(out, "M {}", join_qubits(qubits));
            }
            Instruction::MeasureX { qubits } => {
                let _ = writeln!(out, "MX {}", join_qubits(qubits));
            }
            Instruction::XError { p, qubits } => {
                let _ = writeln!(out, "X_ERROR({}) {}", fmt_num(*p), join_qubits(qubits));
            }
            Instruction::ZError { p, qubits } => {
                let _ = writeln!(out, "Z_ERROR({}) {}", fmt_num(*p), join_qubits(qubits));
            }
            Instruction::Depolarize1 { p, qubits } => {
                let _ = writeln!(out, "DEPOLARIZE1({}) {}", fmt_num(*p), join_qubits(qubits));
            }
            Instruction::Depolarize2 { p, pairs } => {
                let flat: Vec<String> = pairs
                    .iter()
                    .flat_map(|&(a, b)| [a.to_string(), b.to_string()])
                    .collect();
                let _ = writeln!(out, "DEPOLARIZE2({}) {}", fmt_num(*p), flat.join(" "));
            }
            Instruction::Detector { coords, recs } => {
                let refs: Vec<String> = recs.iter().map(|&r| rec(r, seen_recs)).collect();
                if coords.is_empty() {
                    let _ = writeln!(out, "DETECTOR {}", refs.join(" "));
                } else {
                    let args: Vec<String> = coords.iter().map(|&v| fmt_num(v)).collect();
                    let _ = writeln!(out, "DETECTOR({}) {}", args.join(","), refs.join(" "));
                }
            }
            Instruction::ObservableInclude { index, recs } => {
                let refs: Vec<String> = recs.iter().map(|&r| rec(r, seen_recs)).collect();
                let _ = writeln!(out, "OBSERVABLE_INCLUDE({index}) {}", refs.join(" "));
            }
            Instruction::GaugeObservable { index } => {
                let _ = writeln!(out, "GAUGE_OBSERVABLE({index})");
            }
            Instruction::Tick => {
                let _ = writeln!(out, "TICK");
            }
        }
        seen_recs += instr.record_count();
    }
    out
}

fn join_qubits(qubits: &[usize]) -> String {
    qubits
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parse the line-oriented text format.
pub fn parse_circuit_text(text: &str) -> Result<PhysicalCircuit, CircuitParseError> {
    let mut circuit = PhysicalCircuit::new();
    for (line_idx, raw_line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (head, rest) = match line.find(char::is_whitespace) {
            Some(pos) => (&line[..pos], line[pos..].trim()),
            None => (line, ""),
        };
        let (mnemonic, args) = parse_head(head, line_no)?;
        let targets: Vec<&str> = rest.split_whitespace().collect();
        parse_instruction(&mut circuit, mnemonic, &args, &targets, line_no)?;
    }
    Ok(circuit)
}

/// Split `NAME(arg,arg,…)` into the name and parsed numeric args.
fn parse_head<'a>(
    head: &'a str,
    line: usize,
) -> Result<(&'a str, Vec<f64>), CircuitParseError> {
    if let Some(open) = head.find('(') {
        if !head.ends_with(')') {
            return Err(CircuitParseError::MalformedArgs {
                line,
                detail: format!("unbalanced parentheses in `{head}`"),
            });
        }
        let name = &head[..open];
        let inner = &head[open + 1..head.len() - 1];
        let mut args = Vec::new();
        if !inner.is_empty() {
            for piece in inner.split(',') {
                let v: f64 = piece.trim().parse().map_err(|_| {
                    CircuitParseError::MalformedArgs {
                        line,
                        detail: format!("`{piece}` is not a number"),
                    }
                })?;
                args.push(v);
            }
        }
        Ok((name, args))
    } else {
        Ok((head, Vec::new()))
    }
}

enum Target {
    Qubit(usize),
    Rec(usize),
}

fn parse_targets(
    targets: &[&str],
    seen_recs: usize,
    line: usize,
) -> Result<Vec<Target>, CircuitParseError> {
    targets
        .iter()
        .map(|&t| {
            if let Some(body) = t.strip_prefix("rec[-").and_then(|s| s.strip_suffix(']')) {
                let lookback: usize =
                    body.parse()
                        .map_err(|_| CircuitParseError::MalformedTarget {
                            line,
                            target: t.to_string(),
                        })?;
                if lookback == 0 || lookback > seen_recs {
                    return Err(CircuitParseError::ForwardRecReference { line, lookback });
                }
                Ok(Target::Rec(seen_recs - lookback))
            } else {
                t.parse::<usize>()
                    .map(Target::Qubit)
                    .map_err(|_| CircuitParseError::MalformedTarget {
                        line,
                        target: t.to_string(),
                    })
            }
        })
        .collect()
}

fn expect_qubits(
    targets: Vec<Target>,
    line: usize,
) -> Result<Vec<usize>, CircuitParseError> {
    targets
        .into_iter()
        .map(|t| match t {
            Target::Qubit(q) => Ok(q),
            Target::Rec(_) => Err(CircuitParseError::MalformedTarget {
                line,
                target: "rec[..] not allowed here".to_string(),
            }),
        })
        .collect()
}

fn expect_pairs(qubits: Vec<usize>, line: usize) -> Result<Vec<(usize, usize)>, CircuitParseError> {
    if qubits.len() % 2 != 0 {
        return Err(CircuitParseError::MalformedArgs {
            line,
            detail: "odd number of targets for a two-qubit gate".to_string(),
        });
    }
    Ok(qubits.chunks(2).map(|c| (c[0], c[1])).collect())
}

fn probability(args: &[f64], line: usize) -> Result<f64, CircuitParseError> {
    if args.len() != 1 {
        return Err(CircuitParseError::MalformedArgs {
            line,
            detail: format!("expected one probability argument, got {}", args.len()),
        });
    }
    let p = args[0];
    if !(0.0..=1.0).contains(&p) {
        return Err(CircuitParseError::ProbabilityOutOfRange { line, value: p });
    }
    Ok(p)
}

fn parse_instruction(
    circuit: &mut PhysicalCircuit,
    mnemonic: &str,
    args: &[f64],
    raw_targets: &[&str],
    line: usize,
) -> Result<(), CircuitParseError> {
    let seen = circuit.num_measurements;
    let targets = parse_targets(raw_targets, seen, line)?;
    let instr = match mnemonic {
        "QUBIT_COORDS" => {
            let qubits = expect_qubits(targets, line)?;
            if qubits.len() != 1 {
                return Err(CircuitParseError::MalformedArgs {
                    line,
                    detail: "QUBIT_COORDS takes exactly one qubit".to_string(),
                });
            }
            Instruction::QubitCoords {
                qubit: qubits[0],
                coords: args.to_vec(),
            }
        }
        "R" => Instruction::Reset {
            qubits: expect_qubits(targets, line)?,
        },
        "RX" => Instruction::ResetX {
            qubits: expect_qubits(targets, line)?,
        },
        "H" | "S" | "S_DAG" => {
            let kind = match mnemonic {
                "H" => Gate1::H,
                "S" => Gate1::S,
                _ => Gate1::SDag,
            };
            Instruction::Gate1 {
                kind,
                qubits: expect_qubits(targets, line)?,
            }
        }
        "CX" | "CZ" | "SWAP" => {
            // Classical control: first target is a record reference.
            if let Some(Target::Rec(r)) = targets.first() {
                let rec = *r;
                if mnemonic == "SWAP" {
                    return Err(CircuitParseError::UnsupportedClassicalControl { line });
                }
                let rest = expect_qubits(targets.into_iter().skip(1).collect(), line)?;
                Instruction::Classical {
                    pauli: if mnemonic == "CX" {
                        CtrlPauli::X
                    } else {
                        CtrlPauli::Z
                    },
                    rec,
                    qubits: rest,
                }
            } else {
                let kind = match mnemonic {
                    "CX" => Gate2::Cx,
                    "CZ" => Gate2::Cz,
                    _ => Gate2::Swap,
                };
                Instruction::Gate2 {
                    kind,
                    pairs: expect_pairs(expect_qubits(targets, line)?, line)?,
                }
            }
        }
        "M" => Instruction::Measure {
            qubits: expect_qubits(targets, line)?,
        },
        "MX" => Instruction::MeasureX {
            qubits: expect_qubits(targets, line)?,
        },
        "X_ERROR" => Instruction::XError {
            p: probability(args, line)?,
            qubits: expect_qubits(targets, line)?,
        },
        "Z_ERROR" => Instruction::ZError {
            p: probability(args, line)?,
            qubits: expect_qubits(targets, line)?,
        },
        "DEPOLARIZE1" => Instruction::Depolarize1 {
            p: probability(args, line)?,
            qubits: expect_qubits(targets, line)?,
        },
        "DEPOLARIZE2" => Instruction::Depolarize2 {
            p: probability(args, line)?,
            pairs: expect_pairs(expect_qubits(targets, line)?, line)?,
        },
        "DETECTOR" => {
            let recs = targets
                .into_iter()
                .map(|t| match t {
                    Target::Rec(r) => Ok(r),
                    Target::Qubit(_) => Err(CircuitParseError::MalformedTarget {
                        line,
                        target: "DETECTOR targets must be rec[..]".to_string(),
                    }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Instruction::Detector {
                coords: args.to_vec(),
                recs,
            }
        }
        "OBSERVABLE_INCLUDE" => {
            if args.len() != 1 || args[0] < 0.0 || args[0].fract() != 0.0 {
                return Err(CircuitParseError::MalformedArgs {
                    line,
                    detail: "OBSERVABLE_INCLUDE takes one integer index".to_string(),
                });
            }
            let recs = targets
                .into_iter()
                .map(|t| match t {
                    Target::Rec(r) => Ok(r),
                    Target::Qubit(_) => Err(CircuitParseError::MalformedTarget {
                        line,
                        target: "OBSERVABLE_INCLUDE targets must be rec[..]".to_string(),
                    }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Instruction::ObservableInclude {
                index: args[0] as usize,
                recs,
            }
        }
        "GAUGE_OBSERVABLE" => {
            if args.len() != 1 || args[0] < 0.0 || args[0].fract() != 0.0 {
                return Err(CircuitParseError::MalformedArgs {
                    line,
                    detail: "GAUGE_OBSERVABLE takes one integer index".to_string(),
                });
            }
            Instruction::GaugeObservable {
                index: args[0] as usize,
            }
        }
        "TICK" => Instruction::Tick,
        other => {
            return Err(CircuitParseError::UnknownMnemonic {
                line,
                mnemonic: other.to_string(),
            })
        }
    };
    circuit.push(instr);
    Ok(())
}

// ---------- fault propagation ----------

/// A single elementary fault: a Pauli inserted at a point in the instruction
/// stream, or a flip of one measurement record.
#[derive(Clone, PartialEq, Debug)]
pub enum FaultSite {
    /// Pauli applied to `qubit` immediately after instruction `after`
    /// completes. `after == usize::MAX` is not allowed; use `before_start`
    /// semantics by inserting at the first instruction index minus one is not
    /// needed because circuits start with resets.
    Pauli {
        after: usize,
        qubit: usize,
        pauli: Pauli,
    },
    /// Flip of measurement record `measurement`.
    MeasurementFlip { measurement: usize },
}

/// Deterministic effect of one fault: flipped records plus the residual Pauli
/// left on the qubits at the end of the circuit.
#[derive(Clone, Debug)]
pub struct Propagated {
    pub measurement_flips: BitVector,
    pub residual: PauliString,
}

impl Propagated {
    /// Detector bits flipped by this fault.
    pub fn detector_flips(&self, c: &PhysicalCircuit) -> BitVector {
        let mut out = BitVector::zeros(c.detector_count);
        for (d, recs) in c.detector_recs().iter().enumerate() {
            let parity = recs
                .iter()
                .fold(false, |acc, &r| acc ^ self.measurement_flips.get(r));
            if parity {
                out.set(d, true);
            }
        }
        out
    }

    /// Observable bits flipped by this fault.
    pub fn observable_flips(&self, c: &PhysicalCircuit) -> BitVector {
        let mut out = BitVector::zeros(c.observable_count);
        for (o, recs) in c.observable_recs().iter().enumerate() {
            let parity = recs
                .iter()
                .fold(false, |acc, &r| acc ^ self.measurement_flips.get(r));
            if parity {
                out.set(o, true);
            }
        }
        out
    }
}

/// Propagate a Pauli inserted after instruction `start` through the rest of
/// the circuit. See [`forward_propagate`] for the single-fault wrapper.
pub fn propagate_pauli_from(c: &PhysicalCircuit, start: usize, pauli: PauliString) -> Propagated {
    let mut state = pauli;
    let mut flips = BitVector::zeros(c.num_measurements);
    let mut rec_index: usize = c.instructions[..=start.min(c.instructions.len().saturating_sub(1))]
        .iter()
        .map(Instruction::record_count)
        .sum();
    if c.instructions.is_empty() {
        return Propagated {
            measurement_flips: flips,
            residual: state,
        };
    }
    for instr in &c.instructions[start + 1..] {
        apply_instruction_to_pauli(instr, &mut state, &mut flips, &mut rec_index);
    }
    Propagated {
        measurement_flips: flips,
        residual: state,
    }
}

fn apply_instruction_to_pauli(
    instr: &Instruction,
    state: &mut PauliString,
    flips: &mut BitVector,
    rec_index: &mut usize,
) {
    use crate::pauli::CliffordStep;
    match instr {
        Instruction::Gate1 { kind, qubits } => {
            for &q in qubits {
                let step = match kind {
                    Gate1::H => CliffordStep::H(q),
                    Gate1::S => CliffordStep::S(q),
                    Gate1::SDag => CliffordStep::SDag(q),
                };
                state.conjugate_through_in_place(&step);
            }
        }
        Instruction::Gate2 { kind, pairs } => {
            for &(a, b) in pairs {
                let step = match kind {
                    Gate2::Cx => CliffordStep::Cx(a, b),
                    Gate2::Cz => CliffordStep::Cz(a, b),
                    Gate2::Swap => CliffordStep::Swap(a, b),
                };
                state.conjugate_through_in_place(&step);
            }
        }
        Instruction::Classical { pauli, rec, qubits } => {
            // A flipped control record changes whether the Pauli fires.
            if flips.get(*rec) {
                for &q in qubits {
                    match pauli {
                        CtrlPauli::X => state.apply(q, Pauli::X),
                        CtrlPauli::Z => state.apply(q, Pauli::Z),
                    }
                }
            }
        }
        Instruction::Reset { qubits } | Instruction::ResetX { qubits } => {
            for &q in qubits {
                if state.x_bit(q) {
                    state.apply(q, Pauli::X);
                }
                if state.z_bit(q) {
                    state.apply(q, Pauli::Z);
                }
            }
        }
        Instruction::Measure { qubits } => {
            for &q in qubits {
                if state.x_bit(q) {
                    flips.toggle(*rec_index);
                }
                *rec_index += 1;
            }
        }
        Instruction::MeasureX { qubits } => {
            for &q in qubits {
                if state.z_bit(q) {
                    flips.toggle(*rec_index);
                }
                *rec_index += 1;
            }
        }
        _ => {}
    }
}

/// Forward-propagate one fault to its measurement flips and residual Pauli.
pub fn forward_propagate(c: &PhysicalCircuit, fault: &FaultSite) -> Propagated {
    match fault {
        FaultSite::Pauli {
            after,
            qubit,
            pauli,
        } => {
            assert!(*after < c.instructions.len(), "fault site out of range");
            propagate_pauli_from(c, *after, PauliString::single(c.num_qubits, *qubit, *pauli))
        }
        FaultSite::MeasurementFlip { measurement } => {
            assert!(*measurement < c.num_measurements, "record out of range");
            let mut flips = BitVector::zeros(c.num_measurements);
            flips.set(*measurement, true);
            // A flipped record can retrigger classically controlled Paulis.
            let mut state = PauliString::identity(c.num_qubits);
            let mut rec_index = 0usize;
            let mut started = false;
            for instr in &c.instructions {
                if started {
                    apply_instruction_to_pauli(instr, &mut state, &mut flips, &mut rec_index);
                } else {
                    rec_index += instr.record_count();
                    if rec_index > *measurement {
                        started = true;
                    }
                }
            }
            Propagated {
                measurement_flips: flips,
                residual: state,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_simple() {
        let c = parse_circuit_text("H 0\nM 0").unwrap();
        assert_eq!(c.num_qubits, 1);
        assert_eq!(c.instructions.len(), 2);
        assert_eq!(c.num_measurements, 1);
    }

    #[test]
    fn parse_detector_reference() {
        let c = parse_circuit_text("M 0\nDETECTOR rec[-1]").unwrap();
        assert_eq!(c.detector_count, 1);
        assert_eq!(c.detector_recs(), vec![vec![0]]);
    }

    #[test]
    fn parse_classical_control() {
        let c = parse_circuit_text("M 0\nCX rec[-1] 2").unwrap();
        assert!(matches!(
            &c.instructions[1],
            Instruction::Classical {
                pauli: CtrlPauli::X,
                rec: 0,
                ..
            }
        ));
        assert_eq!(c.num_qubits, 3);
    }

    #[test]
    fn reject_forward_reference() {
        let err = parse_circuit_text("DETECTOR rec[-1]").unwrap_err();
        assert!(matches!(err, CircuitParseError::ForwardRecReference { .. }));
    }

    #[test]
    fn reject_bad_probability() {
        let err = parse_circuit_text("DEPOLARIZE1(1.5) 0").unwrap_err();
        assert!(matches!(
            err,
            CircuitParseError::ProbabilityOutOfRange { .. }
        ));
    }

    #[test]
    fn roundtrip_small() {
        let text = "QUBIT_COORDS(0,1) 0\nR 0 1\nTICK\nH 0\nCX 0 1\nDEPOLARIZE2(0.001) 0 1\nM 0 1\nDETECTOR(3) rec[-2] rec[-1]\nOBSERVABLE_INCLUDE(0) rec[-1]\nGAUGE_OBSERVABLE(0)\n";
        let c = parse_circuit_text(text).unwrap();
        let emitted = emit_circuit_text(&c);
        let reparsed = parse_circuit_text(&emitted).unwrap();
        assert_eq!(c, reparsed);
    }

    #[test]
    fn propagate_z_before_measure_is_silent() {
        let c = parse_circuit_text("R 0\nM 0").unwrap();
        let p = forward_propagate(
            &c,
            &FaultSite::Pauli {
                after: 0,
                qubit: 0,
                pauli: Pauli::Z,
            },
        );
        assert!(p.measurement_flips.is_zero());
    }

    #[test]
    fn propagate_x_through_cx_flips_both() {
        let c = parse_circuit_text("R 0 1\nCX 0 1\nM 0 1").unwrap();
        let p = forward_propagate(
            &c,
            &FaultSite::Pauli {
                after: 0,
                qubit: 0,
                pauli: Pauli::X,
            },
        );
        assert!(p.measurement_flips.get(0));
        assert!(p.measurement_flips.get(1));
    }

    #[test]
    fn record_underflow_diagnostic() {
        let mut c = parse_circuit_text("M 0 1").unwrap();
        c.instructions.push(Instruction::Detector {
            coords: vec![],
            recs: vec![4],
        });
        c.detector_count += 1;
        let diags = c.validate();
        assert!(diags.iter().any(|d| d.contains("record underflow")));
    }
}
