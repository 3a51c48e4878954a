//! Pauli-frame Monte Carlo sampling.
//!
//! A shot is simulated as an XOR frame on top of a fixed noiseless reference
//! execution: the frame holds, per qubit, the X/Z difference between the
//! noisy run and the reference. Fault channels toggle frame bits, Cliffords
//! conjugate the frame, and measurement randomness enters through coin bits
//! drawn at resets and after measurements (a collapsed qubit's unobservable
//! Z — or X, in the X basis — difference is re-randomized, which is what
//! makes later anticommuting measurements independently random).
//!
//! Every instruction consumes a fixed number of random draws regardless of
//! outcomes, so two circuits sharing an instruction prefix draw identical
//! randomness from identically seeded streams. Branch-variant circuits rely
//! on this to see consistent shared bits.

use crate::circuit::{CtrlPauli, Gate1, Gate2, Instruction, PhysicalCircuit};
use crate::gf2::BitVector;
use crate::tableau::reference_run;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use rayon::prelude::*;
use std::io::{self, Read, Write};
use thiserror::Error;

/// Master seed plus the per-shot stream derivation rule.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SeedSpec {
    pub master_seed: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        SeedSpec { master_seed }
    }

    /// Independent stream for one shot: xoshiro256** seeded (via splitmix64)
    /// from `master_seed ⊕ shot_index`.
    #[must_use]
    pub fn shot_rng(&self, shot_index: u64) -> Xoshiro256StarStar {
        Xoshiro256StarStar::seed_from_u64(self.master_seed ^ shot_index)
    }
}

/// One sampled fault, addressed by channel instruction, target slot within
/// the instruction, and Pauli component index within the channel.
///
/// Component order: X_ERROR/Z_ERROR have the single component 0;
/// DEPOLARIZE1 uses `[X, Y, Z]`; DEPOLARIZE2 enumerates the 15 two-qubit
/// Paulis in base-4 order (I,X,Y,Z per factor) with II skipped, so component
/// `k` is the pair `((k+1)/4, (k+1)%4)`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SampledFault {
    pub instruction: usize,
    pub slot: usize,
    pub component: usize,
}

/// One frame coin: the fresh random bit drawn at a reset or just after a
/// measurement, addressed like [`SampledFault`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct CoinDraw {
    pub instruction: usize,
    pub slot: usize,
    pub value: bool,
}

/// Ground truth for one shot.
#[derive(Clone, Debug, Default)]
pub struct ShotTruth {
    pub faults: Vec<SampledFault>,
    pub coins: Vec<CoinDraw>,
}

/// One sampled shot.
#[derive(Clone, Debug)]
pub struct ShotRecord {
    pub shot_index: u64,
    pub measurement_bits: BitVector,
    pub detector_bits: BitVector,
    pub observable_bits: BitVector,
    pub truth: Option<ShotTruth>,
}

#[derive(Error, Debug)]
pub enum SamplerError {
    #[error("measurement bit count {got} does not match circuit count {want}")]
    LengthMismatch { got: usize, want: usize },
}

/// Noiseless frame-zero reference measurement bits.
#[must_use]
pub fn reference_sample(c: &PhysicalCircuit) -> BitVector {
    let r = reference_run(c);
    BitVector::from_bools(&r.records)
}

/// Raw DETECTOR / OBSERVABLE_INCLUDE parities of the given measurement bits.
///
/// Detector *events* are parities relative to the noiseless run: XOR the raw
/// detector parities of a shot with those of [`reference_sample`], or
/// equivalently evaluate this on the flip mask alone. A deterministic readout
/// whose noiseless parity is 1 (fold gates produce these) is still a valid
/// detector; only the relative parity carries noise information. Observables
/// are reported as raw parities — their actual logical values.
pub fn shot_to_detectors(
    c: &PhysicalCircuit,
    measurement_bits: &BitVector,
) -> Result<(BitVector, BitVector), SamplerError> {
    if measurement_bits.len() != c.num_measurements {
        return Err(SamplerError::LengthMismatch {
            got: measurement_bits.len(),
            want: c.num_measurements,
        });
    }
    let mut det = BitVector::zeros(c.detector_count);
    let mut obs = BitVector::zeros(c.observable_count);
    let mut det_idx = 0usize;
    for instr in &c.instructions {
        match instr {
            Instruction::Detector { recs, .. } => {
                let parity = recs
                    .iter()
                    .fold(false, |acc, &r| acc ^ measurement_bits.get(r));
                det.set(det_idx, parity);
                det_idx += 1;
            }
            Instruction::ObservableInclude { index, recs } => {
                let parity = recs
                    .iter()
                    .fold(false, |acc, &r| acc ^ measurement_bits.get(r));
                if parity {
                    obs.toggle(*index);
                }
            }
            _ => {}
        }
    }
    Ok((det, obs))
}

/// Per-qubit frame state during one shot.
struct Frame {
    x: BitVector,
    z: BitVector,
}

const F64_SCALE: f64 = 1.0 / (1u64 << 53) as f64;

fn draw_uniform(rng: &mut Xoshiro256StarStar) -> f64 {
    (rng.next_u64() >> 11) as f64 * F64_SCALE
}

fn draw_bit(rng: &mut Xoshiro256StarStar) -> bool {
    rng.next_u64() & 1 == 1
}

/// Optional coin override: `(instruction, slot, drawn)` → value to use.
pub type CoinOverride<'a> = &'a dyn Fn(usize, usize, bool) -> bool;

/// Sample one shot. `reference` must be `reference_sample(c)`.
pub fn sample_shot(
    c: &PhysicalCircuit,
    reference: &BitVector,
    shot_index: u64,
    seed: &SeedSpec,
    keep_truth: bool,
) -> ShotRecord {
    sample_shot_with(c, reference, shot_index, seed, keep_truth, None)
}

/// Sample one shot with optional forced coin values (used by frame-invariance
/// checks). The RNG consumes the same draws either way.
pub fn sample_shot_with(
    c: &PhysicalCircuit,
    reference: &BitVector,
    shot_index: u64,
    seed: &SeedSpec,
    keep_truth: bool,
    coin_override: Option<CoinOverride<'_>>,
) -> ShotRecord {
    let mut rng = seed.shot_rng(shot_index);
    let mut frame = Frame {
        x: BitVector::zeros(c.num_qubits),
        z: BitVector::zeros(c.num_qubits),
    };
    let mut flips = BitVector::zeros(c.num_measurements);
    let mut truth = keep_truth.then(ShotTruth::default);
    let mut rec_index = 0usize;

    for (idx, instr) in c.instructions.iter().enumerate() {
        let coin = |rng: &mut Xoshiro256StarStar,
                        truth: &mut Option<ShotTruth>,
                        slot: usize|
         -> bool {
            let drawn = draw_bit(rng);
            let value = match coin_override {
                Some(f) => f(idx, slot, drawn),
                None => drawn,
            };
            if let Some(t) = truth.as_mut() {
                t.coins.push(CoinDraw {
                    instruction: idx,
                    slot,
                    value,
                });
            }
            value
        };
        match instr {
            Instruction::Reset { qubits } => {
                for (slot, &q) in qubits.iter().enumerate() {
                    frame.x.set(q, false);
                    frame.z.set(q, coin(&mut rng, &mut truth, slot));
                }
            }
            Instruction::ResetX { qubits } => {
                for (slot, &q) in qubits.iter().enumerate() {
                    frame.z.set(q, false);
                    frame.x.set(q, coin(&mut rng, &mut truth, slot));
                }
            }
            Instruction::Gate1 { kind, qubits } => {
                for &q in qubits {
                    match kind {
                        Gate1::H => {
                            let xb = frame.x.get(q);
                            let zb = frame.z.get(q);
                            frame.x.set(q, zb);
                            frame.z.set(q, xb);
                        }
                        Gate1::S | Gate1::SDag => {
                            if frame.x.get(q) {
                                frame.z.toggle(q);
                            }
                        }
                    }
                }
            }
            Instruction::Gate2 { kind, pairs } => {
                for &(a, b) in pairs {
                    match kind {
                        Gate2::Cx => {
                            if frame.x.get(a) {
                                frame.x.toggle(b);
                            }
                            if frame.z.get(b) {
                                frame.z.toggle(a);
                            }
                        }
                        Gate2::Cz => {
                            if frame.x.get(a) {
                                frame.z.toggle(b);
                            }
                            if frame.x.get(b) {
                                frame.z.toggle(a);
                            }
                        }
                        Gate2::Swap => {
                            let (xa, xb) = (frame.x.get(a), frame.x.get(b));
                            frame.x.set(a, xb);
                            frame.x.set(b, xa);
                            let (za, zb) = (frame.z.get(a), frame.z.get(b));
                            frame.z.set(a, zb);
                            frame.z.set(b, za);
                        }
                    }
                }
            }
            Instruction::Classical { pauli, rec, qubits } => {
                // Only the *difference* from the reference feedforward acts
                // on the frame.
                if flips.get(*rec) {
                    for &q in qubits {
                        match pauli {
                            CtrlPauli::X => frame.x.toggle(q),
                            CtrlPauli::Z => frame.z.toggle(q),
                        }
                    }
                }
            }
            Instruction::Measure { qubits } => {
                for (slot, &q) in qubits.iter().enumerate() {
                    if frame.x.get(q) {
                        flips.set(rec_index, true);
                    }
                    rec_index += 1;
                    frame.z.set(q, coin(&mut rng, &mut truth, slot));
                }
            }
            Instruction::MeasureX { qubits } => {
                for (slot, &q) in qubits.iter().enumerate() {
                    if frame.z.get(q) {
                        flips.set(rec_index, true);
                    }
                    rec_index += 1;
                    frame.x.set(q, coin(&mut rng, &mut truth, slot));
                }
            }
            Instruction::XError { p, qubits } => {
                for (slot, &q) in qubits.iter().enumerate() {
                    if draw_uniform(&mut rng) < *p {
                        frame.x.toggle(q);
                        record_fault(&mut truth, idx, slot, 0);
                    }
                }
            }
            Instruction::ZError { p, qubits } => {
                for (slot, &q) in qubits.iter().enumerate() {
                    if draw_uniform(&mut rng) < *p {
                        frame.z.toggle(q);
                        record_fault(&mut truth, idx, slot, 0);
                    }
                }
            }
            Instruction::Depolarize1 { p, qubits } => {
                for (slot, &q) in qubits.iter().enumerate() {
                    let u = draw_uniform(&mut rng);
                    if u < *p {
                        let component = (((u / *p) * 3.0) as usize).min(2);
                        // components: X, Y, Z
                        if component != 2 {
                            frame.x.toggle(q);
                        }
                        if component != 0 {
                            frame.z.toggle(q);
                        }
                        record_fault(&mut truth, idx, slot, component);
                    }
                }
            }
            Instruction::Depolarize2 { p, pairs } => {
                for (slot, &(a, b)) in pairs.iter().enumerate() {
                    let u = draw_uniform(&mut rng);
                    if u < *p {
                        let component = (((u / *p) * 15.0) as usize).min(14);
                        let pa = (component + 1) / 4;
                        let pb = (component + 1) % 4;
                        apply_pauli_code(&mut frame, a, pa);
                        apply_pauli_code(&mut frame, b, pb);
                        record_fault(&mut truth, idx, slot, component);
                    }
                }
            }
            _ => {}
        }
    }

    let mut measurement_bits = reference.clone();
    measurement_bits.xor_assign(&flips);
    let (detector_bits, _) =
        shot_to_detectors(c, &flips).expect("flip mask length matches circuit");
    let (_, observable_bits) =
        shot_to_detectors(c, &measurement_bits).expect("reference length matches circuit");
    ShotRecord {
        shot_index,
        measurement_bits,
        detector_bits,
        observable_bits,
        truth,
    }
}

/// Apply Pauli code 0=I, 1=X, 2=Y, 3=Z to the frame.
fn apply_pauli_code(frame: &mut Frame, q: usize, code: usize) {
    if code == 1 || code == 2 {
        frame.x.toggle(q);
    }
    if code == 2 || code == 3 {
        frame.z.toggle(q);
    }
}

fn record_fault(truth: &mut Option<ShotTruth>, instruction: usize, slot: usize, component: usize) {
    if let Some(t) = truth.as_mut() {
        t.faults.push(SampledFault {
            instruction,
            slot,
            component,
        });
    }
}

/// Sample a batch of shots in parallel. Deterministic given the seed.
pub fn sample_batch(
    c: &PhysicalCircuit,
    shots: u64,
    seed: &SeedSpec,
    keep_truth: bool,
) -> Vec<ShotRecord> {
    let reference = reference_sample(c);
    (0..shots)
        .into_par_iter()
        .map(|i| sample_shot(c, &reference, i, seed, keep_truth))
        .collect()
}

// ---------- binary shot dump ----------

const DUMP_MAGIC: &[u8; 4] = b"SHD1";

fn pack_bits(bits: &BitVector, out: &mut Vec<u8>) {
    let bytes = bits.len().div_ceil(8);
    let start = out.len();
    out.resize(start + bytes, 0);
    for i in 0..bits.len() {
        if bits.get(i) {
            out[start + i / 8] |= 1 << (i % 8);
        }
    }
}

fn unpack_bits(data: &[u8], len: usize) -> BitVector {
    let mut out = BitVector::zeros(len);
    for i in 0..len {
        if data[i / 8] >> (i % 8) & 1 == 1 {
            out.set(i, true);
        }
    }
    out
}

/// Write a packed binary dump: magic, then shot/measurement/detector/
/// observable counts as little-endian u64, then per shot the measurement,
/// detector, and observable bits, each packed low-bit-first into whole bytes.
pub fn write_shot_dump<W: Write>(
    w: &mut W,
    c: &PhysicalCircuit,
    shots: &[ShotRecord],
) -> io::Result<()> {
    w.write_all(DUMP_MAGIC)?;
    for count in [
        shots.len() as u64,
        c.num_measurements as u64,
        c.detector_count as u64,
        c.observable_count as u64,
    ] {
        w.write_all(&count.to_le_bytes())?;
    }
    let mut buf = Vec::new();
    for shot in shots {
        buf.clear();
        pack_bits(&shot.measurement_bits, &mut buf);
        pack_bits(&shot.detector_bits, &mut buf);
        pack_bits(&shot.observable_bits, &mut buf);
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Parsed form of a binary shot dump.
#[derive(Clone, Debug)]
pub struct ShotDump {
    pub num_measurements: usize,
    pub num_detectors: usize,
    pub num_observables: usize,
    /// Per shot: (measurement_bits, detector_bits, observable_bits).
    pub shots: Vec<(BitVector, BitVector, BitVector)>,
}

pub fn read_shot_dump<R: Read>(r: &mut R) -> io::Result<ShotDump> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad magic"));
    }
    let mut counts = [0u64; 4];
    for c in &mut counts {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        *c = u64::from_le_bytes(b);
    }
    let [num_shots, num_meas, num_det, num_obs] = counts.map(|c| c as usize);
    let row_bytes = num_meas.div_ceil(8) + num_det.div_ceil(8) + num_obs.div_ceil(8);
    let mut shots = Vec::with_capacity(num_shots);
    let mut row = vec![0u8; row_bytes];
    for _ in 0..num_shots {
        r.read_exact(&mut row)?;
        let (m_bytes, rest) = row.split_at(num_meas.div_ceil(8));
        let (d_bytes, o_bytes) = rest.split_at(num_det.div_ceil(8));
        shots.push((
            unpack_bits(m_bytes, num_meas),
            unpack_bits(d_bytes, num_det),
            unpack_bits(o_bytes, num_obs),
        ));
    }
    Ok(ShotDump {
        num_measurements: num_meas,
        num_detectors: num_det,
        num_observables: num_obs,
        shots,
    })
}
