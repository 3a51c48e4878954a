//! Per-shot adaptive decoding: partial decodes against growing detector
//! prefixes, monotone commitment, consistency restoration through frame
//! logicals, feedforward branch selection, and verdict classification.

use crate::compiler::{BranchedProgram, LogicalMeasurement};
use crate::decoders::{DecodeError, Decoder};
use crate::dem::{
    build_dem, build_frame_system, decompose, prefix_detector_mask, restrict,
    DetectorErrorModel, FrameSeed, FrameSystem,
};
use crate::gf2::{solve, BitMatrix, BitVector};
use crate::noise::{
    annotate_circuit_noise, annotate_local_stochastic, inject_z_errors, NoiseError, NoiseMode,
    NoiseSpec,
};
use crate::sampler::{reference_sample, sample_shot, shot_to_detectors, SeedSpec, ShotRecord};
use crate::{Instruction, PhysicalCircuit};
use std::collections::HashMap;
use std::sync::Mutex;
use thiserror::Error;

fn first_prep_index(c: &PhysicalCircuit, qubit: usize) -> Option<usize> {
    c.instructions.iter().position(|instr| {
        matches!(
            instr,
            Instruction::Reset { qubits } | Instruction::ResetX { qubits }
                if qubits.contains(&qubit)
        )
    })
}

fn channel_probability(instr: &Instruction) -> f64 {
    match instr {
        Instruction::XError { p, .. }
        | Instruction::ZError { p, .. }
        | Instruction::Depolarize1 { p, .. }
        | Instruction::Depolarize2 { p, .. } => *p,
        _ => 0.0,
    }
}

/// Index of the `k`-th non-noise instruction of `c`, or one past the end.
fn nth_non_noise_index(c: &PhysicalCircuit, k: usize) -> usize {
    let mut seen = 0usize;
    for (idx, instr) in c.instructions.iter().enumerate() {
        if !instr.is_noise() {
            if seen == k {
                return idx;
            }
            seen += 1;
        }
    }
    c.instructions.len()
}

/// One deterministic parity of committed logical measurement outcomes. The
/// per-branch constant is derived from the branch's noiseless reference, so a
/// check evaluates to 0 on every ideal execution.
#[derive(Clone, Debug)]
pub struct ScenarioCheck {
    pub name: String,
    /// Logical measurement indices whose committed bits are XORed.
    pub bits: Vec<usize>,
}

/// Everything one measurement step needs for partial decoding.
#[derive(Clone, Debug)]
pub struct DecodeStep {
    /// Detectors fully determined by records below this step's cutoff.
    pub detector_mask: BitVector,
    /// Γ|_j: the model restricted to that prefix and observables 1..j.
    pub gamma: DetectorErrorModel,
    /// Graphlike decomposition of Γ|_j for the union-find decoders.
    pub gamma_prime: DetectorErrorModel,
}

/// One feedforward branch, fully prepared for decoding.
#[derive(Clone, Debug)]
pub struct PreparedBranch {
    /// Decision values this branch was compiled under.
    pub selector: Vec<bool>,
    /// The branch circuit with noise channels inserted.
    pub circuit: PhysicalCircuit,
    pub reference: BitVector,
    /// Noiseless logical value per measurement (readout corrections folded
    /// in): what every committed bit equals on an ideal run.
    pub ideal_values: Vec<bool>,
    /// Per-observable XOR correction mapping raw readout parity to logical
    /// value.
    pub corrections: Vec<bool>,
    pub measurements: Vec<LogicalMeasurement>,
    pub postselection_detectors: Vec<usize>,
    pub frames: FrameSystem,
    pub steps: Vec<DecodeStep>,
    /// Ideal value of each scenario check's bit parity in this branch.
    pub check_constants: Vec<bool>,
}

/// A scenario compiled, noise-annotated, and preprocessed for shot decoding.
#[derive(Clone, Debug)]
pub struct PreparedScenario {
    pub name: String,
    /// Logical measurement indices the conditional Cliffords read.
    pub decisions: Vec<usize>,
    /// All 2^decisions branches, indexed by their selector bits.
    pub branches: Vec<PreparedBranch>,
    pub checks: Vec<ScenarioCheck>,
    /// Logical measurements per branch (identical across branches).
    pub num_measurements: usize,
}

#[derive(Error, Debug)]
pub enum PrepareError {
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("branches disagree on logical measurement count")]
    MeasurementCountMismatch,
    #[error("check `{0}` references measurement {1} of {2}")]
    CheckOutOfRange(String, usize, usize),
}

/// Growing record of a shot's decoding history.
#[derive(Clone, Debug, Default)]
pub struct Commitment {
    /// Committed logical bits; bits are only ever appended.
    pub bits: BitVector,
    /// Frame-logical assignment applied at each step.
    pub applied_gl: Vec<BitVector>,
    /// Decision values, set once their source measurement commits.
    pub branch_values: Vec<Option<bool>>,
}

impl Commitment {
    fn new(decisions: usize) -> Self {
        Commitment {
            bits: BitVector::zeros(0),
            applied_gl: Vec::new(),
            branch_values: vec![None; decisions],
        }
    }

    /// Branch selector under the committed decisions; undecided values
    /// default to `false`, which is sound because an undecided branch point
    /// can only affect the circuit after the current decode cutoff.
    fn selector_index(&self) -> usize {
        self.branch_values
            .iter()
            .enumerate()
            .map(|(k, v)| usize::from(v.unwrap_or(false)) << k)
            .sum()
    }
}

/// Terminal classification of one decoded shot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ShotVerdict {
    Success,
    /// Consistency restoration found no frame-logical solution at this
    /// 1-based measurement step.
    HeraldedFailure { step: usize },
    /// Deterministic scenario checks that evaluated to 1.
    LogicalError { violated: Vec<usize> },
    /// The decoder could not reproduce a syndrome: model/circuit mismatch.
    Infeasible,
}

/// Outcome of running one shot, postselection included.
#[derive(Clone, Debug)]
pub enum ShotOutcome {
    /// A postselection detector fired; the shot is excluded entirely.
    Discarded,
    Completed {
        verdict: ShotVerdict,
        commitment: Commitment,
        /// Whether any re-decode disagreed with an earlier commitment
        /// (only populated by the no-consistency ablation).
        inconsistent: bool,
    },
}

impl ShotOutcome {
    pub fn verdict(&self) -> Option<&ShotVerdict> {
        match self {
            ShotOutcome::Discarded => None,
            ShotOutcome::Completed { verdict, .. } => Some(verdict),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RuntimeOptions {
    /// Replace consistency restoration with commit-latest, counting
    /// disagreements instead of restoring them.
    pub no_consistency: bool,
}

/// Memoized partial decodes, keyed by (branch, step, masked syndrome).
/// Shared read-mostly across concurrently decoded shots.
#[derive(Default)]
pub struct DecodeCache {
    map: Mutex<HashMap<(usize, usize, Vec<u64>), Option<BitVector>>>,
}

impl DecodeCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PreparedScenario {
    /// Compile-time preparation: annotate noise, build per-branch reference
    /// runs, frame systems, and the Γ|_j chain for every measurement step.
    ///
    /// `readout_flips` lists observables whose interpretation the scenario
    /// inverts — software Pauli inputs such as a |1⟩ prepared as |0⟩ plus a
    /// tracked logical X.
    pub fn prepare(
        name: impl Into<String>,
        branched: &BranchedProgram,
        noise: &NoiseSpec,
        checks: Vec<ScenarioCheck>,
        readout_flips: &[usize],
    ) -> Result<Self, PrepareError> {
        let mut branches = Vec::with_capacity(branched.branches.len());
        let mut num_measurements = None;
        for branch in &branched.branches {
            let program = &branch.program;
            match num_measurements {
                None => num_measurements = Some(program.logical_measurements.len()),
                Some(m) if m == program.logical_measurements.len() => {}
                Some(_) => return Err(PrepareError::MeasurementCountMismatch),
            }
            for check in &checks {
                for &b in &check.bits {
                    if b >= program.logical_measurements.len() {
                        return Err(PrepareError::CheckOutOfRange(
                            check.name.clone(),
                            b,
                            program.logical_measurements.len(),
                        ));
                    }
                }
            }

            let mut spec = noise.clone();
            spec.noise_horizon = match (spec.noise_horizon, program.noise_horizon) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            let noiseless = spec.p == 0.0
                && spec.p_z == 0.0
                && spec.custom.as_ref().is_none_or(HashMap::is_empty);
            let mut circuit = if noiseless {
                program.circuit.clone()
            } else if spec.mode == NoiseMode::LocalStochastic {
                annotate_local_stochastic(&program.circuit, &program.stochastic, spec.p)?
            } else {
                annotate_circuit_noise(&program.circuit, &spec)?
            };
            if spec.p_z > 0.0 {
                for &q in &program.injected_qubits {
                    // Injections past the noise horizon stay ideal, like
                    // every other channel there.
                    let past_horizon = spec.noise_horizon.is_some_and(|h| {
                        first_prep_index(&program.circuit, q).is_some_and(|idx| idx >= h)
                    });
                    if !past_horizon {
                        circuit = inject_z_errors(&circuit, q, spec.p_z)?;
                    }
                }
            }
            // A channel that never fires only costs sampler draws and sweep
            // memory; removing it leaves records and detectors untouched.
            circuit
                .instructions
                .retain(|i| !i.is_noise() || channel_probability(i) > 0.0);

            let reference = reference_sample(&circuit);
            let (_, reference_obs) = shot_to_detectors(&circuit, &reference)
                .expect("reference sample length matches circuit");
            let mut corrections = program.software_corrections.clone();
            for &o in readout_flips {
                corrections[o] = !corrections[o];
            }
            let ideal_values: Vec<bool> = program
                .logical_measurements
                .iter()
                .map(|lm| reference_obs.get(lm.observable) ^ corrections[lm.observable])
                .collect();
            let check_constants: Vec<bool> = checks
                .iter()
                .map(|c| c.bits.iter().fold(false, |acc, &b| acc ^ ideal_values[b]))
                .collect();

            // Annotation inserted noise instructions, so the seeds' insertion
            // points need translating: the k-th non-noise instruction of the
            // annotated circuit is the k-th instruction of the bare one.
            let seeds: Vec<FrameSeed> = program
                .frame_seeds
                .iter()
                .map(|s| {
                    let mut out = s.clone();
                    out.after = nth_non_noise_index(&circuit, s.after);
                    out
                })
                .collect();
            let frames = build_frame_system(&circuit, &seeds);
            let mut full = build_dem(&circuit);
            // Zero-probability channels carry no information and break the
            // log-likelihood weights; drop them outright.
            full.mechanisms.retain(|m| m.probability > 0.0);
            for (i, m) in full.mechanisms.iter_mut().enumerate() {
                m.id = i;
            }

            let steps = program
                .logical_measurements
                .iter()
                .enumerate()
                .map(|(mj, lm)| {
                    let keep_det = prefix_detector_mask(&circuit, lm.cutoff - 1);
                    let keep_obs: Vec<bool> =
                        (0..full.observable_count).map(|o| o <= mj).collect();
                    let gamma = restrict(&full, &keep_det, &keep_obs);
                    let gamma_prime = decompose(&gamma);
                    DecodeStep {
                        detector_mask: BitVector::from_bools(&keep_det),
                        gamma,
                        gamma_prime,
                    }
                })
                .collect();

            branches.push(PreparedBranch {
                selector: branch.selector.clone(),
                circuit,
                reference,
                ideal_values,
                corrections,
                measurements: program.logical_measurements.clone(),
                postselection_detectors: program.postselection_detectors.clone(),
                frames,
                steps,
                check_constants,
            });
        }
        Ok(PreparedScenario {
            name: name.into(),
            decisions: branched.decisions.clone(),
            branches,
            checks,
            num_measurements: num_measurements.unwrap_or(0),
        })
    }

    /// Sample one shot of every branch under the same per-shot randomness.
    /// Branch circuits share their instruction prefix, so the records every
    /// decode step reads agree across the branches it may choose between.
    pub fn sample_branch_shots(
        &self,
        shot_index: u64,
        seed: &SeedSpec,
        keep_truth: bool,
    ) -> Vec<ShotRecord> {
        self.branches
            .iter()
            .map(|b| sample_shot(&b.circuit, &b.reference, shot_index, seed, keep_truth))
            .collect()
    }
}

/// Step 1 of the decoding strategy: decode Γ|_j against the detector prefix
/// and return the corrected logical bits b⃗_j⁽¹⁾ for measurements 1..j
/// (raw readout parities, readout corrections and predicted flips XORed).
pub fn partial_decode(
    scenario: &PreparedScenario,
    branch_index: usize,
    shot: &ShotRecord,
    j: usize,
    decoder: Decoder,
    cache: &DecodeCache,
) -> Result<BitVector, DecodeError> {
    let branch = &scenario.branches[branch_index];
    let step = &branch.steps[j - 1];
    let mut syndrome = BitVector::zeros(step.detector_mask.len());
    for d in shot.detector_bits.iter_ones() {
        if step.detector_mask.get(d) {
            syndrome.set(d, true);
        }
    }

    let key = (branch_index, j, syndrome.words().to_vec());
    let cached = cache.map.lock().expect("cache lock").get(&key).cloned();
    let flips = match cached {
        Some(Some(flips)) => flips,
        Some(None) => return Err(DecodeError::Infeasible),
        None => {
            let result = decoder.run(&step.gamma, &step.gamma_prime, &syndrome);
            let entry = match &result {
                Ok(outcome) => Some(outcome.predicted_observable_flips.clone()),
                Err(DecodeError::Infeasible) => None,
                Err(e) => panic!("partial decode misconfigured: {e}"),
            };
            cache
                .map
                .lock()
                .expect("cache lock")
                .insert(key, entry.clone());
            entry.ok_or(DecodeError::Infeasible)?
        }
    };

    let mut bits = BitVector::zeros(j);
    for (mj, lm) in branch.measurements.iter().take(j).enumerate() {
        let value = shot.observable_bits.get(lm.observable)
            ^ branch.corrections[lm.observable]
            ^ flips.get(lm.observable);
        bits.set(mj, value);
    }
    Ok(bits)
}

/// Step 2 of the decoding strategy: find a frame-logical assignment g_l with
/// (Λ·g_l) matching the disagreement between the fresh decode and the
/// committed prefix. Returns `(g_l, corrected b⃗_j)` or `None` — a heralded
/// failure. Free variables are fixed to zero.
pub fn restore_consistency(
    lambda: &BitMatrix,
    partial: &BitVector,
    committed: &BitVector,
) -> Option<(BitVector, BitVector)> {
    let j = committed.len() + 1;
    debug_assert!(partial.len() >= j);
    debug_assert!(lambda.rows() >= j);
    let mut rhs = BitVector::zeros(j - 1);
    for i in 0..j - 1 {
        rhs.set(i, partial.get(i) ^ committed.get(i));
    }
    let mut prefix_rows = BitMatrix::zeros(j - 1, lambda.cols());
    for r in 0..j - 1 {
        *prefix_rows.row_mut(r) = lambda.row(r).clone();
    }
    let g = solve(&prefix_rows, &rhs)?;
    let mut corrected = BitVector::zeros(j);
    for i in 0..j {
        corrected.set(i, partial.get(i) ^ lambda.row(i).dot(&g));
    }
    for i in 0..j - 1 {
        debug_assert_eq!(corrected.get(i), committed.get(i));
    }
    Some((g, corrected))
}

/// Evaluate the scenario's deterministic checks against fully committed
/// bits; returns the ids of violated checks.
pub fn evaluate_checks(
    scenario: &PreparedScenario,
    branch_index: usize,
    committed: &BitVector,
) -> Vec<usize> {
    let constants = &scenario.branches[branch_index].check_constants;
    scenario
        .checks
        .iter()
        .enumerate()
        .filter(|(id, check)| {
            let parity = check
                .bits
                .iter()
                .fold(false, |acc, &b| acc ^ committed.get(b));
            parity ^ constants[*id]
        })
        .map(|(id, _)| id)
        .collect()
}

/// Decode one shot end to end: loop over logical measurements in time order,
/// partial-decode, commit (restoring consistency or heralding), bind
/// feedforward decisions, and classify against the scenario checks.
///
/// `shots` holds one sampled record per branch, drawn from the same per-shot
/// randomness (see [`PreparedScenario::sample_branch_shots`]).
pub fn run_shot(
    scenario: &PreparedScenario,
    shots: &[ShotRecord],
    decoder: Decoder,
    options: &RuntimeOptions,
    cache: &DecodeCache,
) -> ShotOutcome {
    assert_eq!(shots.len(), scenario.branches.len());
    let mut commitment = Commitment::new(scenario.decisions.len());

    // Postselection detectors live in the shared branch prefix.
    let first = &scenario.branches[0];
    if first
        .postselection_detectors
        .iter()
        .any(|&d| shots[0].detector_bits.get(d))
    {
        return ShotOutcome::Discarded;
    }

    let mut inconsistent = false;
    for j in 1..=scenario.num_measurements {
        let branch_index = commitment.selector_index();
        let branch = &scenario.branches[branch_index];
        let partial =
            match partial_decode(scenario, branch_index, &shots[branch_index], j, decoder, cache)
            {
                Ok(bits) => bits,
                Err(DecodeError::Infeasible) => {
                    return ShotOutcome::Completed {
                        verdict: ShotVerdict::Infeasible,
                        commitment,
                        inconsistent,
                    }
                }
                Err(e) => panic!("partial decode misconfigured: {e}"),
            };

        if options.no_consistency {
            for i in 0..j - 1 {
                if partial.get(i) != commitment.bits.get(i) {
                    inconsistent = true;
                }
            }
            commitment.bits.push(partial.get(j - 1));
            commitment.applied_gl.push(BitVector::zeros(
                scenario.branches[branch_index].frames.num_columns(),
            ));
        } else {
            match restore_consistency(&branch.frames.lambda, &partial, &commitment.bits) {
                Some((g, corrected)) => {
                    commitment.bits.push(corrected.get(j - 1));
                    commitment.applied_gl.push(g);
                }
                None => {
                    return ShotOutcome::Completed {
                        verdict: ShotVerdict::HeraldedFailure { step: j },
                        commitment,
                        inconsistent,
                    }
                }
            }
        }

        for (k, &source) in scenario.decisions.iter().enumerate() {
            if source == j - 1 {
                commitment.branch_values[k] = Some(commitment.bits.get(j - 1));
            }
        }
    }

    let violated = evaluate_checks(scenario, commitment.selector_index(), &commitment.bits);
    let verdict = if violated.is_empty() {
        ShotVerdict::Success
    } else {
        ShotVerdict::LogicalError { violated }
    };
    ShotOutcome::Completed {
        verdict,
        commitment,
        inconsistent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, CodeFamily, LogicalOp, LogicalProgram, SePolicy};

    fn lambda_from_columns(rows: usize, cols: &[&[usize]]) -> BitMatrix {
        let mut m = BitMatrix::zeros(rows, cols.len());
        for (c, rows_set) in cols.iter().enumerate() {
            for &r in *rows_set {
                m.set(r, c, true);
            }
        }
        m
    }

    #[test]
    fn consistent_prefix_needs_no_frame_logicals() {
        let lambda = lambda_from_columns(3, &[&[0, 1], &[2]]);
        let mut partial = BitVector::zeros(3);
        partial.set(1, true);
        let mut committed = BitVector::zeros(1);
        committed.set(0, false);
        let (g, corrected) = restore_consistency(&lambda, &partial, &committed).unwrap();
        assert!(g.is_zero());
        assert_eq!(corrected, {
            let mut want = BitVector::zeros(2);
            want.set(1, true);
            want
        });
    }

    #[test]
    fn teleport_disagreement_flips_both_measurements() {
        // One frame logical touching measurements {1, 2}: re-decoding the
        // first bit flipped forces the assignment that flips both, restoring
        // bit 1 and reinterpreting bit 2.
        let lambda = lambda_from_columns(2, &[&[0, 1]]);
        let mut partial = BitVector::zeros(2);
        partial.set(0, true); // fresh decode disagrees with committed 0
        let committed = BitVector::zeros(1);
        let (g, corrected) = restore_consistency(&lambda, &partial, &committed).unwrap();
        assert!(g.get(0));
        assert!(!corrected.get(0));
        assert!(corrected.get(1)); // bit 2 reinterpreted by the same flip
    }

    #[test]
    fn untouched_mismatch_heralds() {
        // The only frame logical misses measurement 0 entirely, so a
        // disagreement there is unsolvable.
        let lambda = lambda_from_columns(2, &[&[1]]);
        let mut partial = BitVector::zeros(2);
        partial.set(0, true);
        let committed = BitVector::zeros(1);
        assert!(restore_consistency(&lambda, &partial, &committed).is_none());
    }

    #[test]
    fn first_commitment_is_unconstrained() {
        let lambda = lambda_from_columns(1, &[]);
        let mut partial = BitVector::zeros(1);
        partial.set(0, true);
        let committed = BitVector::zeros(0);
        let (g, corrected) = restore_consistency(&lambda, &partial, &committed).unwrap();
        assert!(g.is_empty());
        assert!(corrected.get(0));
    }

    fn memory_scenario(p: f64) -> PreparedScenario {
        let program = LogicalProgram {
            family: CodeFamily::RotatedSurface,
            d: 3,
            num_blocks: 1,
            ops: vec![
                LogicalOp::InitZ { block: 0 },
                LogicalOp::Idle { block: 0 },
                LogicalOp::MeasureZ { block: 0 },
            ],
            se_policy: SePolicy::AfterEachOp,
        };
        let branched = compile(&program).unwrap();
        PreparedScenario::prepare(
            "memory-z",
            &branched,
            &NoiseSpec::circuit_depolarizing(p),
            vec![ScenarioCheck {
                name: "readout".into(),
                bits: vec![0],
            }],
            &[],
        )
        .unwrap()
    }

    #[test]
    fn noiseless_partial_decode_returns_raw_bits() {
        let scenario = memory_scenario(0.0);
        let cache = DecodeCache::new();
        let shots = scenario.sample_branch_shots(0, &SeedSpec::new(1), false);
        let bits = partial_decode(&scenario, 0, &shots[0], 1, Decoder::Mle, &cache).unwrap();
        assert_eq!(bits.len(), 1);
        assert_eq!(bits.get(0), scenario.branches[0].ideal_values[0]);
    }

    #[test]
    fn noiseless_shots_always_succeed() {
        let scenario = memory_scenario(0.0);
        let cache = DecodeCache::new();
        for i in 0..16 {
            let shots = scenario.sample_branch_shots(i, &SeedSpec::new(7), false);
            let outcome = run_shot(
                &scenario,
                &shots,
                Decoder::Mle,
                &RuntimeOptions::default(),
                &cache,
            );
            assert_eq!(outcome.verdict(), Some(&ShotVerdict::Success));
        }
    }

    #[test]
    fn single_syndrome_flip_is_corrected() {
        // One mid-circuit syndrome readout carries flip probability 0.4;
        // whenever it fires, the matching two-detector mechanism explains it
        // and the committed bit still equals the ideal value.
        let program = LogicalProgram {
            family: CodeFamily::RotatedSurface,
            d: 3,
            num_blocks: 1,
            ops: vec![
                LogicalOp::InitZ { block: 0 },
                LogicalOp::Idle { block: 0 },
                LogicalOp::MeasureZ { block: 0 },
            ],
            se_policy: SePolicy::AfterEachOp,
        };
        let branched = compile(&program).unwrap();
        let base = branched.single();
        let syndrome_instr = base.stochastic.syndrome_measurements[1];
        let noise = NoiseSpec {
            mode: NoiseMode::CustomWeights,
            p: 0.0,
            p_z: 0.0,
            custom: Some([(syndrome_instr, 0.4)].into_iter().collect()),
            noise_horizon: None,
        };
        let scenario = PreparedScenario::prepare("one-flip", &branched, &noise, vec![], &[]).unwrap();
        let branch = &scenario.branches[0];
        assert!(!branch.steps[0].gamma.mechanisms.is_empty());

        let cache = DecodeCache::new();
        let mut saw_fired = false;
        for i in 0..32 {
            let shots = scenario.sample_branch_shots(i, &SeedSpec::new(3), false);
            saw_fired |= shots[0].detector_bits.iter_ones().next().is_some();
            let bits =
                partial_decode(&scenario, 0, &shots[0], 1, Decoder::Mle, &cache).unwrap();
            assert_eq!(bits.get(0), branch.ideal_values[0]);
        }
        assert!(saw_fired, "flip probability 0.4 never fired in 32 shots");
    }

    #[test]
    fn conditional_branch_binds_to_committed_bit() {
        let program = LogicalProgram {
            family: CodeFamily::RotatedSurface,
            d: 3,
            num_blocks: 2,
            ops: vec![
                LogicalOp::InitZ { block: 0 },
                LogicalOp::InitX { block: 1 },
                LogicalOp::MeasureZ { block: 0 },
                LogicalOp::Cond {
                    decision: 0,
                    op: Box::new(LogicalOp::H { block: 1 }),
                },
                LogicalOp::MeasureX { block: 1 },
            ],
            se_policy: SePolicy::AfterEachOp,
        };
        let branched = compile(&program).unwrap();
        assert_eq!(branched.branches.len(), 2);
        let scenario = PreparedScenario::prepare(
            "cond",
            &branched,
            &NoiseSpec::circuit_depolarizing(0.0),
            vec![ScenarioCheck {
                name: "first".into(),
                bits: vec![0],
            }],
            &[],
        )
        .unwrap();
        let cache = DecodeCache::new();
        let shots = scenario.sample_branch_shots(0, &SeedSpec::new(9), false);
        let outcome = run_shot(
            &scenario,
            &shots,
            Decoder::Mle,
            &RuntimeOptions::default(),
            &cache,
        );
        let ShotOutcome::Completed {
            verdict,
            commitment,
            ..
        } = outcome
        else {
            panic!("unexpected discard");
        };
        assert_eq!(verdict, ShotVerdict::Success);
        assert_eq!(commitment.branch_values, vec![Some(false)]);
        assert_eq!(commitment.bits.len(), 2);
    }

    #[test]
    fn decode_cache_deduplicates() {
        let scenario = memory_scenario(0.001);
        let cache = DecodeCache::new();
        for i in 0..8 {
            let shots = scenario.sample_branch_shots(i, &SeedSpec::new(11), false);
            let _ = run_shot(
                &scenario,
                &shots,
                Decoder::Mle,
                &RuntimeOptions::default(),
                &cache,
            );
        }
        // Eight low-noise shots share the all-zero syndrome entry.
        assert!(cache.len() < 8);
        assert!(!cache.is_empty());
    }
}
