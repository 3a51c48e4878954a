//! Logical-to-physical compilation.
//!
//! A [`LogicalProgram`] lists transversal Clifford operations on code blocks;
//! [`compile`] lowers it to a [`PhysicalCircuit`] with one syndrome-extraction
//! round per operation. Detector definitions are never written by hand:
//! a symbolic stabilizer engine ([`kengine::KEngine`]) follows the circuit as
//! it is emitted, and every syndrome readout whose outcome is determined by
//! earlier records becomes a detector comparing the new record against the
//! records that predict it. Readouts the engine reports as random produce no
//! detector; their influence on the logical observables is what marks an
//! observable as gauge.
//!
//! Conditional Paulis lower to classically controlled gates in a single
//! circuit. Conditional Cliffords fork the compilation: one circuit per
//! assignment of the referenced decision bits, sharing a common instruction
//! prefix up to the first conditional.

pub mod kengine;
pub mod layout;

use crate::circuit::{CtrlPauli, Gate1, Gate2, Instruction, PhysicalCircuit};
use crate::dem::{sweep, FrameSeed};
use crate::gf2::BitVector;
use crate::noise::StochasticStructure;
use crate::pauli::{CliffordStep, Pauli, PauliString};
use kengine::{KEngine, MeasureOutcome};
use layout::{build_patch, rotated_rect, LayoutError, PatchLayout};
pub use layout::CodeFamily;
use std::collections::HashMap;
use thiserror::Error;

/// Single-qubit state targeted by corner injection.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ResourceState {
    ZPlus,
    XPlus,
    /// |+i⟩, the phase-gate resource state.
    YPlus,
}

/// One logical operation. Every operation that touches live blocks occupies
/// one syndrome-extraction time step on the blocks involved.
#[derive(Clone, PartialEq, Debug)]
pub enum LogicalOp {
    /// Reset every data qubit of the block to |0⟩ and run one round.
    InitZ { block: usize },
    /// Reset every data qubit of the block to |+⟩ and run one round.
    InitX { block: usize },
    /// Corner-qubit injection: prepare `state` on a single qubit, grow to
    /// `d_first` under two post-selected rounds, then grow to `d_final`.
    InitResource {
        block: usize,
        state: ResourceState,
        d_first: usize,
        d_final: usize,
    },
    /// Transversal Hadamard plus the quarter-turn relabeling.
    H { block: usize },
    /// Fold-transversal phase gate: CZ across the main diagonal plus
    /// alternating S/S† on the diagonal itself.
    S { block: usize },
    /// Software logical Z: toggles the block's Pauli frame, no circuit cost.
    Z { block: usize },
    /// Transversal CNOT between two equally shaped blocks.
    Cx { control: usize, target: usize },
    /// One idle syndrome-extraction round.
    Idle { block: usize },
    /// Transversal Z-basis readout of every data qubit; retires the block.
    MeasureZ { block: usize },
    /// Transversal X-basis readout of every data qubit; retires the block.
    MeasureX { block: usize },
    /// Extend a patch to distance `d_to`, one round afterwards.
    Grow { block: usize, d_to: usize },
    /// One joint lattice-surgery round across the listed blocks, reading the
    /// pairwise products of their logical Z operators, then split by
    /// measuring the seam columns out in X.
    MergeSplit { blocks: Vec<usize> },
    /// Apply `op` only when logical measurement `decision` read 1. A Pauli
    /// stays in-circuit as classically controlled gates; a Clifford forks
    /// the compilation into per-outcome branches.
    Cond { decision: usize, op: Box<LogicalOp> },
    /// Noise annotation stops here; everything after runs clean.
    ProbeBarrier,
}

impl LogicalOp {
    fn touched(&self) -> Vec<usize> {
        match self {
            LogicalOp::InitZ { block }
            | LogicalOp::InitX { block }
            | LogicalOp::InitResource { block, .. }
            | LogicalOp::H { block }
            | LogicalOp::S { block }
            | LogicalOp::Z { block }
            | LogicalOp::Idle { block }
            | LogicalOp::MeasureZ { block }
            | LogicalOp::MeasureX { block }
            | LogicalOp::Grow { block, .. } => vec![*block],
            LogicalOp::Cx { control, target } => vec![*control, *target],
            LogicalOp::MergeSplit { blocks } => blocks.clone(),
            LogicalOp::Cond { op, .. } => op.touched(),
            LogicalOp::ProbeBarrier => Vec::new(),
        }
    }
}

/// Where the per-operation syndrome-extraction rounds go.
#[derive(Clone, PartialEq, Debug)]
pub enum SePolicy {
    /// One round on the involved blocks after every unitary operation.
    AfterEachOp,
    /// No rounds between gates; only the rounds operations carry themselves
    /// (init, grow, merge, idle).
    NoneBetweenGates,
    /// Per-operation flags, indexed like `LogicalProgram::ops`.
    Custom(Vec<bool>),
}

/// A logical Clifford program over numbered code blocks.
#[derive(Clone, Debug)]
pub struct LogicalProgram {
    pub family: CodeFamily,
    /// Default code distance for block initialization.
    pub d: usize,
    pub num_blocks: usize,
    pub ops: Vec<LogicalOp>,
    pub se_policy: SePolicy,
}

/// One committed logical readout of a compiled program.
#[derive(Clone, Debug)]
pub struct LogicalMeasurement {
    /// Measurement records whose parity is the raw outcome.
    pub records: Vec<usize>,
    /// OBSERVABLE_INCLUDE index carrying that parity.
    pub observable: usize,
    /// First record index *not* yet produced when this outcome commits;
    /// decoding this outcome may use exactly the records below the cutoff.
    pub cutoff: usize,
}

/// One fully lowered branch body.
#[derive(Clone, Debug)]
pub struct CompiledProgram {
    pub circuit: PhysicalCircuit,
    /// In commitment order; `records[i].observable == i`.
    pub logical_measurements: Vec<LogicalMeasurement>,
    /// One seed per Pauli-random block initialization, for the frame system.
    pub frame_seeds: Vec<FrameSeed>,
    /// Per-observable XOR correction (Pauli frame and readout signs).
    pub software_corrections: Vec<bool>,
    /// Maximum data-qubit support of a single fault per block and time step
    /// under the transversal gate set (2 once a fold gate appears, else 1).
    pub partition_size: usize,
    /// Detector indices a shot must read 0 on to be kept.
    pub postselection_detectors: Vec<usize>,
    /// Hooks for the local-stochastic noise annotator.
    pub stochastic: StochasticStructure,
    /// Instruction index past which noise annotation must not add channels.
    pub noise_horizon: Option<usize>,
    /// Physical qubits that carried injected resource states.
    pub injected_qubits: Vec<usize>,
}

/// One conditional branch: the circuit compiled under a fixed assignment of
/// the decision bits.
#[derive(Clone, Debug)]
pub struct CompiledBranch {
    /// Decision values, aligned with [`BranchedProgram::decisions`].
    pub selector: Vec<bool>,
    pub program: CompiledProgram,
}

/// All branches of a compiled program.
#[derive(Clone, Debug)]
pub struct BranchedProgram {
    /// Logical-measurement indices the branching conditionals read.
    pub decisions: Vec<usize>,
    pub branches: Vec<CompiledBranch>,
}

impl BranchedProgram {
    /// The only branch of a non-branching program.
    ///
    /// # Panics
    /// Panics if the program has conditional Clifford branches.
    #[must_use]
    pub fn single(&self) -> &CompiledProgram {
        assert!(
            self.decisions.is_empty(),
            "program branches on {} decisions",
            self.decisions.len()
        );
        &self.branches[0].program
    }

    /// Consuming variant of [`Self::single`].
    ///
    /// # Panics
    /// Panics if the program has conditional Clifford branches.
    #[must_use]
    pub fn into_single(self) -> CompiledProgram {
        assert!(
            self.decisions.is_empty(),
            "program branches on {} decisions",
            self.decisions.len()
        );
        self.branches
            .into_iter()
            .next()
            .expect("compile always yields at least one branch")
            .program
    }

    /// The branch whose decision assignment equals `values`.
    #[must_use]
    pub fn branch_for(&self, values: &[bool]) -> &CompiledBranch {
        self.branches
            .iter()
            .find(|b| b.selector == values)
            .expect("every decision assignment has a branch")
    }
}

#[derive(Error, Debug)]
pub enum CompileError {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("{op} is not available for the {family:?} family")]
    UnsupportedOp {
        op: &'static str,
        family: CodeFamily,
    },
    #[error("block {0} is out of range")]
    BlockOutOfRange(usize),
    #[error("block {0} used before initialization")]
    BlockNotAlive(usize),
    #[error("block {0} initialized while still alive")]
    BlockAlreadyAlive(usize),
    #[error("blocks {0} and {1} have mismatched patch shapes")]
    ShapeMismatch(usize, usize),
    #[error("block {0} cannot interact with itself")]
    SelfInteraction(usize),
    #[error("cannot grow distance {from} to {to}: target must be a larger odd distance")]
    BadGrowTarget { from: usize, to: usize },
    #[error("merge-split needs at least two distinct live blocks")]
    BadMergeSet,
    #[error("injection distances must be odd with 3 ≤ first ≤ final, got {first} → {last}")]
    BadInjectionDistances { first: usize, last: usize },
    #[error("conditional reads measurement {0} before it is produced")]
    DecisionNotReady(usize),
    #[error("only Pauli and single-level Clifford operations can be conditioned")]
    UnsupportedConditional,
    #[error("custom round policy has {got} entries for {want} operations")]
    PolicyLength { got: usize, want: usize },
    #[error("{decisions} conditional decisions would need {branches} branches")]
    TooManyDecisions { decisions: usize, branches: u64 },
    #[error("{0} random readouts influence detectors")]
    NondeterministicDetector(usize),
}

/// Order data corners are coupled in each of the four CX layers. Z-type
/// ancillas sweep NE, NW, SE, SW; X-type sweep NE, SE, NW, SW so that
/// crossing schedules commute inside one round.
const Z_LAYER_ORDER: [usize; 4] = [0, 1, 2, 3];
const X_LAYER_ORDER: [usize; 4] = [0, 2, 1, 3];

const KIND_DATA: f64 = 0.0;
const KIND_Z_ANC: f64 = 1.0;
const KIND_X_ANC: f64 = 2.0;
const KIND_SEAM: f64 = 3.0;

/// At most this many conditional Clifford decisions per program; every
/// decision doubles the branch count.
const MAX_DECISIONS: usize = 12;

/// Compile a logical program into one circuit per conditional branch.
pub fn compile(program: &LogicalProgram) -> Result<BranchedProgram, CompileError> {
    if let SePolicy::Custom(flags) = &program.se_policy {
        if flags.len() != program.ops.len() {
            return Err(CompileError::PolicyLength {
                got: flags.len(),
                want: program.ops.len(),
            });
        }
    }
    let decisions = branching_decisions(&program.ops)?;
    if decisions.len() > MAX_DECISIONS {
        return Err(CompileError::TooManyDecisions {
            decisions: decisions.len(),
            branches: 1u64 << decisions.len(),
        });
    }
    let mut branches = Vec::with_capacity(1 << decisions.len());
    for mask in 0..(1u64 << decisions.len()) {
        let selector: Vec<bool> = (0..decisions.len()).map(|k| mask >> k & 1 == 1).collect();
        let taken: HashMap<usize, bool> =
            decisions.iter().copied().zip(selector.iter().copied()).collect();
        let compiled = Compiler::new(program).build(&taken)?;
        branches.push(CompiledBranch {
            selector,
            program: compiled,
        });
    }
    Ok(BranchedProgram {
        decisions,
        branches,
    })
}

/// Decision indices of conditional Cliffords, in first-use order.
fn branching_decisions(ops: &[LogicalOp]) -> Result<Vec<usize>, CompileError> {
    let mut out = Vec::new();
    for op in ops {
        if let LogicalOp::Cond { decision, op: inner } = op {
            match inner.as_ref() {
                LogicalOp::Z { .. } => {} // stays linear, no branch
                LogicalOp::H { .. } | LogicalOp::S { .. } | LogicalOp::Cx { .. } => {
                    if !out.contains(decision) {
                        out.push(*decision);
                    }
                }
                _ => return Err(CompileError::UnsupportedConditional),
            }
        }
    }
    Ok(out)
}

/// Everything one syndrome-extraction round needs to know about a patch.
struct Patch {
    tag: f64,
    layout: PatchLayout,
    data: Vec<usize>,
    z_anc: Vec<usize>,
    x_anc: Vec<usize>,
}

/// Live state of one code block.
struct BlockBody {
    layout: PatchLayout,
    /// Physical qubit per layout position.
    data: Vec<usize>,
    /// Physical ancilla per Z / X stabilizer slot.
    z_anc: Vec<usize>,
    x_anc: Vec<usize>,
    alive: bool,
    /// Software Pauli frame accumulated on the block's logical qubit.
    frame_x: bool,
    frame_z: bool,
}

struct Compiler<'p> {
    program: &'p LogicalProgram,
    circuit: PhysicalCircuit,
    engine: KEngine,
    next_qubit: usize,
    blocks: Vec<Option<BlockBody>>,
    seeds: Vec<FrameSeed>,
    logical: Vec<LogicalMeasurement>,
    corrections: Vec<bool>,
    postselect: Vec<usize>,
    stochastic: StochasticStructure,
    horizon: Option<usize>,
    injected: Vec<usize>,
    round: usize,
    has_fold: bool,
}

impl<'p> Compiler<'p> {
    fn new(program: &'p LogicalProgram) -> Self {
        Compiler {
            program,
            circuit: PhysicalCircuit::new(),
            engine: KEngine::new(0),
            next_qubit: 0,
            blocks: (0..program.num_blocks).map(|_| None).collect(),
            seeds: Vec::new(),
            logical: Vec::new(),
            corrections: Vec::new(),
            postselect: Vec::new(),
            stochastic: StochasticStructure::default(),
            horizon: None,
            injected: Vec::new(),
            round: 0,
            has_fold: false,
        }
    }

    fn build(mut self, taken: &HashMap<usize, bool>) -> Result<CompiledProgram, CompileError> {
        for (index, op) in self.program.ops.iter().enumerate() {
            self.lower(index, op, taken)?;
        }
        self.finish()
    }

    // ---------- bookkeeping ----------

    fn alloc_qubit(&mut self, coords: [f64; 4]) -> usize {
        let q = self.next_qubit;
        self.next_qubit += 1;
        self.engine.ensure_qubits(self.next_qubit);
        self.circuit.push(Instruction::QubitCoords {
            qubit: q,
            coords: coords.to_vec(),
        });
        q
    }

    fn check_block_id(&self, b: usize) -> Result<(), CompileError> {
        if b >= self.blocks.len() {
            return Err(CompileError::BlockOutOfRange(b));
        }
        Ok(())
    }

    fn live(&self, b: usize) -> Result<&BlockBody, CompileError> {
        self.check_block_id(b)?;
        match &self.blocks[b] {
            Some(body) if body.alive => Ok(body),
            _ => Err(CompileError::BlockNotAlive(b)),
        }
    }

    fn live_mut(&mut self, b: usize) -> Result<&mut BlockBody, CompileError> {
        self.check_block_id(b)?;
        match &mut self.blocks[b] {
            Some(body) if body.alive => Ok(body),
            _ => Err(CompileError::BlockNotAlive(b)),
        }
    }

    fn require_surface(&self, op: &'static str) -> Result<(), CompileError> {
        if self.program.family != CodeFamily::RotatedSurface {
            return Err(CompileError::UnsupportedOp {
                op,
                family: self.program.family,
            });
        }
        Ok(())
    }

    fn patch_of(&self, b: usize) -> Result<Patch, CompileError> {
        let body = self.live(b)?;
        Ok(Patch {
            tag: b as f64,
            layout: body.layout.clone(),
            data: body.data.clone(),
            z_anc: body.z_anc.clone(),
            x_anc: body.x_anc.clone(),
        })
    }

    fn policy_grants(&self, index: usize) -> bool {
        match &self.program.se_policy {
            SePolicy::AfterEachOp => true,
            SePolicy::NoneBetweenGates => false,
            SePolicy::Custom(flags) => flags[index],
        }
    }

    fn maybe_policy_round(&mut self, index: usize, blocks: &[usize]) -> Result<(), CompileError> {
        if !self.policy_grants(index) {
            return Ok(());
        }
        let patches = blocks
            .iter()
            .map(|&b| self.patch_of(b))
            .collect::<Result<Vec<_>, _>>()?;
        self.se_round(&patches, false)
    }

    fn pauli_on(&self, q: usize, p: Pauli) -> PauliString {
        PauliString::single(self.engine.num_qubits(), q, p)
    }

    fn string_on(&self, qubits: &[usize], x_type: bool) -> PauliString {
        let n = self.engine.num_qubits();
        let bits = BitVector::from_indices(n, qubits);
        if x_type {
            PauliString::from_parts(bits, BitVector::zeros(n))
        } else {
            PauliString::from_parts(BitVector::zeros(n), bits)
        }
    }

    // ---------- the shared round ----------

    /// One syndrome-extraction round over the given patches: ancilla resets,
    /// four interleaved CX layers, ancilla readout, and engine-derived
    /// detectors for every deterministic outcome.
    fn se_round(&mut self, patches: &[Patch], postselect: bool) -> Result<(), CompileError> {
        self.stochastic
            .se_boundaries
            .push(self.circuit.instructions.len());
        let round = self.round as f64;
        self.round += 1;

        let z_ancs: Vec<usize> = patches.iter().flat_map(|p| p.z_anc.iter().copied()).collect();
        let x_ancs: Vec<usize> = patches.iter().flat_map(|p| p.x_anc.iter().copied()).collect();
        if !z_ancs.is_empty() {
            self.circuit.push(Instruction::Reset {
                qubits: z_ancs.clone(),
            });
            for &q in &z_ancs {
                self.engine.reset(q, false);
            }
        }
        if !x_ancs.is_empty() {
            self.circuit.push(Instruction::ResetX {
                qubits: x_ancs.clone(),
            });
            for &q in &x_ancs {
                self.engine.reset(q, true);
            }
        }
        self.circuit.push(Instruction::Tick);

        for layer in 0..4 {
            let mut pairs = Vec::new();
            for p in patches {
                for (i, slot) in p.layout.z_stabilizers.iter().enumerate() {
                    if let Some(pos) = slot.support[Z_LAYER_ORDER[layer]] {
                        pairs.push((p.data[pos], p.z_anc[i]));
                    }
                }
                for (i, slot) in p.layout.x_stabilizers.iter().enumerate() {
                    if let Some(pos) = slot.support[X_LAYER_ORDER[layer]] {
                        pairs.push((p.x_anc[i], p.data[pos]));
                    }
                }
            }
            if pairs.is_empty() {
                continue;
            }
            for &(a, b) in &pairs {
                self.engine.apply_step(&CliffordStep::Cx(a, b));
            }
            self.circuit.push(Instruction::Gate2 {
                kind: Gate2::Cx,
                pairs,
            });
            self.circuit.push(Instruction::Tick);
        }

        let det_start = self.circuit.detector_count;
        let z_base = self.circuit.num_measurements;
        if !z_ancs.is_empty() {
            self.stochastic
                .syndrome_measurements
                .push(self.circuit.instructions.len());
            self.circuit.push(Instruction::Measure {
                qubits: z_ancs.clone(),
            });
        }
        let x_base = self.circuit.num_measurements;
        if !x_ancs.is_empty() {
            self.stochastic
                .syndrome_measurements
                .push(self.circuit.instructions.len());
            self.circuit.push(Instruction::MeasureX {
                qubits: x_ancs.clone(),
            });
        }

        let mut zk = 0usize;
        let mut xk = 0usize;
        for p in patches {
            for (i, slot) in p.layout.z_stabilizers.iter().enumerate() {
                let rec = z_base + zk;
                zk += 1;
                let op = self.pauli_on(p.z_anc[i], Pauli::Z);
                self.emit_round_detector(&op, rec, p.tag, slot.coords, round);
            }
            for (i, slot) in p.layout.x_stabilizers.iter().enumerate() {
                let rec = x_base + xk;
                xk += 1;
                let op = self.pauli_on(p.x_anc[i], Pauli::X);
                self.emit_round_detector(&op, rec, p.tag, slot.coords, round);
            }
        }
        self.circuit.push(Instruction::Tick);

        if postselect {
            self.postselect.extend(det_start..self.circuit.detector_count);
        }
        Ok(())
    }

    fn emit_round_detector(&mut self, op: &PauliString, rec: usize, tag: f64, coords: (usize, usize), round: f64) {
        // Detector events are parities relative to the noiseless reference,
        // so a deterministic outcome whose fixed parity is 1 (fold gates
        // produce these) is as good a detector as one whose parity is 0.
        match self.engine.measure(op, rec) {
            MeasureOutcome::Deterministic { mut refs, sign: _ } => {
                refs.push(rec);
                self.circuit.push(Instruction::Detector {
                    coords: vec![tag, coords.0 as f64, coords.1 as f64, round],
                    recs: refs,
                });
            }
            MeasureOutcome::Random => {}
        }
    }

    // ---------- operations ----------

    fn lower(
        &mut self,
        index: usize,
        op: &LogicalOp,
        taken: &HashMap<usize, bool>,
    ) -> Result<(), CompileError> {
        match op {
            LogicalOp::InitZ { block } => self.init_block(*block, false),
            LogicalOp::InitX { block } => self.init_block(*block, true),
            LogicalOp::InitResource {
                block,
                state,
                d_first,
                d_final,
            } => self.init_resource(*block, *state, *d_first, *d_final),
            LogicalOp::H { block } => {
                self.logical_h(*block)?;
                self.maybe_policy_round(index, &[*block])
            }
            LogicalOp::S { block } => {
                self.logical_s(*block)?;
                self.maybe_policy_round(index, &[*block])
            }
            LogicalOp::Z { block } => {
                self.live_mut(*block)?.frame_z ^= true;
                Ok(())
            }
            LogicalOp::Cx { control, target } => {
                self.logical_cx(*control, *target)?;
                self.maybe_policy_round(index, &[*control, *target])
            }
            LogicalOp::Idle { block } => {
                let patch = self.patch_of(*block)?;
                self.se_round(&[patch], false)
            }
            LogicalOp::MeasureZ { block } => self.measure_block(*block, false),
            LogicalOp::MeasureX { block } => self.measure_block(*block, true),
            LogicalOp::Grow { block, d_to } => self.grow_block(*block, *d_to, 1, false),
            LogicalOp::MergeSplit { blocks } => self.merge_split(blocks),
            LogicalOp::Cond { decision, op } => self.lower_cond(index, *decision, op, taken),
            LogicalOp::ProbeBarrier => {
                if self.horizon.is_none() {
                    self.horizon = Some(self.circuit.instructions.len());
                }
                Ok(())
            }
        }
    }

    fn lower_cond(
        &mut self,
        index: usize,
        decision: usize,
        inner: &LogicalOp,
        taken: &HashMap<usize, bool>,
    ) -> Result<(), CompileError> {
        if decision >= self.logical.len() {
            return Err(CompileError::DecisionNotReady(decision));
        }
        match inner {
            LogicalOp::Z { block } => {
                let (records, constant) = {
                    let lm = &self.logical[decision];
                    (lm.records.clone(), self.corrections[lm.observable])
                };
                let support: Vec<usize> = {
                    let body = self.live(*block)?;
                    body.layout.logical_z.iter().map(|&p| body.data[p]).collect()
                };
                for rec in records {
                    self.circuit.push(Instruction::Classical {
                        pauli: CtrlPauli::Z,
                        rec,
                        qubits: support.clone(),
                    });
                }
                if constant {
                    self.live_mut(*block)?.frame_z ^= true;
                }
                Ok(())
            }
            LogicalOp::H { .. } | LogicalOp::S { .. } | LogicalOp::Cx { .. } => {
                if taken.get(&decision).copied().unwrap_or(false) {
                    self.lower(index, inner, taken)
                } else if self.policy_grants(index) {
                    // The untaken side still holds its blocks for the round.
                    let patches = inner
                        .touched()
                        .iter()
                        .map(|&b| self.patch_of(b))
                        .collect::<Result<Vec<_>, _>>()?;
                    self.se_round(&patches, false)
                } else {
                    Ok(())
                }
            }
            _ => Err(CompileError::UnsupportedConditional),
        }
    }

    fn allocate_body(&mut self, b: usize, layout: PatchLayout) -> BlockBody {
        let mut data = Vec::with_capacity(layout.num_data());
        for pos in 0..layout.num_data() {
            let (x, y) = layout.coords(pos);
            let q = self.alloc_qubit([b as f64, x as f64, y as f64, KIND_DATA]);
            self.stochastic.data_qubits.push(q);
            data.push(q);
        }
        let z_anc = layout
            .z_stabilizers
            .iter()
            .map(|s| (s.coords, KIND_Z_ANC))
            .collect::<Vec<_>>()
            .into_iter()
            .map(|((x, y), kind)| self.alloc_qubit([b as f64, x as f64, y as f64, kind]))
            .collect();
        let x_anc = layout
            .x_stabilizers
            .iter()
            .map(|s| (s.coords, KIND_X_ANC))
            .collect::<Vec<_>>()
            .into_iter()
            .map(|((x, y), kind)| self.alloc_qubit([b as f64, x as f64, y as f64, kind]))
            .collect();
        BlockBody {
            layout,
            data,
            z_anc,
            x_anc,
            alive: false,
            frame_x: false,
            frame_z: false,
        }
    }

    fn init_block(&mut self, b: usize, x_basis: bool) -> Result<(), CompileError> {
        self.check_block_id(b)?;
        if self.blocks[b].as_ref().is_some_and(|body| body.alive) {
            return Err(CompileError::BlockAlreadyAlive(b));
        }
        if self.blocks[b].is_none() {
            let layout = build_patch(self.program.family, self.program.d)?;
            let body = self.allocate_body(b, layout);
            self.blocks[b] = Some(body);
        }
        let data = {
            let body = self.blocks[b].as_mut().expect("body just ensured");
            body.alive = true;
            body.frame_x = false;
            body.frame_z = false;
            body.data.clone()
        };
        self.circuit.push(if x_basis {
            Instruction::ResetX {
                qubits: data.clone(),
            }
        } else {
            Instruction::Reset {
                qubits: data.clone(),
            }
        });
        let after = self.circuit.instructions.len() - 1;
        for &q in &data {
            self.engine.reset(q, x_basis);
        }
        self.circuit.push(Instruction::Tick);

        let layout = &self.blocks[b].as_ref().expect("body exists").layout;
        let (init_slots, dual_slots) = if x_basis {
            (&layout.x_stabilizers, &layout.z_stabilizers)
        } else {
            (&layout.z_stabilizers, &layout.x_stabilizers)
        };
        let supports = |slots: &[layout::StabSlot]| -> Vec<Vec<usize>> {
            slots
                .iter()
                .map(|s| {
                    let mut v: Vec<usize> = s.positions().collect();
                    v.sort_unstable();
                    v
                })
                .collect()
        };
        self.seeds.push(FrameSeed {
            block: b,
            x_basis,
            after,
            data: data.clone(),
            init_stabilizers: supports(init_slots),
            dual_stabilizers: supports(dual_slots),
        });

        let patch = self.patch_of(b)?;
        self.se_round(&[patch], false)
    }

    fn init_resource(
        &mut self,
        b: usize,
        state: ResourceState,
        d_first: usize,
        d_final: usize,
    ) -> Result<(), CompileError> {
        self.require_surface("INIT_RESOURCE")?;
        self.check_block_id(b)?;
        if self.blocks[b].is_some() {
            return Err(CompileError::BlockAlreadyAlive(b));
        }
        if d_first < 1 || d_first % 2 == 0 || d_final < d_first || d_final % 2 == 0 {
            return Err(CompileError::BadInjectionDistances {
                first: d_first,
                last: d_final,
            });
        }
        let corner = self.alloc_qubit([b as f64, 0.0, 0.0, KIND_DATA]);
        self.stochastic.data_qubits.push(corner);
        self.injected.push(corner);
        match state {
            ResourceState::ZPlus => {
                self.circuit.push(Instruction::Reset {
                    qubits: vec![corner],
                });
                self.engine.reset(corner, false);
            }
            ResourceState::XPlus => {
                self.circuit.push(Instruction::ResetX {
                    qubits: vec![corner],
                });
                self.engine.reset(corner, true);
            }
            ResourceState::YPlus => {
                self.circuit.push(Instruction::Reset {
                    qubits: vec![corner],
                });
                self.engine.reset(corner, false);
                self.circuit.push(Instruction::Gate1 {
                    kind: Gate1::H,
                    qubits: vec![corner],
                });
                self.engine.apply_step(&CliffordStep::H(corner));
                self.circuit.push(Instruction::Gate1 {
                    kind: Gate1::S,
                    qubits: vec![corner],
                });
                self.engine.apply_step(&CliffordStep::S(corner));
            }
        }
        self.circuit.push(Instruction::Tick);
        self.blocks[b] = Some(BlockBody {
            layout: unit_patch(),
            data: vec![corner],
            z_anc: Vec::new(),
            x_anc: Vec::new(),
            alive: true,
            frame_x: false,
            frame_z: false,
        });
        if d_first > 1 {
            self.grow_block(b, d_first, 2, true)?;
        } else {
            for _ in 0..2 {
                let patch = self.patch_of(b)?;
                self.se_round(&[patch], true)?;
            }
        }
        if d_final > d_first {
            self.grow_block(b, d_final, 1, false)?;
        }
        Ok(())
    }

    fn logical_h(&mut self, b: usize) -> Result<(), CompileError> {
        self.require_surface("H")?;
        let (layout, data, z_anc, x_anc) = {
            let body = self.live(b)?;
            if body.layout.width != body.layout.height {
                return Err(CompileError::ShapeMismatch(b, b));
            }
            (
                body.layout.clone(),
                body.data.clone(),
                body.z_anc.clone(),
                body.x_anc.clone(),
            )
        };
        self.circuit.push(Instruction::Gate1 {
            kind: Gate1::H,
            qubits: data.clone(),
        });
        for &q in &data {
            self.engine.apply_step(&CliffordStep::H(q));
        }
        self.circuit.push(Instruction::Tick);

        // Quarter-turn relabeling: the qubit at position u takes the label
        // rotate_position(u), so plaquette roles swap type in place and every
        // ancilla keeps its four physical neighbors.
        let mut new_data = vec![0usize; data.len()];
        for (u, &q) in data.iter().enumerate() {
            new_data[layout.rotate_position(u)] = q;
        }
        let sigma = |(px, py): (usize, usize)| (py, layout.width - px);
        let z_index: HashMap<(usize, usize), usize> = layout
            .z_stabilizers
            .iter()
            .enumerate()
            .map(|(i, s)| (s.coords, i))
            .collect();
        let x_index: HashMap<(usize, usize), usize> = layout
            .x_stabilizers
            .iter()
            .enumerate()
            .map(|(i, s)| (s.coords, i))
            .collect();
        let mut new_z = vec![0usize; z_anc.len()];
        let mut new_x = vec![0usize; x_anc.len()];
        for (i, slot) in layout.z_stabilizers.iter().enumerate() {
            new_x[x_index[&sigma(slot.coords)]] = z_anc[i];
        }
        for (i, slot) in layout.x_stabilizers.iter().enumerate() {
            new_z[z_index[&sigma(slot.coords)]] = x_anc[i];
        }
        let body = self.live_mut(b)?;
        body.data = new_data;
        body.z_anc = new_z;
        body.x_anc = new_x;
        std::mem::swap(&mut body.frame_x, &mut body.frame_z);
        Ok(())
    }

    fn logical_s(&mut self, b: usize) -> Result<(), CompileError> {
        self.require_surface("S")?;
        let (layout, data) = {
            let body = self.live(b)?;
            (body.layout.clone(), body.data.clone())
        };
        let Some(fold) = layout.fold_map.clone() else {
            return Err(CompileError::ShapeMismatch(b, b));
        };
        let mut cz_pairs = Vec::new();
        let mut s_qubits = Vec::new();
        let mut sdag_qubits = Vec::new();
        for p in 0..data.len() {
            let q = fold[p];
            if q > p {
                cz_pairs.push((data[p], data[q]));
            } else if q == p {
                let (x, _) = layout.coords(p);
                if (layout.width - 1 - x) % 2 == 0 {
                    s_qubits.push(data[p]);
                } else {
                    sdag_qubits.push(data[p]);
                }
            }
        }
        for &(a, c) in &cz_pairs {
            self.engine.apply_step(&CliffordStep::Cz(a, c));
        }
        self.circuit.push(Instruction::Gate2 {
            kind: Gate2::Cz,
            pairs: cz_pairs,
        });
        for &q in &s_qubits {
            self.engine.apply_step(&CliffordStep::S(q));
        }
        if !s_qubits.is_empty() {
            self.circuit.push(Instruction::Gate1 {
                kind: Gate1::S,
                qubits: s_qubits,
            });
        }
        for &q in &sdag_qubits {
            self.engine.apply_step(&CliffordStep::SDag(q));
        }
        if !sdag_qubits.is_empty() {
            self.circuit.push(Instruction::Gate1 {
                kind: Gate1::SDag,
                qubits: sdag_qubits,
            });
        }
        self.circuit.push(Instruction::Tick);
        let body = self.live_mut(b)?;
        body.frame_z ^= body.frame_x;
        self.has_fold = true;
        Ok(())
    }

    fn logical_cx(&mut self, control: usize, target: usize) -> Result<(), CompileError> {
        if control == target {
            return Err(CompileError::SelfInteraction(control));
        }
        let pairs: Vec<(usize, usize)> = {
            let cb = self.live(control)?;
            let tb = self.live(target)?;
            if cb.layout.width != tb.layout.width || cb.layout.height != tb.layout.height {
                return Err(CompileError::ShapeMismatch(control, target));
            }
            cb.data.iter().copied().zip(tb.data.iter().copied()).collect()
        };
        for &(a, b) in &pairs {
            self.engine.apply_step(&CliffordStep::Cx(a, b));
        }
        self.circuit.push(Instruction::Gate2 {
            kind: Gate2::Cx,
            pairs,
        });
        self.circuit.push(Instruction::Tick);
        let c_frame_x = self.live(control)?.frame_x;
        let t_frame_z = self.live(target)?.frame_z;
        self.live_mut(target)?.frame_x ^= c_frame_x;
        self.live_mut(control)?.frame_z ^= t_frame_z;
        Ok(())
    }

    fn measure_block(&mut self, b: usize, x_basis: bool) -> Result<(), CompileError> {
        let (layout, data, frame_x, frame_z) = {
            let body = self.live(b)?;
            (
                body.layout.clone(),
                body.data.clone(),
                body.frame_x,
                body.frame_z,
            )
        };
        let slots = if x_basis {
            &layout.x_stabilizers
        } else {
            &layout.z_stabilizers
        };
        // Solve each same-basis stabilizer before collapsing the data; a slot
        // the engine cannot determine emits nothing.
        let mut solved = Vec::new();
        for slot in slots {
            let qubits: Vec<usize> = slot.positions().map(|pos| data[pos]).collect();
            let op = self.string_on(&qubits, x_basis);
            if let Some((refs, _sign)) = self.engine.value_of(&op) {
                let positions: Vec<usize> = slot.positions().collect();
                solved.push((slot.coords, refs, positions));
            }
        }
        let base = self.circuit.num_measurements;
        self.stochastic
            .syndrome_measurements
            .push(self.circuit.instructions.len());
        self.circuit.push(if x_basis {
            Instruction::MeasureX {
                qubits: data.clone(),
            }
        } else {
            Instruction::Measure {
                qubits: data.clone(),
            }
        });
        let basis = if x_basis { Pauli::X } else { Pauli::Z };
        for (pos, &q) in data.iter().enumerate() {
            let op = self.pauli_on(q, basis);
            self.engine.measure(&op, base + pos);
        }
        let round = self.round as f64;
        for (coords, refs, positions) in solved {
            let mut recs = refs;
            let mut tail: Vec<usize> = positions.iter().map(|&pos| base + pos).collect();
            tail.sort_unstable();
            recs.extend(tail);
            self.circuit.push(Instruction::Detector {
                coords: vec![b as f64, coords.0 as f64, coords.1 as f64, round],
                recs,
            });
        }
        let support = if x_basis {
            &layout.logical_x
        } else {
            &layout.logical_z
        };
        let mut obs_recs: Vec<usize> = support.iter().map(|&pos| base + pos).collect();
        obs_recs.sort_unstable();
        let observable = self.corrections.len();
        self.circuit.push(Instruction::ObservableInclude {
            index: observable,
            recs: obs_recs.clone(),
        });
        self.corrections.push(if x_basis { frame_z } else { frame_x });
        self.logical.push(LogicalMeasurement {
            records: obs_recs,
            observable,
            cutoff: self.circuit.num_measurements,
        });
        self.live_mut(b)?.alive = false;
        self.circuit.push(Instruction::Tick);
        Ok(())
    }

    fn grow_block(
        &mut self,
        b: usize,
        d_to: usize,
        rounds: usize,
        postselect: bool,
    ) -> Result<(), CompileError> {
        self.require_surface("GROW")?;
        let (old_layout, old_data, old_z_anc, old_x_anc) = {
            let body = self.live(b)?;
            if body.layout.width != body.layout.height {
                return Err(CompileError::ShapeMismatch(b, b));
            }
            (
                body.layout.clone(),
                body.data.clone(),
                body.z_anc.clone(),
                body.x_anc.clone(),
            )
        };
        let d_from = old_layout.width;
        if d_to <= d_from || d_to % 2 == 0 {
            return Err(CompileError::BadGrowTarget {
                from: d_from,
                to: d_to,
            });
        }
        let offset = d_to - d_from;
        let new_layout = build_patch(CodeFamily::RotatedSurface, d_to)?;

        // The old patch keeps the corner where both logicals meet: position
        // (x, y) of the old patch becomes (x + offset, y + offset). The strip
        // of new columns starts in |+⟩ so the logical X string extends across
        // it; the remaining new rows start in |0⟩ for the logical Z string.
        let mut new_data = vec![0usize; new_layout.num_data()];
        let mut plus_fresh = Vec::new();
        let mut zero_fresh = Vec::new();
        for y in 0..d_to {
            for x in 0..d_to {
                let pos = new_layout.position(x, y);
                if x >= offset && y >= offset {
                    new_data[pos] = old_data[old_layout.position(x - offset, y - offset)];
                } else {
                    let q = self.alloc_qubit([b as f64, x as f64, y as f64, KIND_DATA]);
                    self.stochastic.data_qubits.push(q);
                    new_data[pos] = q;
                    if x < offset {
                        plus_fresh.push(q);
                    } else {
                        zero_fresh.push(q);
                    }
                }
            }
        }
        let old_z_by_coords: HashMap<(usize, usize), usize> = old_layout
            .z_stabilizers
            .iter()
            .zip(old_z_anc.iter())
            .map(|(s, &q)| (s.coords, q))
            .collect();
        let old_x_by_coords: HashMap<(usize, usize), usize> = old_layout
            .x_stabilizers
            .iter()
            .zip(old_x_anc.iter())
            .map(|(s, &q)| (s.coords, q))
            .collect();
        let map_ancs = |slots: &[layout::StabSlot],
                            old: &HashMap<(usize, usize), usize>,
                            kind: f64,
                            me: &mut Self|
         -> Vec<usize> {
            slots
                .iter()
                .map(|slot| {
                    let (px, py) = slot.coords;
                    if px >= offset && py >= offset {
                        if let Some(&q) = old.get(&(px - offset, py - offset)) {
                            return q;
                        }
                    }
                    me.alloc_qubit([b as f64, px as f64, py as f64, kind])
                })
                .collect()
        };
        let new_z_anc = map_ancs(&new_layout.z_stabilizers, &old_z_by_coords, KIND_Z_ANC, self);
        let new_x_anc = map_ancs(&new_layout.x_stabilizers, &old_x_by_coords, KIND_X_ANC, self);

        if !plus_fresh.is_empty() {
            self.circuit.push(Instruction::ResetX {
                qubits: plus_fresh.clone(),
            });
            for &q in &plus_fresh {
                self.engine.reset(q, true);
            }
        }
        if !zero_fresh.is_empty() {
            self.circuit.push(Instruction::Reset {
                qubits: zero_fresh.clone(),
            });
            for &q in &zero_fresh {
                self.engine.reset(q, false);
            }
        }
        self.circuit.push(Instruction::Tick);

        {
            let body = self.live_mut(b)?;
            body.layout = new_layout;
            body.data = new_data;
            body.z_anc = new_z_anc;
            body.x_anc = new_x_anc;
        }
        for _ in 0..rounds {
            let patch = self.patch_of(b)?;
            self.se_round(&[patch], postselect)?;
        }
        Ok(())
    }

    fn merge_split(&mut self, ids: &[usize]) -> Result<(), CompileError> {
        self.require_surface("MERGE_SPLIT")?;
        let mut distinct = ids.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        if ids.len() < 2 || distinct.len() != ids.len() {
            return Err(CompileError::BadMergeSet);
        }
        let d = {
            let first = self.live(ids[0])?;
            if first.layout.width != first.layout.height {
                return Err(CompileError::ShapeMismatch(ids[0], ids[0]));
            }
            first.layout.width
        };
        let mut block_data = Vec::with_capacity(ids.len());
        let mut logical_z_phys = Vec::with_capacity(ids.len());
        let mut frames_x = Vec::with_capacity(ids.len());
        for &b in ids {
            let body = self.live(b)?;
            if body.layout.width != d || body.layout.height != d {
                return Err(CompileError::ShapeMismatch(ids[0], b));
            }
            block_data.push(body.data.clone());
            logical_z_phys.push(
                body.layout
                    .logical_z
                    .iter()
                    .map(|&p| body.data[p])
                    .collect::<Vec<usize>>(),
            );
            frames_x.push(body.frame_x);
        }

        let k = ids.len();
        let wide_width = k * d + (k - 1);
        let wide = rotated_rect(wide_width, d)?;
        let tag = ids[0] as f64;

        // Blocks side by side with one fresh |+⟩ column between neighbors;
        // the seam columns sew the X boundaries together so the joint round
        // reads every product of neighboring logical Z columns.
        let mut wide_data = vec![0usize; wide.num_data()];
        let mut seam_qubits = Vec::new();
        for y in 0..d {
            for x in 0..wide_width {
                let pos = wide.position(x, y);
                let section = x / (d + 1);
                let in_section = x % (d + 1);
                if in_section < d {
                    wide_data[pos] = block_data[section][section_position(d, in_section, y)];
                } else {
                    let q = self.alloc_qubit([tag, x as f64, y as f64, KIND_SEAM]);
                    self.stochastic.data_qubits.push(q);
                    seam_qubits.push(q);
                    wide_data[pos] = q;
                }
            }
        }
        let z_anc: Vec<usize> = wide
            .z_stabilizers
            .iter()
            .map(|s| s.coords)
            .collect::<Vec<_>>()
            .into_iter()
            .map(|(px, py)| self.alloc_qubit([tag, px as f64, py as f64, KIND_Z_ANC]))
            .collect();
        let x_anc: Vec<usize> = wide
            .x_stabilizers
            .iter()
            .map(|s| s.coords)
            .collect::<Vec<_>>()
            .into_iter()
            .map(|(px, py)| self.alloc_qubit([tag, px as f64, py as f64, KIND_X_ANC]))
            .collect();

        self.circuit.push(Instruction::ResetX {
            qubits: seam_qubits.clone(),
        });
        for &q in &seam_qubits {
            self.engine.reset(q, true);
        }
        self.circuit.push(Instruction::Tick);

        let patch = Patch {
            tag,
            layout: wide,
            data: wide_data,
            z_anc,
            x_anc,
        };
        self.se_round(&[patch], false)?;

        // The joint round determines every neighboring product of logical Z
        // operators; read them off the engine as observables. Their signs and
        // the accumulated X frames fold into the software corrections.
        let mut pending = Vec::with_capacity(k - 1);
        for i in 0..k - 1 {
            let mut qubits = logical_z_phys[i].clone();
            qubits.extend_from_slice(&logical_z_phys[i + 1]);
            let op = self.string_on(&qubits, false);
            let (refs, sign) = self
                .engine
                .value_of(&op)
                .expect("joint logical-Z product is determined by the merged round");
            let observable = self.corrections.len();
            self.circuit.push(Instruction::ObservableInclude {
                index: observable,
                recs: refs.clone(),
            });
            self.corrections.push(sign ^ frames_x[i] ^ frames_x[i + 1]);
            pending.push((refs, observable));
        }

        let base = self.circuit.num_measurements;
        self.stochastic
            .syndrome_measurements
            .push(self.circuit.instructions.len());
        self.circuit.push(Instruction::MeasureX {
            qubits: seam_qubits.clone(),
        });
        for (j, &q) in seam_qubits.iter().enumerate() {
            let op = self.pauli_on(q, Pauli::X);
            self.engine.measure(&op, base + j);
        }
        self.circuit.push(Instruction::Tick);

        let cutoff = self.circuit.num_measurements;
        for (records, observable) in pending {
            self.logical.push(LogicalMeasurement {
                records,
                observable,
                cutoff,
            });
        }
        Ok(())
    }

    fn finish(mut self) -> Result<CompiledProgram, CompileError> {
        let influence = sweep::compute_influence(&self.circuit);
        let bad = influence.detector_influencing_coins();
        if !bad.is_empty() {
            return Err(CompileError::NondeterministicDetector(bad.len()));
        }
        for (index, gauged) in influence
            .coin_influenced_observables(self.circuit.observable_count)
            .into_iter()
            .enumerate()
        {
            if gauged {
                self.circuit.push(Instruction::GaugeObservable { index });
            }
        }
        self.stochastic.data_qubits.sort_unstable();
        self.stochastic.data_qubits.dedup();
        Ok(CompiledProgram {
            circuit: self.circuit,
            logical_measurements: self.logical,
            frame_seeds: self.seeds,
            software_corrections: self.corrections,
            partition_size: if self.has_fold { 2 } else { 1 },
            postselection_detectors: self.postselect,
            stochastic: self.stochastic,
            noise_horizon: self.horizon,
            injected_qubits: self.injected,
        })
    }
}

/// Position of `(x, y)` in a square block of distance `d`.
fn section_position(d: usize, x: usize, y: usize) -> usize {
    y * d + x
}

/// Degenerate 1×1 patch used as the seed of corner injection.
fn unit_patch() -> PatchLayout {
    PatchLayout {
        family: CodeFamily::RotatedSurface,
        d: 1,
        width: 1,
        height: 1,
        z_stabilizers: Vec::new(),
        x_stabilizers: Vec::new(),
        logical_z: vec![0],
        logical_x: vec![0],
        fold_map: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{sample_batch, SeedSpec};

    fn surface(d: usize, num_blocks: usize, ops: Vec<LogicalOp>) -> LogicalProgram {
        LogicalProgram {
            family: CodeFamily::RotatedSurface,
            d,
            num_blocks,
            ops,
            se_policy: SePolicy::AfterEachOp,
        }
    }

    fn assert_silent(prog: &CompiledProgram, shots: u64) {
        let batch = sample_batch(&prog.circuit, shots, &SeedSpec::new(0xfeed), false);
        for shot in &batch {
            assert!(
                shot.detector_bits.iter_ones().next().is_none(),
                "noiseless shot fired a detector"
            );
        }
    }

    #[test]
    fn memory_z_structure() {
        let p = surface(
            3,
            1,
            vec![LogicalOp::InitZ { block: 0 }, LogicalOp::MeasureZ { block: 0 }],
        );
        let prog = compile(&p).unwrap().into_single();
        assert_eq!(prog.circuit.detector_count, 8);
        assert_eq!(prog.circuit.observable_count, 1);
        assert_eq!(prog.logical_measurements.len(), 1);
        assert_eq!(prog.logical_measurements[0].observable, 0);
        assert_eq!(prog.logical_measurements[0].records.len(), 3);
        assert_eq!(prog.frame_seeds.len(), 1);
        assert_eq!(prog.partition_size, 1);
        assert!(prog.postselection_detectors.is_empty());
        assert_eq!(prog.circuit.gauge_flags, vec![false]);
        assert_eq!(prog.stochastic.data_qubits.len(), 9);
        assert_eq!(prog.stochastic.se_boundaries.len(), 1);
        // anc Z, anc X, final data readout
        assert_eq!(prog.stochastic.syndrome_measurements.len(), 3);

        let cx_pairs: usize = prog
            .circuit
            .instructions
            .iter()
            .filter_map(|i| match i {
                Instruction::Gate2 {
                    kind: Gate2::Cx,
                    pairs,
                } => Some(pairs.len()),
                _ => None,
            })
            .sum();
        assert_eq!(cx_pairs, 24);

        let batch = sample_batch(&prog.circuit, 64, &SeedSpec::new(3), false);
        for shot in &batch {
            assert!(shot.detector_bits.iter_ones().next().is_none());
            assert!(!shot.observable_bits.get(0));
        }
    }

    #[test]
    fn memory_x_init_makes_z_readout_gauge() {
        let p = surface(
            3,
            1,
            vec![LogicalOp::InitX { block: 0 }, LogicalOp::MeasureZ { block: 0 }],
        );
        let prog = compile(&p).unwrap().into_single();
        assert_eq!(prog.circuit.detector_count, 8);
        assert_eq!(prog.circuit.gauge_flags, vec![true]);
        assert_silent(&prog, 64);
    }

    #[test]
    fn transversal_cx_correlates_readouts() {
        let p = surface(
            3,
            2,
            vec![
                LogicalOp::InitX { block: 0 },
                LogicalOp::InitZ { block: 1 },
                LogicalOp::Cx {
                    control: 0,
                    target: 1,
                },
                LogicalOp::MeasureZ { block: 0 },
                LogicalOp::MeasureZ { block: 1 },
            ],
        );
        let prog = compile(&p).unwrap().into_single();
        assert_eq!(prog.circuit.gauge_flags, vec![true, true]);
        let batch = sample_batch(&prog.circuit, 64, &SeedSpec::new(11), false);
        for shot in &batch {
            assert!(shot.detector_bits.iter_ones().next().is_none());
            assert_eq!(shot.observable_bits.get(0), shot.observable_bits.get(1));
        }
    }

    #[test]
    fn policy_controls_round_count() {
        let ops = vec![
            LogicalOp::InitX { block: 0 },
            LogicalOp::InitZ { block: 1 },
            LogicalOp::Cx {
                control: 0,
                target: 1,
            },
            LogicalOp::MeasureZ { block: 0 },
            LogicalOp::MeasureZ { block: 1 },
        ];
        let with = compile(&surface(3, 2, ops.clone())).unwrap().into_single();
        assert_eq!(with.stochastic.se_boundaries.len(), 3);
        let mut none = surface(3, 2, ops);
        none.se_policy = SePolicy::NoneBetweenGates;
        let without = compile(&none).unwrap().into_single();
        assert_eq!(without.stochastic.se_boundaries.len(), 2);
        assert_silent(&without, 32);
    }

    #[test]
    fn hadamard_rotates_into_x_readout() {
        let p = surface(
            3,
            1,
            vec![
                LogicalOp::InitZ { block: 0 },
                LogicalOp::H { block: 0 },
                LogicalOp::MeasureX { block: 0 },
            ],
        );
        let prog = compile(&p).unwrap().into_single();
        // init round pairs 4 Z slots, the post-H round pairs all 8 relabeled
        // slots, the readout solves 4 more
        assert_eq!(prog.circuit.detector_count, 16);
        assert_eq!(prog.circuit.gauge_flags, vec![false]);
        let batch = sample_batch(&prog.circuit, 64, &SeedSpec::new(5), false);
        for shot in &batch {
            assert!(shot.detector_bits.iter_ones().next().is_none());
            assert!(!shot.observable_bits.get(0));
        }
    }

    #[test]
    fn fold_phase_gate_structure() {
        let p = surface(
            3,
            1,
            vec![
                LogicalOp::InitZ { block: 0 },
                LogicalOp::S { block: 0 },
                LogicalOp::MeasureZ { block: 0 },
            ],
        );
        let prog = compile(&p).unwrap().into_single();
        assert_eq!(prog.partition_size, 2);
        assert_eq!(prog.circuit.gauge_flags, vec![false]);
        // The fold conjugates single X plaquettes out of the stabilizer group
        // (their images anticommute with themselves), but products of mirror
        // pairs survive, so the round after the gate compares the four Z slots
        // individually plus two X-pair parities: 4 + (4 + 2) + 4.
        assert_eq!(prog.circuit.detector_count, 14);
        let cz: Vec<&Vec<(usize, usize)>> = prog
            .circuit
            .instructions
            .iter()
            .filter_map(|i| match i {
                Instruction::Gate2 {
                    kind: Gate2::Cz,
                    pairs,
                } => Some(pairs),
                _ => None,
            })
            .collect();
        assert_eq!(cz.len(), 1);
        assert_eq!(cz[0].len(), 3);
        let mut s_qubits = Vec::new();
        let mut sdag_qubits = Vec::new();
        for i in &prog.circuit.instructions {
            match i {
                Instruction::Gate1 {
                    kind: Gate1::S,
                    qubits,
                } => s_qubits.extend_from_slice(qubits),
                Instruction::Gate1 {
                    kind: Gate1::SDag,
                    qubits,
                } => sdag_qubits.extend_from_slice(qubits),
                _ => {}
            }
        }
        // data qubits are allocated first, in position order
        assert_eq!(s_qubits, vec![0, 8]);
        assert_eq!(sdag_qubits, vec![4]);
        let batch = sample_batch(&prog.circuit, 64, &SeedSpec::new(7), false);
        for shot in &batch {
            assert!(shot.detector_bits.iter_ones().next().is_none());
            assert!(!shot.observable_bits.get(0));
        }
    }

    #[test]
    fn grow_preserves_plus_state() {
        let p = surface(
            3,
            1,
            vec![
                LogicalOp::InitX { block: 0 },
                LogicalOp::Grow { block: 0, d_to: 5 },
                LogicalOp::MeasureX { block: 0 },
            ],
        );
        let prog = compile(&p).unwrap().into_single();
        assert_eq!(prog.circuit.gauge_flags, vec![false]);
        assert_eq!(prog.stochastic.data_qubits.len(), 25);
        assert_eq!(prog.frame_seeds.len(), 1);
        let batch = sample_batch(&prog.circuit, 48, &SeedSpec::new(9), false);
        for shot in &batch {
            assert!(shot.detector_bits.iter_ones().next().is_none());
            assert!(!shot.observable_bits.get(0));
        }
    }

    #[test]
    fn ghz_surgery_parities_and_frames() {
        let mut ops = vec![
            LogicalOp::InitX { block: 0 },
            LogicalOp::InitX { block: 1 },
            LogicalOp::InitX { block: 2 },
            LogicalOp::MergeSplit {
                blocks: vec![0, 1, 2],
            },
            LogicalOp::InitZ { block: 3 },
            LogicalOp::InitZ { block: 4 },
            LogicalOp::InitZ { block: 5 },
        ];
        for i in 0..3 {
            ops.push(LogicalOp::Cx {
                control: i,
                target: i + 3,
            });
        }
        for i in 0..3 {
            ops.push(LogicalOp::MeasureX { block: i });
        }
        for i in 3..6 {
            ops.push(LogicalOp::MeasureZ { block: i });
        }
        let prog = compile(&surface(3, 6, ops)).unwrap().into_single();
        assert_eq!(prog.logical_measurements.len(), 8);
        assert_eq!(prog.circuit.observable_count, 8);
        // every individual readout is randomized; only parities are fixed
        assert_eq!(prog.circuit.gauge_flags, vec![true; 8]);

        let cor = &prog.software_corrections;
        let batch = sample_batch(&prog.circuit, 128, &SeedSpec::new(21), false);
        for shot in &batch {
            assert!(shot.detector_bits.iter_ones().next().is_none());
            let bit = |i: usize| shot.observable_bits.get(i) ^ cor[i];
            assert!(!(bit(5) ^ bit(6) ^ bit(0)), "first seam parity broken");
            assert!(!(bit(6) ^ bit(7) ^ bit(1)), "second seam parity broken");
        }

        let frames = crate::dem::build_frame_system(&prog.circuit, &prog.frame_seeds);
        assert_eq!(frames.num_columns(), 6);
        let expected: [&[usize]; 6] = [&[0, 5], &[0, 1, 6], &[1, 7], &[2], &[3], &[4]];
        for (col, rows) in expected.iter().enumerate() {
            for obs in 0..8 {
                assert_eq!(
                    frames.lambda.get(obs, col),
                    rows.contains(&obs),
                    "frame column {col} row {obs}"
                );
            }
        }
    }

    #[test]
    fn injection_probe_reads_fixed_y() {
        let p = surface(
            3,
            1,
            vec![
                LogicalOp::InitResource {
                    block: 0,
                    state: ResourceState::YPlus,
                    d_first: 3,
                    d_final: 5,
                },
                LogicalOp::S { block: 0 },
                LogicalOp::MeasureX { block: 0 },
            ],
        );
        let prog = compile(&p).unwrap().into_single();
        assert_eq!(prog.injected_qubits.len(), 1);
        assert!(!prog.postselection_detectors.is_empty());
        assert_eq!(prog.partition_size, 2);
        assert_eq!(prog.circuit.gauge_flags, vec![false]);
        let reference = crate::sampler::reference_sample(&prog.circuit);
        let (_, ref_obs) =
            crate::sampler::shot_to_detectors(&prog.circuit, &reference).unwrap();
        let batch = sample_batch(&prog.circuit, 48, &SeedSpec::new(13), false);
        for shot in &batch {
            assert!(shot.detector_bits.iter_ones().next().is_none());
            assert_eq!(shot.observable_bits.get(0), ref_obs.get(0));
        }
    }

    #[test]
    fn repetition_memory_and_rejections() {
        let p = LogicalProgram {
            family: CodeFamily::Repetition,
            d: 3,
            num_blocks: 1,
            ops: vec![
                LogicalOp::InitZ { block: 0 },
                LogicalOp::Idle { block: 0 },
                LogicalOp::MeasureZ { block: 0 },
            ],
            se_policy: SePolicy::AfterEachOp,
        };
        let prog = compile(&p).unwrap().into_single();
        assert_eq!(prog.circuit.detector_count, 6);
        assert_silent(&prog, 32);

        let mut bad = p.clone();
        bad.ops = vec![LogicalOp::InitZ { block: 0 }, LogicalOp::H { block: 0 }];
        assert!(matches!(
            compile(&bad),
            Err(CompileError::UnsupportedOp { .. })
        ));
    }

    #[test]
    fn conditional_clifford_forks_branches() {
        let p = surface(
            3,
            2,
            vec![
                LogicalOp::InitZ { block: 0 },
                LogicalOp::InitX { block: 1 },
                LogicalOp::MeasureX { block: 1 },
                LogicalOp::Cond {
                    decision: 0,
                    op: Box::new(LogicalOp::H { block: 0 }),
                },
                LogicalOp::MeasureZ { block: 0 },
            ],
        );
        let branched = compile(&p).unwrap();
        assert_eq!(branched.decisions, vec![0]);
        assert_eq!(branched.branches.len(), 2);
        let skip = &branched.branch_for(&[false]).program;
        let take = &branched.branch_for(&[true]).program;
        assert_eq!(skip.logical_measurements.len(), 2);
        assert_eq!(take.logical_measurements.len(), 2);
        let shared = skip
            .circuit
            .instructions
            .iter()
            .zip(take.circuit.instructions.iter())
            .take_while(|(a, b)| a == b)
            .count();
        assert!(shared > 0, "branches must share the unconditional prefix");
        assert_ne!(
            skip.circuit.instructions.len(),
            take.circuit.instructions.len()
        );
    }

    #[test]
    fn conditional_pauli_stays_linear() {
        let p = surface(
            3,
            2,
            vec![
                LogicalOp::InitX { block: 0 },
                LogicalOp::InitZ { block: 1 },
                LogicalOp::Cx {
                    control: 0,
                    target: 1,
                },
                LogicalOp::MeasureZ { block: 1 },
                LogicalOp::Cond {
                    decision: 0,
                    op: Box::new(LogicalOp::Z { block: 0 }),
                },
                LogicalOp::MeasureX { block: 0 },
            ],
        );
        let branched = compile(&p).unwrap();
        assert!(branched.decisions.is_empty());
        let prog = branched.into_single();
        let classical = prog
            .circuit
            .instructions
            .iter()
            .filter(|i| matches!(i, Instruction::Classical { .. }))
            .count();
        assert_eq!(classical, 3);
        assert_silent(&prog, 32);
    }

    #[test]
    fn lifecycle_errors() {
        let not_alive = surface(3, 1, vec![LogicalOp::MeasureZ { block: 0 }]);
        assert!(matches!(
            compile(&not_alive),
            Err(CompileError::BlockNotAlive(0))
        ));

        let double = surface(
            3,
            1,
            vec![LogicalOp::InitZ { block: 0 }, LogicalOp::InitX { block: 0 }],
        );
        assert!(matches!(
            compile(&double),
            Err(CompileError::BlockAlreadyAlive(0))
        ));

        let shrink = surface(
            3,
            1,
            vec![
                LogicalOp::InitZ { block: 0 },
                LogicalOp::Grow { block: 0, d_to: 3 },
            ],
        );
        assert!(matches!(
            compile(&shrink),
            Err(CompileError::BadGrowTarget { .. })
        ));

        let merge_one = surface(
            3,
            1,
            vec![
                LogicalOp::InitZ { block: 0 },
                LogicalOp::MergeSplit { blocks: vec![0] },
            ],
        );
        assert!(matches!(compile(&merge_one), Err(CompileError::BadMergeSet)));

        let early = surface(
            3,
            1,
            vec![
                LogicalOp::InitZ { block: 0 },
                LogicalOp::Cond {
                    decision: 0,
                    op: Box::new(LogicalOp::Z { block: 0 }),
                },
            ],
        );
        assert!(matches!(
            compile(&early),
            Err(CompileError::DecisionNotReady(0))
        ));

        let mut policy = surface(3, 1, vec![LogicalOp::InitZ { block: 0 }]);
        policy.se_policy = SePolicy::Custom(vec![true, false]);
        assert!(matches!(
            compile(&policy),
            Err(CompileError::PolicyLength { got: 2, want: 1 })
        ));
    }
}
