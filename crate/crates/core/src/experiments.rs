//! Scenario registry, Monte-Carlo harness with exact binomial intervals,
//! analytic distillation-factory formulas, fault-injection helpers, and
//! CSV/JSON result emission.

use crate::compiler::{
    compile, CodeFamily, CompileError, LogicalOp, LogicalProgram, ResourceState, SePolicy,
};
use crate::decoders::Decoder;
use crate::dem::{channel_components, origin_insertions, FaultOrigin};
use crate::gf2::BitVector;
use crate::noise::{NoiseMode, NoiseSpec};
use crate::runtime::{
    run_shot, DecodeCache, PrepareError, PreparedScenario, RuntimeOptions, ScenarioCheck,
    ShotOutcome, ShotVerdict,
};
use crate::sampler::SeedSpec;
use crate::{Instruction, Pauli, PhysicalCircuit};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};
use std::collections::HashMap;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

/// How a scenario wants its noise built from the run configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum NoisePlan {
    /// Uniform circuit-level depolarizing at the configured `p`.
    CircuitDepolarizing,
    /// Local-stochastic data/syndrome noise at the configured `p`.
    LocalStochastic,
    /// Readout flips only: syndrome measurements at `p`, transversal data
    /// readouts at `p + epsilon`. Ignores the configured `p`.
    SyndromeVsReadout { p: f64, epsilon: f64 },
}

/// A named logical circuit plus everything needed to score its shots.
#[derive(Clone, Debug)]
pub struct ScenarioSpec {
    pub name: String,
    pub program: LogicalProgram,
    pub checks: Vec<ScenarioCheck>,
    /// Indices into `checks` whose violation discards the shot (error
    /// detection) instead of counting a logical failure.
    pub postselect_checks: Vec<usize>,
    /// Observables whose interpretation is inverted (software Pauli inputs).
    pub readout_flips: Vec<usize>,
    pub noise_plan: NoisePlan,
}

/// One Monte-Carlo run request.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub scenario: String,
    pub d: usize,
    pub d0: Option<usize>,
    pub d1: Option<usize>,
    pub p: f64,
    pub p_z: f64,
    pub shots: u64,
    pub decoder: Decoder,
    pub seed: u64,
    pub no_consistency: bool,
    pub noiseless_cliffords: bool,
    pub keep_truth: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: String::new(),
            d: 3,
            d0: None,
            d1: None,
            p: 0.0,
            p_z: 0.0,
            shots: 1,
            decoder: Decoder::Mle,
            seed: 0,
            no_consistency: false,
            noiseless_cliffords: false,
            keep_truth: false,
        }
    }
}

/// One emitted result line. Field order matches the CSV schema.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub d: usize,
    pub p: f64,
    pub p_z: f64,
    pub decoder: String,
    pub shots: u64,
    /// Injection-postselection discards plus factory-test rejections.
    pub discarded: u64,
    pub heralded: u64,
    pub logical: u64,
    pub p_l: f64,
    pub cp_low: f64,
    pub cp_high: f64,
    pub seed: u64,
    pub wall_ms: u64,
}

/// Full run outcome: the CSV row plus bookkeeping the row schema omits.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub row: ResultRow,
    pub success: u64,
    /// Decoder failed to reproduce a syndrome — a model/circuit mismatch.
    pub infeasible: u64,
    /// Shots where a re-decode disagreed with an earlier commitment
    /// (populated by the no-consistency ablation).
    pub inconsistent: u64,
    /// Of the discarded shots, how many failed injection postselection.
    pub injection_discards: u64,
    /// Postselection rate of the factory test, when the scenario has one.
    pub p_ps: Option<f64>,
    pub p_ps_cp: Option<(f64, f64)>,
}

#[derive(Error, Debug)]
pub enum ExperimentError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Prepare(#[from] PrepareError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Registered scenario names, in registry order.
pub const SCENARIO_NAMES: &[&str] = &[
    "repeated-zz",
    "ghz-transversal",
    "ghz-surgery",
    "repetition-teleport",
    "s-factory",
    "s-factory-2",
    "cond-teleport",
    "consistency-demo",
];

/// GHZ preparation flavor: transversal CNOT fan-out or a single joint
/// lattice-surgery round (the non-fault-tolerant negative control).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GhzMode {
    Transversal,
    LatticeSurgery,
}

fn surface_program(d: usize, num_blocks: usize, ops: Vec<LogicalOp>) -> LogicalProgram {
    LogicalProgram {
        family: CodeFamily::RotatedSurface,
        d,
        num_blocks,
        ops,
        se_policy: SePolicy::AfterEachOp,
    }
}

/// Two |+⟩ blocks whose Z̄Z̄ correlation is read `rounds` times through a
/// reused logical ancilla, then both blocks are measured out. Checks:
/// consecutive readings agree, and the final transversal product matches the
/// last reading.
pub fn scenario_repeated_zz(d: usize, rounds: usize) -> ScenarioSpec {
    assert!(rounds >= 1);
    let mut ops = vec![
        LogicalOp::InitX { block: 0 },
        LogicalOp::InitX { block: 1 },
    ];
    for _ in 0..rounds {
        ops.push(LogicalOp::InitZ { block: 2 });
        ops.push(LogicalOp::Cx {
            control: 0,
            target: 2,
        });
        ops.push(LogicalOp::Cx {
            control: 1,
            target: 2,
        });
        ops.push(LogicalOp::MeasureZ { block: 2 });
    }
    ops.push(LogicalOp::MeasureZ { block: 0 });
    ops.push(LogicalOp::MeasureZ { block: 1 });

    let mut checks = Vec::new();
    for r in 1..rounds {
        checks.push(ScenarioCheck {
            name: format!("agree-{r}"),
            bits: vec![r - 1, r],
        });
    }
    checks.push(ScenarioCheck {
        name: "final-product".into(),
        bits: vec![rounds - 1, rounds, rounds + 1],
    });
    ScenarioSpec {
        name: "repeated-zz".into(),
        program: surface_program(d, 3, ops),
        checks,
        postselect_checks: Vec::new(),
        readout_flips: Vec::new(),
        noise_plan: NoisePlan::CircuitDepolarizing,
    }
}

/// Three-qubit GHZ state prepared either transversally or through one joint
/// lattice-surgery round, then teleported onto three fresh |0⟩ blocks via
/// transversal CNOTs and X-basis readout of the originals. The Z̄
/// feedforward onto the targets commutes with their Z-basis readout, so it
/// stays purely in software and the checks read the target parities
/// directly (against the merge outcomes in the surgery flavor).
pub fn scenario_ghz_teleport(d: usize, mode: GhzMode) -> ScenarioSpec {
    let mut ops = Vec::new();
    let checks;
    match mode {
        GhzMode::Transversal => {
            ops.extend([
                LogicalOp::InitX { block: 0 },
                LogicalOp::InitZ { block: 1 },
                LogicalOp::InitZ { block: 2 },
                LogicalOp::Cx {
                    control: 0,
                    target: 1,
                },
                LogicalOp::Cx {
                    control: 0,
                    target: 2,
                },
            ]);
            // Measurements: x0,x1,x2 = 0..2; z3,z4,z5 = 3..5.
            checks = vec![
                ScenarioCheck {
                    name: "zz-01".into(),
                    bits: vec![3, 4],
                },
                ScenarioCheck {
                    name: "zz-12".into(),
                    bits: vec![4, 5],
                },
            ];
        }
        GhzMode::LatticeSurgery => {
            ops.extend([
                LogicalOp::InitX { block: 0 },
                LogicalOp::InitX { block: 1 },
                LogicalOp::InitX { block: 2 },
                LogicalOp::MergeSplit {
                    blocks: vec![0, 1, 2],
                },
            ]);
            // Measurements: m01,m12 = 0..1; x0..x2 = 2..4; z3..z5 = 5..7.
            checks = vec![
                ScenarioCheck {
                    name: "zz-01".into(),
                    bits: vec![0, 5, 6],
                },
                ScenarioCheck {
                    name: "zz-12".into(),
                    bits: vec![1, 6, 7],
                },
            ];
        }
    }
    ops.extend([
        LogicalOp::InitZ { block: 3 },
        LogicalOp::InitZ { block: 4 },
        LogicalOp::InitZ { block: 5 },
        LogicalOp::Cx {
            control: 0,
            target: 3,
        },
        LogicalOp::Cx {
            control: 1,
            target: 4,
        },
        LogicalOp::Cx {
            control: 2,
            target: 5,
        },
        LogicalOp::MeasureX { block: 0 },
        LogicalOp::MeasureX { block: 1 },
        LogicalOp::MeasureX { block: 2 },
        LogicalOp::MeasureZ { block: 3 },
        LogicalOp::MeasureZ { block: 4 },
        LogicalOp::MeasureZ { block: 5 },
    ]);
    ScenarioSpec {
        name: match mode {
            GhzMode::Transversal => "ghz-transversal".into(),
            GhzMode::LatticeSurgery => "ghz-surgery".into(),
        },
        program: surface_program(d, 6, ops),
        checks,
        postselect_checks: Vec::new(),
        readout_flips: Vec::new(),
        noise_plan: NoisePlan::CircuitDepolarizing,
    }
}

/// Repetition-code teleport: block 0 carries |ψ⟩ (|1⟩ as a tracked software
/// X on a |0⟩ preparation), block 1 is a single-shot |+⟩; CNOT from 1 onto
/// 0, Z-readout of 0, software X̄ feedforward, Z-readout of 1. The check is
/// the teleportation identity m₀ ⊕ m₁ = ψ.
pub fn scenario_repetition_teleport(d: usize, psi: bool) -> ScenarioSpec {
    let ops = vec![
        LogicalOp::InitZ { block: 0 },
        LogicalOp::InitX { block: 1 },
        LogicalOp::Cx {
            control: 1,
            target: 0,
        },
        LogicalOp::MeasureZ { block: 0 },
        LogicalOp::MeasureZ { block: 1 },
    ];
    ScenarioSpec {
        name: "repetition-teleport".into(),
        program: LogicalProgram {
            family: CodeFamily::Repetition,
            d,
            num_blocks: 2,
            ops,
            se_policy: SePolicy::AfterEachOp,
        },
        checks: vec![ScenarioCheck {
            name: "teleport".into(),
            bits: vec![0, 1],
        }],
        postselect_checks: Vec::new(),
        readout_flips: if psi { vec![0] } else { Vec::new() },
        noise_plan: NoisePlan::LocalStochastic,
    }
}

/// Hamming parity-check supports of the [[7,1,3]] code, 1-indexed over the
/// seven code blocks.
const STEANE_SUPPORTS: [[usize; 4]; 3] = [[1, 3, 5, 7], [2, 3, 6, 7], [4, 5, 6, 7]];
/// Weight-3 logical X representative (a Fano line).
const STEANE_X_REP: [usize; 3] = [3, 5, 6];

/// Block layout of one distillation unit, offset so units can be stacked.
struct FactoryUnit {
    output: usize,
    steane: [usize; 7],
    inputs: [usize; 7],
}

impl FactoryUnit {
    fn at(offset: usize) -> Self {
        FactoryUnit {
            output: offset,
            steane: std::array::from_fn(|i| offset + 1 + i),
            inputs: std::array::from_fn(|i| offset + 8 + i),
        }
    }
}

/// Emit one distillation unit: Bell pair between `output` and a Steane-coded
/// logical built over seven blocks, teleported S̄ through seven |Y⟩ resource
/// blocks, and X-basis readout of the code blocks. Returns the measurement
/// indices (`m[i]`, `x[i]`) it appended, in commitment order m₁..m₇ then
/// x₁..x₇. `inject` adds the resource-state initializations (the two-level
/// factory feeds grown outputs instead).
fn emit_factory_unit(
    ops: &mut Vec<LogicalOp>,
    next_measurement: &mut usize,
    unit: &FactoryUnit,
    d0: usize,
    d1: usize,
    inject: bool,
) -> ([usize; 7], [usize; 7]) {
    ops.push(LogicalOp::InitX { block: unit.output });
    for (i, &b) in unit.steane.iter().enumerate() {
        let code_qubit = i + 1;
        if matches!(code_qubit, 1 | 2 | 4) {
            ops.push(LogicalOp::InitX { block: b });
        } else {
            ops.push(LogicalOp::InitZ { block: b });
        }
    }
    // |0̄⟩ of the Steane code: fan each X-pivot out over the rest of its
    // parity-check support. The textbook circuit's first layer contains two
    // more CNOTs that act trivially; they are omitted.
    for support in STEANE_SUPPORTS {
        let pivot = support[0];
        for &target in &support[1..] {
            ops.push(LogicalOp::Cx {
                control: unit.steane[pivot - 1],
                target: unit.steane[target - 1],
            });
        }
    }
    // Bell pair: the |+⟩ output controls the logical X representative.
    for &code_qubit in &STEANE_X_REP {
        ops.push(LogicalOp::Cx {
            control: unit.output,
            target: unit.steane[code_qubit - 1],
        });
    }
    if inject {
        for &b in &unit.inputs {
            ops.push(LogicalOp::InitResource {
                block: b,
                state: ResourceState::YPlus,
                d_first: d0,
                d_final: d1,
            });
        }
    }
    // Teleported S̄ on every code block; the Z̄^m feedforward stays in
    // software and is folded into the check parities below.
    let mut m = [0usize; 7];
    for i in 0..7 {
        ops.push(LogicalOp::Cx {
            control: unit.steane[i],
            target: unit.inputs[i],
        });
        ops.push(LogicalOp::MeasureZ {
            block: unit.inputs[i],
        });
        m[i] = *next_measurement;
        *next_measurement += 1;
    }
    let mut x = [0usize; 7];
    for (i, &b) in unit.steane.iter().enumerate() {
        ops.push(LogicalOp::MeasureX { block: b });
        x[i] = *next_measurement;
        *next_measurement += 1;
    }
    (m, x)
}

/// Steane error-detection parities of one unit: for each parity-check
/// support, the X readouts XORed with their software S̄-teleport
/// corrections.
fn factory_postselect_checks(m: &[usize; 7], x: &[usize; 7]) -> Vec<ScenarioCheck> {
    STEANE_SUPPORTS
        .iter()
        .enumerate()
        .map(|(k, support)| {
            let mut bits = Vec::new();
            for &q in support {
                bits.push(x[q - 1]);
                bits.push(m[q - 1]);
            }
            ScenarioCheck {
                name: format!("steane-x{}", k + 1),
                bits,
            }
        })
        .collect()
}

/// Measurement bits whose parity reads the unit's logical X̄ (teleport
/// corrections folded in).
fn factory_logical_x_bits(m: &[usize; 7], x: &[usize; 7]) -> Vec<usize> {
    let mut bits = Vec::new();
    for &q in &STEANE_X_REP {
        bits.push(x[q - 1]);
        bits.push(m[q - 1]);
    }
    bits
}

/// Append the noiseless verification tail: teleported S̄ through one more
/// |Y⟩ block, then X-basis readout of the probed block. Returns the probe's
/// two measurement indices (resource Z, then final X).
fn emit_probe(
    ops: &mut Vec<LogicalOp>,
    next_measurement: &mut usize,
    probed: usize,
    probe_block: usize,
    d0: usize,
    d1: usize,
) -> (usize, usize) {
    ops.push(LogicalOp::ProbeBarrier);
    ops.push(LogicalOp::InitResource {
        block: probe_block,
        state: ResourceState::YPlus,
        d_first: d0,
        d_final: d1,
    });
    ops.push(LogicalOp::Cx {
        control: probed,
        target: probe_block,
    });
    ops.push(LogicalOp::MeasureZ { block: probe_block });
    let m_probe = *next_measurement;
    *next_measurement += 1;
    ops.push(LogicalOp::MeasureX { block: probed });
    let x_probe = *next_measurement;
    *next_measurement += 1;
    (m_probe, x_probe)
}

/// One-level |S⟩ = S̄|+⟩ distillation on the [[7,1,3]] Steane code: seven
/// injected |Y⟩ resources drive teleported S̄ gates on a Bell pair between
/// the output block and the Steane-coded logical; error detection
/// postselects the reconstructed Steane X stabilizers; the surviving output
/// is verified by a noiseless S̄-teleport probe.
pub fn scenario_s_factory(d0: usize, d1: usize) -> ScenarioSpec {
    assert!(d0 <= d1);
    let unit = FactoryUnit::at(0);
    let probe_block = 15;
    let mut ops = Vec::new();
    let mut next = 0usize;
    let (m, x) = emit_factory_unit(&mut ops, &mut next, &unit, d0, d1, true);
    let (m_probe, x_probe) = emit_probe(&mut ops, &mut next, unit.output, probe_block, d0, d1);

    let mut checks = factory_postselect_checks(&m, &x);
    let postselect_checks = (0..checks.len()).collect();
    let mut output_bits = vec![x_probe, m_probe];
    output_bits.extend(factory_logical_x_bits(&m, &x));
    checks.push(ScenarioCheck {
        name: "output".into(),
        bits: output_bits,
    });
    ScenarioSpec {
        name: "s-factory".into(),
        program: surface_program(d1, 16, ops),
        checks,
        postselect_checks,
        readout_flips: Vec::new(),
        noise_plan: NoisePlan::CircuitDepolarizing,
    }
}

/// Two-level |S⟩ distillation: seven first-level units (their probes
/// removed) feed a second unit whose resource inputs are the grown level-one
/// outputs — 113 logical blocks plus the probe. Exposed for compilation and
/// inspection; sampling it sits well beyond desk scale.
pub fn scenario_s_factory_two_level(d0: usize, d1: usize, d2: usize) -> ScenarioSpec {
    assert!(d0 <= d1 && d1 <= d2);
    let mut ops = Vec::new();
    let mut next = 0usize;
    let mut checks = Vec::new();
    let mut level1 = Vec::new();
    for k in 0..7 {
        let unit = FactoryUnit::at(15 * k);
        let (m, x) = emit_factory_unit(&mut ops, &mut next, &unit, d0, d1, true);
        checks.extend(factory_postselect_checks(&m, &x).into_iter().map(
            |mut c: ScenarioCheck| {
                c.name = format!("l1u{}-{}", k + 1, c.name);
                c
            },
        ));
        level1.push((unit.output, m, x));
    }
    let second = FactoryUnit {
        output: 105,
        steane: std::array::from_fn(|i| 106 + i),
        inputs: std::array::from_fn(|i| level1[i].0),
    };
    for &(output, _, _) in &level1 {
        ops.push(LogicalOp::Grow {
            block: output,
            d_to: d2,
        });
    }
    let (m2, x2) = emit_factory_unit(&mut ops, &mut next, &second, d0, d2, false);
    checks.extend(
        factory_postselect_checks(&m2, &x2)
            .into_iter()
            .map(|mut c| {
                c.name = format!("l2-{}", c.name);
                c
            }),
    );
    let postselect_checks = (0..checks.len()).collect();
    let probe_block = 113;
    let (m_probe, x_probe) = emit_probe(&mut ops, &mut next, second.output, probe_block, d0, d2);
    let mut output_bits = vec![x_probe, m_probe];
    output_bits.extend(factory_logical_x_bits(&m2, &x2));
    // The level-two teleport corrections are the level-one logical X̄
    // readouts of the consumed outputs, already counted in m2.
    checks.push(ScenarioCheck {
        name: "output".into(),
        bits: output_bits,
    });
    ScenarioSpec {
        name: "s-factory-2".into(),
        program: surface_program(d1, 114, ops),
        checks,
        postselect_checks,
        readout_flips: Vec::new(),
        noise_plan: NoisePlan::CircuitDepolarizing,
    }
}

/// Gate teleportation with a Clifford feedforward: an injected |Y⟩ resource
/// applies S̄ to a |+⟩ block through the standard teleportation gadget whose
/// correction branch is the fold-transversal S̄ itself, exercising
/// precompiled conditional branches. A second conditional around an S̄†
/// rotation returns both branches to |+⟩ for a deterministic X readout.
pub fn scenario_cond_clifford_teleport(d: usize) -> ScenarioSpec {
    assert!(d >= 3);
    let ops = vec![
        LogicalOp::InitX { block: 0 },
        LogicalOp::InitResource {
            block: 1,
            state: ResourceState::YPlus,
            d_first: 3,
            d_final: d,
        },
        LogicalOp::Cx {
            control: 0,
            target: 1,
        },
        LogicalOp::MeasureZ { block: 1 },
        LogicalOp::Cond {
            decision: 0,
            op: Box::new(LogicalOp::S { block: 0 }),
        },
        // S̄† as S̄ followed by a software Z̄.
        LogicalOp::S { block: 0 },
        LogicalOp::Z { block: 0 },
        LogicalOp::Cond {
            decision: 0,
            op: Box::new(LogicalOp::S { block: 0 }),
        },
        LogicalOp::MeasureX { block: 0 },
    ];
    ScenarioSpec {
        name: "cond-teleport".into(),
        program: surface_program(d, 2, ops),
        checks: vec![ScenarioCheck {
            name: "probe".into(),
            bits: vec![1],
        }],
        postselect_checks: Vec::new(),
        readout_flips: Vec::new(),
        noise_plan: NoisePlan::CircuitDepolarizing,
    }
}

/// The two-step decoding demonstration: |+⟩ and |0⟩ blocks, one transversal
/// CNOT with no syndrome round after it, then both blocks measured out in Z.
/// Noise lives only on readouts — syndrome measurements at `p`, transversal
/// data readouts at `p + ε` — so one initialization-round syndrome flip has
/// exactly the two competing explanations whose preferred choice changes
/// between the first and second decode.
pub fn scenario_consistency_demo(d: usize) -> ScenarioSpec {
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
    ScenarioSpec {
        name: "consistency-demo".into(),
        program: LogicalProgram {
            family: CodeFamily::RotatedSurface,
            d,
            num_blocks: 2,
            ops,
            se_policy: SePolicy::NoneBetweenGates,
        },
        checks: vec![ScenarioCheck {
            name: "bell-parity".into(),
            bits: vec![0, 1],
        }],
        postselect_checks: Vec::new(),
        readout_flips: Vec::new(),
        noise_plan: NoisePlan::SyndromeVsReadout {
            p: 0.01,
            epsilon: 0.005,
        },
    }
}

/// Build a registered scenario from a run configuration.
pub fn build_scenario(cfg: &RunConfig) -> Result<ScenarioSpec, ExperimentError> {
    let d0 = cfg.d0.unwrap_or(3);
    let d1 = cfg.d1.unwrap_or(cfg.d);
    match cfg.scenario.as_str() {
        "repeated-zz" => Ok(scenario_repeated_zz(cfg.d, 8)),
        "ghz-transversal" => Ok(scenario_ghz_teleport(cfg.d, GhzMode::Transversal)),
        "ghz-surgery" => Ok(scenario_ghz_teleport(cfg.d, GhzMode::LatticeSurgery)),
        "repetition-teleport" => Ok(scenario_repetition_teleport(cfg.d, true)),
        "s-factory" => Ok(scenario_s_factory(d0, d1)),
        "s-factory-2" => Ok(scenario_s_factory_two_level(d0, d1, cfg.d.max(d1))),
        "cond-teleport" => Ok(scenario_cond_clifford_teleport(cfg.d)),
        "consistency-demo" => Ok(scenario_consistency_demo(cfg.d)),
        other => Err(ExperimentError::UnknownScenario(other.into())),
    }
}

/// Resolve a scenario's noise plan against the run configuration.
/// `circuit` and `syndrome_measurements` come from the compiled program
/// (readout-only plans address measurement instructions directly).
pub fn resolve_noise(
    spec: &ScenarioSpec,
    cfg: &RunConfig,
    circuit: &PhysicalCircuit,
    syndrome_measurements: &[usize],
) -> Result<NoiseSpec, ExperimentError> {
    if cfg.shots == 0 {
        return Err(ExperimentError::BadConfig("shots must be ≥ 1".into()));
    }
    let p = if cfg.noiseless_cliffords { 0.0 } else { cfg.p };
    let spec = match &spec.noise_plan {
        NoisePlan::CircuitDepolarizing => NoiseSpec {
            mode: NoiseMode::CircuitDepolarizing,
            p,
            p_z: cfg.p_z,
            custom: None,
            noise_horizon: None,
        },
        NoisePlan::LocalStochastic => NoiseSpec {
            mode: NoiseMode::LocalStochastic,
            p,
            p_z: cfg.p_z,
            custom: None,
            noise_horizon: None,
        },
        NoisePlan::SyndromeVsReadout { p, epsilon } => {
            let is_syndrome = |idx: &usize| syndrome_measurements.binary_search(idx).is_ok();
            let custom: HashMap<usize, f64> = circuit
                .instructions
                .iter()
                .enumerate()
                .filter(|(idx, instr)| {
                    matches!(
                        instr,
                        Instruction::Measure { .. } | Instruction::MeasureX { .. }
                    ) && !is_syndrome(idx)
                })
                .map(|(idx, _)| (idx, p + epsilon))
                .collect();
            NoiseSpec {
                mode: NoiseMode::CustomWeights,
                p: *p,
                p_z: cfg.p_z,
                custom: Some(custom),
                noise_horizon: None,
            }
        }
    };
    spec.validate()
        .map_err(|e| ExperimentError::BadConfig(e.to_string()))?;
    Ok(spec)
}

/// Compile and fully prepare a registered scenario for shot decoding.
pub fn prepare_run(cfg: &RunConfig) -> Result<(ScenarioSpec, PreparedScenario), ExperimentError> {
    let spec = build_scenario(cfg)?;
    let branched = compile(&spec.program)?;
    let base = &branched.branches[0].program;
    let noise = resolve_noise(
        &spec,
        cfg,
        &base.circuit,
        &base.stochastic.syndrome_measurements,
    )?;
    let prepared = PreparedScenario::prepare(
        spec.name.clone(),
        &branched,
        &noise,
        spec.checks.clone(),
        &spec.readout_flips,
    )?;
    Ok((spec, prepared))
}

#[derive(Clone, Copy, Debug, Default)]
struct Tally {
    injection_discards: u64,
    rejected: u64,
    heralded: u64,
    logical: u64,
    success: u64,
    infeasible: u64,
    inconsistent: u64,
}

impl Tally {
    fn merge(self, other: Tally) -> Tally {
        Tally {
            injection_discards: self.injection_discards + other.injection_discards,
            rejected: self.rejected + other.rejected,
            heralded: self.heralded + other.heralded,
            logical: self.logical + other.logical,
            success: self.success + other.success,
            infeasible: self.infeasible + other.infeasible,
            inconsistent: self.inconsistent + other.inconsistent,
        }
    }
}

fn classify(outcome: &ShotOutcome, postselect_checks: &[usize]) -> Tally {
    let mut t = Tally::default();
    match outcome {
        ShotOutcome::Discarded => t.injection_discards = 1,
        ShotOutcome::Completed {
            verdict,
            inconsistent,
            ..
        } => {
            if *inconsistent {
                t.inconsistent = 1;
            }
            match verdict {
                ShotVerdict::Success => t.success = 1,
                ShotVerdict::HeraldedFailure { .. } => t.heralded = 1,
                ShotVerdict::Infeasible => t.infeasible = 1,
                ShotVerdict::LogicalError { violated } => {
                    if violated.iter().any(|v| postselect_checks.contains(v)) {
                        t.rejected = 1;
                    } else {
                        t.logical = 1;
                    }
                }
            }
        }
    }
    t
}

/// Run one Monte-Carlo experiment end to end. The shot loop is parallel
/// with per-shot derived randomness, so results are seed-deterministic and
/// independent of worker scheduling.
pub fn run_monte_carlo(cfg: &RunConfig) -> Result<RunSummary, ExperimentError> {
    let (spec, prepared) = prepare_run(cfg)?;
    let seed = SeedSpec::new(cfg.seed);
    let options = RuntimeOptions {
        no_consistency: cfg.no_consistency,
    };
    let cache = DecodeCache::new();
    let start = Instant::now();
    let tally = (0..cfg.shots)
        .into_par_iter()
        .map(|i| {
            let shots = prepared.sample_branch_shots(i, &seed, cfg.keep_truth);
            classify(
                &run_shot(&prepared, &shots, cfg.decoder, &options, &cache),
                &spec.postselect_checks,
            )
        })
        .reduce(Tally::default, Tally::merge);
    let wall_ms = start.elapsed().as_millis() as u64;

    let discarded = tally.injection_discards + tally.rejected;
    let kept = cfg.shots - discarded;
    let failures = tally.heralded + tally.logical + tally.infeasible;
    let p_l = if kept == 0 {
        0.0
    } else {
        failures as f64 / kept as f64
    };
    let (cp_low, cp_high) = if kept == 0 {
        (0.0, 1.0)
    } else {
        clopper_pearson(failures, kept, 0.05)
    };
    let (p_ps, p_ps_cp) = if spec.postselect_checks.is_empty() {
        (None, None)
    } else {
        let denom = cfg.shots - tally.injection_discards;
        if denom == 0 {
            (None, None)
        } else {
            (
                Some(kept as f64 / denom as f64),
                Some(clopper_pearson(kept, denom, 0.05)),
            )
        }
    };
    Ok(RunSummary {
        row: ResultRow {
            scenario: spec.name,
            d: cfg.d,
            p: cfg.p,
            p_z: cfg.p_z,
            decoder: cfg.decoder.name().into(),
            shots: cfg.shots,
            discarded,
            heralded: tally.heralded,
            logical: tally.logical + tally.infeasible,
            p_l,
            cp_low,
            cp_high,
            seed: cfg.seed,
            wall_ms,
        },
        success: tally.success,
        infeasible: tally.infeasible,
        inconsistent: tally.inconsistent,
        injection_discards: tally.injection_discards,
        p_ps,
        p_ps_cp,
    })
}

/// Exact Clopper-Pearson binomial interval at significance `alpha`.
pub fn clopper_pearson(k: u64, n: u64, alpha: f64) -> (f64, f64) {
    assert!(n >= 1 && k <= n, "need 0 ≤ k ≤ n, n ≥ 1");
    let half = alpha / 2.0;
    let (k_f, n_f) = (k as f64, n as f64);
    let low = if k == 0 {
        0.0
    } else {
        Beta::new(k_f, n_f - k_f + 1.0)
            .expect("valid Beta parameters")
            .inverse_cdf(half)
    };
    let high = if k == n {
        1.0
    } else {
        Beta::new(k_f + 1.0, n_f - k_f)
            .expect("valid Beta parameters")
            .inverse_cdf(1.0 - half)
    };
    (low, high)
}

/// Ideal one-level |S⟩ factory curves: output infidelity conditional on
/// error detection, and the error-detection acceptance rate, for input
/// infidelity `p_in` and noiseless Clifford operations.
pub fn factory_formula(p_in: f64) -> (f64, f64) {
    assert!((0.0..=1.0).contains(&p_in));
    let q = 1.0 - p_in;
    let p3 = p_in.powi(3);
    let p4 = p_in.powi(4);
    let p7 = p_in.powi(7);
    let accepted_bad = 7.0 * p3 * q.powi(4) + p7;
    let p_ps = q.powi(7) + accepted_bad + 7.0 * p4 * q.powi(3);
    (accepted_bad / p_ps, p_ps)
}

/// All elementary fault outcomes of a noise-annotated circuit.
pub fn enumerate_fault_origins(c: &PhysicalCircuit) -> Vec<FaultOrigin> {
    c.instructions
        .iter()
        .enumerate()
        .flat_map(|(idx, instr)| {
            channel_components(instr)
                .into_iter()
                .filter(|&(_, _, p)| p > 0.0)
                .map(move |(slot, component, _)| FaultOrigin {
                    instruction: idx,
                    slot,
                    component,
                })
        })
        .collect()
}

/// Rewrite a noisy circuit so exactly one elementary fault fires: every
/// channel probability drops to zero and certain single-qubit errors
/// realizing `origin` are inserted at its position. Record and detector
/// layout are untouched, so shots sampled from the result decode against
/// the original circuit's models.
pub fn inject_single_fault(c: &PhysicalCircuit, origin: &FaultOrigin) -> PhysicalCircuit {
    let insertions = origin_insertions(c, origin);
    let mut out = PhysicalCircuit::new();
    out.num_qubits = c.num_qubits;
    for (idx, instr) in c.instructions.iter().enumerate() {
        if idx == origin.instruction {
            for &(q, pauli) in &insertions {
                if matches!(pauli, Pauli::X | Pauli::Y) {
                    out.push(Instruction::XError {
                        p: 1.0,
                        qubits: vec![q],
                    });
                }
                if matches!(pauli, Pauli::Z | Pauli::Y) {
                    out.push(Instruction::ZError {
                        p: 1.0,
                        qubits: vec![q],
                    });
                }
            }
        }
        let defused = match instr {
            Instruction::XError { qubits, .. } => Instruction::XError {
                p: 0.0,
                qubits: qubits.clone(),
            },
            Instruction::ZError { qubits, .. } => Instruction::ZError {
                p: 0.0,
                qubits: qubits.clone(),
            },
            Instruction::Depolarize1 { qubits, .. } => Instruction::Depolarize1 {
                p: 0.0,
                qubits: qubits.clone(),
            },
            Instruction::Depolarize2 { pairs, .. } => Instruction::Depolarize2 {
                p: 0.0,
                pairs: pairs.clone(),
            },
            other => other.clone(),
        };
        out.push(defused);
    }
    out
}

fn format_float(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

/// Render result rows in the fixed CSV schema.
pub fn csv_string(rows: &[ResultRow]) -> String {
    let mut out = String::from(
        "scenario,d,p,p_Z,decoder,shots,discarded,heralded,logical,P_L,cp_low,cp_high,seed,wall_ms\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.scenario,
            r.d,
            format_float(r.p),
            format_float(r.p_z),
            r.decoder,
            r.shots,
            r.discarded,
            r.heralded,
            r.logical,
            format_float(r.p_l),
            format_float(r.cp_low),
            format_float(r.cp_high),
            r.seed,
            r.wall_ms,
        ));
    }
    out
}

/// Write result rows as CSV.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(csv_string(rows).as_bytes())
}

/// Write full run summaries as pretty-printed JSON.
pub fn emit_json(summaries: &[RunSummary], path: &Path) -> io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    let text = serde_json::to_string_pretty(summaries).expect("summaries serialize");
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")
}

/// Convenience for tests and fault sweeps: decode one externally sampled
/// shot of a single-branch scenario.
pub fn decode_single_shot(
    prepared: &PreparedScenario,
    shot: crate::sampler::ShotRecord,
    decoder: Decoder,
) -> ShotOutcome {
    let cache = DecodeCache::new();
    run_shot(
        prepared,
        std::slice::from_ref(&shot),
        decoder,
        &RuntimeOptions::default(),
        &cache,
    )
}

/// Reference observable values of a branch, as a bit vector.
pub fn branch_ideal_bits(prepared: &PreparedScenario, branch: usize) -> BitVector {
    BitVector::from_bools(&prepared.branches[branch].ideal_values)
}
